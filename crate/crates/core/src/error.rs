use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic at byte 0: expected \"EPT1\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported {field} {value} at byte {offset}")]
    UnsupportedHeader {
        field: &'static str,
        value: u8,
        offset: usize,
    },

    #[error("truncated tensor file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("tensor file has {extra} trailing bytes after payload end at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("non-finite value {value} at byte {offset}")]
    NonFinite { offset: usize, value: f32 },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("dimension mismatch: visual tokens have dim {visual}, text tokens have dim {text}")]
    DimMismatch { visual: usize, text: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid budget: {0}")]
    Budget(String),

    #[error("invalid scene spec: {0}")]
    Scene(String),

    #[error("scaling check needs at least {needed} sizes, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
