//! `EPT1` binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic, ASCII `EPT1`                     |
//! | 4      | 1         | version, currently 1                    |
//! | 5      | 1         | dtype code, 1 = f32 little-endian       |
//! | 6      | 1         | rank, 2 (text) or 4 (visual)            |
//! | 7      | 1         | pad, zero                               |
//! | 8      | 8 * rank  | dims as u64                             |
//! | 8+8r   | 4 * prod  | row-major payload                       |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, TextTokenSet, VisualTokenGrid};

pub const MAGIC: [u8; 4] = *b"EPT1";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;

/// Header length in bytes for a tensor of the given rank.
pub const fn header_len(rank: usize) -> usize {
    8 + 8 * rank
}

pub fn encode_tensor(tensor: &Tensor) -> Result<Vec<u8>> {
    let dims = tensor.dims();
    let data = tensor.data();
    let header = header_len(dims.len());
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            offset: header + 4 * i,
            value: data[i],
        });
    }

    let mut out = Vec::with_capacity(header + 4 * data.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(dims.len() as u8);
    out.push(0);
    for &d in &dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            expected: 8,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("slice of len 4");
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let header_byte = |field, offset: usize, ok: &dyn Fn(u8) -> bool| {
        let value = bytes[offset];
        if ok(value) {
            Ok(value)
        } else {
            Err(Error::UnsupportedHeader {
                field,
                value,
                offset,
            })
        }
    };
    header_byte("version", 4, &|v| v == VERSION)?;
    header_byte("dtype", 5, &|v| v == DTYPE_F32)?;
    let rank = header_byte("rank", 6, &|v| v == 2 || v == 4)? as usize;
    header_byte("pad", 7, &|v| v == 0)?;

    let header = header_len(rank);
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header,
            actual: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for i in 0..rank {
        let offset = 8 + 8 * i;
        let raw = u64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("len 8"));
        if raw == 0 {
            return Err(Error::Shape(format!("dim {i} at byte {offset} is zero")));
        }
        let d = usize::try_from(raw)
            .ok()
            .filter(|&d| d <= isize::MAX as usize)
            .ok_or_else(|| Error::Shape(format!("dim {i} at byte {offset} too large: {raw}")))?;
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::Shape(format!("element count overflows at dim {i}")))?;
        dims.push(d);
    }

    let expected = count
        .checked_mul(4)
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| Error::Shape("payload size overflows".into()))?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes {
            offset: expected,
            extra: bytes.len() - expected,
        });
    }

    let mut data = Vec::with_capacity(count);
    for (i, chunk) in bytes[header..].chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(chunk.try_into().expect("len 4"));
        if !x.is_finite() {
            return Err(Error::NonFinite {
                offset: header + 4 * i,
                value: x,
            });
        }
        data.push(x);
    }

    Ok(match rank {
        4 => Tensor::Visual(VisualTokenGrid::new(dims[0], dims[1], dims[2], dims[3], data)?),
        _ => Tensor::Text(TextTokenSet::new(dims[0], dims[1], data)?),
    })
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(tensor)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub fn read_visual(path: impl AsRef<Path>) -> Result<VisualTokenGrid> {
    match read_tensor(path)? {
        Tensor::Visual(g) => Ok(g),
        Tensor::Text(t) => Err(Error::Shape(format!(
            "expected a rank-4 visual tensor, found rank-2 {}x{}",
            t.count(),
            t.dim()
        ))),
    }
}

pub fn read_text(path: impl AsRef<Path>) -> Result<TextTokenSet> {
    match read_tensor(path)? {
        Tensor::Text(t) => Ok(t),
        Tensor::Visual(g) => Err(Error::Shape(format!(
            "expected a rank-2 text tensor, found rank-4 {}x{}x{}x{}",
            g.frames(),
            g.rows(),
            g.cols(),
            g.dim()
        ))),
    }
}
