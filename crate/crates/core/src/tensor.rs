//! In-memory token containers.
//!
//! Visual tokens are stored frame-major: frame, then row, then column, then
//! channel. One frame is therefore a contiguous `rows * cols * dim` slab.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of one visual token in the `(frame, row, col)` grid.
///
/// The derived ordering (frame, then row, then col) is the tie-break order
/// used by every selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenIndex {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
}

impl TokenIndex {
    pub fn new(frame: usize, row: usize, col: usize) -> Self {
        Self { frame, row, col }
    }
}

/// `(frames, rows, cols)` of a visual grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub fn new(frames: usize, rows: usize, cols: usize) -> Self {
        Self { frames, rows, cols }
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.rows * self.cols
    }

    pub fn num_tokens(&self) -> usize {
        self.frames * self.rows * self.cols
    }

    /// Flat frame-major position of a token.
    pub fn flat(&self, idx: TokenIndex) -> usize {
        (idx.frame * self.rows + idx.row) * self.cols + idx.col
    }

    pub fn unflat(&self, flat: usize) -> TokenIndex {
        let per_frame = self.tokens_per_frame();
        let frame = flat / per_frame;
        let rem = flat % per_frame;
        TokenIndex::new(frame, rem / self.cols, rem % self.cols)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::Shape(format!(
                "grid dims must be >= 1, got {}x{}x{}",
                self.frames, self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// Dense video token embeddings, `frames x rows x cols x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualTokenGrid {
    frames: usize,
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f32>,
}

impl VisualTokenGrid {
    pub fn new(frames: usize, rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "visual grid dims must be >= 1, got {frames}x{rows}x{cols}x{dim}"
            )));
        }
        let expected = frames * rows * cols * dim;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "visual grid {frames}x{rows}x{cols}x{dim} needs {expected} scalars, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            frames,
            rows,
            cols,
            dim,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> GridShape {
        GridShape::new(self.frames, self.rows, self.cols)
    }

    pub fn num_tokens(&self) -> usize {
        self.frames * self.rows * self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn token(&self, idx: TokenIndex) -> &[f32] {
        let start = self.shape().flat(idx) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Contiguous slab holding every token of frame `k`.
    pub fn frame(&self, k: usize) -> &[f32] {
        let len = self.rows * self.cols * self.dim;
        &self.data[k * len..(k + 1) * len]
    }
}

/// Query token embeddings, `count x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextTokenSet {
    count: usize,
    dim: usize,
    data: Vec<f32>,
}

impl TextTokenSet {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "text token set dims must be >= 1, got {count}x{dim}"
            )));
        }
        if data.len() != count * dim {
            return Err(Error::Shape(format!(
                "text token set {count}x{dim} needs {} scalars, got {}",
                count * dim,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { count, dim, data })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn token(&self, j: usize) -> &[f32] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }
}

/// Either kind of tensor a tensor file can hold, discriminated by rank.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Visual(VisualTokenGrid),
    Text(TextTokenSet),
}

impl Tensor {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Tensor::Visual(g) => vec![g.frames, g.rows, g.cols, g.dim],
            Tensor::Text(t) => vec![t.count, t.dim],
        }
    }

    pub fn data(&self) -> &[f32] {
        match self {
            Tensor::Visual(g) => g.data(),
            Tensor::Text(t) => t.data(),
        }
    }
}

impl From<VisualTokenGrid> for Tensor {
    fn from(g: VisualTokenGrid) -> Self {
        Tensor::Visual(g)
    }
}

impl From<TextTokenSet> for Tensor {
    fn from(t: TextTokenSet) -> Self {
        Tensor::Text(t)
    }
}

fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Shape(format!(
            "non-finite value {} at scalar index {i}",
            data[i]
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip() {
        let shape = GridShape::new(3, 4, 5);
        for flat in 0..shape.num_tokens() {
            assert_eq!(shape.flat(shape.unflat(flat)), flat);
        }
        assert_eq!(shape.flat(TokenIndex::new(1, 2, 3)), 20 + 10 + 3);
    }

    #[test]
    fn rejects_bad_dims_and_nan() {
        assert!(VisualTokenGrid::new(0, 1, 1, 1, vec![]).is_err());
        assert!(VisualTokenGrid::new(1, 1, 1, 2, vec![1.0]).is_err());
        assert!(VisualTokenGrid::new(1, 1, 1, 1, vec![f32::NAN]).is_err());
        assert!(TextTokenSet::new(1, 1, vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn frame_slab_is_contiguous() {
        let data: Vec<f32> = (0..2 * 2 * 2 * 3).map(|x| x as f32).collect();
        let g = VisualTokenGrid::new(2, 2, 2, 3, data).unwrap();
        assert_eq!(g.frame(1)[0], 12.0);
        assert_eq!(g.token(TokenIndex::new(1, 1, 0)), &[18.0, 19.0, 20.0]);
    }
}
