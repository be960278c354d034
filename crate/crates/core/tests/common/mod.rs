#![allow(dead_code)]

use echoprune::{GridShape, TextTokenSet, VisualTokenGrid, Window};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

/// Bounds on a random instance.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub text: usize,
}

pub const SMALL: Limits = Limits { frames: 8, rows: 6, cols: 6, dim: 16, text: 8 };

/// Random Gaussian tokens. Some instances repeat a frame or zero a token so
/// that exact duplicates and zero-norm inputs are exercised too.
pub fn random_instance(rng: &mut impl Rng, lim: Limits) -> (VisualTokenGrid, TextTokenSet) {
    let k = rng.random_range(1..=lim.frames);
    let h = rng.random_range(1..=lim.rows);
    let w = rng.random_range(1..=lim.cols);
    let d = rng.random_range(2..=lim.dim);
    let n = rng.random_range(1..=lim.text);
    let per = h * w * d;
    let mut v = gaussian(rng, k * per);
    if k > 1 && rng.random_bool(0.25) {
        let src = rng.random_range(0..k - 1);
        let (head, tail) = v.split_at_mut((src + 1) * per);
        tail[..per].copy_from_slice(&head[src * per..]);
    }
    if rng.random_bool(0.1) {
        let t = rng.random_range(0..k * h * w);
        v[t * d..(t + 1) * d].fill(0.0);
    }
    let t = gaussian(rng, n * d);
    (VisualTokenGrid::new(k, h, w, d, v).unwrap(), TextTokenSet::new(n, d, t).unwrap())
}

pub fn random_window(rng: &mut impl Rng) -> Window {
    match rng.random_range(0..3) {
        0 => Window::Neighborhood { side: 1 },
        1 => Window::Neighborhood { side: 3 },
        _ => Window::FullFrame,
    }
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    m.qr().q()
}

/// Applies `q` to every row of a row-major `[n, dim]` buffer.
pub fn rotate_rows(q: &DMatrix<f64>, data: &[f32], dim: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(dim) {
        for i in 0..dim {
            let acc: f64 = (0..dim).map(|j| q[(i, j)] * f64::from(row[j])).sum();
            out.push(acc as f32);
        }
    }
    out
}

pub fn rotate(q: &DMatrix<f64>, visual: &VisualTokenGrid, text: &TextTokenSet) -> (VisualTokenGrid, TextTokenSet) {
    let d = visual.dim();
    (
        VisualTokenGrid::new(visual.frames(), visual.rows(), visual.cols(), d, rotate_rows(q, visual.data(), d)).unwrap(),
        TextTokenSet::new(text.count(), d, rotate_rows(q, text.data(), d)).unwrap(),
    )
}

/// One-hot vector of length `dim`.
pub fn basis(dim: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

/// Frames (A, A, B, B): every position of A and B holds its own basis
/// vector, A and B use disjoint bases, and the single text token is a basis
/// vector used by no visual token.
pub fn aabb_scene(rows: usize, cols: usize) -> (VisualTokenGrid, TextTokenSet) {
    let hw = rows * cols;
    let dim = 2 * hw + 1;
    let mut data = Vec::with_capacity(4 * hw * dim);
    for offset in [0, 0, hw, hw] {
        for p in 0..hw {
            data.extend(basis(dim, offset + p));
        }
    }
    (
        VisualTokenGrid::new(4, rows, cols, dim, data).unwrap(),
        TextTokenSet::new(1, dim, basis(dim, 2 * hw)).unwrap(),
    )
}

/// Smallest gap between distinct sorted values; infinite for fewer than two.
pub fn min_gap(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

pub fn frame_of(shape: GridShape, flat: usize) -> usize {
    flat / shape.tokens_per_frame()
}
