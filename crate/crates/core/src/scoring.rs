//! Per-token relevance and temporal redundancy scores.
//!
//! Every token `v` of frame `k` receives
//!
//! * `r`: the largest inner product between `v` and any query token,
//! * `d_corr`: the inner product with the token at the same grid position in
//!   the neighbouring history frame,
//! * `d_echo`: the inner product with its softmax-weighted reconstruction
//!   from a window of history-frame candidates,
//!
//! all computed on L2-normalised embeddings, and a combined score
//! `s = lambda * r - (1 - lambda) * delta`. Higher `d_*` means the token is
//! more predictable from its history and therefore more redundant.
//!
//! Accumulation inside a token always runs over candidates in ascending
//! order (nearest history frame first, then row-major within the window),
//! so results are bit-identical across runs.

use crate::config::{PruneConfig, Variant, Window};
use crate::error::{Error, Result};
use crate::tensor::{GridShape, TextTokenSet, TokenIndex, VisualTokenGrid};

/// Row-normalised embeddings in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVectors {
    dim: usize,
    data: Vec<f64>,
    zero_norm: usize,
}

impl UnitVectors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of input rows whose norm was zero; those rows stay all-zero.
    pub fn zero_norm(&self) -> usize {
        self.zero_norm
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// L2-normalises each `dim`-sized row. Zero rows are kept as zeros and counted.
pub fn normalize(data: &[f32], dim: usize) -> UnitVectors {
    assert!(dim > 0 && data.len().is_multiple_of(dim), "data is not a whole number of rows");
    let mut out = Vec::with_capacity(data.len());
    let mut zero_norm = 0;
    for row in data.chunks_exact(dim) {
        let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_norm += 1;
            out.extend(std::iter::repeat_n(0.0, dim));
        } else {
            out.extend(row.iter().map(|&x| f64::from(x) / norm));
        }
    }
    UnitVectors {
        dim,
        data: out,
        zero_norm,
    }
}

/// Normalised visual tokens together with their grid shape.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitGrid {
    shape: GridShape,
    tokens: UnitVectors,
}

impl UnitGrid {
    pub fn new(grid: &VisualTokenGrid) -> Self {
        Self {
            shape: grid.shape(),
            tokens: normalize(grid.data(), grid.dim()),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn tokens(&self) -> &UnitVectors {
        &self.tokens
    }

    pub fn token(&self, idx: TokenIndex) -> &[f64] {
        self.tokens.row(self.shape.flat(idx))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-aggregated query relevance of every visual token.
pub fn relevance(visual: &UnitGrid, text: &UnitVectors) -> Result<Vec<f64>> {
    if visual.tokens.dim != text.dim {
        return Err(Error::DimMismatch {
            visual: visual.tokens.dim,
            text: text.dim,
        });
    }
    Ok(visual
        .tokens
        .rows()
        .map(|v| text.rows().map(|t| dot(v, t)).fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// Temporal side that supplies history frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Frames `k-1, k-2, ...`.
    Forward,
    /// Frames `k+1, k+2, ...`.
    Backward,
}

/// History frames of frame `k`, nearest first.
pub fn history_frames(k: usize, frames: usize, depth: usize, dir: Direction) -> Vec<usize> {
    match dir {
        Direction::Forward => (1..=depth.min(k)).map(|o| k - o).collect(),
        Direction::Backward => (1..=depth).map(|o| k + o).take_while(|&f| f < frames).collect(),
    }
}

/// Frames without any history in the direction(s) the variant matches
/// against. They carry `first_frame_flag` and receive the first-frame quota.
pub fn quota_frames(variant: Variant, frames: usize) -> Vec<usize> {
    match variant {
        Variant::Reverse => vec![frames - 1],
        Variant::Bidirection if frames > 1 => Vec::new(),
        _ => vec![0],
    }
}

fn corr_direction(variant: Variant) -> Direction {
    match variant {
        Variant::Reverse => Direction::Backward,
        _ => Direction::Forward,
    }
}

/// Inclusive-exclusive `(row_lo, row_hi, col_lo, col_hi)` of the window
/// around `(row, col)`, clipped to the grid.
pub fn window_bounds(row: usize, col: usize, shape: GridShape, window: Window) -> (usize, usize, usize, usize) {
    match window.radius() {
        None => (0, shape.rows, 0, shape.cols),
        Some(rad) => (
            row.saturating_sub(rad),
            (row + rad + 1).min(shape.rows),
            col.saturating_sub(rad),
            (col + rad + 1).min(shape.cols),
        ),
    }
}

/// Same-position similarity to the neighbouring frame in `dir`; zero where
/// no such frame exists.
pub fn corr_error(visual: &UnitGrid, dir: Direction) -> Vec<f64> {
    let shape = visual.shape;
    let per_frame = shape.tokens_per_frame();
    let mut out = vec![0.0; shape.num_tokens()];
    for k in 0..shape.frames {
        let Some(&partner) = history_frames(k, shape.frames, 1, dir).first() else {
            continue;
        };
        for p in 0..per_frame {
            out[k * per_frame + p] = dot(visual.tokens.row(k * per_frame + p), visual.tokens.row(partner * per_frame + p));
        }
    }
    out
}

/// Writes `softmax(sims / tau)` into `weights`, shifted by the maximum for
/// stability.
pub fn softmax_weights(sims: &[f64], tau: f64, weights: &mut Vec<f64>) {
    weights.clear();
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    weights.extend(sims.iter().map(|&s| ((s - max) / tau).exp()));
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// Candidate-level detail of one echo reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoMatch {
    pub candidates: Vec<TokenIndex>,
    /// Inner product of the token with each candidate.
    pub similarities: Vec<f64>,
    /// Softmax matching weights over the candidates.
    pub weights: Vec<f64>,
    pub d_echo: f64,
}

/// Echo reconstruction of a single token in one direction, with every
/// intermediate exposed. `None` when the token has no history frame.
pub fn echo_match(visual: &UnitGrid, idx: TokenIndex, config: &PruneConfig, dir: Direction) -> Option<EchoMatch> {
    let shape = visual.shape;
    let hist = history_frames(idx.frame, shape.frames, config.history, dir);
    if hist.is_empty() {
        return None;
    }
    let v = visual.token(idx);
    let (r0, r1, c0, c1) = window_bounds(idx.row, idx.col, shape, config.window);
    let mut candidates = Vec::new();
    let mut similarities = Vec::new();
    for &f in &hist {
        for row in r0..r1 {
            for col in c0..c1 {
                let c = TokenIndex::new(f, row, col);
                candidates.push(c);
                similarities.push(dot(v, visual.token(c)));
            }
        }
    }
    let mut weights = Vec::with_capacity(similarities.len());
    softmax_weights(&similarities, config.tau, &mut weights);
    let d_echo = dot(&weights, &similarities);
    Some(EchoMatch {
        candidates,
        similarities,
        weights,
        d_echo,
    })
}

/// Echo similarity of every token against history in one direction.
pub fn echo_directional(visual: &UnitGrid, config: &PruneConfig, dir: Direction) -> Vec<Option<f64>> {
    let shape = visual.shape;
    let per_frame = shape.tokens_per_frame();
    let mut out = vec![None; shape.num_tokens()];
    let mut sims = Vec::new();
    let mut weights = Vec::new();
    for k in 0..shape.frames {
        let hist = history_frames(k, shape.frames, config.history, dir);
        if hist.is_empty() {
            continue;
        }
        for row in 0..shape.rows {
            for col in 0..shape.cols {
                let flat = k * per_frame + row * shape.cols + col;
                let v = visual.tokens.row(flat);
                let (r0, r1, c0, c1) = window_bounds(row, col, shape, config.window);
                sims.clear();
                for &f in &hist {
                    for cr in r0..r1 {
                        let base = f * per_frame + cr * shape.cols;
                        sims.extend((c0..c1).map(|cc| dot(v, visual.tokens.row(base + cc))));
                    }
                }
                softmax_weights(&sims, config.tau, &mut weights);
                out[flat] = Some(dot(&weights, &sims));
            }
        }
    }
    out
}

/// Echo terms for a whole grid under the configured variant.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTerms {
    pub d_echo: Vec<f64>,
    /// True where no history exists in any matched direction.
    pub no_history: Vec<bool>,
}

pub fn echo_error(visual: &UnitGrid, config: &PruneConfig) -> EchoTerms {
    let combined: Vec<Option<f64>> = match config.variant {
        Variant::Reverse => echo_directional(visual, config, Direction::Backward),
        Variant::Bidirection => {
            let fwd = echo_directional(visual, config, Direction::Forward);
            let bwd = echo_directional(visual, config, Direction::Backward);
            fwd.into_iter()
                .zip(bwd)
                .map(|pair| match pair {
                    (Some(a), Some(b)) => Some(0.5 * (a + b)),
                    (a, b) => a.or(b),
                })
                .collect()
        }
        _ => echo_directional(visual, config, Direction::Forward),
    };
    EchoTerms {
        no_history: combined.iter().map(Option::is_none).collect(),
        d_echo: combined.into_iter().map(|d| d.unwrap_or(0.0)).collect(),
    }
}

/// Redundancy `delta` entering the score for one token.
pub fn redundancy(variant: Variant, d_corr: f64, d_echo: f64) -> f64 {
    match variant {
        Variant::EchoOnly => d_echo,
        Variant::CorrOnly => d_corr,
        Variant::Full | Variant::NoRelevance | Variant::Reverse | Variant::Bidirection => d_corr + d_echo,
    }
}

pub fn combine_scores(r: &[f64], d_corr: &[f64], d_echo: &[f64], config: &PruneConfig) -> Result<Vec<f64>> {
    if r.len() != d_corr.len() || r.len() != d_echo.len() {
        return Err(Error::Shape(format!(
            "score terms disagree in length: r={}, d_corr={}, d_echo={}",
            r.len(),
            d_corr.len(),
            d_echo.len()
        )));
    }
    let lambda = config.lambda;
    Ok(r.iter()
        .zip(d_corr)
        .zip(d_echo)
        .map(|((&r, &dc), &de)| {
            let delta = redundancy(config.variant, dc, de);
            match config.variant {
                Variant::NoRelevance => -delta,
                _ => lambda * r - (1.0 - lambda) * delta,
            }
        })
        .collect())
}

/// Score breakdown of one token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenScore {
    pub s: f64,
    pub r: f64,
    pub d_corr: f64,
    pub d_echo: f64,
    pub first_frame: bool,
}

/// Per-token score terms over a `(frames, rows, cols)` grid, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    shape: GridShape,
    r: Vec<f64>,
    d_corr: Vec<f64>,
    d_echo: Vec<f64>,
    s: Vec<f64>,
    first_frame: Vec<bool>,
    zero_norm_visual: usize,
    zero_norm_text: usize,
}

impl ScoreTable {
    /// Assembles a table from precomputed terms, deriving `s` from `config`.
    pub fn from_terms(
        shape: GridShape,
        r: Vec<f64>,
        d_corr: Vec<f64>,
        d_echo: Vec<f64>,
        first_frame: Vec<bool>,
        config: &PruneConfig,
    ) -> Result<Self> {
        shape.validate()?;
        let n = shape.num_tokens();
        if r.len() != n || first_frame.len() != n {
            return Err(Error::Shape(format!(
                "score terms for {n} tokens have lengths r={}, first_frame={}",
                r.len(),
                first_frame.len()
            )));
        }
        let s = combine_scores(&r, &d_corr, &d_echo, config)?;
        Ok(Self {
            shape,
            r,
            d_corr,
            d_echo,
            s,
            first_frame,
            zero_norm_visual: 0,
            zero_norm_text: 0,
        })
    }

    pub(crate) fn overwrite_s(&mut self, s: Vec<f64>) {
        assert_eq!(s.len(), self.s.len());
        self.s = s;
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn d_corr(&self) -> &[f64] {
        &self.d_corr
    }

    pub fn d_echo(&self) -> &[f64] {
        &self.d_echo
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn first_frame(&self) -> &[bool] {
        &self.first_frame
    }

    pub fn zero_norm_visual(&self) -> usize {
        self.zero_norm_visual
    }

    pub fn zero_norm_text(&self) -> usize {
        self.zero_norm_text
    }

    pub fn get(&self, idx: TokenIndex) -> TokenScore {
        self.at(self.shape.flat(idx))
    }

    pub fn at(&self, flat: usize) -> TokenScore {
        TokenScore {
            s: self.s[flat],
            r: self.r[flat],
            d_corr: self.d_corr[flat],
            d_echo: self.d_echo[flat],
            first_frame: self.first_frame[flat],
        }
    }
}

/// Scores every visual token against the query under `config`.
pub fn score_all(visual: &VisualTokenGrid, text: &TextTokenSet, config: &PruneConfig) -> Result<ScoreTable> {
    config.validate()?;
    if visual.dim() != text.dim() {
        return Err(Error::DimMismatch {
            visual: visual.dim(),
            text: text.dim(),
        });
    }
    let unit_visual = UnitGrid::new(visual);
    let unit_text = normalize(text.data(), text.dim());
    let shape = unit_visual.shape();

    let r = relevance(&unit_visual, &unit_text)?;
    let mut d_corr = corr_error(&unit_visual, corr_direction(config.variant));
    let echo = echo_error(&unit_visual, config);

    let per_frame = shape.tokens_per_frame();
    let mut first_frame = vec![false; shape.num_tokens()];
    for k in quota_frames(config.variant, shape.frames) {
        first_frame[k * per_frame..(k + 1) * per_frame].fill(true);
    }
    debug_assert_eq!(first_frame, echo.no_history);
    for (dc, &flag) in d_corr.iter_mut().zip(&first_frame) {
        if flag {
            *dc = 0.0;
        }
    }

    let mut table = ScoreTable::from_terms(shape, r, d_corr, echo.d_echo, first_frame, config)?;
    table.zero_norm_visual = unit_visual.tokens().zero_norm();
    table.zero_norm_text = unit_text.zero_norm();
    Ok(table)
}
