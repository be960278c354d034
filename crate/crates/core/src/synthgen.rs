//! Deterministic synthetic video-embedding scenes with per-token labels.
//!
//! A scene is a static background of a few cluster directions (optionally
//! panning), moving object patches and short novelty events whose
//! directions are orthogonal to every background cluster. Each token is its
//! base direction plus isotropic gaussian noise of expected norm
//! `noise_sigma`, renormalised to unit length. The query is the direction
//! of one object, novelty event or background cluster, plus optional random
//! distractor tokens.
//!
//! The random stream is ChaCha8 seeded with `seed`, consumed in a fixed
//! order: background directions, the per-position cluster map, distractor
//! directions, then noise for every token in frame-major order. Object and
//! novelty directions come from their own `direction_seed` streams.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{GridShape, TextTokenSet, TokenIndex, VisualTokenGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub direction_seed: u64,
    /// Top-left `(row, col)` of the patch at frame 0.
    pub start: [i64; 2],
    /// Displacement in `(rows, cols)` per frame; positions are rounded.
    pub velocity: [f64; 2],
    /// Patch `(height, width)`.
    pub patch: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoveltyEvent {
    pub frame: usize,
    pub region: Region,
    pub direction_seed: u64,
    /// Frames the event stays visible, starting at `frame`.
    #[serde(default = "one")]
    pub duration: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryTarget {
    Object(usize),
    Novelty(usize),
    Background(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub background_dirs: usize,
    /// Background pan in `(rows, cols)` per frame, wrapping at the border.
    #[serde(default)]
    pub background_velocity: [f64; 2],
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub novelty_events: Vec<NoveltyEvent>,
    pub noise_sigma: f64,
    pub query_target: QueryTarget,
    /// Extra random text tokens besides the query direction.
    #[serde(default)]
    pub distractors: usize,
    pub seed: u64,
}

impl SceneSpec {
    /// A static scene with one query-aligned object drifting one column per
    /// frame (bouncing is not modelled; the start column is chosen so the
    /// patch stays in view).
    pub fn moving_object(frames: usize, rows: usize, cols: usize, dim: usize, seed: u64) -> Self {
        let patch = [3.min(rows), 3.min(cols)];
        let travel = frames.saturating_sub(1);
        let span = cols.saturating_sub(patch[1]);
        let velocity = if travel == 0 || span == 0 { 0.0 } else { (span as f64 / travel as f64).min(1.0) };
        Self {
            frames,
            rows,
            cols,
            dim,
            background_dirs: 4,
            background_velocity: [0.0, 0.0],
            objects: vec![ObjectSpec {
                direction_seed: seed ^ 0x9e37_79b9_7f4a_7c15,
                start: [(rows.saturating_sub(patch[0]) / 2) as i64, 0],
                velocity: [0.0, velocity],
                patch,
            }],
            novelty_events: Vec::new(),
            noise_sigma: 0.1,
            query_target: QueryTarget::Object(0),
            distractors: 0,
            seed,
        }
    }

    pub fn shape(&self) -> GridShape {
        GridShape::new(self.frames, self.rows, self.cols)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Clipped `(row_lo, row_hi, col_lo, col_hi)` of object `obj` at frame `k`.
    pub fn object_rect(&self, obj: &ObjectSpec, k: usize) -> (usize, usize, usize, usize) {
        let top = obj.start[0] + (obj.velocity[0] * k as f64).round() as i64;
        let left = obj.start[1] + (obj.velocity[1] * k as f64).round() as i64;
        let clip = |lo: i64, len: usize, max: usize| {
            let lo_c = lo.clamp(0, max as i64) as usize;
            let hi_c = (lo + len as i64).clamp(0, max as i64) as usize;
            (lo_c, hi_c.max(lo_c))
        };
        let (r0, r1) = clip(top, obj.patch[0], self.rows);
        let (c0, c1) = clip(left, obj.patch[1], self.cols);
        (r0, r1, c0, c1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scene(m));
        if self.frames == 0 || self.rows == 0 || self.cols == 0 || self.dim == 0 {
            return bad("frames, rows, cols and dim must be >= 1".into());
        }
        if self.background_dirs == 0 {
            return bad("background_dirs must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma < 0.5) {
            return bad(format!("noise_sigma must be in [0, 0.5), got {}", self.noise_sigma));
        }
        if self.background_velocity.iter().any(|v| !v.is_finite()) {
            return bad("background_velocity must be finite".into());
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.patch[0] == 0 || obj.patch[1] == 0 || obj.velocity.iter().any(|v| !v.is_finite()) {
                return bad(format!("object {i} needs a non-empty patch and finite velocity"));
            }
            for k in 0..self.frames {
                let (r0, r1, c0, c1) = self.object_rect(obj, k);
                if r0 == r1 || c0 == c1 {
                    return bad(format!("object {i} leaves the grid at frame {k}"));
                }
            }
        }
        if !self.novelty_events.is_empty() && self.dim <= self.background_dirs {
            return bad(format!(
                "novelty directions need dim > background_dirs ({} <= {})",
                self.dim, self.background_dirs
            ));
        }
        for (i, ev) in self.novelty_events.iter().enumerate() {
            let r = ev.region;
            if ev.frame >= self.frames
                || ev.duration == 0
                || r.height == 0
                || r.width == 0
                || r.row + r.height > self.rows
                || r.col + r.width > self.cols
            {
                return bad(format!("novelty event {i} does not fit the grid"));
            }
        }
        let target_ok = match self.query_target {
            QueryTarget::Object(i) => i < self.objects.len(),
            QueryTarget::Novelty(i) => i < self.novelty_events.len(),
            QueryTarget::Background(i) => i < self.background_dirs,
        };
        if !target_ok {
            return bad(format!("query target {:?} does not exist", self.query_target));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenLabel {
    Background,
    Object(usize),
    Novelty(usize),
}

/// Ground-truth label of every token, frame-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLabels {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<TokenLabel>,
}

impl TokenLabels {
    pub fn shape(&self) -> GridShape {
        GridShape::new(self.frames, self.rows, self.cols)
    }

    pub fn get(&self, idx: TokenIndex) -> TokenLabel {
        self.labels[self.shape().flat(idx)]
    }

    pub fn count_in_frame(&self, frame: usize, pred: impl Fn(TokenLabel) -> bool) -> usize {
        let per = self.rows * self.cols;
        self.labels[frame * per..(frame + 1) * per].iter().filter(|&&l| pred(l)).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit direction orthogonal to every vector in `basis` (orthonormal).
fn orthogonal_unit(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_unit(rng, dim);
        for b in basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Gram-Schmidt over `dirs`, dropping near-dependent vectors.
fn orthonormal_basis(dirs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for d in dirs {
        let mut v = d.clone();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// A generated scene: visual grid, query tokens and per-token labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub visual: VisualTokenGrid,
    pub text: TextTokenSet,
    pub labels: TokenLabels,
}

pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (kk, hh, ww, dim) = (spec.frames, spec.rows, spec.cols, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let background: Vec<Vec<f64>> = (0..spec.background_dirs).map(|_| gaussian_unit(&mut rng, dim)).collect();
    let cluster_map: Vec<usize> = (0..hh * ww).map(|_| rng.random_range(0..spec.background_dirs)).collect();
    let distractors: Vec<Vec<f64>> = (0..spec.distractors).map(|_| gaussian_unit(&mut rng, dim)).collect();

    let object_dirs: Vec<Vec<f64>> = spec
        .objects
        .iter()
        .map(|o| gaussian_unit(&mut ChaCha8Rng::seed_from_u64(o.direction_seed), dim))
        .collect();
    let bg_basis = orthonormal_basis(&background);
    let novelty_dirs: Vec<Vec<f64>> = spec
        .novelty_events
        .iter()
        .map(|e| orthogonal_unit(&mut ChaCha8Rng::seed_from_u64(e.direction_seed), &bg_basis, dim))
        .collect();

    let per_frame = hh * ww;
    let mut base: Vec<usize> = Vec::with_capacity(kk * per_frame); // index into `dirs`
    let mut labels = Vec::with_capacity(kk * per_frame);
    let n_bg = background.len();
    let n_obj = object_dirs.len();
    for k in 0..kk {
        let shift_r = (spec.background_velocity[0] * k as f64).round() as i64;
        let shift_c = (spec.background_velocity[1] * k as f64).round() as i64;
        for r in 0..hh {
            for c in 0..ww {
                let sr = (r as i64 - shift_r).rem_euclid(hh as i64) as usize;
                let sc = (c as i64 - shift_c).rem_euclid(ww as i64) as usize;
                base.push(cluster_map[sr * ww + sc]);
                labels.push(TokenLabel::Background);
            }
        }
        for (i, obj) in spec.objects.iter().enumerate() {
            let (r0, r1, c0, c1) = spec.object_rect(obj, k);
            for r in r0..r1 {
                for c in c0..c1 {
                    base[k * per_frame + r * ww + c] = n_bg + i;
                    labels[k * per_frame + r * ww + c] = TokenLabel::Object(i);
                }
            }
        }
        for (i, ev) in spec.novelty_events.iter().enumerate() {
            if k < ev.frame || k >= ev.frame + ev.duration {
                continue;
            }
            let reg = ev.region;
            for r in reg.row..reg.row + reg.height {
                for c in reg.col..reg.col + reg.width {
                    base[k * per_frame + r * ww + c] = n_bg + n_obj + i;
                    labels[k * per_frame + r * ww + c] = TokenLabel::Novelty(i);
                }
            }
        }
    }

    let dirs: Vec<&Vec<f64>> = background.iter().chain(&object_dirs).chain(&novelty_dirs).collect();
    let noise_scale = spec.noise_sigma / (dim as f64).sqrt();
    let mut data = Vec::with_capacity(kk * per_frame * dim);
    let mut tok = vec![0.0f64; dim];
    for &b in &base {
        for (t, &d) in tok.iter_mut().zip(dirs[b].iter()) {
            let z: f64 = rng.sample(StandardNormal);
            *t = d + noise_scale * z;
        }
        let n = tok.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            data.extend(tok.iter().map(|x| (x / n) as f32));
        } else {
            data.extend(dirs[b].iter().map(|&x| x as f32));
        }
    }

    let target = match spec.query_target {
        QueryTarget::Object(i) => &object_dirs[i],
        QueryTarget::Novelty(i) => &novelty_dirs[i],
        QueryTarget::Background(i) => &background[i],
    };
    let mut text = Vec::with_capacity((1 + distractors.len()) * dim);
    for d in std::iter::once(target).chain(&distractors) {
        text.extend(d.iter().map(|&x| x as f32));
    }

    Ok(Scene {
        visual: VisualTokenGrid::new(kk, hh, ww, dim, data)?,
        text: TextTokenSet::new(1 + distractors.len(), dim, text)?,
        labels: TokenLabels {
            frames: kk,
            rows: hh,
            cols: ww,
            labels,
        },
    })
}

/// Frames kept by uniform temporal subsampling plus the resulting sampling
/// interval `I = K / M_F` and temporal resolution `TR = M_F / K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsampled {
    pub grid: VisualTokenGrid,
    pub frame_indices: Vec<usize>,
    pub interval: f64,
    pub temporal_resolution: f64,
}

/// Source frame indices `round(m * K / M_F)` for `m = 0..M_F`, deduplicated
/// and topped up with the latest unused frames if rounding collides.
pub fn subsample_indices(source: usize, sampled: usize) -> Result<Vec<usize>> {
    if sampled == 0 || sampled > source {
        return Err(Error::Shape(format!("cannot sample {sampled} of {source} frames")));
    }
    let (k, m) = (source as u128, sampled as u128);
    let mut idx: Vec<usize> = (0..m).map(|i| ((2 * i * k + m) / (2 * m)) as usize).map(|i| i.min(source - 1)).collect();
    idx.dedup();
    let mut f = source;
    while idx.len() < sampled {
        f -= 1;
        if !idx.contains(&f) {
            idx.push(f);
        }
    }
    idx.sort_unstable();
    Ok(idx)
}

pub fn subsample_frames(grid: &VisualTokenGrid, sampled: usize) -> Result<Subsampled> {
    let source = grid.frames();
    let frame_indices = subsample_indices(source, sampled)?;
    let mut data = Vec::with_capacity(sampled * grid.frame(0).len());
    for &f in &frame_indices {
        data.extend_from_slice(grid.frame(f));
    }
    Ok(Subsampled {
        grid: VisualTokenGrid::new(sampled, grid.rows(), grid.cols(), grid.dim(), data)?,
        frame_indices,
        interval: source as f64 / sampled as f64,
        temporal_resolution: sampled as f64 / source as f64,
    })
}
