//! Wall-clock timing of the scoring + selection pipeline and per-frame
//! retention profiles.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{select_random, select_relevance_only};
use crate::config::{Keep, PruneConfig, Variant, Window};
use crate::error::{Error, Result};
use crate::report::sig9;
use crate::scoring::{score_all, ScoreTable};
use crate::selection::{resolve_budget, select_topk, select_uniform, Selection};
use crate::synthgen::{generate, SceneSpec, TokenLabel, TokenLabels};
use crate::tensor::{TextTokenSet, VisualTokenGrid};

/// Grid size `(frames, rows, cols, dim)`.
pub type Size = (usize, usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingEntry {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub token_count: usize,
    pub warmups: usize,
    pub runs: usize,
    #[serde(serialize_with = "sig9")]
    pub median_ms: f64,
    #[serde(serialize_with = "sig9")]
    pub mean_ms: f64,
    #[serde(serialize_with = "sig9")]
    pub stddev_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub config: PruneConfig,
    pub entries: Vec<TimingEntry>,
}

impl TimingReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6} {:>5} {:>5} {:>5} {:>9} {:>7} {:>4} {:>11} {:>11} {:>11}",
            "frames", "rows", "cols", "dim", "tokens", "warmup", "runs", "median_ms", "mean_ms", "stddev_ms"
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:>6} {:>5} {:>5} {:>5} {:>9} {:>7} {:>4} {:>11.3} {:>11.3} {:>11.3}",
                e.frames, e.rows, e.cols, e.dim, e.token_count, e.warmups, e.runs, e.median_ms, e.mean_ms, e.stddev_ms
            );
        }
        out
    }
}

/// Runs scoring, budgeting and Top-K once, returning the selection and the
/// elapsed wall-clock milliseconds.
pub fn timed_prune(visual: &VisualTokenGrid, text: &TextTokenSet, config: &PruneConfig) -> Result<(Selection, f64)> {
    let start = Instant::now();
    let scores = score_all(visual, text, config)?;
    let plan = resolve_budget(config, visual.shape())?;
    let selection = select_topk(&scores, &plan)?;
    Ok((selection, start.elapsed().as_secs_f64() * 1e3))
}

fn summarize(samples: &[f64]) -> (f64, f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (median, mean, var.sqrt())
}

/// Times the pipeline on a fixed-seed synthetic scene per size. Runs are
/// sequential.
pub fn time_compression(sizes: &[Size], config: &PruneConfig, runs: usize, warmups: usize, seed: u64) -> Result<TimingReport> {
    if sizes.is_empty() {
        return Err(Error::Config("at least one size is required".into()));
    }
    if runs < 3 || warmups < 1 {
        return Err(Error::Config(format!("need runs >= 3 and warmups >= 1, got {runs} and {warmups}")));
    }
    config.validate()?;
    let mut entries = Vec::with_capacity(sizes.len());
    for &(frames, rows, cols, dim) in sizes {
        let scene = generate(&SceneSpec::moving_object(frames, rows, cols, dim, seed))?;
        for _ in 0..warmups {
            timed_prune(&scene.visual, &scene.text, config)?;
        }
        let samples: Vec<f64> = (0..runs)
            .map(|_| timed_prune(&scene.visual, &scene.text, config).map(|(_, ms)| ms))
            .collect::<Result<_>>()?;
        let (median_ms, mean_ms, stddev_ms) = summarize(&samples);
        entries.push(TimingEntry {
            frames,
            rows,
            cols,
            dim,
            token_count: frames * rows * cols,
            warmups,
            runs,
            median_ms,
            mean_ms,
            stddev_ms,
        });
    }
    Ok(TimingReport { config: *config, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingVerdict {
    /// Least-squares slope of log(median time) against log(token count).
    pub slope: f64,
    pub intercept: f64,
    pub pass: bool,
}

pub const SLOPE_BAND: (f64, f64) = (0.8, 1.3);

/// Least-squares fit of `ln y = slope * ln x + intercept`.
pub fn fit_loglog(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Checks that compression time grows linearly in the token count.
pub fn scaling_check(report: &TimingReport) -> Result<ScalingVerdict> {
    let mut counts: Vec<usize> = report.entries.iter().map(|e| e.token_count).collect();
    counts.sort_unstable();
    counts.dedup();
    if report.entries.len() < 4 || counts.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 4,
            got: report.entries.len(),
        });
    }
    let points: Vec<(f64, f64)> = report
        .entries
        .iter()
        .map(|e| (e.token_count as f64, e.median_ms.max(1e-9)))
        .collect();
    let (slope, intercept) = fit_loglog(&points);
    Ok(ScalingVerdict {
        slope,
        intercept,
        pass: (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&slope),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermMeans {
    #[serde(serialize_with = "sig9")]
    pub s: f64,
    #[serde(serialize_with = "sig9")]
    pub r: f64,
    #[serde(serialize_with = "sig9")]
    pub d_corr: f64,
    #[serde(serialize_with = "sig9")]
    pub d_echo: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameRetention {
    pub kept: usize,
    #[serde(serialize_with = "sig9")]
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetentionProfile {
    pub per_frame: Vec<FrameRetention>,
    /// Mean terms over kept tokens; `None` when nothing was kept.
    pub kept_means: Option<TermMeans>,
    /// Mean terms over dropped tokens; `None` when nothing was dropped.
    pub dropped_means: Option<TermMeans>,
}

impl RetentionProfile {
    pub fn total_kept(&self) -> usize {
        self.per_frame.iter().map(|f| f.kept).sum()
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.per_frame.iter().map(|f| f.fraction).collect()
    }
}

pub fn retention_profile(selection: &Selection, scores: &ScoreTable) -> Result<RetentionProfile> {
    let shape = scores.shape();
    if selection.shape() != shape {
        return Err(Error::Shape(format!(
            "selection shape {:?} does not match score table shape {:?}",
            selection.shape(),
            shape
        )));
    }
    let per = shape.tokens_per_frame() as f64;
    let per_frame = selection
        .per_frame_counts()
        .into_iter()
        .map(|kept| FrameRetention { kept, fraction: kept as f64 / per })
        .collect();

    let mut mask = vec![false; shape.num_tokens()];
    for i in selection.flat_indices() {
        mask[i] = true;
    }
    let means = |want: bool| {
        let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == want).collect();
        if idx.is_empty() {
            return None;
        }
        let n = idx.len() as f64;
        let avg = |v: &[f64]| idx.iter().map(|&i| v[i]).sum::<f64>() / n;
        Some(TermMeans {
            s: avg(scores.s()),
            r: avg(scores.r()),
            d_corr: avg(scores.d_corr()),
            d_echo: avg(scores.d_echo()),
        })
    };
    Ok(RetentionProfile {
        per_frame,
        kept_means: means(true),
        dropped_means: means(false),
    })
}

/// Fraction of labelled tokens kept by a selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelRecall {
    /// Kept share of all object tokens, `None` if the scene has none.
    pub object: Option<f64>,
    /// Kept share of all novelty tokens, `None` if the scene has none.
    pub novelty: Option<f64>,
    /// Kept share of background tokens outside the first frame.
    pub background_after_first: Option<f64>,
}

pub fn label_recall(selection: &Selection, labels: &TokenLabels) -> LabelRecall {
    let per_frame = labels.rows * labels.cols;
    let mut kept = vec![false; labels.labels.len()];
    for i in selection.flat_indices() {
        kept[i] = true;
    }
    let share = |pred: &dyn Fn(usize, TokenLabel) -> bool| {
        let (mut hit, mut total) = (0usize, 0usize);
        for (i, &l) in labels.labels.iter().enumerate() {
            if pred(i, l) {
                total += 1;
                hit += usize::from(kept[i]);
            }
        }
        (total > 0).then(|| hit as f64 / total as f64)
    };
    LabelRecall {
        object: share(&|_, l| matches!(l, TokenLabel::Object(_))),
        novelty: share(&|_, l| matches!(l, TokenLabel::Novelty(_))),
        background_after_first: share(&|i, l| l == TokenLabel::Background && i >= per_frame),
    }
}

/// Axes of the ablation matrix. Every `(tau, window)` pair is run for each
/// variant with global Top-K, plus once with per-frame (uniform) Top-K.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub taus: Vec<f64>,
    pub windows: Vec<Window>,
    pub history: usize,
    pub lambda: f64,
    pub keep: Keep,
    /// Seed of the random baseline.
    pub seed: u64,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            taus: vec![0.1, 0.5],
            windows: vec![Window::Neighborhood { side: 3 }, Window::FullFrame],
            history: 1,
            lambda: 0.5,
            keep: Keep::Ratio(0.2),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    /// `topk`, `uniform`, `random` or `relevance-only`.
    pub method: &'static str,
    pub variant: Option<Variant>,
    pub window: Option<Window>,
    pub tau: Option<f64>,
    pub budget: usize,
    pub quota_kept: usize,
    pub profile: RetentionProfile,
    pub recall: Option<LabelRecall>,
}

/// Runs every variant and selector over one input.
pub fn ablation_matrix(
    visual: &VisualTokenGrid,
    text: &TextTokenSet,
    labels: Option<&TokenLabels>,
    grid: &AblationGrid,
) -> Result<Vec<AblationRow>> {
    if let Some(l) = labels {
        if l.shape() != visual.shape() {
            return Err(Error::Shape("labels do not match the visual grid".into()));
        }
    }
    let mut rows = Vec::new();
    let mut push = |method, variant, window, tau, scores: &ScoreTable, sel: Selection| -> Result<()> {
        rows.push(AblationRow {
            method,
            variant,
            window,
            tau,
            budget: sel.len(),
            quota_kept: sel.from_quota(),
            profile: retention_profile(&sel, scores)?,
            recall: labels.map(|l| label_recall(&sel, l)),
        });
        Ok(())
    };

    let mut reference = None;
    for &tau in &grid.taus {
        for &window in &grid.windows {
            for variant in Variant::ALL {
                let config = PruneConfig { tau, window, history: grid.history, lambda: grid.lambda, variant, keep: grid.keep };
                let scores = score_all(visual, text, &config)?;
                let plan = resolve_budget(&config, visual.shape())?;
                push("topk", Some(variant), Some(window), Some(tau), &scores, select_topk(&scores, &plan)?)?;
                if variant == Variant::Full {
                    push("uniform", Some(variant), Some(window), Some(tau), &scores, select_uniform(&scores, &plan)?)?;
                    reference.get_or_insert((scores, plan));
                }
            }
        }
    }
    let (scores, plan) = match reference {
        Some(r) => r,
        None => {
            let config = PruneConfig { history: grid.history, lambda: grid.lambda, keep: grid.keep, ..PruneConfig::default() };
            (score_all(visual, text, &config)?, resolve_budget(&config, visual.shape())?)
        }
    };
    push("random", None, None, None, &scores, select_random(visual.shape(), plan.total_budget, grid.seed)?)?;
    push("relevance-only", None, None, None, &scores, select_relevance_only(visual, text, plan.total_budget)?)?;
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let fmt_opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<15} {:<13} {:>6} {:>5} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "method", "variant", "window", "tau", "kept", "quota", "frame0", "obj_rec", "nov_rec", "bg_ret", "mean_r"
    );
    for row in rows {
        let recall = row.recall.unwrap_or(LabelRecall { object: None, novelty: None, background_after_first: None });
        let _ = writeln!(
            out,
            "{:<15} {:<13} {:>6} {:>5} {:>6} {:>6} {:>8.3} {:>8} {:>8} {:>8} {:>8}",
            row.method,
            row.variant.map_or("-".to_string(), |v| v.to_string()),
            row.window.map_or("-".to_string(), |w| w.to_string()),
            row.tau.map_or("-".to_string(), |t| format!("{t}")),
            row.budget,
            row.quota_kept,
            row.profile.per_frame.first().map_or(0.0, |f| f.fraction),
            fmt_opt(recall.object),
            fmt_opt(recall.novelty),
            fmt_opt(recall.background_after_first),
            fmt_opt(row.profile.kept_means.map(|m| m.r)),
        );
    }
    out
}
