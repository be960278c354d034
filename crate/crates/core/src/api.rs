//! One-call pruning entry points shared by the command line and by
//! in-memory callers (e.g. host-language bindings).

use std::collections::BTreeMap;
use std::time::Instant;

use crate::config::PruneConfig;
use crate::error::{Error, Result};
use crate::report::{SelectionReport, TimingMs};
use crate::scoring::{score_all, ScoreTable};
use crate::selection::{resolve_budget, select_topk, BudgetPlan, Selection};
use crate::tensor::{TextTokenSet, VisualTokenGrid};

/// Everything produced by one pruning call.
#[derive(Debug, Clone)]
pub struct PruneRun {
    pub config: PruneConfig,
    pub plan: BudgetPlan,
    pub scores: ScoreTable,
    pub selection: Selection,
    pub timing: TimingMs,
}

impl PruneRun {
    pub fn report(&self) -> SelectionReport {
        SelectionReport::new(&self.config, &self.plan, &self.scores, &self.selection, self.timing.clone())
    }
}

pub fn prune(visual: &VisualTokenGrid, text: &TextTokenSet, config: &PruneConfig) -> Result<PruneRun> {
    let start = Instant::now();
    let scores = score_all(visual, text, config)?;
    let scored = Instant::now();
    let plan = resolve_budget(config, visual.shape())?;
    let selection = select_topk(&scores, &plan)?;
    let done = Instant::now();
    Ok(PruneRun {
        config: *config,
        plan,
        scores,
        selection,
        timing: TimingMs {
            score_ms: (scored - start).as_secs_f64() * 1e3,
            select_ms: (done - scored).as_secs_f64() * 1e3,
            total_ms: (done - start).as_secs_f64() * 1e3,
        },
    })
}

/// Kept tokens as plain arrays: one `(frame, row, col)` row and one
/// `(s, r, d_corr, d_echo)` row per kept token, in `(frame, row, col)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayOutput {
    pub indices: Vec<[usize; 3]>,
    pub scores: Vec<[f64; 4]>,
}

/// Prunes contiguous row-major buffers. `config` uses the command-line flag
/// names without dashes as keys, see [`PruneConfig::from_flags`].
pub fn prune_arrays(
    visual: &[f32],
    visual_shape: [usize; 4],
    text: &[f32],
    text_shape: [usize; 2],
    config: &BTreeMap<String, String>,
) -> Result<ArrayOutput> {
    let [k, h, w, d] = visual_shape;
    let [n, td] = text_shape;
    if d != td {
        return Err(Error::DimMismatch { visual: d, text: td });
    }
    let config = PruneConfig::from_flags(config)?;
    let visual = VisualTokenGrid::new(k, h, w, d, visual.to_vec())?;
    let text = TextTokenSet::new(n, td, text.to_vec())?;
    let run = prune(&visual, &text, &config)?;
    let (indices, scores) = run
        .selection
        .tokens()
        .iter()
        .map(|&t| {
            let e = run.scores.get(t);
            ([t.frame, t.row, t.col], [e.s, e.r, e.d_corr, e.d_echo])
        })
        .unzip();
    Ok(ArrayOutput { indices, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, SceneSpec};

    #[test]
    fn arrays_match_in_memory_run() {
        let scene = generate(&SceneSpec::moving_object(4, 5, 5, 8, 17)).unwrap();
        let flags: BTreeMap<String, String> =
            [("tau", "0.1"), ("window", "3"), ("keep-ratio", "0.25")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let out = prune_arrays(scene.visual.data(), [4, 5, 5, 8], scene.text.data(), [1, 8], &flags).unwrap();
        let cfg = PruneConfig::from_flags(&flags).unwrap();
        let run = prune(&scene.visual, &scene.text, &cfg).unwrap();
        assert_eq!(out.indices.len(), run.plan.total_budget);
        let expected: Vec<[usize; 3]> = run.selection.tokens().iter().map(|t| [t.frame, t.row, t.col]).collect();
        assert_eq!(out.indices, expected);
        assert_eq!(out.scores[0][0], run.scores.get(run.selection.tokens()[0]).s);
    }

    #[test]
    fn single_frame_goes_through_quota() {
        let scene = generate(&SceneSpec::moving_object(1, 4, 4, 8, 3)).unwrap();
        let out = prune_arrays(scene.visual.data(), [1, 4, 4, 8], scene.text.data(), [1, 8], &BTreeMap::new()).unwrap();
        // Default keep ratio 0.2 of 16 tokens rounds to 3, all from the quota.
        assert_eq!(out.indices.len(), 3);
        for row in &out.scores {
            assert_eq!((row[2], row[3]), (0.0, 0.0));
            assert!((row[0] - 0.5 * row[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn array_errors() {
        let flags = BTreeMap::new();
        assert!(matches!(prune_arrays(&[1.0; 4], [1, 1, 1, 4], &[1.0; 3], [1, 3], &flags), Err(Error::DimMismatch { .. })));
        assert!(matches!(prune_arrays(&[1.0; 3], [1, 1, 1, 4], &[1.0; 4], [1, 4], &flags), Err(Error::Shape(_))));
        assert!(prune_arrays(&[f32::NAN; 4], [1, 1, 1, 4], &[1.0; 4], [1, 4], &flags).is_err());
        let bad: BTreeMap<String, String> = [("tau".to_string(), "-1".to_string())].into();
        assert!(matches!(prune_arrays(&[1.0; 4], [1, 1, 1, 4], &[1.0; 4], [1, 4], &bad), Err(Error::Config(_))));
    }
}
