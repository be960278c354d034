//! Naive reference implementation used to check [`crate::scoring`] and
//! [`crate::selection`].
//!
//! Everything here is computed token by token with scalar loops, candidate
//! sets are materialised, the reconstruction vector is built explicitly, and
//! selection fully sorts every pool. Nothing is shared with the fast path
//! except the config and the budget plan.

use crate::config::{PruneConfig, Variant, Window};
use crate::error::{Error, Result};
use crate::scoring::ScoreTable;
use crate::selection::{BudgetPlan, Selection};
use crate::tensor::{TextTokenSet, VisualTokenGrid};

fn unit(v: &[f32]) -> Vec<f64> {
    let mut sq = 0.0;
    for &x in v {
        sq += f64::from(x) * f64::from(x);
    }
    let n = sq.sqrt();
    v.iter().map(|&x| if n > 0.0 { f64::from(x) / n } else { 0.0 }).collect()
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Echo similarity of `v` against explicit `candidates`: softmax matching
/// weights, explicit reconstruction, then inner product with `v`.
fn echo(v: &[f64], candidates: &[&Vec<f64>], tau: f64) -> f64 {
    let rho: Vec<f64> = candidates.iter().map(|c| inner(v, c) / tau).collect();
    let mut m = f64::NEG_INFINITY;
    for &x in &rho {
        if x > m {
            m = x;
        }
    }
    let e: Vec<f64> = rho.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let mut recon = vec![0.0; v.len()];
    for (j, c) in candidates.iter().enumerate() {
        let p = e[j] / z;
        for d in 0..v.len() {
            recon[d] += p * c[d];
        }
    }
    inner(v, &recon)
}

pub fn oracle_score(visual: &VisualTokenGrid, text: &TextTokenSet, config: &PruneConfig) -> Result<ScoreTable> {
    config.validate()?;
    if visual.dim() != text.dim() {
        return Err(Error::DimMismatch {
            visual: visual.dim(),
            text: text.dim(),
        });
    }
    let (kk, hh, ww) = (visual.frames() as isize, visual.rows() as isize, visual.cols() as isize);
    let tokens: Vec<Vec<Vec<Vec<f64>>>> = (0..kk)
        .map(|k| {
            (0..hh)
                .map(|r| {
                    (0..ww)
                        .map(|c| unit(visual.token(crate::TokenIndex::new(k as usize, r as usize, c as usize))))
                        .collect()
                })
                .collect()
        })
        .collect();
    let texts: Vec<Vec<f64>> = (0..text.count()).map(|j| unit(text.token(j))).collect();

    let radius: Option<isize> = match config.window {
        Window::Neighborhood { side } => Some((side as isize - 1) / 2),
        Window::FullFrame => None,
    };
    let h = config.history as isize;

    // Candidates from frames k+step, k+2*step, ... up to `history` frames away.
    let candidates = |k: isize, r: isize, c: isize, step: isize| -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for o in 1..=h {
            let f = k + step * o;
            if f < 0 || f >= kk {
                continue;
            }
            for rr in 0..hh {
                for cc in 0..ww {
                    let inside = match radius {
                        None => true,
                        Some(rad) => (rr - r).abs() <= rad && (cc - c).abs() <= rad,
                    };
                    if inside {
                        out.push(&tokens[f as usize][rr as usize][cc as usize]);
                    }
                }
            }
        }
        out
    };

    let n = (kk * hh * ww) as usize;
    let (mut rs, mut dcs, mut des, mut flags) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..kk {
        for r in 0..hh {
            for c in 0..ww {
                let v = &tokens[k as usize][r as usize][c as usize];

                let mut rel = f64::NEG_INFINITY;
                for t in &texts {
                    rel = rel.max(inner(v, t));
                }

                let fwd = candidates(k, r, c, -1);
                let bwd = candidates(k, r, c, 1);
                let (d_echo, flagged) = match config.variant {
                    Variant::Reverse => {
                        if bwd.is_empty() { (0.0, true) } else { (echo(v, &bwd, config.tau), false) }
                    }
                    Variant::Bidirection => match (fwd.is_empty(), bwd.is_empty()) {
                        (false, false) => ((echo(v, &fwd, config.tau) + echo(v, &bwd, config.tau)) / 2.0, false),
                        (false, true) => (echo(v, &fwd, config.tau), false),
                        (true, false) => (echo(v, &bwd, config.tau), false),
                        (true, true) => (0.0, true),
                    },
                    _ => {
                        if fwd.is_empty() { (0.0, true) } else { (echo(v, &fwd, config.tau), false) }
                    }
                };

                let partner = if config.variant == Variant::Reverse { k + 1 } else { k - 1 };
                let d_corr = if flagged || partner < 0 || partner >= kk {
                    0.0
                } else {
                    inner(v, &tokens[partner as usize][r as usize][c as usize])
                };

                rs.push(rel);
                dcs.push(d_corr);
                des.push(d_echo);
                flags.push(flagged);
            }
        }
    }

    let shape = visual.shape();
    let mut table = ScoreTable::from_terms(shape, rs.clone(), dcs.clone(), des.clone(), flags, config)?;
    // Recompute s by the literal formula rather than through combine_scores.
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let delta = match config.variant {
                Variant::EchoOnly => des[i],
                Variant::CorrOnly => dcs[i],
                _ => dcs[i] + des[i],
            };
            if config.variant == Variant::NoRelevance {
                -delta
            } else {
                config.lambda * rs[i] - (1.0 - config.lambda) * delta
            }
        })
        .collect();
    table.overwrite_s(s);
    Ok(table)
}

/// Full-sort selection under the same two-stage rule as
/// [`crate::selection::select_topk`].
pub fn oracle_select(scores: &ScoreTable, plan: &BudgetPlan) -> Result<Selection> {
    let shape = scores.shape();
    let n = shape.num_tokens();
    let per_frame = shape.tokens_per_frame();
    if plan.total_budget == 0 || plan.total_budget > n {
        return Err(Error::Budget(format!("plan budget {} does not fit {n} tokens", plan.total_budget)));
    }
    let sort_desc = |mut pool: Vec<usize>, key: &[f64]| {
        pool.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
        pool
    };

    let mut kept = Vec::new();
    let mut leftovers = Vec::new();
    let mut quota_frame = vec![false; shape.frames];
    for &(frame, q) in &plan.quota_split {
        if frame >= shape.frames {
            return Err(Error::Budget(format!("quota frame {frame} out of range")));
        }
        quota_frame[frame] = true;
        let ranked = sort_desc((frame * per_frame..(frame + 1) * per_frame).collect(), scores.r());
        kept.extend_from_slice(&ranked[..q.min(ranked.len())]);
        leftovers.extend_from_slice(&ranked[q.min(ranked.len())..]);
    }
    let from_quota = kept.len();
    let rest = sort_desc((0..n).filter(|&i| !quota_frame[i / per_frame]).collect(), scores.s());
    let spill = sort_desc(leftovers, scores.s());
    for i in rest.into_iter().chain(spill) {
        if kept.len() == plan.total_budget {
            break;
        }
        kept.push(i);
    }
    Ok(Selection::from_flat(shape, kept, from_quota))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Keep;
    use crate::scoring::score_all;
    use crate::selection::{resolve_budget, select_topk};

    #[test]
    fn single_token_relevance() {
        let v = VisualTokenGrid::new(1, 1, 1, 3, vec![1.0, 2.0, 2.0]).unwrap();
        let t = TextTokenSet::new(1, 3, vec![0.0, 3.0, 4.0]).unwrap();
        let table = oracle_score(&v, &t, &PruneConfig::default()).unwrap();
        // (1,2,2)/3 . (0,3,4)/5 = 14/15
        assert!((table.r()[0] - 14.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn window_one_makes_echo_equal_corr() {
        let data: Vec<f32> = (0..3 * 2 * 3 * 4).map(|i| ((i * 31 % 13) as f32) - 6.0).collect();
        let v = VisualTokenGrid::new(3, 2, 3, 4, data).unwrap();
        let t = TextTokenSet::new(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let cfg = PruneConfig { window: Window::Neighborhood { side: 1 }, tau: 0.1, ..PruneConfig::default() };
        let table = oracle_score(&v, &t, &cfg).unwrap();
        assert_eq!(table.d_corr(), table.d_echo());
        let fast = score_all(&v, &t, &cfg).unwrap();
        for i in 0..table.len() {
            assert!((fast.s()[i] - table.s()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn select_identity_and_reversed() {
        let shape = crate::GridShape::new(2, 1, 3);
        let cfg = PruneConfig { lambda: 1.0, keep: Keep::Ratio(1.0), variant: Variant::Bidirection, ..PruneConfig::default() };
        let s: Vec<f64> = (0..6).map(|i| -(i as f64)).collect();
        let table = ScoreTable::from_terms(shape, s, vec![0.0; 6], vec![0.0; 6], vec![false; 6], &cfg).unwrap();
        let all = resolve_budget(&cfg, shape).unwrap();
        assert_eq!(oracle_select(&table, &all).unwrap().flat_indices(), (0..6).collect::<Vec<_>>());

        let rev_scores: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let rev = ScoreTable::from_terms(shape, rev_scores, vec![0.0; 6], vec![0.0; 6], vec![false; 6], &cfg).unwrap();
        let plan = resolve_budget(&PruneConfig { keep: Keep::Absolute(2), ..cfg }, shape).unwrap();
        let sel = oracle_select(&rev, &plan).unwrap();
        assert_eq!(sel.flat_indices(), vec![4, 5]);
        assert_eq!(sel, select_topk(&rev, &plan).unwrap());
    }
}
