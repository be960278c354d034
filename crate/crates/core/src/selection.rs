//! Budget resolution and Top-K token selection.
//!
//! All selectors order tokens by a total order: score descending, then
//! frame, row and column ascending. Because the flat frame-major index
//! encodes `(frame, row, col)` lexicographically, the tie-break reduces to
//! "smaller flat index wins".

use std::cmp::Ordering;

use crate::config::{Keep, PruneConfig};
use crate::error::{Error, Result};
use crate::scoring::{quota_frames, ScoreTable};
use crate::tensor::{GridShape, TokenIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPlan {
    /// Number of tokens to keep, `B`.
    pub total_budget: usize,
    /// Tokens reserved for frames without history, ranked by relevance.
    pub first_frame_quota: usize,
    /// Compression factor, total tokens over `B`.
    pub gamma: f64,
    /// `(frame, quota)` per quota frame; quotas sum to `first_frame_quota`.
    pub quota_split: Vec<(usize, usize)>,
}

/// Integer `round(num / den)` with halves rounded away from zero.
fn round_div(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

pub fn resolve_budget(config: &PruneConfig, shape: GridShape) -> Result<BudgetPlan> {
    shape.validate()?;
    let total = shape.num_tokens();
    let budget = match config.keep {
        Keep::Ratio(ratio) => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::Budget(format!("keep ratio must be in (0, 1], got {ratio}")));
            }
            let b = (ratio * total as f64).round() as usize;
            if b == 0 {
                return Err(Error::Budget(format!(
                    "keep ratio {ratio} of {total} tokens rounds to an empty budget"
                )));
            }
            b.min(total)
        }
        Keep::Absolute(b) => {
            if b == 0 || b > total {
                return Err(Error::Budget(format!("budget must be in 1..={total}, got {b}")));
            }
            b
        }
    };

    let frames = quota_frames(config.variant, shape.frames);
    let per_frame = shape.tokens_per_frame();
    // round(HW / gamma) == round(HW * B / N)
    let quota = if frames.is_empty() {
        0
    } else {
        (round_div(per_frame as u128 * budget as u128, total as u128) as usize).min(budget)
    };

    let mut quota_split = Vec::with_capacity(frames.len());
    if !frames.is_empty() {
        let base = quota / frames.len();
        let extra = quota % frames.len();
        let mut ordered = frames.clone();
        ordered.sort_unstable();
        for (i, f) in ordered.into_iter().enumerate() {
            quota_split.push((f, base + usize::from(i < extra)));
        }
    }

    Ok(BudgetPlan {
        total_budget: budget,
        first_frame_quota: quota,
        gamma: total as f64 / budget as f64,
        quota_split,
    })
}

/// The kept tokens, sorted by `(frame, row, col)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    shape: GridShape,
    tokens: Vec<TokenIndex>,
    from_quota: usize,
}

impl Selection {
    pub(crate) fn from_flat(shape: GridShape, mut flat: Vec<usize>, from_quota: usize) -> Self {
        flat.sort_unstable();
        flat.dedup();
        Self {
            shape,
            tokens: flat.into_iter().map(|i| shape.unflat(i)).collect(),
            from_quota,
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn tokens(&self) -> &[TokenIndex] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// How many tokens were taken by the relevance-ranked quota stage.
    pub fn from_quota(&self) -> usize {
        self.from_quota
    }

    pub fn flat_indices(&self) -> Vec<usize> {
        self.tokens.iter().map(|&t| self.shape.flat(t)).collect()
    }

    pub fn contains(&self, idx: TokenIndex) -> bool {
        self.tokens.binary_search(&idx).is_ok()
    }

    pub fn per_frame_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.shape.frames];
        for t in &self.tokens {
            counts[t.frame] += 1;
        }
        counts
    }
}

/// Descending by key, ties to the smaller flat index.
pub(crate) fn rank_order(key: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b))
}

/// Moves the `k` best entries of `pool` (under [`rank_order`]) to its front
/// and returns them; the remainder stays in `pool`.
fn take_top(pool: &mut Vec<usize>, k: usize, key: &[f64]) -> Vec<usize> {
    let k = k.min(pool.len());
    if k == 0 {
        return Vec::new();
    }
    if k < pool.len() {
        pool.select_nth_unstable_by(k - 1, rank_order(key));
    }
    pool.drain(..k).collect()
}

fn check_plan(scores: &ScoreTable, plan: &BudgetPlan) -> Result<()> {
    let shape = scores.shape();
    let total = shape.num_tokens();
    if plan.total_budget == 0 || plan.total_budget > total {
        return Err(Error::Budget(format!(
            "plan budget {} does not fit a table of {total} tokens",
            plan.total_budget
        )));
    }
    let mut quota_sum = 0;
    for &(frame, q) in &plan.quota_split {
        if frame >= shape.frames || q > shape.tokens_per_frame() {
            return Err(Error::Budget(format!(
                "quota {q} for frame {frame} does not fit {} frames of {} tokens",
                shape.frames,
                shape.tokens_per_frame()
            )));
        }
        quota_sum += q;
    }
    if quota_sum != plan.first_frame_quota || quota_sum > plan.total_budget {
        return Err(Error::Budget(format!(
            "quota split sums to {quota_sum}, plan says {} of budget {}",
            plan.first_frame_quota, plan.total_budget
        )));
    }
    Ok(())
}

/// Global Top-K with a relevance-ranked quota for frames that lack history.
///
/// Stage 1 takes each quota frame's share by `r`. Stage 2 fills the rest of
/// the budget by `s` from the frames that have history. Quota frames
/// compete in stage 2 only when the other frames run out of tokens.
pub fn select_topk(scores: &ScoreTable, plan: &BudgetPlan) -> Result<Selection> {
    check_plan(scores, plan)?;
    let shape = scores.shape();
    let per_frame = shape.tokens_per_frame();

    let mut is_quota_frame = vec![false; shape.frames];
    let mut kept = Vec::with_capacity(plan.total_budget);
    let mut leftovers = Vec::new();
    for &(frame, q) in &plan.quota_split {
        is_quota_frame[frame] = true;
        let mut pool: Vec<usize> = (frame * per_frame..(frame + 1) * per_frame).collect();
        kept.extend(take_top(&mut pool, q, scores.r()));
        leftovers.extend(pool);
    }
    let from_quota = kept.len();

    let mut pool: Vec<usize> = (0..shape.num_tokens())
        .filter(|&i| !is_quota_frame[i / per_frame])
        .collect();
    let remaining = plan.total_budget - kept.len();
    kept.extend(take_top(&mut pool, remaining, scores.s()));
    let remaining = plan.total_budget - kept.len();
    kept.extend(take_top(&mut leftovers, remaining, scores.s()));

    Ok(Selection::from_flat(shape, kept, from_quota))
}

/// Per-frame Top-K with the budget split evenly over frames, remainder to
/// the earliest frames. Frames without history rank by `r`, others by `s`.
pub fn select_uniform(scores: &ScoreTable, plan: &BudgetPlan) -> Result<Selection> {
    check_plan(scores, plan)?;
    let shape = scores.shape();
    let per_frame = shape.tokens_per_frame();
    let base = plan.total_budget / shape.frames;
    let extra = plan.total_budget % shape.frames;

    let mut kept = Vec::with_capacity(plan.total_budget);
    let mut from_quota = 0;
    for k in 0..shape.frames {
        let b = base + usize::from(k < extra);
        let range = k * per_frame..(k + 1) * per_frame;
        let by_relevance = scores.first_frame()[range.start];
        let key = if by_relevance { scores.r() } else { scores.s() };
        let mut pool: Vec<usize> = range.collect();
        let top = take_top(&mut pool, b, key);
        if by_relevance {
            from_quota += top.len();
        }
        kept.extend(top);
    }
    Ok(Selection::from_flat(shape, kept, from_quota))
}

/// Global Top-`budget` of an arbitrary per-token key, no quota.
pub fn select_by_key(shape: GridShape, key: &[f64], budget: usize) -> Result<Selection> {
    shape.validate()?;
    let total = shape.num_tokens();
    if key.len() != total {
        return Err(Error::Shape(format!("key has {} entries for {total} tokens", key.len())));
    }
    if budget == 0 || budget > total {
        return Err(Error::Budget(format!("budget must be in 1..={total}, got {budget}")));
    }
    let mut pool: Vec<usize> = (0..total).collect();
    let kept = take_top(&mut pool, budget, key);
    Ok(Selection::from_flat(shape, kept, 0))
}
