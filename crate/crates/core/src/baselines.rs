//! Comparison pruners: uniform random sampling and relevance-only Top-K.
//!
//! Random selection is reproducible across implementations:
//!
//! * generator: SplitMix64 with the seed as its initial 64-bit state,
//! * sampling: partial Fisher-Yates over the flat indices `0..N`; step `i`
//!   draws `x = next_u64()` and swaps position `i` with
//!   `i + ((x as u128 * (N - i) as u128) >> 64)`,
//! * the first `B` positions after `B` steps are the kept tokens.

use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::scoring::{normalize, relevance, UnitGrid};
use crate::selection::{select_by_key, Selection};
use crate::tensor::{GridShape, TextTokenSet, VisualTokenGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Random { seed: u64 },
    RelevanceOnly,
}

/// Maps a uniform 64-bit draw onto `0..n` by multiply-shift.
fn bounded(x: u64, n: usize) -> usize {
    ((u128::from(x) * n as u128) >> 64) as usize
}

pub fn select_random(shape: GridShape, budget: usize, seed: u64) -> Result<Selection> {
    shape.validate()?;
    let total = shape.num_tokens();
    if budget == 0 || budget > total {
        return Err(Error::Budget(format!("budget must be in 1..={total}, got {budget}")));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..total).collect();
    for i in 0..budget {
        let j = i + bounded(rng.next_u64(), total - i);
        order.swap(i, j);
    }
    order.truncate(budget);
    Ok(Selection::from_flat(shape, order, 0))
}

/// Global Top-`budget` by query relevance alone.
pub fn select_relevance_only(visual: &VisualTokenGrid, text: &TextTokenSet, budget: usize) -> Result<Selection> {
    let unit_visual = UnitGrid::new(visual);
    let unit_text = normalize(text.data(), text.dim());
    let r = relevance(&unit_visual, &unit_text)?;
    select_by_key(visual.shape(), &r, budget)
}
