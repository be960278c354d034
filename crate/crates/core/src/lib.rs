//! Query-aware token pruning for video token grids.
//!
//! Visual tokens are scored by their relevance to a text query minus how
//! well they can be reconstructed from the preceding frame (a "temporal
//! echo"), and a fixed budget of tokens is kept by a single global Top-K.
//!
//! The usual entry point is [`api::prune`]:
//!
//! ```
//! use echoprune::{api, PruneConfig, TextTokenSet, VisualTokenGrid};
//!
//! let visual = VisualTokenGrid::new(2, 2, 2, 2, vec![
//!     1.0, 0.0,  0.0, 1.0,  1.0, 1.0,  1.0, -1.0,
//!     1.0, 0.0,  0.0, 1.0,  -1.0, 1.0, 0.5, 0.5,
//! ]).unwrap();
//! let text = TextTokenSet::new(1, 2, vec![0.0, 1.0]).unwrap();
//! let run = api::prune(&visual, &text, &PruneConfig::default()).unwrap();
//! assert_eq!(run.selection.len(), run.plan.total_budget);
//! ```

pub mod api;
pub mod baselines;
pub mod bench;
pub mod config;
pub mod error;
pub mod oracle;
pub mod report;
pub mod scoring;
pub mod selection;
pub mod synthgen;
pub mod tensor;
pub mod tensor_io;

pub use config::{Keep, PruneConfig, Variant, Window};
pub use error::{Error, Result};
pub use scoring::{score_all, ScoreTable};
pub use selection::{resolve_budget, select_topk, select_uniform, BudgetPlan, Selection};
pub use tensor::{GridShape, Tensor, TextTokenSet, TokenIndex, VisualTokenGrid};
