//! JSON selection report.
//!
//! Keys are emitted in declaration order: `config`, `budget`,
//! `first_frame_quota`, `kept`, `stats`. Every float is rounded to nine
//! significant digits before it is written.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::config::PruneConfig;
use crate::error::{Error, Result};
use crate::scoring::ScoreTable;
use crate::selection::{BudgetPlan, Selection};

/// Rounds `x` to nine significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub fn sig9<S: Serializer>(x: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_f64(round_sig9(*x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptEntry {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
    #[serde(serialize_with = "sig9")]
    pub score: f64,
    #[serde(serialize_with = "sig9")]
    pub r: f64,
    #[serde(serialize_with = "sig9")]
    pub d_corr: f64,
    #[serde(serialize_with = "sig9")]
    pub d_echo: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingMs {
    #[serde(serialize_with = "sig9")]
    pub score_ms: f64,
    #[serde(serialize_with = "sig9")]
    pub select_ms: f64,
    #[serde(serialize_with = "sig9")]
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub tokens_in: usize,
    #[serde(serialize_with = "sig9")]
    pub gamma: f64,
    /// Kept tokens per frame, frame order.
    pub per_frame_kept: Vec<usize>,
    /// Tokens taken by the relevance-ranked first-frame stage.
    pub quota_kept: usize,
    pub zero_norm_visual: usize,
    pub zero_norm_text: usize,
    pub timing: TimingMs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub config: PruneConfig,
    pub budget: usize,
    pub first_frame_quota: usize,
    pub kept: Vec<KeptEntry>,
    pub stats: ReportStats,
}

impl SelectionReport {
    pub fn new(
        config: &PruneConfig,
        plan: &BudgetPlan,
        scores: &ScoreTable,
        selection: &Selection,
        timing: TimingMs,
    ) -> Self {
        let kept = selection
            .tokens()
            .iter()
            .map(|&t| {
                let e = scores.get(t);
                KeptEntry {
                    frame: t.frame,
                    row: t.row,
                    col: t.col,
                    score: e.s,
                    r: e.r,
                    d_corr: e.d_corr,
                    d_echo: e.d_echo,
                }
            })
            .collect();
        Self {
            config: *config,
            budget: selection.len(),
            first_frame_quota: plan.first_frame_quota,
            kept,
            stats: ReportStats {
                tokens_in: scores.len(),
                gamma: plan.gamma,
                per_frame_kept: selection.per_frame_counts(),
                quota_kept: selection.from_quota(),
                zero_norm_visual: scores.zero_norm_visual(),
                zero_norm_text: scores.zero_norm_text(),
                timing,
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn write_report(path: impl AsRef<Path>, report: &SelectionReport) -> Result<()> {
    let path = path.as_ref();
    let mut json = report.to_json()?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<SelectionReport> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SelectionReport::from_json(&s)
}
