use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::sig9;

/// Spatial candidate region searched in each history frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    /// Square Chebyshev window of odd side length centred on the token,
    /// clipped at the grid border.
    Neighborhood { side: usize },
    /// Every position of the history frame.
    FullFrame,
}

impl Window {
    /// Half-width of the window, or `None` for the full frame.
    pub fn radius(&self) -> Option<usize> {
        match *self {
            Window::Neighborhood { side } => Some((side - 1) / 2),
            Window::FullFrame => None,
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Neighborhood { side } => write!(f, "{side}"),
            Window::FullFrame => f.write_str("full"),
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(Window::FullFrame);
        }
        let side: usize = s
            .parse()
            .map_err(|_| Error::Config(format!("window must be an odd integer or `full`, got `{s}`")))?;
        if side == 0 || side.is_multiple_of(2) {
            return Err(Error::Config(format!("window side must be odd and >= 1, got {side}")));
        }
        Ok(Window::Neighborhood { side })
    }
}

/// Which redundancy terms enter the score and in which temporal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Relevance minus correspondence and echo terms, matched against earlier frames.
    Full,
    EchoOnly,
    CorrOnly,
    /// Redundancy terms only; relevance and lambda are ignored.
    NoRelevance,
    /// Both terms matched against later frames.
    Reverse,
    /// Echo averaged over both directions where available; correspondence stays forward.
    Bidirection,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::EchoOnly,
        Variant::CorrOnly,
        Variant::NoRelevance,
        Variant::Reverse,
        Variant::Bidirection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::EchoOnly => "echo-only",
            Variant::CorrOnly => "corr-only",
            Variant::NoRelevance => "no-relevance",
            Variant::Reverse => "reverse",
            Variant::Bidirection => "bidirection",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// How many tokens to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Keep {
    /// Fraction of all tokens, in `(0, 1]`.
    Ratio(#[serde(serialize_with = "sig9")] f64),
    /// Exact token count.
    Absolute(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Softmax temperature for echo matching.
    #[serde(serialize_with = "sig9")]
    pub tau: f64,
    pub window: Window,
    /// Number of preceding (or following) frames pooled into the echo candidates.
    pub history: usize,
    /// Weight on relevance; redundancy gets `1 - lambda`.
    #[serde(serialize_with = "sig9")]
    pub lambda: f64,
    pub variant: Variant,
    pub keep: Keep,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            window: Window::FullFrame,
            history: 1,
            lambda: 0.5,
            variant: Variant::Full,
            keep: Keep::Ratio(0.2),
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if let Window::Neighborhood { side } = self.window {
            if side == 0 || side.is_multiple_of(2) {
                return Err(Error::Config(format!("window side must be odd and >= 1, got {side}")));
            }
        }
        if !(1..=3).contains(&self.history) {
            return Err(Error::Config(format!("history must be in 1..=3, got {}", self.history)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must be in [0, 1], got {}", self.lambda)));
        }
        match self.keep {
            Keep::Ratio(r) if !(r > 0.0 && r <= 1.0) => {
                Err(Error::Config(format!("keep ratio must be in (0, 1], got {r}")))
            }
            Keep::Absolute(0) => Err(Error::Config("budget must be >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Builds a config from a flat mapping keyed by the command-line flag
    /// names without their leading dashes (`tau`, `window`, `history`,
    /// `lambda`, `variant`, `keep-ratio`, `budget`). Missing keys take the
    /// defaults; unknown keys are rejected.
    pub fn from_flags(flags: &BTreeMap<String, String>) -> Result<Self> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("cannot parse `{key}` value `{v}`")))
        }

        let mut cfg = PruneConfig::default();
        let mut ratio = None;
        let mut budget = None;
        for (key, value) in flags {
            match key.as_str() {
                "tau" => cfg.tau = parse(key, value)?,
                "window" => cfg.window = value.parse()?,
                "history" => cfg.history = parse(key, value)?,
                "lambda" => cfg.lambda = parse(key, value)?,
                "variant" => cfg.variant = value.parse()?,
                "keep-ratio" => ratio = Some(parse::<f64>(key, value)?),
                "budget" => budget = Some(parse::<usize>(key, value)?),
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        cfg.keep = match (ratio, budget) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("`keep-ratio` and `budget` are mutually exclusive".into()))
            }
            (Some(r), None) => Keep::Ratio(r),
            (None, Some(b)) => Keep::Absolute(b),
            (None, None) => cfg.keep,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
