use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dp::{budget_report, Mode, PrivacyBudget};
use crate::index::Strategy;
use crate::{Error, Result};

/// Which mechanism runs first in GL mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlOrder {
    #[default]
    GlobalFirst,
    LocalFirst,
}

impl std::str::FromStr for GlOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global_first" | "global-first" => Ok(GlOrder::GlobalFirst),
            "local_first" | "local-first" => Ok(GlOrder::LocalFirst),
            other => Err(Error::Config(format!("unknown GL order `{other}`"))),
        }
    }
}

fn default_m() -> usize {
    10
}

fn default_granularity() -> u32 {
    512
}

fn default_strategy() -> Strategy {
    Strategy::BottomUpDown
}

/// Anonymization run settings.
///
/// Either give the component budgets directly or only `eps`, which is
/// assigned to the single mechanism of a pure mode and split evenly in GL
/// mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_global: Option<f64>,
    #[serde(default)]
    pub eps_local: Option<f64>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_granularity")]
    pub granularity: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gl_order: GlOrder,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Adds wall-clock phase timings to the run report. Off by default so
    /// that reports are reproducible byte for byte.
    #[serde(default)]
    pub report_timings: bool,
}

impl RunConfig {
    pub fn new(mode: Mode, eps: f64, seed: u64) -> Self {
        Self {
            mode,
            eps: Some(eps),
            eps_global: None,
            eps_local: None,
            m: default_m(),
            granularity: default_granularity(),
            seed,
            gl_order: GlOrder::default(),
            strategy: default_strategy(),
            report_timings: false,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Component budgets after applying the `eps` shorthand.
    pub fn budget(&self) -> Result<PrivacyBudget> {
        let (g, l) = match (self.eps, self.eps_global, self.eps_local) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::Config(
                    "give either eps or eps_global/eps_local, not both".into(),
                ))
            }
            (Some(e), None, None) => match self.mode {
                Mode::PureG => (e, 0.0),
                Mode::PureL => (0.0, e),
                Mode::GL => (e / 2.0, e / 2.0),
            },
            (None, g, l) => (g.unwrap_or(f64::NAN), l.unwrap_or(f64::NAN)),
        };
        budget_report(self.mode, g, l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !self.granularity.is_power_of_two() || self.granularity < 2 || self.granularity > 1 << 16 {
            return Err(Error::Config(format!(
                "granularity must be a power of two in [2, 65536], got {}",
                self.granularity
            )));
        }
        self.budget().map(|_| ())
    }
}

/// Evaluation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Signature size for the linking attack.
    pub m: usize,
    /// Histogram bins for the diameter distribution.
    pub bins: usize,
    /// Side of the coarse grid used for trip endpoints.
    pub te_grid: u32,
    /// Number of frequent patterns compared.
    pub ffp_k: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            m: 10,
            bins: 20,
            te_grid: 8,
            ffp_k: 50,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.bins == 0 || self.te_grid == 0 || self.ffp_k == 0 {
            return Err(Error::Config("metric parameters must all be at least 1".into()));
        }
        Ok(())
    }
}
