//! Monte-Carlo second-moment lab.
//!
//! Every sweep draws fresh standard-normal (or, for probability-map pooling,
//! uniform) inputs per trial, pushes them through an operator in both phases
//! and records the mean squared output. Rows carry the across-trial standard
//! error so that tolerances can be read against sampling noise.

mod engine;
mod report;

pub use engine::{run_grid, run_inconsistency_demos, run_keepprob_sweep, run_spatial_sweep};
pub use report::{
    check_sap_consistency, MomentReport, MomentRow, PhaseRatio, SapCheck, ScalingTag, CSV_HEADER,
    without_scaling_tolerance,
};

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{check_keep_prob, Error, Result};
use crate::masks::kept_count;

/// Operator measured by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Sap,
    Dropout,
    Ss,
    Zeiler,
}

impl Operator {
    fn stream_tag(self) -> u64 {
        match self {
            Operator::Sap => 1,
            Operator::Dropout => 2,
            Operator::Ss => 3,
            Operator::Zeiler => 4,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Sap => "sap",
            Operator::Dropout => "dropout",
            Operator::Ss => "ss",
            Operator::Zeiler => "zeiler",
        })
    }
}

impl FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sap" => Operator::Sap,
            "dropout" => Operator::Dropout,
            "ss" => Operator::Ss,
            "zeiler" => Operator::Zeiler,
            other => return Err(Error::InvalidConfig(format!("unknown operator `{other}`"))),
        })
    }
}

/// Which train-phase SAP series to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    With,
    Without,
    Both,
}

impl Scaling {
    fn with(self) -> bool {
        matches!(self, Scaling::With | Scaling::Both)
    }

    fn without(self) -> bool {
        matches!(self, Scaling::Without | Scaling::Both)
    }
}

/// Sweep grid: every `(spatial size, keep prob)` cell gets a test row and
/// one or more train rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_batch: usize,
    pub n_channels: usize,
    /// Side lengths `H = W`.
    pub spatial_sizes: Vec<usize>,
    pub keep_probs: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub scaling: Scaling,
    pub operator: Operator,
    /// Worker threads for trial-level parallelism. Does not affect results.
    pub jobs: usize,
}

pub const DEFAULT_BATCH: usize = 64;
pub const DEFAULT_CHANNELS: usize = 256;
pub const DEFAULT_TRIALS: usize = 8;
pub const DEFAULT_KEEP_PROB: f64 = 0.5;

/// `2, 4, ..., 256`.
pub fn default_spatial_sizes() -> Vec<usize> {
    (1..=8).map(|e| 1usize << e).collect()
}

/// `0.1, 0.2, ..., 0.9`.
pub fn default_keep_probs() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl SweepConfig {
    /// Spatial sweep: `H = W in {2, ..., 256}` at `p = 0.5`.
    pub fn spatial_default(seed: u64) -> Self {
        Self {
            n_batch: DEFAULT_BATCH,
            n_channels: DEFAULT_CHANNELS,
            spatial_sizes: default_spatial_sizes(),
            keep_probs: vec![DEFAULT_KEEP_PROB],
            n_trials: DEFAULT_TRIALS,
            seed,
            scaling: Scaling::Both,
            operator: Operator::Sap,
            jobs: 1,
        }
    }

    /// Keep-probability sweep: `p in {0.1, ..., 0.9}` at `H = W = 256`.
    pub fn keep_prob_default(seed: u64) -> Self {
        Self {
            spatial_sizes: vec![256],
            keep_probs: default_keep_probs(),
            ..Self::spatial_default(seed)
        }
    }

    /// Dropout / subsampling / probability-map demos on ~10^6-element inputs.
    pub fn demos_default(seed: u64) -> Self {
        Self {
            n_batch: 16,
            n_channels: 64,
            spatial_sizes: vec![32],
            keep_probs: vec![0.5, 0.8],
            ..Self::spatial_default(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_batch == 0 || self.n_channels == 0 {
            return bad("batch and channel counts must be positive".into());
        }
        if self.n_trials == 0 {
            return bad("at least one trial is required".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if self.spatial_sizes.is_empty() || self.keep_probs.is_empty() {
            return bad("spatial sizes and keep probabilities must be non-empty".into());
        }
        if let Some(h) = self.spatial_sizes.iter().find(|&&h| h == 0) {
            return bad(format!("spatial size {h} is not positive"));
        }
        for &p in &self.keep_probs {
            check_keep_prob(p)?;
            for &h in &self.spatial_sizes {
                if kept_count(h * h, p) == 0 {
                    return Err(Error::EmptySubsample { n: h * h, p });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for SweepConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "operator={} N={} C={} sizes={:?} keep_probs={:?} trials={} seed={} scaling={:?} jobs={}",
            self.operator,
            self.n_batch,
            self.n_channels,
            self.spatial_sizes,
            self.keep_probs,
            self.n_trials,
            self.seed,
            self.scaling,
            self.jobs
        )
    }
}
