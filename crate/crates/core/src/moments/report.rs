use std::io::Write;

use serde::Serialize;

use super::Operator;
use crate::error::{Error, Result};
use crate::pooling::Phase;

pub const CSV_HEADER: &str = "operator,phase,hw,p,scaling,second_moment,stderr,n";

/// Whether the train-phase output carried its compensating scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingTag {
    With,
    Without,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub operator: Operator,
    #[serde(serialize_with = "phase_str")]
    pub phase: Phase,
    pub hw: usize,
    pub p: Option<f64>,
    pub scaling: ScalingTag,
    pub second_moment: f64,
    pub stderr: f64,
    /// Total number of outputs averaged over all trials.
    pub n: usize,
    /// Per-trial estimates, in trial order.
    #[serde(skip)]
    pub trials: Vec<f64>,
}

fn phase_str<S: serde::Serializer>(phase: &Phase, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&phase.to_string())
}

impl MomentRow {
    fn same_cell(&self, other: &MomentRow) -> bool {
        self.operator == other.operator && self.hw == other.hw && self.p == other.p
    }
}

/// Train-to-test ratio for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRatio {
    pub operator: Operator,
    pub hw: usize,
    pub p: Option<f64>,
    pub scaling: ScalingTag,
    pub ratio: f64,
    /// Standard error of the paired per-trial ratios; `None` with a single trial.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn find(&self, operator: Operator, phase: Phase, hw: usize, p: Option<f64>, scaling: ScalingTag) -> Option<&MomentRow> {
        self.rows.iter().find(|r| {
            r.operator == operator && r.phase == phase && r.hw == hw && r.p == p && r.scaling == scaling
        })
    }

    /// One ratio per train row, against the test row of the same cell.
    pub fn phase_ratios(&self) -> Vec<PhaseRatio> {
        self.rows
            .iter()
            .filter(|r| r.phase == Phase::Train)
            .filter_map(|train| {
                let test = self
                    .rows
                    .iter()
                    .find(|r| r.phase == Phase::Test && r.same_cell(train))?;
                let paired: Vec<f64> = train
                    .trials
                    .iter()
                    .zip(&test.trials)
                    .map(|(a, b)| a / b)
                    .collect();
                Some(PhaseRatio {
                    operator: train.operator,
                    hw: train.hw,
                    p: train.p,
                    scaling: train.scaling,
                    ratio: train.second_moment / test.second_moment,
                    stderr: standard_error(&paired),
                })
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv write failed: {e}"))
}

/// Sample standard deviation over `sqrt(len)`; `None` below two values.
pub(crate) fn standard_error(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((var / n).sqrt())
}

/// Outcome of checking a SAP sweep against its tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct SapCheck {
    /// Largest `|ratio - 1|` over with-scaling rows.
    pub max_with_deviation: f64,
    /// Largest `|ratio * p - 1|` over without-scaling rows, relative to its own tolerance.
    pub max_without_deviation: f64,
    /// Largest `|second_moment * hw - 1|` over test rows.
    pub max_gap_law_deviation: f64,
    pub with_ok: bool,
    pub without_ok: bool,
    pub gap_law_ok: bool,
}

impl SapCheck {
    pub fn passed(&self) -> bool {
        self.with_ok && self.without_ok && self.gap_law_ok
    }
}

/// Tolerance on the unscaled ratio `1/p`: 15% below `p = 0.3`, 10% above.
pub fn without_scaling_tolerance(p: f64) -> f64 {
    if p < 0.3 - 1e-9 {
        0.15
    } else {
        0.10
    }
}

/// Checks the SAP rows of `report`: with-scaling ratios within `tol_with` of
/// 1, unscaled ratios within [`without_scaling_tolerance`] of `1/p`, and
/// `second_moment * hw` of test rows within `tol_gap` of 1.
pub fn check_sap_consistency(report: &MomentReport, tol_with: f64, tol_gap: f64) -> SapCheck {
    let mut check = SapCheck {
        max_with_deviation: 0.0,
        max_without_deviation: 0.0,
        max_gap_law_deviation: 0.0,
        with_ok: true,
        without_ok: true,
        gap_law_ok: true,
    };
    for r in report.phase_ratios().iter().filter(|r| r.operator == Operator::Sap) {
        let p = r.p.unwrap_or(1.0);
        match r.scaling {
            ScalingTag::With => {
                let dev = (r.ratio - 1.0).abs();
                check.max_with_deviation = check.max_with_deviation.max(dev);
                check.with_ok &= dev <= tol_with;
            }
            ScalingTag::Without => {
                let dev = (r.ratio * p - 1.0).abs();
                check.max_without_deviation = check.max_without_deviation.max(dev);
                check.without_ok &= dev <= without_scaling_tolerance(p);
            }
            ScalingTag::None => {}
        }
    }
    for r in report
        .rows
        .iter()
        .filter(|r| r.operator == Operator::Sap && r.phase == Phase::Test)
    {
        let dev = (r.second_moment * r.hw as f64 - 1.0).abs();
        check.max_gap_law_deviation = check.max_gap_law_deviation.max(dev);
        check.gap_law_ok &= dev <= tol_gap;
    }
    check
}
