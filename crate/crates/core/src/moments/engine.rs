use rand::Rng;
use rayon::prelude::*;

use super::report::standard_error;
use super::{MomentReport, MomentRow, Operator, ScalingTag, SweepConfig};
use crate::error::{Error, Result};
use crate::masks::subsample_indices;
use crate::pooling::{dropout, stochastic_subsample, zeiler_stochastic_pool, Phase, PoolSize};
use crate::rng::RngStream;
use crate::tensor::{fill_gaussian, gaussian_plane_stream, sample_gaussian, Tensor4};

/// Sum of squares and fourth powers of one trial's outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct TrialStats {
    sum2: f64,
    sum4: f64,
    count: usize,
}

impl TrialStats {
    fn push(&mut self, y: f64) {
        let y2 = y * y;
        self.sum2 += y2;
        self.sum4 += y2 * y2;
        self.count += 1;
    }

    fn extend(&mut self, values: &[f64]) {
        for &v in values {
            self.push(v);
        }
    }

    fn estimate(&self) -> f64 {
        self.sum2 / self.count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RowKey {
    phase: Phase,
    p: Option<f64>,
    scaling: ScalingTag,
}

/// Root stream of one `(operator, size, trial)` triple.
pub(crate) fn trial_stream(cfg: &SweepConfig, operator: Operator, side: usize, trial: usize) -> RngStream {
    RngStream::new(cfg.seed, operator.stream_tag())
        .substream(side as u64)
        .substream(trial as u64)
}

fn lane_sum(x: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = x.chunks_exact(8);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn lane_dot(x: &[f64], w: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let xc = x.chunks_exact(8);
    let wc = w.chunks_exact(8);
    let tail: f64 = xc.remainder().iter().zip(wc.remainder()).map(|(a, b)| a * b).sum();
    for (cx, cw) in xc.zip(wc) {
        for i in 0..8 {
            acc[i] += cx[i] * cw[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Global SAP in both phases on streamed `N(0, 1)` planes.
///
/// Plane `(n, c)` and the per-sample masks come from the same sub-streams
/// that [`sample_gaussian`] and [`crate::pooling::sap_forward`] would use when
/// handed `trial.substream(0)` and `trial.substream(1 + j)`, so the result
/// equals the materialized computation without holding the tensor.
fn sap_trial(cfg: &SweepConfig, side: usize, trial: usize) -> Result<Vec<(RowKey, TrialStats)>> {
    let t = trial_stream(cfg, Operator::Sap, side, trial);
    let hw = side * side;
    let input_parent = t.substream(0).next_substream();
    let mask_parents: Vec<RngStream> = (0..cfg.keep_probs.len())
        .map(|j| t.substream(1 + j as u64).next_substream())
        .collect();

    let n_p = cfg.keep_probs.len();
    let mut test = TrialStats::default();
    let mut with = vec![TrialStats::default(); n_p];
    let mut without = vec![TrialStats::default(); n_p];
    let mut plane = vec![0.0; hw];
    let mut weights = vec![vec![0.0; hw]; n_p];
    let mut kept = vec![0usize; n_p];

    for n in 0..cfg.n_batch {
        for (j, &p) in cfg.keep_probs.iter().enumerate() {
            let set = subsample_indices(hw, p, &mut mask_parents[j].substream(n as u64))?;
            weights[j].iter_mut().for_each(|w| *w = 0.0);
            for &i in set.kept() {
                weights[j][i] = 1.0;
            }
            kept[j] = set.len();
        }
        for c in 0..cfg.n_channels {
            fill_gaussian(&mut plane, &gaussian_plane_stream(&input_parent, n, c));
            test.push(lane_sum(&plane) / hw as f64);
            for (j, &p) in cfg.keep_probs.iter().enumerate() {
                let m = lane_dot(&plane, &weights[j]) / kept[j] as f64;
                with[j].push(p.sqrt() * m);
                without[j].push(m);
            }
        }
    }

    let mut rows = Vec::with_capacity(3 * n_p);
    for (j, &p) in cfg.keep_probs.iter().enumerate() {
        rows.push((RowKey { phase: Phase::Test, p: Some(p), scaling: ScalingTag::None }, test));
        if cfg.scaling.with() {
            rows.push((RowKey { phase: Phase::Train, p: Some(p), scaling: ScalingTag::With }, with[j]));
        }
        if cfg.scaling.without() {
            rows.push((RowKey { phase: Phase::Train, p: Some(p), scaling: ScalingTag::Without }, without[j]));
        }
    }
    Ok(rows)
}

fn elementwise_trial(cfg: &SweepConfig, operator: Operator, side: usize, trial: usize) -> Result<Vec<(RowKey, TrialStats)>> {
    let t = trial_stream(cfg, operator, side, trial);
    let shape = [cfg.n_batch, cfg.n_channels, side, side];
    let x = sample_gaussian(shape, &mut t.substream(0))?;
    let mut test = TrialStats::default();
    test.extend(x.data());
    let mut rows = Vec::new();
    for (j, &p) in cfg.keep_probs.iter().enumerate() {
        let mut rng = t.substream(1 + j as u64);
        let (y, scaling) = match operator {
            Operator::Dropout => (dropout(&x, p, Phase::Train, &mut rng)?, ScalingTag::With),
            Operator::Ss => (stochastic_subsample(&x, p, Phase::Train, &mut rng)?, ScalingTag::None),
            _ => unreachable!("only elementwise operators"),
        };
        let mut train = TrialStats::default();
        train.extend(y.data());
        rows.push((RowKey { phase: Phase::Test, p: Some(p), scaling: ScalingTag::None }, test));
        rows.push((RowKey { phase: Phase::Train, p: Some(p), scaling }, train));
    }
    Ok(rows)
}

/// Global probability-map pooling on `U(0, 1)` planes.
fn zeiler_trial(cfg: &SweepConfig, side: usize, trial: usize) -> Result<Vec<(RowKey, TrialStats)>> {
    let t = trial_stream(cfg, Operator::Zeiler, side, trial);
    let shape = [cfg.n_batch, cfg.n_channels, side, side];
    let mut x = Tensor4::zeros(shape)?;
    let parent = t.substream(0);
    for n in 0..cfg.n_batch {
        for c in 0..cfg.n_channels {
            let mut g = gaussian_plane_stream(&parent, n, c).generator();
            x.plane_mut(n, c).iter_mut().for_each(|v| *v = g.random::<f64>());
        }
    }
    let test_out = zeiler_stochastic_pool(&x, PoolSize::Global, Phase::Test, &mut t.substream(1))?;
    let train_out = zeiler_stochastic_pool(&x, PoolSize::Global, Phase::Train, &mut t.substream(1))?;
    let mut test = TrialStats::default();
    test.extend(test_out.data());
    let mut train = TrialStats::default();
    train.extend(train_out.data());
    Ok(vec![
        (RowKey { phase: Phase::Test, p: None, scaling: ScalingTag::None }, test),
        (RowKey { phase: Phase::Train, p: None, scaling: ScalingTag::None }, train),
    ])
}

fn run_trial(cfg: &SweepConfig, side: usize, trial: usize) -> Result<Vec<(RowKey, TrialStats)>> {
    match cfg.operator {
        Operator::Sap => sap_trial(cfg, side, trial),
        Operator::Dropout | Operator::Ss => elementwise_trial(cfg, cfg.operator, side, trial),
        Operator::Zeiler => zeiler_trial(cfg, side, trial),
    }
}

fn aggregate(operator: Operator, hw: usize, per_trial: Vec<Vec<(RowKey, TrialStats)>>) -> Vec<MomentRow> {
    let n_rows = per_trial[0].len();
    (0..n_rows)
        .map(|r| {
            let key = per_trial[0][r].0;
            let stats: Vec<TrialStats> = per_trial.iter().map(|t| t[r].1).collect();
            let trials: Vec<f64> = stats.iter().map(TrialStats::estimate).collect();
            let mean = trials.iter().sum::<f64>() / trials.len() as f64;
            let stderr = standard_error(&trials).unwrap_or_else(|| {
                // single trial: output-level standard error
                let s = stats[0];
                let m4 = s.sum4 / s.count as f64;
                ((m4 - mean * mean).max(0.0) / s.count as f64).sqrt()
            });
            MomentRow {
                operator,
                phase: key.phase,
                hw,
                p: key.p,
                scaling: key.scaling,
                second_moment: mean,
                stderr,
                n: stats.iter().map(|s| s.count).sum(),
                trials,
            }
        })
        .collect()
}

/// Runs `cfg.operator` over every `(size, keep prob)` cell of the grid.
///
/// Trials run on `cfg.jobs` threads and are folded in trial order, so the
/// report does not depend on the thread count.
pub fn run_grid(cfg: &SweepConfig) -> Result<MomentReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut report = MomentReport::default();
    for &side in &cfg.spatial_sizes {
        let per_trial = pool.install(|| {
            (0..cfg.n_trials)
                .into_par_iter()
                .map(|t| run_trial(cfg, side, t))
                .collect::<Result<Vec<_>>>()
        })?;
        report.rows.extend(aggregate(cfg.operator, side * side, per_trial));
    }
    Ok(report)
}

/// Second moments of test-phase GAP and train-phase SAP with and without
/// `sqrt(p)` across spatial sizes.
pub fn run_spatial_sweep(cfg: &SweepConfig) -> Result<MomentReport> {
    if cfg.operator != Operator::Sap {
        return Err(Error::InvalidConfig("the spatial sweep measures the sap operator".into()));
    }
    run_grid(cfg)
}

/// Same measurement across keep probabilities. Within a trial every `p`
/// sees the same input tensor.
pub fn run_keepprob_sweep(cfg: &SweepConfig) -> Result<MomentReport> {
    run_spatial_sweep(cfg)
}

/// Train/test second moments of Dropout, stochastic subsampling (control)
/// and probability-map pooling on the grid of `cfg`.
pub fn run_inconsistency_demos(cfg: &SweepConfig) -> Result<MomentReport> {
    let mut report = MomentReport::default();
    for operator in [Operator::Dropout, Operator::Ss, Operator::Zeiler] {
        let sub = SweepConfig {
            operator,
            ..cfg.clone()
        };
        report.rows.extend(run_grid(&sub)?.rows);
    }
    Ok(report)
}
