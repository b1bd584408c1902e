//! Stochastic average pooling.
//!
//! Train phase: subsample `floor(HW * p)` spatial positions per sample
//! (shared across channels by default), average the survivors of every
//! pooling window, and multiply by `sqrt(p)`. Test phase: plain average
//! pooling. The `sqrt(p)` factor compensates the `1/p` larger second moment
//! of averaging `p` times fewer elements, so both phases emit the same
//! second moment for i.i.d. zero-mean inputs.

use super::average::pool_planes;
use super::{Phase, PoolSize, WindowGrid};
use crate::error::{check_keep_prob, Error, Result};
use crate::masks::{subsample_indices, ChannelMode, IndexSet};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

/// How surviving elements are assigned to output cells for windowed pooling.
/// Both rules coincide for global pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowMembership {
    /// Each output averages the kept elements that lie inside its own `r x r` window.
    #[default]
    PerWindow,
    /// The gathered subsample (in permutation order) is cut into equal
    /// consecutive groups, one per output cell.
    GatherOrder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SapConfig {
    pub pool: PoolSize,
    pub keep_prob: f64,
    pub membership: WindowMembership,
    pub channel_mode: ChannelMode,
    /// Apply the `sqrt(p)` factor in train phase. Disabling it is only useful
    /// for demonstrating the resulting second-moment mismatch.
    pub scaling: bool,
}

impl SapConfig {
    pub fn global(keep_prob: f64) -> Self {
        Self {
            pool: PoolSize::Global,
            keep_prob,
            membership: WindowMembership::PerWindow,
            channel_mode: ChannelMode::Shared,
            scaling: true,
        }
    }

    pub fn window(r: usize, keep_prob: f64) -> Self {
        Self {
            pool: PoolSize::Window(r),
            ..Self::global(keep_prob)
        }
    }

    pub fn with_membership(mut self, membership: WindowMembership) -> Self {
        self.membership = membership;
        self
    }

    pub fn with_channel_mode(mut self, mode: ChannelMode) -> Self {
        self.channel_mode = mode;
        self
    }

    pub fn with_scaling(mut self, scaling: bool) -> Self {
        self.scaling = scaling;
        self
    }

    fn scale(&self) -> f64 {
        if self.scaling {
            self.keep_prob.sqrt()
        } else {
            1.0
        }
    }

    fn masks_expected(&self, shape: [usize; 4]) -> usize {
        match self.channel_mode {
            ChannelMode::Shared => shape[0],
            ChannelMode::Independent => shape[0] * shape[1],
        }
    }
}

/// What the backward pass needs from a forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct SapSavedState {
    input_shape: [usize; 4],
    config: SapConfig,
    phase: Phase,
    masks: Vec<IndexSet>,
    fallback_windows: usize,
}

impl SapSavedState {
    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    pub fn config(&self) -> &SapConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Kept-index sets: one per sample (shared) or per `(sample, channel)`
    /// (independent, sample-major). Empty in test phase.
    pub fn masks(&self) -> &[IndexSet] {
        &self.masks
    }

    /// Windows that lost every element and fell back to their full mean.
    pub fn fallback_windows(&self) -> usize {
        self.fallback_windows
    }

    fn mask(&self, n: usize, c: usize) -> &IndexSet {
        match self.config.channel_mode {
            ChannelMode::Shared => &self.masks[n],
            ChannelMode::Independent => &self.masks[n * self.input_shape[1] + c],
        }
    }

    /// Dense keep flags for plane `(n, c)`; all true in test phase.
    pub fn kept_flags(&self, n: usize, c: usize) -> Vec<bool> {
        match self.phase {
            Phase::Test => vec![true; self.input_shape[2] * self.input_shape[3]],
            Phase::Train => self.mask(n, c).to_flags(),
        }
    }
}

fn validate(shape: [usize; 4], config: &SapConfig) -> Result<WindowGrid> {
    check_keep_prob(config.keep_prob)?;
    WindowGrid::new(shape[2], shape[3], config.pool)
}

/// Draws the train-phase index sets for an input of `shape`.
pub fn draw_sap_masks(shape: [usize; 4], config: &SapConfig, rng: &mut RngStream) -> Result<Vec<IndexSet>> {
    validate(shape, config)?;
    let hw = shape[2] * shape[3];
    let p = config.keep_prob;
    let parent = rng.next_substream();
    match config.channel_mode {
        ChannelMode::Shared => (0..shape[0])
            .map(|n| subsample_indices(hw, p, &mut parent.substream(n as u64)))
            .collect(),
        ChannelMode::Independent => (0..shape[0])
            .flat_map(|n| (0..shape[1]).map(move |c| (n, c)))
            .map(|(n, c)| subsample_indices(hw, p, &mut parent.substream(n as u64).substream(c as u64)))
            .collect(),
    }
}

/// Forward pass. Test phase never touches `rng`.
pub fn sap_forward(
    x: &Tensor4,
    config: &SapConfig,
    phase: Phase,
    rng: &mut RngStream,
) -> Result<(Tensor4, SapSavedState)> {
    let grid = validate(x.shape(), config)?;
    match phase {
        Phase::Test => {
            let out = pool_planes(x, &grid)?;
            let state = SapSavedState {
                input_shape: x.shape(),
                config: *config,
                phase,
                masks: Vec::new(),
                fallback_windows: 0,
            };
            Ok((out, state))
        }
        Phase::Train => {
            let masks = draw_sap_masks(x.shape(), config, rng)?;
            sap_forward_with_masks(x, config, masks)
        }
    }
}

/// Train-phase forward with caller-supplied index sets.
pub fn sap_forward_with_masks(
    x: &Tensor4,
    config: &SapConfig,
    masks: Vec<IndexSet>,
) -> Result<(Tensor4, SapSavedState)> {
    let grid = validate(x.shape(), config)?;
    let [n, c, _, _] = x.shape();
    let expected = config.masks_expected(x.shape());
    if masks.len() != expected {
        return Err(Error::ShapeMismatch {
            expected: vec![expected],
            actual: vec![masks.len()],
        });
    }
    if let Some(m) = masks.iter().find(|m| m.source_len() != x.plane_len() || m.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "index set over {} positions with {} kept does not fit a plane of {}",
            m.source_len(),
            m.len(),
            x.plane_len()
        )));
    }
    if config.membership == WindowMembership::GatherOrder && grid.n_windows() > 1 {
        let k = masks[0].len();
        if masks.iter().any(|m| m.len() != k) || k % grid.n_windows() != 0 {
            return Err(Error::InvalidPooling(format!(
                "{k} kept elements cannot be split evenly over {} windows",
                grid.n_windows()
            )));
        }
    }

    let mut state = SapSavedState {
        input_shape: x.shape(),
        config: *config,
        phase: Phase::Train,
        masks,
        fallback_windows: 0,
    };
    let mut out = Tensor4::zeros([n, c, grid.out_h(), grid.out_w()])?;
    let scale = config.scale();
    let cells = grid.window_len() as f64;
    let mut fallbacks = 0;
    for ni in 0..n {
        for ci in 0..c {
            let plane = x.plane(ni, ci);
            let mask = state.mask(ni, ci);
            let dst = out.plane_mut(ni, ci);
            if config.membership == WindowMembership::GatherOrder && grid.n_windows() > 1 {
                let group = mask.len() / grid.n_windows();
                for (j, chunk) in mask.kept().chunks_exact(group).enumerate() {
                    let sum: f64 = chunk.iter().map(|&i| plane[i]).sum();
                    dst[j] = scale * (sum / group as f64);
                }
                continue;
            }
            let flags = mask.to_flags();
            for (j, v) in dst.iter_mut().enumerate() {
                let (mut sum, mut kept) = (0.0, 0usize);
                let mut full = 0.0;
                for i in grid.cells(j) {
                    full += plane[i];
                    if flags[i] {
                        sum += plane[i];
                        kept += 1;
                    }
                }
                *v = if kept == 0 {
                    fallbacks += 1;
                    full / cells
                } else {
                    scale * (sum / kept as f64)
                };
            }
        }
    }
    state.fallback_windows = fallbacks;
    Ok((out, state))
}

/// Backward pass: kept elements receive `scale / k_w` of their window's
/// output gradient, dropped elements receive zero.
pub fn sap_backward(grad_out: &Tensor4, state: &SapSavedState) -> Result<Tensor4> {
    let shape = state.input_shape;
    let grid = WindowGrid::new(shape[2], shape[3], state.config.pool)?;
    let expected = [shape[0], shape[1], grid.out_h(), grid.out_w()];
    if grad_out.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: grad_out.shape().to_vec(),
        });
    }
    let mut grad_in = Tensor4::zeros(shape)?;
    let cells = grid.window_len() as f64;
    let scale = state.config.scale();
    for ni in 0..shape[0] {
        for ci in 0..shape[1] {
            let g = grad_out.plane(ni, ci);
            let dst = grad_in.plane_mut(ni, ci);
            if state.phase == Phase::Test {
                for (j, &gj) in g.iter().enumerate() {
                    for i in grid.cells(j) {
                        dst[i] = gj / cells;
                    }
                }
                continue;
            }
            let mask = state.mask(ni, ci);
            if state.config.membership == WindowMembership::GatherOrder && grid.n_windows() > 1 {
                let group = mask.len() / grid.n_windows();
                for (pos, &i) in mask.kept().iter().enumerate() {
                    dst[i] = scale * (g[pos / group] / group as f64);
                }
                continue;
            }
            let flags = mask.to_flags();
            for (j, &gj) in g.iter().enumerate() {
                let kept = grid.cells(j).filter(|&i| flags[i]).count();
                for i in grid.cells(j) {
                    dst[i] = if kept == 0 {
                        gj / cells
                    } else if flags[i] {
                        scale * (gj / kept as f64)
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    Ok(grad_in)
}
