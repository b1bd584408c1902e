use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use super::data::N_CLASSES;
use super::layers::{conv3x3_backward, conv3x3_forward, BatchNorm, BnCache};
use crate::error::{check_keep_prob, Error, Result};
use crate::masks::IndexSet;
use crate::pooling::{
    avg_pool_backward, draw_sap_masks, global_avg_pool, sap_backward, sap_forward_with_masks, DropMask, Phase,
    PoolSize, SapConfig, SapSavedState,
};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

pub const CONV1_CHANNELS: usize = 4;
pub const CONV2_CHANNELS: usize = 8;

/// Pooling head between the conv stack and the classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    Gap,
    Sap { keep_prob: f64 },
    /// Inverted Dropout on the feature map, then global average pooling.
    DropoutGap { keep_prob: f64 },
}

impl Head {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Head::Gap => Ok(()),
            Head::Sap { keep_prob } | Head::DropoutGap { keep_prob } => check_keep_prob(keep_prob),
        }
    }

    /// Parses `gap`, `sap` or `dropout` with the given keep probability.
    pub fn from_name(name: &str, keep_prob: f64) -> Result<Self> {
        let head = match name {
            "gap" => Head::Gap,
            "sap" => Head::Sap { keep_prob },
            "dropout" => Head::DropoutGap { keep_prob },
            other => return Err(Error::InvalidConfig(format!("unknown head `{other}`"))),
        };
        head.validate()?;
        Ok(head)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Head::Gap => "gap",
            Head::Sap { .. } => "sap",
            Head::DropoutGap { .. } => "dropout",
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Head::Gap => f.write_str("gap"),
            Head::Sap { keep_prob } => write!(f, "sap(p={keep_prob})"),
            Head::DropoutGap { keep_prob } => write!(f, "dropout(p={keep_prob})"),
        }
    }
}

impl FromStr for Head {
    type Err = Error;

    /// `gap`, `sap`, `sap:0.3`, `dropout:0.8`; the keep probability defaults to 0.5.
    fn from_str(s: &str) -> Result<Self> {
        let (name, p) = match s.split_once(':') {
            Some((n, p)) => (
                n,
                p.parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("bad keep probability `{p}`")))?,
            ),
            None => (s, 0.5),
        };
        Self::from_name(name, p)
    }
}

/// Train-phase randomness of the head, fixed ahead of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadMasks {
    None,
    Sap(Vec<IndexSet>),
    Dropout(DropMask),
}

impl HeadMasks {
    /// Draws what `head` needs for a feature map of `shape`.
    pub fn draw(head: Head, shape: [usize; 4], rng: &mut RngStream) -> Result<Self> {
        match head {
            Head::Gap => Ok(HeadMasks::None),
            Head::Sap { keep_prob } => Ok(HeadMasks::Sap(draw_sap_masks(
                shape,
                &SapConfig::global(keep_prob),
                rng,
            )?)),
            Head::DropoutGap { keep_prob } => Ok(HeadMasks::Dropout(DropMask::sample(shape, keep_prob, rng)?)),
        }
    }
}

/// conv3x3(1->4) -> BN -> tanh -> conv3x3(4->8) -> BN -> tanh -> head -> linear(8->4).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetParams {
    pub conv1: Vec<f64>,
    pub bn1: BatchNorm,
    pub conv2: Vec<f64>,
    pub bn2: BatchNorm,
    /// `(N_CLASSES, CONV2_CHANNELS)` row-major.
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
    /// Bumped on every parameter update; caches record it.
    pub version: u64,
}

impl ToyNetParams {
    /// He-style Gaussian conv kernels, zero classifier.
    pub fn init(stream: &RngStream) -> Self {
        let mut g = stream.generator();
        let mut kernel = |len: usize, fan_in: usize| -> Vec<f64> {
            let s = (1.0 / fan_in as f64).sqrt();
            (0..len)
                .map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut g))
                .collect()
        };
        let conv1 = kernel(CONV1_CHANNELS * 9, 9);
        let conv2 = kernel(CONV2_CHANNELS * CONV1_CHANNELS * 9, CONV1_CHANNELS * 9);
        Self {
            conv1,
            bn1: BatchNorm::new(CONV1_CHANNELS),
            conv2,
            bn2: BatchNorm::new(CONV2_CHANNELS),
            fc_w: vec![0.0; N_CLASSES * CONV2_CHANNELS],
            fc_b: vec![0.0; N_CLASSES],
            version: 0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.trainable().iter().map(|s| s.len()).sum()
    }

    fn trainable(&self) -> [&Vec<f64>; 8] {
        [
            &self.conv1,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.conv2,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.fc_w,
            &self.fc_b,
        ]
    }

    fn trainable_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.conv1,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }

    /// Trainable parameters concatenated in a fixed order (matches [`Grads::to_flat`]).
    pub fn to_flat(&self) -> Vec<f64> {
        self.trainable().iter().flat_map(|s| s.iter().copied()).collect()
    }

    /// Overwrites the trainable parameters and bumps the version.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.n_params()],
                actual: vec![flat.len()],
            });
        }
        let mut off = 0;
        for s in self.trainable_mut() {
            let len = s.len();
            s.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        self.version += 1;
        Ok(())
    }

    /// Plain SGD step. Rejects updates that would leave a non-finite parameter.
    pub fn sgd_step(&mut self, grads: &Grads, lr: f64) -> Result<()> {
        let next: Vec<f64> = self
            .to_flat()
            .iter()
            .zip(grads.to_flat())
            .map(|(w, g)| w - lr * g)
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameter update produced a non-finite value".into()));
        }
        self.set_flat(&next)
    }

    /// Folds the batch statistics of a train-phase forward into the running averages.
    pub fn update_running_stats(&mut self, cache: &Cache) {
        if cache.phase != Phase::Train {
            return;
        }
        let count = cache.input.n_batch() * cache.input.plane_len();
        self.bn1.update_running(&cache.bn1, count);
        self.bn2.update_running(&cache.bn2, count);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum HeadState {
    Gap,
    Sap(SapSavedState),
    Dropout(DropMask),
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    pub version: u64,
    pub phase: Phase,
    pub head: Head,
    pub input: Tensor4,
    bn1: BnCache,
    act1: Tensor4,
    bn2: BnCache,
    /// Feature map entering the head, `(B, 8, 16, 16)`.
    pub features: Tensor4,
    head_state: HeadState,
    /// Head output flattened to `(B, 8, 1, 1)`.
    pub pooled: Tensor4,
}

impl Cache {
    pub fn sap_state(&self) -> Option<&SapSavedState> {
        match &self.head_state {
            HeadState::Sap(s) => Some(s),
            _ => None,
        }
    }
}

/// Gradients for every trainable parameter, plus the gradients reaching the
/// head input and the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub conv1: Vec<f64>,
    pub bn1_gamma: Vec<f64>,
    pub bn1_beta: Vec<f64>,
    pub conv2: Vec<f64>,
    pub bn2_gamma: Vec<f64>,
    pub bn2_beta: Vec<f64>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
    pub features: Tensor4,
    pub input: Tensor4,
}

impl Grads {
    pub fn to_flat(&self) -> Vec<f64> {
        [
            &self.conv1,
            &self.bn1_gamma,
            &self.bn1_beta,
            &self.conv2,
            &self.bn2_gamma,
            &self.bn2_beta,
            &self.fc_w,
            &self.fc_b,
        ]
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect()
    }
}

/// Forward pass. Train phase draws head masks from `rng`; test phase leaves it untouched.
pub fn forward(
    params: &ToyNetParams,
    batch: &Tensor4,
    head: Head,
    phase: Phase,
    rng: &mut RngStream,
) -> Result<(Tensor4, Cache)> {
    head.validate()?;
    let masks = match phase {
        Phase::Test => HeadMasks::None,
        Phase::Train => {
            let [b, _, h, w] = batch.shape();
            HeadMasks::draw(head, [b, CONV2_CHANNELS, h, w], rng)?
        }
    };
    forward_with_masks(params, batch, head, phase, masks)
}

/// Forward pass with the head's train-phase randomness supplied by the caller.
pub fn forward_with_masks(
    params: &ToyNetParams,
    batch: &Tensor4,
    head: Head,
    phase: Phase,
    masks: HeadMasks,
) -> Result<(Tensor4, Cache)> {
    if batch.n_channels() != 1 {
        return Err(Error::ShapeMismatch {
            expected: vec![batch.n_batch(), 1, batch.height(), batch.width()],
            actual: batch.shape().to_vec(),
        });
    }
    let train = phase == Phase::Train;
    let a1 = conv3x3_forward(batch, &params.conv1, CONV1_CHANNELS)?;
    let (z1, bn1) = params.bn1.forward(&a1, train)?;
    let act1 = z1.map(f64::tanh);
    let a2 = conv3x3_forward(&act1, &params.conv2, CONV2_CHANNELS)?;
    let (z2, bn2) = params.bn2.forward(&a2, train)?;
    let features = z2.map(f64::tanh);

    let (pooled, head_state) = match (phase, head, masks) {
        // every head averages globally in test phase
        (Phase::Test, _, _) | (Phase::Train, Head::Gap, _) => (global_avg_pool(&features), HeadState::Gap),
        (Phase::Train, Head::Sap { keep_prob }, HeadMasks::Sap(m)) => {
            let (out, state) = sap_forward_with_masks(&features, &SapConfig::global(keep_prob), m)?;
            (out, HeadState::Sap(state))
        }
        (Phase::Train, Head::DropoutGap { keep_prob }, HeadMasks::Dropout(m)) => {
            if m.shape() != features.shape() || m.keep_prob() != keep_prob {
                return Err(Error::InvalidInput("dropout mask does not match the head".into()));
            }
            (global_avg_pool(&m.apply(&features)?), HeadState::Dropout(m))
        }
        (Phase::Train, h, _) => {
            return Err(Error::InvalidInput(format!("head {h} needs matching train-phase masks")));
        }
    };

    let b = batch.n_batch();
    let mut logits = Tensor4::zeros([b, N_CLASSES, 1, 1])?;
    for n in 0..b {
        let feat = &pooled.data()[n * CONV2_CHANNELS..(n + 1) * CONV2_CHANNELS];
        for k in 0..N_CLASSES {
            let row = &params.fc_w[k * CONV2_CHANNELS..(k + 1) * CONV2_CHANNELS];
            let z: f64 = row.iter().zip(feat).map(|(w, f)| w * f).sum();
            logits.data_mut()[n * N_CLASSES + k] = z + params.fc_b[k];
        }
    }
    let cache = Cache {
        version: params.version,
        phase,
        head,
        input: batch.clone(),
        bn1,
        act1,
        bn2,
        features,
        head_state,
        pooled,
    };
    Ok((logits, cache))
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor4, labels: &[usize]) -> Result<(f64, Tensor4)> {
    let b = logits.n_batch();
    let k = logits.n_channels();
    if labels.len() != b {
        return Err(Error::ShapeMismatch {
            expected: vec![b],
            actual: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidInput(format!("label {bad} out of range {k}")));
    }
    let mut grad = Tensor4::zeros(logits.shape())?;
    let mut loss = 0.0;
    for (n, &label) in labels.iter().enumerate() {
        let z = &logits.data()[n * k..(n + 1) * k];
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - z[label];
        let g = &mut grad.data_mut()[n * k..(n + 1) * k];
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = ((z[j] - log_norm).exp() - if j == label { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

/// Backpropagates `grad_logits` through the cached forward pass.
pub fn backward(params: &ToyNetParams, cache: &Cache, grad_logits: &Tensor4) -> Result<Grads> {
    if cache.version != params.version {
        return Err(Error::StaleCache {
            cache: cache.version,
            params: params.version,
        });
    }
    let b = cache.input.n_batch();
    if grad_logits.shape() != [b, N_CLASSES, 1, 1] {
        return Err(Error::ShapeMismatch {
            expected: vec![b, N_CLASSES, 1, 1],
            actual: grad_logits.shape().to_vec(),
        });
    }
    let mut fc_w = vec![0.0; N_CLASSES * CONV2_CHANNELS];
    let mut fc_b = vec![0.0; N_CLASSES];
    let mut grad_pooled = Tensor4::zeros(cache.pooled.shape())?;
    for n in 0..b {
        let feat = &cache.pooled.data()[n * CONV2_CHANNELS..(n + 1) * CONV2_CHANNELS];
        let g = &grad_logits.data()[n * N_CLASSES..(n + 1) * N_CLASSES];
        let gp = &mut grad_pooled.data_mut()[n * CONV2_CHANNELS..(n + 1) * CONV2_CHANNELS];
        for k in 0..N_CLASSES {
            fc_b[k] += g[k];
            for c in 0..CONV2_CHANNELS {
                fc_w[k * CONV2_CHANNELS + c] += g[k] * feat[c];
                gp[c] += g[k] * params.fc_w[k * CONV2_CHANNELS + c];
            }
        }
    }

    let shape = cache.features.shape();
    let grad_features = match &cache.head_state {
        HeadState::Gap => avg_pool_backward(&grad_pooled, shape, PoolSize::Global)?,
        HeadState::Sap(state) => sap_backward(&grad_pooled, state)?,
        HeadState::Dropout(mask) => mask.backward(&avg_pool_backward(&grad_pooled, shape, PoolSize::Global)?)?,
    };

    let mut g_z2 = grad_features.clone();
    for (g, y) in g_z2.data_mut().iter_mut().zip(cache.features.data()) {
        *g *= 1.0 - y * y;
    }
    let (g_a2, bn2_gamma, bn2_beta) = params.bn2.backward(&cache.bn2, &g_z2)?;
    let (mut g_act1, conv2) = conv3x3_backward(&cache.act1, &params.conv2, &g_a2)?;
    for (g, y) in g_act1.data_mut().iter_mut().zip(cache.act1.data()) {
        *g *= 1.0 - y * y;
    }
    let (g_a1, bn1_gamma, bn1_beta) = params.bn1.backward(&cache.bn1, &g_act1)?;
    let (input, conv1) = conv3x3_backward(&cache.input, &params.conv1, &g_a1)?;
    Ok(Grads {
        conv1,
        bn1_gamma,
        bn1_beta,
        conv2,
        bn2_gamma,
        bn2_beta,
        fc_w,
        fc_b,
        features: grad_features,
        input,
    })
}
