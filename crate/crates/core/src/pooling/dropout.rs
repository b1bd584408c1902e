use rand::Rng;

use super::Phase;
use crate::error::{check_keep_prob, Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

/// Elementwise Bernoulli keep indicators (the diagonal of `M`) plus the keep prob.
#[derive(Debug, Clone, PartialEq)]
pub struct DropMask {
    shape: [usize; 4],
    keep: Vec<bool>,
    keep_prob: f64,
}

impl DropMask {
    /// Draws `m_i ~ Bernoulli(p)` for every element; sample `n` uses its own sub-stream.
    pub fn sample(shape: [usize; 4], p: f64, rng: &mut RngStream) -> Result<Self> {
        check_keep_prob(p)?;
        let per_sample = shape[1] * shape[2] * shape[3];
        let parent = rng.next_substream();
        let mut keep = Vec::with_capacity(shape[0] * per_sample);
        for n in 0..shape[0] {
            let mut g = parent.substream(n as u64).generator();
            keep.extend((0..per_sample).map(|_| g.random_bool(p)));
        }
        Ok(Self {
            shape,
            keep,
            keep_prob: p,
        })
    }

    pub fn from_flags(shape: [usize; 4], keep: Vec<bool>, p: f64) -> Result<Self> {
        check_keep_prob(p)?;
        if keep.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: vec![keep.len()],
            });
        }
        Ok(Self {
            shape,
            keep,
            keep_prob: p,
        })
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    /// `(1/p) M x`.
    pub fn apply(&self, x: &Tensor4) -> Result<Tensor4> {
        if x.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.to_vec(),
                actual: x.shape().to_vec(),
            });
        }
        let p = self.keep_prob;
        let data = x
            .data()
            .iter()
            .zip(&self.keep)
            .map(|(&v, &k)| if k { v / p } else { 0.0 })
            .collect();
        Tensor4::from_vec(self.shape, data)
    }

    /// The operator is linear and diagonal, so its gradient is the same map.
    pub fn backward(&self, grad_out: &Tensor4) -> Result<Tensor4> {
        self.apply(grad_out)
    }
}

/// Inverted Dropout: `x * m / p` in train phase, identity in test phase.
pub fn dropout(x: &Tensor4, p: f64, phase: Phase, rng: &mut RngStream) -> Result<Tensor4> {
    check_keep_prob(p)?;
    match phase {
        Phase::Test => Ok(x.clone()),
        Phase::Train => DropMask::sample(x.shape(), p, rng)?.apply(x),
    }
}
