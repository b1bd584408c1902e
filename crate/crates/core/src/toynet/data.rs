//! Synthetic 16x16 texture classification set.
//!
//! Four classes, each a noisy texture with a random phase and amplitude:
//! horizontal stripes, vertical stripes, diagonal stripes and a Gaussian
//! blob at a random position. Local spatial statistics separate the classes,
//! so a small conv stack followed by a global pooling head can learn them.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

pub const IMAGE_SIDE: usize = 16;
pub const N_CLASSES: usize = 4;
const STRIPE_PERIOD: f64 = 4.0;
const NOISE_STD: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// `(n, 1, 16, 16)`.
    pub images: Tensor4,
    pub labels: Vec<usize>,
    pub seed: u64,
}

impl SyntheticDataset {
    /// Class of sample `i` is `i % 4`; sample `i` draws from `stream.substream(i)`.
    pub fn generate(n: usize, stream: &RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("dataset needs at least one sample".into()));
        }
        let mut images = Tensor4::zeros([n, 1, IMAGE_SIDE, IMAGE_SIDE])?;
        let labels: Vec<usize> = (0..n).map(|i| i % N_CLASSES).collect();
        for (i, &label) in labels.iter().enumerate() {
            let mut g = stream.substream(i as u64).generator();
            render(images.plane_mut(i, 0), label, &mut g);
        }
        Ok(Self {
            images,
            labels,
            seed: stream.seed(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copies the samples at `indices` into a new batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor4, Vec<usize>)> {
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        let mut data = Vec::with_capacity(indices.len() * plane);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidInput(format!("sample {i} out of range {}", self.len())));
            }
            data.extend_from_slice(self.images.plane(i, 0));
            labels.push(self.labels[i]);
        }
        Ok((Tensor4::from_vec([indices.len(), 1, IMAGE_SIDE, IMAGE_SIDE], data)?, labels))
    }
}

fn render(dst: &mut [f64], label: usize, g: &mut impl Rng) {
    let amp = g.random_range(0.7..1.3);
    let phase = g.random_range(0.0..2.0 * PI);
    let (cy, cx) = (g.random_range(3.0..13.0), g.random_range(3.0..13.0));
    let w = 2.0 * PI / STRIPE_PERIOD;
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let (fy, fx) = (y as f64, x as f64);
            let clean = match label {
                0 => (w * fy + phase).sin(),
                1 => (w * fx + phase).sin(),
                2 => (w * (fx + fy) / 2.0 + phase).sin(),
                _ => 2.0 * (-((fy - cy).powi(2) + (fx - cx).powi(2)) / 8.0).exp() - 0.3,
            };
            let noise: f64 = g.sample(StandardNormal);
            dst[y * IMAGE_SIDE + x] = amp * clean + NOISE_STD * noise;
        }
    }
}
