//! Dense `(N, C, H, W)` storage, Gaussian sampling and moment statistics.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Dense rank-4 array in `(batch, channel, height, width)` order, width fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

fn check_shape(shape: [usize; 4]) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(())
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Result<Self> {
        check_shape(shape)?;
        Ok(Self {
            shape,
            data: vec![value; shape.iter().product()],
        })
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: vec![expected],
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn n_batch(&self) -> usize {
        self.shape[0]
    }

    pub fn n_channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Flattened spatial length `H * W`.
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// The flattened spatial slice of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let len = self.plane_len();
        let start = (n * self.shape[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let len = self.plane_len();
        let start = (n * self.shape[1] + c) * len;
        &mut self.data[start..start + len]
    }

    pub fn planes(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.plane_len())
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f64) {
        let i = self.offset(n, c, y, x);
        self.data[i] = value;
    }

    fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    /// Same data viewed with a different shape of equal element count.
    pub fn reshape(self, shape: [usize; 4]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Stream that feeds plane `(n, c)` of a tensor drawn from `parent`.
pub fn gaussian_plane_stream(parent: &RngStream, n: usize, c: usize) -> RngStream {
    parent.substream(n as u64).substream(c as u64)
}

/// Fills `buf` with i.i.d. standard normal draws from the start of `stream`.
pub fn fill_gaussian(buf: &mut [f64], stream: &RngStream) {
    let mut g = stream.generator();
    for v in buf.iter_mut() {
        *v = g.sample(StandardNormal);
    }
}

/// I.i.d. `N(0, 1)` tensor. Each `(n, c)` plane comes from its own
/// sub-stream (see [`gaussian_plane_stream`]), so streaming consumers can
/// regenerate any plane without materializing the tensor.
pub fn sample_gaussian(shape: [usize; 4], rng: &mut RngStream) -> Result<Tensor4> {
    let mut t = Tensor4::zeros(shape)?;
    let parent = rng.next_substream();
    for n in 0..shape[0] {
        for c in 0..shape[1] {
            fill_gaussian(t.plane_mut(n, c), &gaussian_plane_stream(&parent, n, c));
        }
    }
    Ok(t)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn slice_mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

pub fn slice_second_moment(values: &[f64]) -> f64 {
    compensated_sum(values.iter().map(|v| v * v)) / values.len() as f64
}

/// Arithmetic mean over all entries.
pub fn mean(t: &Tensor4) -> f64 {
    slice_mean(t.data())
}

/// Mean of squared entries, `E[x^2]`.
pub fn second_moment(t: &Tensor4) -> f64 {
    slice_second_moment(t.data())
}

/// Population variance `E[x^2] - E[x]^2`.
pub fn variance(t: &Tensor4) -> Result<f64> {
    if t.len() < 2 {
        return Err(Error::DegenerateInput(
            "variance needs at least two entries".into(),
        ));
    }
    let m = mean(t);
    Ok(second_moment(t) - m * m)
}
