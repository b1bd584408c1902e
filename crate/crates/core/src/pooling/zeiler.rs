//! Probability-map stochastic pooling: sample one element per window with
//! probability `k_i = x_i / sum(x)` in train phase, return `sum(k_i x_i)` in
//! test phase.

use rand::Rng;

use super::{Phase, PoolSize, WindowGrid};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

/// Normalized window weights `k_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    k: Vec<f64>,
}

impl ProbMap {
    /// Requires nonnegative finite values; an all-zero window gets uniform weights.
    pub fn from_window(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty pooling window".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "probability-map pooling needs nonnegative inputs, got {v}"
            )));
        }
        let total: f64 = values.iter().sum();
        let k = if total > 0.0 {
            values.iter().map(|v| v / total).collect()
        } else {
            vec![1.0 / values.len() as f64; values.len()]
        };
        Ok(Self { k })
    }

    pub fn weights(&self) -> &[f64] {
        &self.k
    }

    /// `sum(k_i x_i)`.
    pub fn weighted_average(&self, values: &[f64]) -> f64 {
        self.k.iter().zip(values).map(|(k, v)| k * v).sum()
    }

    /// Index `i` drawn with probability `k_i`.
    pub fn sample(&self, g: &mut impl Rng) -> usize {
        let u: f64 = g.random();
        let mut acc = 0.0;
        for (i, &k) in self.k.iter().enumerate() {
            acc += k;
            if u < acc {
                return i;
            }
        }
        // rounding left u above the final cumulative sum
        self.k.iter().rposition(|&k| k > 0.0).unwrap_or(self.k.len() - 1)
    }
}

pub fn zeiler_stochastic_pool(x: &Tensor4, pool: PoolSize, phase: Phase, rng: &mut RngStream) -> Result<Tensor4> {
    let grid = WindowGrid::new(x.height(), x.width(), pool)?;
    let [n, c, _, _] = x.shape();
    if let Some(v) = x.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "probability-map pooling needs nonnegative inputs, got {v}"
        )));
    }
    let mut out = Tensor4::zeros([n, c, grid.out_h(), grid.out_w()])?;
    let parent = match phase {
        Phase::Train => Some(rng.next_substream()),
        Phase::Test => None,
    };
    let mut window = Vec::with_capacity(grid.window_len());
    for ni in 0..n {
        let mut g = parent.map(|s| s.substream(ni as u64).generator());
        for ci in 0..c {
            let plane = x.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            for (j, v) in dst.iter_mut().enumerate() {
                window.clear();
                window.extend(grid.cells(j).map(|i| plane[i]));
                let map = ProbMap::from_window(&window)?;
                *v = match g.as_mut() {
                    Some(g) => window[map.sample(g)],
                    None => map.weighted_average(&window),
                };
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64, b: f64) -> Tensor4 {
        Tensor4::from_vec([1, 1, 1, 2], vec![a, b]).unwrap()
    }

    #[test]
    fn test_phase_weighted_average() {
        let y = zeiler_stochastic_pool(&pair(1.0, 3.0), PoolSize::Global, Phase::Test, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn zero_window_is_uniform_and_zero() {
        let map = ProbMap::from_window(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(map.weights(), &[0.25; 4]);
        for phase in [Phase::Train, Phase::Test] {
            let y = zeiler_stochastic_pool(&pair(0.0, 0.0), PoolSize::Global, phase, &mut RngStream::new(0, 0)).unwrap();
            assert_eq!(y.data(), &[0.0]);
        }
    }

    #[test]
    fn negative_input_rejected() {
        assert!(matches!(
            zeiler_stochastic_pool(&pair(-1.0, 3.0), PoolSize::Global, Phase::Test, &mut RngStream::new(0, 0)),
            Err(Error::InvalidInput(_))
        ));
        assert!(ProbMap::from_window(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn train_frequency_matches_probability_map() {
        let x = pair(1.0, 3.0);
        let mut rng = RngStream::new(7, 0);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| zeiler_stochastic_pool(&x, PoolSize::Global, Phase::Train, &mut rng).unwrap().data()[0] == 3.0)
            .count();
        let freq = hits as f64 / draws as f64;
        // sd = sqrt(0.75 * 0.25 / 1e5) ~ 0.0014
        assert!((freq - 0.75).abs() < 0.01, "{freq}");
    }

    #[test]
    fn windowed_shapes() {
        let x = Tensor4::filled([2, 3, 4, 4], 1.0).unwrap();
        let y = zeiler_stochastic_pool(&x, PoolSize::Window(2), Phase::Train, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(y.shape(), [2, 3, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 1.0));
    }
}
