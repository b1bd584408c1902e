//! Hand-written layer kernels: 3x3 same-padding convolution and per-channel
//! batch normalization.

use crate::error::Result;
use crate::tensor::Tensor4;

pub const KERNEL: usize = 3;

/// `out[b, o] = sum_i w[o, i] * in[b, i]` with a 3x3 kernel, zero padding 1, stride 1.
pub fn conv3x3_forward(input: &Tensor4, weight: &[f64], out_channels: usize) -> Result<Tensor4> {
    let [b, c_in, h, w] = input.shape();
    let mut out = Tensor4::zeros([b, out_channels, h, w])?;
    for n in 0..b {
        for o in 0..out_channels {
            let dst = out.plane_mut(n, o);
            for i in 0..c_in {
                let src = input.plane(n, i);
                let k = &weight[(o * c_in + i) * 9..(o * c_in + i + 1) * 9];
                accumulate_conv(dst, src, k, h, w);
            }
        }
    }
    Ok(out)
}

fn accumulate_conv(dst: &mut [f64], src: &[f64], k: &[f64], h: usize, w: usize) {
    for ky in 0..KERNEL {
        for kx in 0..KERNEL {
            let wk = k[ky * KERNEL + kx];
            // output (y, x) reads input (y + ky - 1, x + kx - 1)
            let y0 = 1usize.saturating_sub(ky);
            let y1 = (h + 1 - ky).min(h);
            let x0 = 1usize.saturating_sub(kx);
            let x1 = (w + 1 - kx).min(w);
            for y in y0..y1 {
                let sy = y + ky - 1;
                let row = &src[sy * w..(sy + 1) * w];
                let out = &mut dst[y * w..(y + 1) * w];
                for x in x0..x1 {
                    out[x] += wk * row[x + kx - 1];
                }
            }
        }
    }
}

/// Gradients of the convolution: `(d_input, d_weight)`.
pub fn conv3x3_backward(input: &Tensor4, weight: &[f64], grad_out: &Tensor4) -> Result<(Tensor4, Vec<f64>)> {
    let [b, c_in, h, w] = input.shape();
    let c_out = grad_out.n_channels();
    let mut grad_in = Tensor4::zeros(input.shape())?;
    let mut grad_w = vec![0.0; weight.len()];
    for n in 0..b {
        for o in 0..c_out {
            let g = grad_out.plane(n, o);
            for i in 0..c_in {
                let src = input.plane(n, i);
                let base = (o * c_in + i) * 9;
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let y0 = 1usize.saturating_sub(ky);
                        let y1 = (h + 1 - ky).min(h);
                        let x0 = 1usize.saturating_sub(kx);
                        let x1 = (w + 1 - kx).min(w);
                        let wk = weight[base + ky * KERNEL + kx];
                        let mut acc = 0.0;
                        let gin = grad_in.plane_mut(n, i);
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            for x in x0..x1 {
                                let go = g[y * w + x];
                                acc += go * src[sy * w + x + kx - 1];
                                gin[sy * w + x + kx - 1] += go * wk;
                            }
                        }
                        grad_w[base + ky * KERNEL + kx] += acc;
                    }
                }
            }
        }
    }
    Ok((grad_in, grad_w))
}

/// Per-channel affine normalization with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// What the normalization backward needs.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache {
    pub normalized: Tensor4,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub used_batch_stats: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    /// Batch statistics when `train`, running statistics otherwise.
    pub fn forward(&self, x: &Tensor4, train: bool) -> Result<(Tensor4, BnCache)> {
        let [b, c, _, _] = x.shape();
        let m = (b * x.plane_len()) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        if train {
            for ch in 0..c {
                let s: f64 = (0..b).map(|n| x.plane(n, ch).iter().sum::<f64>()).sum();
                mean[ch] = s / m;
                let q: f64 = (0..b)
                    .map(|n| x.plane(n, ch).iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>())
                    .sum();
                var[ch] = q / m;
            }
        }
        let (use_mean, use_var) = if train {
            (&mean, &var)
        } else {
            (&self.running_mean, &self.running_var)
        };
        let inv_std: Vec<f64> = use_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut normalized = x.clone();
        let mut out = x.clone();
        for n in 0..b {
            for ch in 0..c {
                let (mu, is, g, bt) = (use_mean[ch], inv_std[ch], self.gamma[ch], self.beta[ch]);
                for (xh, v) in normalized.plane_mut(n, ch).iter_mut().zip(out.plane_mut(n, ch)) {
                    *xh = (*xh - mu) * is;
                    *v = g * *xh + bt;
                }
            }
        }
        Ok((
            out,
            BnCache {
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                used_batch_stats: train,
            },
        ))
    }

    /// `(d_input, d_gamma, d_beta)`.
    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor4) -> Result<(Tensor4, Vec<f64>, Vec<f64>)> {
        let [b, c, _, _] = grad_out.shape();
        let m = (b * grad_out.plane_len()) as f64;
        let mut d_gamma = vec![0.0; c];
        let mut d_beta = vec![0.0; c];
        let mut grad_in = Tensor4::zeros(grad_out.shape())?;
        for ch in 0..c {
            let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
            for n in 0..b {
                for (dy, xh) in grad_out.plane(n, ch).iter().zip(cache.normalized.plane(n, ch)) {
                    sum_dy += dy;
                    sum_dy_xh += dy * xh;
                }
            }
            d_gamma[ch] = sum_dy_xh;
            d_beta[ch] = sum_dy;
            let scale = self.gamma[ch] * cache.inv_std[ch];
            for n in 0..b {
                let dst = grad_in.plane_mut(n, ch);
                for ((d, dy), xh) in dst.iter_mut().zip(grad_out.plane(n, ch)).zip(cache.normalized.plane(n, ch)) {
                    *d = if cache.used_batch_stats {
                        scale * (dy - sum_dy / m - xh * sum_dy_xh / m)
                    } else {
                        scale * dy
                    };
                }
            }
        }
        Ok((grad_in, d_gamma, d_beta))
    }

    /// Exponential moving average of the batch statistics (unbiased variance).
    pub fn update_running(&mut self, cache: &BnCache, count: usize) {
        let unbias = if count > 1 {
            count as f64 / (count - 1) as f64
        } else {
            1.0
        };
        for ch in 0..self.gamma.len() {
            self.running_mean[ch] = (1.0 - BN_MOMENTUM) * self.running_mean[ch] + BN_MOMENTUM * cache.batch_mean[ch];
            self.running_var[ch] =
                (1.0 - BN_MOMENTUM) * self.running_var[ch] + BN_MOMENTUM * cache.batch_var[ch] * unbias;
        }
    }
}
