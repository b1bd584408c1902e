use super::{PoolSize, WindowGrid};
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Mean over non-overlapping windows of length `r`.
pub fn avg_pool_1d(x: &[f64], r: usize) -> Result<Vec<f64>> {
    if r == 0 || x.len() % r != 0 {
        return Err(Error::InvalidPooling(format!(
            "pool size {r} does not divide length {}",
            x.len()
        )));
    }
    Ok(x.chunks_exact(r)
        .map(|w| w.iter().sum::<f64>() / r as f64)
        .collect())
}

pub(crate) fn pool_planes(x: &Tensor4, grid: &WindowGrid) -> Result<Tensor4> {
    let [n, c, _, _] = x.shape();
    let mut out = Tensor4::zeros([n, c, grid.out_h(), grid.out_w()])?;
    let cells = grid.window_len() as f64;
    for ni in 0..n {
        for ci in 0..c {
            let plane = x.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            for (j, v) in dst.iter_mut().enumerate() {
                let mut sum = 0.0;
                for i in grid.cells(j) {
                    sum += plane[i];
                }
                *v = sum / cells;
            }
        }
    }
    Ok(out)
}

/// `r x r` average pooling with stride `r`.
pub fn avg_pool_2d(x: &Tensor4, r: usize) -> Result<Tensor4> {
    let grid = WindowGrid::new(x.height(), x.width(), PoolSize::Window(r))?;
    pool_planes(x, &grid)
}

/// Per-`(sample, channel)` spatial mean, shape `(N, C, 1, 1)`.
pub fn global_avg_pool(x: &Tensor4) -> Tensor4 {
    let grid = WindowGrid::new(x.height(), x.width(), PoolSize::Global)
        .expect("global pooling always tiles");
    pool_planes(x, &grid).expect("shape is valid")
}

/// Gradient of average pooling: each output gradient spread evenly over its window.
pub fn avg_pool_backward(grad_out: &Tensor4, input_shape: [usize; 4], pool: PoolSize) -> Result<Tensor4> {
    let grid = WindowGrid::new(input_shape[2], input_shape[3], pool)?;
    let expected = [input_shape[0], input_shape[1], grid.out_h(), grid.out_w()];
    if grad_out.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: grad_out.shape().to_vec(),
        });
    }
    let mut grad_in = Tensor4::zeros(input_shape)?;
    let cells = grid.window_len() as f64;
    for ni in 0..input_shape[0] {
        for ci in 0..input_shape[1] {
            let g = grad_out.plane(ni, ci);
            let dst = grad_in.plane_mut(ni, ci);
            for (j, &gj) in g.iter().enumerate() {
                for i in grid.cells(j) {
                    dst[i] = gj / cells;
                }
            }
        }
    }
    Ok(grad_in)
}
