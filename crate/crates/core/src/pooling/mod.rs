//! Pooling and regularization operators: Dropout, stochastic subsampling,
//! average pooling, stochastic average pooling and probability-map pooling.

mod average;
mod dropout;
mod sap;
mod subsample;
mod zeiler;

use std::fmt;
use std::str::FromStr;

pub use average::{avg_pool_1d, avg_pool_2d, avg_pool_backward, global_avg_pool};
pub use dropout::{dropout, DropMask};
pub use sap::{
    draw_sap_masks, sap_backward, sap_forward, sap_forward_with_masks, SapConfig, SapSavedState,
    WindowMembership,
};
pub use subsample::{stochastic_subsample, stochastic_subsample_with_masks};
pub use zeiler::{zeiler_stochastic_pool, ProbMap};

use crate::error::{Error, Result};

/// Train or test behaviour of a stochastic operator. Test phase never draws
/// random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Test => "test",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Phase::Train),
            "test" => Ok(Phase::Test),
            other => Err(Error::InvalidConfig(format!("unknown phase `{other}`"))),
        }
    }
}

/// Square pooling window side, or the whole plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolSize {
    Global,
    Window(usize),
}

/// Non-overlapping window tiling of an `h x w` plane with stride equal to the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct WindowGrid {
    pub h: usize,
    pub w: usize,
    pub wh: usize,
    pub ww: usize,
}

impl WindowGrid {
    pub fn new(h: usize, w: usize, pool: PoolSize) -> Result<Self> {
        match pool {
            PoolSize::Global => Ok(Self { h, w, wh: h, ww: w }),
            PoolSize::Window(r) => {
                if r == 0 || h % r != 0 || w % r != 0 {
                    return Err(Error::InvalidPooling(format!(
                        "window {r} does not tile a {h}x{w} plane"
                    )));
                }
                Ok(Self { h, w, wh: r, ww: r })
            }
        }
    }

    pub fn out_h(&self) -> usize {
        self.h / self.wh
    }

    pub fn out_w(&self) -> usize {
        self.w / self.ww
    }

    pub fn n_windows(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn window_len(&self) -> usize {
        self.wh * self.ww
    }

    /// Flat plane indices of window `j` in row-major order.
    pub fn cells(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        let (oy, ox) = (j / self.out_w(), j % self.out_w());
        (oy * self.wh..(oy + 1) * self.wh)
            .flat_map(move |y| (ox * self.ww..(ox + 1) * self.ww).map(move |x| y * self.w + x))
    }
}
