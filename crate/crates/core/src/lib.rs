//! Stochastic average pooling and its companion operators.
//!
//! The crate provides:
//!
//! - [`tensor`]: dense `(N, C, H, W)` storage, seeded Gaussian sampling and
//!   compensated moment estimators.
//! - [`rng`]: counter-based random streams keyed by `(seed, stream_id)`.
//! - [`masks`]: subsampling index sets and structured spatial keep-masks
//!   (block, grid, uniform, duplication) with random circular shifts.
//! - [`pooling`]: Dropout, stochastic subsampling, average pooling,
//!   stochastic average pooling (forward and backward) and probability-map
//!   stochastic pooling.
//! - [`moments`]: Monte-Carlo sweeps that measure train/test second moments
//!   of each operator and serialize them as CSV.
//! - [`toynet`]: a small convolutional classifier with hand-written
//!   backpropagation and interchangeable pooling heads.
//! - [`cli`]: the `stochpool` command line.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod cli;
pub mod error;
pub mod masks;
pub mod moments;
pub mod pooling;
pub mod rng;
pub mod tensor;
pub mod toynet;

pub use error::{Error, Result};
pub use masks::{ChannelMode, IndexSet, KeepMask, PatternKind, PatternSpec};
pub use pooling::{Phase, PoolSize, SapConfig, SapSavedState};
pub use rng::RngStream;
pub use tensor::Tensor4;
