//! A small convolutional classifier with hand-written backpropagation.
//!
//! Two 3x3 conv layers with batch normalization and tanh feed a pooling head
//! (global averaging, stochastic average pooling, or Dropout followed by
//! global averaging) and a linear classifier over four texture classes.

mod data;
mod layers;
mod net;
mod train;

pub use data::{SyntheticDataset, IMAGE_SIDE, N_CLASSES};
pub use layers::{conv3x3_backward, conv3x3_forward, BatchNorm, BnCache, BN_EPS, BN_MOMENTUM};
pub use net::{
    backward, forward, forward_with_masks, softmax_cross_entropy, Cache, Grads, Head, HeadMasks, ToyNetParams,
    CONV1_CHANNELS, CONV2_CHANNELS,
};
pub use train::{evaluate, train_toy, TraceRow, TrainConfig, TrainTrace, TRACE_HEADER};

use crate::error::Result;
use crate::pooling::Phase;
use crate::rng::RngStream;
use crate::tensor::{sample_gaussian, second_moment};

/// Train and test second moments of a head's pooled output on standard-normal
/// feature maps of `shape`. SAP keeps them equal; Dropout inflates train by `1/p`.
pub fn head_second_moments(head: Head, shape: [usize; 4], rng: &mut RngStream) -> Result<(f64, f64)> {
    head.validate()?;
    let x = sample_gaussian(shape, rng)?;
    let masks = HeadMasks::draw(head, shape, rng)?;
    let pooled = |phase: Phase, masks: HeadMasks| -> Result<f64> {
        use crate::pooling::{global_avg_pool, sap_forward_with_masks, SapConfig};
        Ok(match (phase, head, masks) {
            (Phase::Train, Head::Sap { keep_prob }, HeadMasks::Sap(m)) => {
                second_moment(&sap_forward_with_masks(&x, &SapConfig::global(keep_prob), m)?.0)
            }
            (Phase::Train, Head::DropoutGap { .. }, HeadMasks::Dropout(m)) => {
                second_moment(&global_avg_pool(&m.apply(&x)?))
            }
            _ => second_moment(&global_avg_pool(&x)),
        })
    };
    Ok((pooled(Phase::Train, masks)?, pooled(Phase::Test, HeadMasks::None)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sap_head_keeps_moments_dropout_inflates() {
        let shape = [64, 64, 16, 16];
        let (tr, te) = head_second_moments(Head::Sap { keep_prob: 0.5 }, shape, &mut RngStream::new(1, 9)).unwrap();
        assert!((tr / te - 1.0).abs() < 0.1, "sap ratio {}", tr / te);
        let (tr, te) =
            head_second_moments(Head::DropoutGap { keep_prob: 0.5 }, shape, &mut RngStream::new(1, 9)).unwrap();
        assert!((tr / te * 0.5 - 1.0).abs() < 0.1, "dropout ratio {}", tr / te);
    }
}
