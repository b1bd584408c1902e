use super::Phase;
use crate::error::{check_keep_prob, Error, Result};
use crate::masks::{kept_count, subsample_indices, IndexSet};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

/// Stochastic subsampling over the flattened spatial axis.
///
/// Train phase keeps `floor(HW * p)` positions per sample, shared across
/// channels, and returns shape `(N, C, 1, floor(HW * p))` in gather order.
/// Test phase returns the input unchanged.
pub fn stochastic_subsample(x: &Tensor4, p: f64, phase: Phase, rng: &mut RngStream) -> Result<Tensor4> {
    check_keep_prob(p)?;
    let hw = x.plane_len();
    if kept_count(hw, p) == 0 {
        return Err(Error::EmptySubsample { n: hw, p });
    }
    if phase == Phase::Test {
        return Ok(x.clone());
    }
    let parent = rng.next_substream();
    let masks = (0..x.n_batch())
        .map(|n| subsample_indices(hw, p, &mut parent.substream(n as u64)))
        .collect::<Result<Vec<_>>>()?;
    stochastic_subsample_with_masks(x, &masks)
}

/// Train-phase gather with one explicit index set per sample.
pub fn stochastic_subsample_with_masks(x: &Tensor4, masks: &[IndexSet]) -> Result<Tensor4> {
    let [n, c, _, _] = x.shape();
    if masks.len() != n {
        return Err(Error::ShapeMismatch {
            expected: vec![n],
            actual: vec![masks.len()],
        });
    }
    let k = masks.first().map_or(0, IndexSet::len);
    if masks.iter().any(|m| m.len() != k || m.source_len() != x.plane_len()) {
        return Err(Error::InvalidInput(
            "subsample masks must share one length and match the plane size".into(),
        ));
    }
    let mut data = Vec::with_capacity(n * c * k);
    for (ni, mask) in masks.iter().enumerate() {
        for ci in 0..c {
            data.extend(mask.gather(x.plane(ni, ci)));
        }
    }
    Tensor4::from_vec([n, c, 1, k], data)
}
