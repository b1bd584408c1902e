//! Oracles shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};
use stochpool::masks::{make_pattern_mask, subsample_indices, PatternKind, PatternSpec};
use stochpool::pooling::{draw_sap_masks, sap_backward, sap_forward_with_masks, SapConfig};
use stochpool::tensor::sample_gaussian;
use stochpool::toynet::{
    backward, forward_with_masks, softmax_cross_entropy, Head, HeadMasks, ToyNetParams, CONV2_CHANNELS,
};
use stochpool::{Phase, RngStream, Tensor4};

pub const FD_STEP: f64 = 1e-3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Fourth-order central differences of `f` at `x`, one coordinate at a time.
/// Truncation error is O(h^4), so a wide step keeps roundoff small too.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            let mut at = |k: f64| {
                probe[i] = orig + k * FD_STEP;
                f(&probe)
            };
            let d = 8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0));
            probe[i] = orig;
            d / (12.0 * FD_STEP)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max relative error of `sap_backward` against finite differences of
/// `<sap_forward(x), w>` for a random `x` of `shape` and fixed masks.
pub fn sap_gradient_error(shape: [usize; 4], cfg: &SapConfig, seed: u64) -> f64 {
    let x = sample_gaussian(shape, &mut RngStream::new(seed, 1)).unwrap();
    let masks = draw_sap_masks(shape, cfg, &mut RngStream::new(seed, 2)).unwrap();
    let (y, state) = sap_forward_with_masks(&x, cfg, masks.clone()).unwrap();
    let w = sample_gaussian(y.shape(), &mut RngStream::new(seed, 3)).unwrap();
    let analytic = sap_backward(&w, &state).unwrap();
    let numeric = numeric_grad(x.data(), |v| {
        let xi = Tensor4::from_vec(shape, v.to_vec()).unwrap();
        dot(sap_forward_with_masks(&xi, cfg, masks.clone()).unwrap().0.data(), w.data())
    });
    max_rel_err(analytic.data(), &numeric)
}

/// Toy network with a non-zero classifier so every layer carries signal.
pub fn toy_setup() -> (ToyNetParams, Tensor4, Vec<usize>) {
    let mut params = ToyNetParams::init(&RngStream::new(20, 0));
    params.fc_w = (0..params.fc_w.len()).map(|i| 0.8 * (1.3 * i as f64).sin()).collect();
    params.fc_b = vec![0.1, -0.2, 0.05, 0.0];
    params.bn1.gamma = vec![1.1, 0.9, 1.2, 0.8];
    params.bn2.beta = (0..CONV2_CHANNELS).map(|c| 0.05 * c as f64 - 0.2).collect();
    let x = sample_gaussian([4, 1, 16, 16], &mut RngStream::new(21, 0)).unwrap();
    (params, x, vec![0, 1, 2, 3])
}

/// `(parameter error, image error)` of the toy network's backward pass on a
/// 4-sample batch with the head's masks held fixed.
pub fn toy_gradient_errors(head: Head, phase: Phase) -> (f64, f64) {
    let (params, x, labels) = toy_setup();
    let masks = match phase {
        Phase::Train => HeadMasks::draw(head, [4, CONV2_CHANNELS, 16, 16], &mut RngStream::new(22, 0)).unwrap(),
        Phase::Test => HeadMasks::None,
    };
    let loss_at = |p: &ToyNetParams, xi: &Tensor4| {
        let (logits, _) = forward_with_masks(p, xi, head, phase, masks.clone()).unwrap();
        softmax_cross_entropy(&logits, &labels).unwrap().0
    };

    let (logits, cache) = forward_with_masks(&params, &x, head, phase, masks.clone()).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();
    let grads = backward(&params, &cache, &dlogits).unwrap();

    let numeric = numeric_grad(&params.to_flat(), |v| {
        let mut p = params.clone();
        p.set_flat(v).unwrap();
        loss_at(&p, &x)
    });
    let numeric_x = numeric_grad(x.data(), |v| loss_at(&params, &Tensor4::from_vec(x.shape(), v.to_vec()).unwrap()));
    (
        max_rel_err(&grads.to_flat(), &numeric),
        max_rel_err(grads.input.data(), &numeric_x),
    )
}

/// Pearson goodness-of-fit: `(statistic, p-value)`. Cells whose expected
/// count is below 5 are pooled into their neighbour.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(o), Some(e)) => {
                *o += o_acc;
                *e += e_acc;
            }
            _ => {
                obs.push(o_acc);
                exp.push(e_acc);
            }
        }
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (obs.len() - 1) as f64;
    (stat, 1.0 - ChiSquared::new(df).unwrap().cdf(stat))
}

/// Homogeneity test of two count vectors over the same categories.
pub fn chi_square_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let total = na + nb;
    let mut stat = 0.0;
    let mut cells = 0;
    for (&x, &y) in a.iter().zip(b) {
        let col = x + y;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let (ea, eb) = (na * col / total, nb * col / total);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    (stat, 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat))
}

/// Every `k`-subset of `0..n`, each as a bitmask, in lexicographic order.
pub fn enumerate_subsets(n: usize, k: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).collect()
}

/// Chi-square p-value of `draws` subsample index sets at `n = 6`, `p = 0.5`
/// against the uniform law on all 20 three-element subsets.
pub fn subset_uniformity_p_value(draws: usize, seed: u64) -> f64 {
    let subsets = enumerate_subsets(6, 3);
    assert_eq!(subsets.len(), 20);
    let mut counts = vec![0.0; subsets.len()];
    let mut rng = RngStream::new(seed, 5);
    for _ in 0..draws {
        let set = subsample_indices(6, 0.5, &mut rng).unwrap();
        let bits = set.kept().iter().fold(0u32, |m, &i| m | (1 << i));
        let slot = subsets.iter().position(|&s| s == bits).expect("kept set is a 3-subset");
        counts[slot] += 1.0;
    }
    let expected = vec![draws as f64 / 20.0; 20];
    chi_square(&counts, &expected).1
}

/// Hypergeometric pmf of drawing `j` marked items when taking `draws` from
/// `population` with `marked` marked ones, for every `j`.
pub fn hypergeometric_pmf(population: u64, marked: u64, draws: u64) -> Vec<f64> {
    let ln_choose = |n: u64, k: u64| -> f64 {
        (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
    };
    (0..=draws)
        .map(|j| {
            if j > marked || draws - j > population - marked {
                0.0
            } else {
                (ln_choose(marked, j) + ln_choose(population - marked, draws - j) - ln_choose(population, draws)).exp()
            }
        })
        .collect()
}

/// Counts of "kept cells in the top-left quadrant" for `count` masks of `kind`
/// on an `l x l` grid with factor `s`.
pub fn quadrant_counts(kind: PatternKind, l: usize, s: usize, p: f64, count: usize, seed: u64) -> Vec<f64> {
    let spec = PatternSpec::new(kind, s);
    let mut rng = RngStream::new(seed, 6);
    let mut hist = vec![0.0; (l / 2) * (l / 2) + 1];
    for _ in 0..count {
        let m = make_pattern_mask(&spec, l, p, &mut rng).unwrap();
        let q = (0..l / 2)
            .flat_map(|y| (0..l / 2).map(move |x| (y, x)))
            .filter(|&(y, x)| m.get(y, x))
            .count();
        hist[q] += 1.0;
    }
    hist
}

/// Per-cell keep frequencies of `count` masks.
pub fn cell_counts(kind: PatternKind, l: usize, s: usize, p: f64, count: usize, seed: u64) -> Vec<f64> {
    let spec = PatternSpec::new(kind, s);
    let mut rng = RngStream::new(seed, 7);
    let mut hist = vec![0.0; l * l];
    for _ in 0..count {
        let m = make_pattern_mask(&spec, l, p, &mut rng).unwrap();
        for (h, &c) in hist.iter_mut().zip(m.cells()) {
            *h += f64::from(u8::from(c));
        }
    }
    hist
}

/// `(p-value of uniform-s=l vs unrestricted homogeneity, p-value of uniform-s=l vs exact hypergeometric)`
/// on the top-left-quadrant statistic of an 8x8 mask at `p = 0.5`.
pub fn uniform_full_block_vs_unrestricted(count: usize) -> (f64, f64) {
    let (l, p) = (8, 0.5);
    let uni = quadrant_counts(PatternKind::Uniform, l, l, p, count, 101);
    let unr = quadrant_counts(PatternKind::Unrestricted, l, 1, p, count, 202);
    let homogeneity = chi_square_two_sample(&uni, &unr).1;
    let pmf = hypergeometric_pmf(64, 32, 16);
    let expected: Vec<f64> = pmf.iter().map(|q| q * count as f64).collect();
    let fit = chi_square(&uni, &expected).1;
    (homogeneity, fit)
}
