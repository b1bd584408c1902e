//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the timed sweep has the machine to itself.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    sap_gradient_error, subset_uniformity_p_value, toy_gradient_errors, uniform_full_block_vs_unrestricted,
};
use rand::Rng;
use stochpool::masks::{
    circular_shift, kept_count, make_pattern_mask, pattern_template, PatternKind, PatternSpec,
};
use stochpool::moments::{
    check_sap_consistency, run_inconsistency_demos, run_keepprob_sweep, run_spatial_sweep, MomentReport, Operator,
    ScalingTag, SweepConfig,
};
use stochpool::pooling::{
    avg_pool_2d, dropout, global_avg_pool, sap_forward, stochastic_subsample, zeiler_stochastic_pool, SapConfig,
};
use stochpool::tensor::{mean, sample_gaussian, variance};
use stochpool::toynet::{evaluate, forward, train_toy, Head, SyntheticDataset, ToyNetParams, TrainConfig};
use stochpool::{Phase, PoolSize, RngStream};

const SEED: u64 = 2024;
const RUNTIME_BUDGET: Duration = Duration::from_secs(120);
const RATIO_TOL: f64 = 0.05;
const GAP_LAW_TOL: f64 = 0.05;
const DROPOUT_TOL: f64 = 0.02;
const GRAD_TOL: f64 = 1e-5;
const ALPHA: f64 = 1e-3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Largest `|ratio * p - 1|` over unscaled SAP rows.
fn max_unscaled_dev(report: &MomentReport) -> f64 {
    report
        .phase_ratios()
        .iter()
        .filter(|r| r.scaling == ScalingTag::Without)
        .map(|r| (r.ratio * r.p.unwrap_or(1.0) - 1.0).abs())
        .fold(0.0, f64::max)
}

fn spatial_sweep(spatial: &MomentReport, elapsed: Duration) -> Verdict {
    let check = check_sap_consistency(spatial, RATIO_TOL, GAP_LAW_TOL);
    let unscaled = max_unscaled_dev(spatial);
    let fast = elapsed <= RUNTIME_BUDGET;
    verdict(
        check.with_ok && unscaled <= 0.10 && fast,
        format!(
            "HW 2^2..256^2, p=0.5, N=64, C=256, 8 trials: max |train/test - 1| = {:.4} (tol {RATIO_TOL}), \
             max |unscaled ratio / 2 - 1| = {unscaled:.4} (tol 0.10), runtime {:.1}s single-thread (budget {}s)",
            check.max_with_deviation,
            elapsed.as_secs_f64(),
            RUNTIME_BUDGET.as_secs()
        ),
    )
}

fn keep_prob_sweep(kp: &MomentReport) -> Verdict {
    let check = check_sap_consistency(kp, RATIO_TOL, GAP_LAW_TOL);
    let mut worst = String::new();
    for r in kp.phase_ratios().iter().filter(|r| r.scaling == ScalingTag::Without) {
        let p = r.p.unwrap_or(1.0);
        worst.push_str(&format!(" p={p}:{:.3}", r.ratio * p));
    }
    verdict(
        check.with_ok && check.without_ok,
        format!(
            "HW=256^2, p=0.1..0.9: max |train/test - 1| = {:.4} (tol {RATIO_TOL}); unscaled ratio*p ={worst} \
             (tol 0.15 below p=0.3, else 0.10)",
            check.max_with_deviation
        ),
    )
}

fn gap_law(spatial: &MomentReport, kp: &MomentReport) -> Verdict {
    let a = check_sap_consistency(spatial, RATIO_TOL, GAP_LAW_TOL);
    let b = check_sap_consistency(kp, RATIO_TOL, GAP_LAW_TOL);
    verdict(
        a.gap_law_ok && b.gap_law_ok,
        format!(
            "max |E[GAP^2] * HW - 1| = {:.4} over HW 2^2..256^2 (tol {GAP_LAW_TOL})",
            a.max_gap_law_deviation.max(b.max_gap_law_deviation)
        ),
    )
}

fn dropout_law(demos: &MomentReport) -> Verdict {
    let mut pass = true;
    let mut detail = String::new();
    for r in demos.phase_ratios().iter().filter(|r| r.operator == Operator::Dropout) {
        let p = r.p.unwrap_or(1.0);
        let dev = (r.ratio * p - 1.0).abs();
        pass &= dev <= DROPOUT_TOL;
        detail.push_str(&format!("p={p}: train/test {:.4} vs 1/p {:.4}; ", r.ratio, 1.0 / p));
    }
    let x = sample_gaussian([16, 64, 32, 32], &mut RngStream::new(SEED, 40)).unwrap();
    for p in [0.5, 0.8] {
        let y = dropout(&x, p, Phase::Train, &mut RngStream::new(SEED, 41)).unwrap();
        let se = (variance(&y).unwrap() / y.len() as f64).sqrt();
        let z = (mean(&y) - mean(&x)).abs() / se;
        pass &= z < 4.0;
        detail.push_str(&format!("p={p}: mean shift {z:.2} SE; "));
    }
    verdict(pass, format!("{}2^20-element inputs, tol {DROPOUT_TOL} and 4 SE", detail))
}

fn subsampling() -> Verdict {
    let n = 65_536;
    let x = sample_gaussian([1, 1, 256, 256], &mut RngStream::new(SEED, 50)).unwrap();
    let y = stochastic_subsample(&x, 0.5, Phase::Train, &mut RngStream::new(SEED, 51)).unwrap();
    let k = kept_count(n, 0.5);
    let (mx, vx) = (mean(&x), variance(&x).unwrap());
    let (my, vy) = (mean(&y), variance(&y).unwrap());
    let z_mean = (my - mx).abs() / (vx / k as f64 * (1.0 - k as f64 / n as f64)).sqrt();
    let z_var = (vy - vx).abs() / (vx * (2.0 / k as f64).sqrt());
    let lengths_ok = [0.1, 0.3, 0.5, 0.77, 1.0].iter().all(|&p| {
        stochastic_subsample(&x, p, Phase::Train, &mut RngStream::new(SEED, 52))
            .map(|t| t.len() == kept_count(n, p))
            .unwrap_or(false)
    });
    let p_value = subset_uniformity_p_value(20_000, SEED);
    verdict(
        z_mean < 4.0 && z_var < 4.0 && y.len() == k && lengths_ok && p_value > ALPHA,
        format!(
            "n=65536: mean shift {z_mean:.2} SE, variance shift {z_var:.2} SE, length floor(n*p) {}; \
             3-of-6 subset chi-square p = {p_value:.3} over 20000 draws",
            if lengths_ok { "exact" } else { "WRONG" }
        ),
    )
}

fn probability_map_pooling(demos: &MomentReport) -> Verdict {
    let r = demos
        .phase_ratios()
        .into_iter()
        .find(|r| r.operator == Operator::Zeiler)
        .expect("demo report has a probability-map row");
    let se = r.stderr.unwrap_or(f64::INFINITY);
    let sigmas = (r.ratio - 1.0).abs() / se;
    verdict(
        sigmas > 3.0,
        format!("U(0,1) windows: train/test {:.4} +- {se:.2e}, {sigmas:.1} SE from 1 (need > 3)", r.ratio),
    )
}

fn gradients() -> Verdict {
    let sap = [
        sap_gradient_error([1, 1, 8, 8], &SapConfig::global(0.5), SEED),
        sap_gradient_error([2, 3, 8, 8], &SapConfig::window(4, 0.3), SEED + 1),
    ];
    let mut worst = sap[0].max(sap[1]);
    let mut detail = format!("sap_backward {worst:.1e}");
    for head in [
        Head::Gap,
        Head::Sap { keep_prob: 0.5 },
        Head::DropoutGap { keep_prob: 0.5 },
    ] {
        let (p, x) = toy_gradient_errors(head, Phase::Train);
        worst = worst.max(p).max(x);
        detail.push_str(&format!(", {} head {:.1e}", head.name(), p.max(x)));
    }
    verdict(worst <= GRAD_TOL, format!("max relative error: {detail} (tol {GRAD_TOL:e})"))
}

fn identities() -> Verdict {
    let x = sample_gaussian([3, 4, 8, 8], &mut RngStream::new(SEED, 80)).unwrap();
    let mut rng = RngStream::new(SEED, 81);
    let mut ok = true;
    let mut failures = Vec::new();
    let mut check = |cond: bool, what: &str| {
        ok &= cond;
        if !cond {
            failures.push(what.to_string());
        }
    };

    for (cfg, reference) in [
        (SapConfig::window(2, 1.0), avg_pool_2d(&x, 2).unwrap()),
        (SapConfig::window(4, 1.0), avg_pool_2d(&x, 4).unwrap()),
        (SapConfig::global(1.0), global_avg_pool(&x)),
    ] {
        for phase in [Phase::Train, Phase::Test] {
            let (y, _) = sap_forward(&x, &cfg, phase, &mut rng).unwrap();
            check(y.data() == reference.data(), "p=1 SAP bitwise AP");
        }
    }
    check(avg_pool_2d(&x, 1).unwrap() == x, "r=1 AP is identity");

    let before = rng.clone();
    let sap_cfg = SapConfig::window(2, 0.5);
    let a = sap_forward(&x, &sap_cfg, Phase::Test, &mut rng).unwrap().0;
    let b = sap_forward(&x, &sap_cfg, Phase::Test, &mut rng).unwrap().0;
    check(a == b, "test-phase SAP repeatable");
    check(dropout(&x, 0.5, Phase::Test, &mut rng).unwrap() == x, "test-phase dropout identity");
    check(stochastic_subsample(&x, 0.5, Phase::Test, &mut rng).unwrap() == x, "test-phase SS identity");
    let u = x.map(f64::abs);
    let z1 = zeiler_stochastic_pool(&u, PoolSize::Window(2), Phase::Test, &mut rng).unwrap();
    let z2 = zeiler_stochastic_pool(&u, PoolSize::Window(2), Phase::Test, &mut rng).unwrap();
    check(z1 == z2, "test-phase probability-map pooling repeatable");
    let params = ToyNetParams::init(&RngStream::new(SEED, 82));
    let img = sample_gaussian([2, 1, 16, 16], &mut RngStream::new(SEED, 83)).unwrap();
    let l1 = forward(&params, &img, Head::Sap { keep_prob: 0.5 }, Phase::Test, &mut rng).unwrap().0;
    let l2 = forward(&params, &img, Head::Sap { keep_prob: 0.5 }, Phase::Test, &mut rng).unwrap().0;
    check(l1 == l2, "test-phase toy forward repeatable");
    check(rng == before, "test phase consumed no draws");

    let detail = if failures.is_empty() {
        "p=1 SAP == AP bitwise (windows 2, 4, global; both phases), r=1 AP == identity, \
         test phase repeatable with zero draws (SAP, dropout, SS, probability-map, toy net)"
            .to_string()
    } else {
        format!("failed: {}", failures.join(", "))
    };
    verdict(ok, detail)
}

fn patterns() -> Verdict {
    let mut failures = Vec::new();
    let mut realizations = 0usize;
    let cases: &[(PatternKind, usize, usize, f64)] = &[
        (PatternKind::Unrestricted, 8, 1, 0.5),
        (PatternKind::Unrestricted, 7, 1, 0.3),
        (PatternKind::Block, 8, 2, 0.5),
        (PatternKind::Block, 16, 4, 0.25),
        (PatternKind::Grid, 8, 1, 0.5),
        (PatternKind::Grid, 16, 4, 0.5),
        (PatternKind::Uniform, 8, 2, 0.5),
        (PatternKind::Uniform, 12, 3, 1.0 / 3.0),
        (PatternKind::Uniform, 8, 8, 0.5),
        (PatternKind::Duplication, 8, 4, 0.5),
        (PatternKind::Duplication, 12, 6, 0.25),
    ];
    let mut rng = RngStream::new(SEED, 90);
    for &(kind, l, s, p) in cases {
        let spec = PatternSpec::new(kind, s);
        let want = kept_count(l * l, p);
        for _ in 0..200 {
            realizations += 1;
            let m = make_pattern_mask(&spec, l, p, &mut rng).unwrap();
            if m.count_kept() != want {
                failures.push(format!("{kind} l={l} s={s} p={p}: kept {}", m.count_kept()));
            }
            let t = pattern_template(&spec, l, p, &mut rng).unwrap();
            let dy = rng.next_substream().generator().random_range(-20i64..20);
            if circular_shift(&t, dy, 3 - dy).count_kept() != t.count_kept() {
                failures.push(format!("{kind}: shift changed cardinality"));
            }
            let cell = |y: usize, x: usize| t.get(y, x);
            match kind {
                PatternKind::Block => {
                    let constant = (0..l).all(|y| (0..l).all(|x| cell(y, x) == cell(y / s * s, x / s * s)));
                    if !constant {
                        failures.push(format!("block l={l} s={s}: not blockwise constant"));
                    }
                }
                PatternKind::Duplication => {
                    let periodic = (0..l).all(|y| (0..l).all(|x| cell(y, x) == cell(y % s, x % s)));
                    if !periodic {
                        failures.push(format!("duplication l={l} s={s}: not s-periodic"));
                    }
                }
                _ => {}
            }
        }
    }
    let (homogeneity, fit) = uniform_full_block_vs_unrestricted(10_000);
    let chi_ok = homogeneity > ALPHA && fit > ALPHA;
    failures.dedup();
    let pass = failures.is_empty() && chi_ok;
    let mut detail = format!(
        "{realizations} realizations over 11 (kind, l, s, p) cases with exact floor(l^2 p) cardinality, \
         block/duplication structure and shift invariance; uniform s=l vs unrestricted chi-square p = {homogeneity:.3}, \
         vs exact hypergeometric p = {fit:.3} (10000 masks each)"
    );
    if !failures.is_empty() {
        detail = format!("{} ... first failure: {}", detail, failures[0]);
    }
    verdict(pass, detail)
}

fn toy_training_substitute() -> Verdict {
    let gap = train_toy(&TrainConfig::new(Head::Gap, SEED)).unwrap();
    let sap = train_toy(&TrainConfig::new(Head::Sap { keep_prob: 0.5 }, SEED)).unwrap();
    let data = SyntheticDataset::generate(128, &RngStream::new(SEED, 100)).unwrap();
    let head = Head::Sap { keep_prob: 0.5 };
    let e1 = evaluate(&sap.params, &data, head).unwrap();
    let e2 = evaluate(&sap.params, &data, head).unwrap();
    let pass = gap.final_train_acc >= 0.90 && sap.final_train_acc >= 0.85 && e1 == e2;
    verdict(
        pass,
        format!(
            "large-scale accuracy tables are not reproducible on a desk machine; substitute: toy training \
             2000 steps, gap train acc {:.3} (floor 0.90), sap p=0.5 train acc {:.3} (floor 0.85), \
             test accs {:.3} / {:.3}, repeated evaluation identical: {}",
            gap.final_train_acc,
            sap.final_train_acc,
            gap.final_test_acc,
            sap.final_test_acc,
            e1 == e2
        ),
    )
}

fn report(n: usize, v: &Verdict) {
    println!("criterion {n:>2}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from other targets arrive here too
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }

    let mut verdicts = Vec::new();

    let start = Instant::now();
    let spatial = run_spatial_sweep(&SweepConfig::spatial_default(SEED)).expect("spatial sweep");
    let elapsed = start.elapsed();
    let v = spatial_sweep(&spatial, elapsed);
    report(1, &v);
    verdicts.push(v);

    let kp = run_keepprob_sweep(&SweepConfig::keep_prob_default(SEED)).expect("keep-prob sweep");
    let v = keep_prob_sweep(&kp);
    report(2, &v);
    verdicts.push(v);

    let v = gap_law(&spatial, &kp);
    report(3, &v);
    verdicts.push(v);

    let demos = run_inconsistency_demos(&SweepConfig::demos_default(SEED)).expect("demos");
    let v = dropout_law(&demos);
    report(4, &v);
    verdicts.push(v);

    let v = subsampling();
    report(5, &v);
    verdicts.push(v);

    let v = probability_map_pooling(&demos);
    report(6, &v);
    verdicts.push(v);

    let v = gradients();
    report(7, &v);
    verdicts.push(v);

    let v = identities();
    report(8, &v);
    verdicts.push(v);

    let v = patterns();
    report(9, &v);
    verdicts.push(v);

    let v = toy_training_substitute();
    report(10, &v);
    verdicts.push(v);

    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
