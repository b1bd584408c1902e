//! Monte-Carlo sweep of train/test second moments for stochastic average
//! pooling against global average pooling.
//!
//! ```text
//! cargo run --release --example second_moment_sweep          # quick grid
//! cargo run --release --example second_moment_sweep -- full  # N=64, C=256, HW up to 256^2
//! ```

use std::time::Instant;

use stochpool::moments::{
    check_sap_consistency, run_keepprob_sweep, run_spatial_sweep, MomentReport, ScalingTag, SweepConfig,
};
use stochpool::Phase;

fn table(report: &MomentReport) {
    println!("{:>7} {:>5} {:>12} {:>12} {:>12} {:>8}", "hw", "p", "test", "with", "without", "hw*test");
    for test in report.rows.iter().filter(|r| r.phase == Phase::Test) {
        let train = |s| {
            report
                .find(test.operator, Phase::Train, test.hw, test.p, s)
                .map(|r| r.second_moment)
                .unwrap_or(f64::NAN)
        };
        println!(
            "{:>7} {:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.4}",
            test.hw,
            test.p.unwrap_or(1.0),
            test.second_moment,
            train(ScalingTag::With),
            train(ScalingTag::Without),
            test.second_moment * test.hw as f64
        );
    }
}

fn main() -> stochpool::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let (spatial_cfg, kp_cfg) = if full {
        (SweepConfig::spatial_default(7), SweepConfig::keep_prob_default(7))
    } else {
        let small = |cfg: SweepConfig| SweepConfig {
            n_batch: 32,
            n_channels: 64,
            ..cfg
        };
        (
            SweepConfig {
                spatial_sizes: vec![2, 4, 8, 16, 32, 64],
                ..small(SweepConfig::spatial_default(7))
            },
            SweepConfig {
                spatial_sizes: vec![32],
                ..small(SweepConfig::keep_prob_default(7))
            },
        )
    };

    for (name, cfg, run) in [
        ("spatial", spatial_cfg, run_spatial_sweep as fn(&SweepConfig) -> _),
        ("keep-prob", kp_cfg, run_keepprob_sweep),
    ] {
        println!("{name} sweep: {cfg}");
        let t = Instant::now();
        let report = run(&cfg)?;
        table(&report);
        let check = check_sap_consistency(&report, 0.05, 0.05);
        println!(
            "max deviations: with-scaling {:.4}, without-scaling {:.4}, hw*test {:.4}; {} in {:.1?}\n",
            check.max_with_deviation,
            check.max_without_deviation,
            check.max_gap_law_deviation,
            if check.passed() { "within tolerance" } else { "OUT OF TOLERANCE" },
            t.elapsed()
        );
    }
    Ok(())
}
