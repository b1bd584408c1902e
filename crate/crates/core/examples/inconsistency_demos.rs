//! Train/test second-moment mismatch of Dropout, stochastic subsampling and
//! probability-map pooling, next to the scaled SAP that avoids it.
//!
//! ```text
//! cargo run --release --example inconsistency_demos
//! ```

use stochpool::moments::{run_inconsistency_demos, run_spatial_sweep, SweepConfig};
use stochpool::pooling::{dropout, zeiler_stochastic_pool, ProbMap};
use stochpool::{Phase, PoolSize, RngStream, Tensor4};

fn main() -> stochpool::Result<()> {
    // the elementwise cases by hand first
    let x = Tensor4::from_vec([1, 1, 1, 2], vec![1.0, 2.0])?;
    let y = dropout(&x, 0.5, Phase::Train, &mut RngStream::new(3, 0))?;
    println!("dropout p=0.5 of [1, 2] in train phase: {:?}", y.data());

    let window = ProbMap::from_window(&[1.0, 3.0])?;
    println!(
        "probability-map pooling of [1, 3]: weights {:?}, test output {}",
        window.weights(),
        window.weighted_average(&[1.0, 3.0])
    );
    let w = Tensor4::from_vec([1, 1, 1, 2], vec![1.0, 3.0])?;
    let picks: Vec<f64> = (0..8)
        .map(|i| zeiler_stochastic_pool(&w, PoolSize::Global, Phase::Train, &mut RngStream::new(i, 0)))
        .map(|r| r.map(|t| t.data()[0]))
        .collect::<stochpool::Result<_>>()?;
    println!("  train draws: {picks:?}");

    let cfg = SweepConfig::demos_default(11);
    println!("\n{cfg}");
    let report = run_inconsistency_demos(&cfg)?;
    let sap = run_spatial_sweep(&SweepConfig {
        operator: stochpool::moments::Operator::Sap,
        ..cfg.clone()
    })?;
    println!("{:<8} {:>5} {:>10} {:>10}", "operator", "p", "train/test", "stderr");
    for r in report.phase_ratios().iter().chain(sap.phase_ratios().iter()) {
        println!(
            "{:<8} {:>5} {:>10.4} {:>10.2e}  ({})",
            r.operator.to_string(),
            r.p.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
            r.ratio,
            r.stderr.unwrap_or(f64::NAN),
            format!("{:?}", r.scaling).to_lowercase()
        );
    }
    Ok(())
}
