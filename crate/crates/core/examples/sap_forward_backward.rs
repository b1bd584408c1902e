//! Stochastic average pooling on a small feature map: train vs test outputs,
//! the masks behind them, and the backward pass.
//!
//! ```text
//! cargo run --release --example sap_forward_backward
//! ```

use stochpool::pooling::{avg_pool_2d, sap_backward, sap_forward, SapConfig};
use stochpool::tensor::{sample_gaussian, second_moment};
use stochpool::{Phase, RngStream, Tensor4};

fn print_plane(label: &str, t: &Tensor4) {
    println!("{label}:");
    for row in t.plane(0, 0).chunks(t.width()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:7.3}")).collect();
        println!("  {}", cells.join(" "));
    }
}

fn main() -> stochpool::Result<()> {
    let mut rng = RngStream::new(42, 0);
    let x = sample_gaussian([1, 2, 4, 4], &mut rng)?;
    print_plane("input (channel 0)", &x);

    let cfg = SapConfig::window(2, 0.5);
    let (train, state) = sap_forward(&x, &cfg, Phase::Train, &mut rng)?;
    let (test, _) = sap_forward(&x, &cfg, Phase::Test, &mut rng)?;
    print_plane("train output, 2x2 windows, p = 0.5", &train);
    print_plane("test output (plain average pooling)", &test);
    assert_eq!(test, avg_pool_2d(&x, 2)?);

    // one index set per sample, shared by both channels
    let kept = state.kept_flags(0, 0);
    println!("kept mask:");
    for row in kept.chunks(4) {
        let cells: Vec<&str> = row.iter().map(|&k| if k { "#" } else { "." }).collect();
        println!("  {}", cells.join(" "));
    }

    let grad_out = Tensor4::filled(train.shape(), 1.0)?;
    let grad_in = sap_backward(&grad_out, &state)?;
    print_plane("input gradient for an all-ones upstream gradient", &grad_in);

    // second moments on a larger input: scaled train output matches test output
    let big = sample_gaussian([32, 64, 16, 16], &mut rng)?;
    let global = SapConfig::global(0.5);
    let (tr, _) = sap_forward(&big, &global, Phase::Train, &mut rng)?;
    let (te, _) = sap_forward(&big, &global, Phase::Test, &mut rng)?;
    let (raw, _) = sap_forward(&big, &global.with_scaling(false), Phase::Train, &mut rng)?;
    println!(
        "global pooling over 16x16: E[y^2] test {:.5}, train {:.5}, train without scaling {:.5}",
        second_moment(&te),
        second_moment(&tr),
        second_moment(&raw)
    );
    Ok(())
}
