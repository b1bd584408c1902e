//! Trains the toy classifier with each pooling head and reports accuracies.
//!
//! ```text
//! cargo run --release --example toy_training
//! ```

use std::time::Instant;

use stochpool::toynet::{train_toy, Head, TrainConfig};

fn main() -> stochpool::Result<()> {
    let heads = [
        Head::Gap,
        Head::Sap { keep_prob: 0.5 },
        Head::DropoutGap { keep_prob: 0.5 },
    ];
    for head in heads {
        let cfg = TrainConfig::new(head, 1);
        let t = Instant::now();
        let trace = train_toy(&cfg)?;
        let first = trace.rows.first().map(|r| r.loss).unwrap_or(f64::NAN);
        let last = trace.rows.last().map(|r| r.loss).unwrap_or(f64::NAN);
        println!(
            "{head:<16} loss {first:.3} -> {last:.3}  train acc {:.3}  test acc {:.3}  ({:.1?})",
            trace.final_train_acc,
            trace.final_test_acc,
            t.elapsed()
        );
    }
    Ok(())
}
