//! The `stochpool` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime or I/O error, 3 a measured
//! quantity fell outside its tolerance.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::masks::{make_pattern_mask, ChannelMode, PatternKind, PatternSpec};
use crate::moments::{
    check_sap_consistency, run_inconsistency_demos, run_keepprob_sweep, run_spatial_sweep,
    MomentReport, Operator, Scaling, SweepConfig, DEFAULT_BATCH, DEFAULT_CHANNELS, DEFAULT_KEEP_PROB,
    DEFAULT_TRIALS,
};
use crate::rng::RngStream;
use crate::toynet::{train_toy, Head, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

/// Relative tolerance of with-scaling train/test ratios and of `GAP second moment * HW`.
pub const RATIO_TOLERANCE: f64 = 0.05;
/// Relative tolerance of the Dropout train/test ratio against `1/p`.
pub const DROPOUT_TOLERANCE: f64 = 0.02;
/// Probability-map pooling must sit at least this many standard errors away from ratio 1.
pub const ZEILER_MIN_SIGMAS: f64 = 3.0;

/// Stream id of the pattern generator.
const PATTERN_STREAM: u64 = 0x9a_77;

#[derive(Debug, Parser)]
#[command(name = "stochpool", version, about = "Stochastic average pooling: moment sweeps, demos, masks and toy training")]
pub struct Cli {
    /// Root random seed
    #[arg(long, global = true, env = "STOCHPOOL_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Output file (directory for `patterns`); stdout when omitted
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Monte-Carlo trials per cell
    #[arg(long, global = true, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,

    /// Worker threads for trials; results do not depend on it
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Second moment of SAP versus global average pooling across spatial sizes
    Moments(MomentsArgs),
    /// Second moment of SAP versus global average pooling across keep probabilities
    KeepProb(KeepProbArgs),
    /// Train/test moment mismatch of Dropout, subsampling and probability-map pooling
    Demos(DemosArgs),
    /// Write structured spatial keep-masks as PGM images
    Patterns(PatternsArgs),
    /// Train the toy classifier and write its metrics trace
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Batch size N
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    pub batch: usize,

    /// Channel count C
    #[arg(long, default_value_t = DEFAULT_CHANNELS)]
    pub channels: usize,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub dims: BatchArgs,

    /// Spatial side lengths (H = W)
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128,256")]
    pub sizes: Vec<usize>,

    /// Keep probability
    #[arg(long, default_value_t = DEFAULT_KEEP_PROB)]
    pub p: f64,

    /// Emit only the unscaled train series next to the test series
    #[arg(long)]
    pub no_scaling: bool,
}

#[derive(Debug, Args)]
pub struct KeepProbArgs {
    #[command(flatten)]
    pub dims: BatchArgs,

    /// Spatial side length (H = W)
    #[arg(long, default_value_t = 256)]
    pub size: usize,

    /// Keep probabilities
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub p: Vec<f64>,

    /// Emit only the unscaled train series next to the test series
    #[arg(long)]
    pub no_scaling: bool,
}

#[derive(Debug, Args)]
pub struct DemosArgs {
    /// Batch size N
    #[arg(long, default_value_t = 16)]
    pub batch: usize,

    /// Channel count C
    #[arg(long, default_value_t = 64)]
    pub channels: usize,

    /// Spatial side length (H = W)
    #[arg(long, default_value_t = 32)]
    pub size: usize,

    /// Keep probabilities
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.8")]
    pub p: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct PatternsArgs {
    /// unrestricted, block, grid, uniform or duplication
    #[arg(long, default_value = "unrestricted")]
    pub kind: String,

    /// Mask side length
    #[arg(long, default_value_t = 8)]
    pub l: usize,

    /// Pattern factor (block side, grid cell, uniform block or duplication period)
    #[arg(long, default_value_t = 1)]
    pub s: usize,

    /// Keep probability
    #[arg(long, default_value_t = DEFAULT_KEEP_PROB)]
    pub p: f64,

    /// Number of masks to draw
    #[arg(long, default_value_t = 4)]
    pub count: usize,

    /// shared or independent
    #[arg(long, default_value = "shared")]
    pub channel_mode: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// gap, sap or dropout
    #[arg(long, default_value = "sap")]
    pub head: String,

    /// Keep probability of the sap and dropout heads
    #[arg(long, default_value_t = DEFAULT_KEEP_PROB)]
    pub p: f64,

    /// SGD steps
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,

    /// Learning rate
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,

    /// Minibatch size
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,

    /// Accuracy evaluation interval in steps
    #[arg(long, default_value_t = 250)]
    pub eval_every: usize,
}

enum Outcome {
    Ok,
    OutOfTolerance,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::OutOfTolerance) => EXIT_TOLERANCE,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Moments(a) => {
            let cfg = SweepConfig {
                n_batch: a.dims.batch,
                n_channels: a.dims.channels,
                spatial_sizes: a.sizes.clone(),
                keep_probs: vec![a.p],
                scaling: scaling(a.no_scaling),
                ..sweep_base(cli)
            };
            eprintln!("moments: {cfg} out={}", out_name(cli));
            let report = run_spatial_sweep(&cfg)?;
            emit_report(cli, &report)?;
            Ok(sap_summary(&report))
        }
        Command::KeepProb(a) => {
            let cfg = SweepConfig {
                n_batch: a.dims.batch,
                n_channels: a.dims.channels,
                spatial_sizes: vec![a.size],
                keep_probs: a.p.clone(),
                scaling: scaling(a.no_scaling),
                ..sweep_base(cli)
            };
            eprintln!("keep-prob: {cfg} out={}", out_name(cli));
            let report = run_keepprob_sweep(&cfg)?;
            emit_report(cli, &report)?;
            Ok(sap_summary(&report))
        }
        Command::Demos(a) => {
            let cfg = SweepConfig {
                n_batch: a.batch,
                n_channels: a.channels,
                spatial_sizes: vec![a.size],
                keep_probs: a.p.clone(),
                ..sweep_base(cli)
            };
            eprintln!(
                "demos: operators=dropout,ss,zeiler N={} C={} size={} keep_probs={:?} trials={} seed={} jobs={} out={}",
                cfg.n_batch,
                cfg.n_channels,
                a.size,
                cfg.keep_probs,
                cfg.n_trials,
                cfg.seed,
                cfg.jobs,
                out_name(cli)
            );
            let report = run_inconsistency_demos(&cfg)?;
            emit_report(cli, &report)?;
            Ok(demo_summary(&report))
        }
        Command::Patterns(a) => patterns(cli, a),
        Command::Train(a) => train(cli, a),
    }
}

fn scaling(no_scaling: bool) -> Scaling {
    if no_scaling {
        Scaling::Without
    } else {
        Scaling::Both
    }
}

fn sweep_base(cli: &Cli) -> SweepConfig {
    SweepConfig {
        n_trials: cli.trials,
        seed: cli.seed,
        jobs: cli.jobs,
        ..SweepConfig::spatial_default(cli.seed)
    }
}

fn out_name(cli: &Cli) -> String {
    cli.out
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "-".into())
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

fn write_output(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::InvalidInput(format!("stdout: {e}"))),
    }
}

fn emit_report(cli: &Cli, report: &MomentReport) -> Result<()> {
    write_output(cli, &report.to_csv_string()?)
}

fn sap_summary(report: &MomentReport) -> Outcome {
    let check = check_sap_consistency(report, RATIO_TOLERANCE, RATIO_TOLERANCE);
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    eprintln!(
        "summary: with-scaling max deviation {:.4} (tol {RATIO_TOLERANCE}) {}; \
         without-scaling max deviation from 1/p {:.4} {}; gap*hw max deviation {:.4} (tol {RATIO_TOLERANCE}) {}",
        check.max_with_deviation,
        verdict(check.with_ok),
        check.max_without_deviation,
        verdict(check.without_ok),
        check.max_gap_law_deviation,
        verdict(check.gap_law_ok),
    );
    if check.passed() {
        Outcome::Ok
    } else {
        Outcome::OutOfTolerance
    }
}

fn demo_summary(report: &MomentReport) -> Outcome {
    let mut ok = true;
    for r in report.phase_ratios() {
        let se = r.stderr.unwrap_or(f64::NAN);
        match (r.operator, r.p) {
            (Operator::Dropout, Some(p)) => {
                let pass = (r.ratio * p - 1.0).abs() <= DROPOUT_TOLERANCE;
                ok &= pass;
                eprintln!(
                    "summary: dropout p={p} train/test {:.4} expected {:.4} (tol {DROPOUT_TOLERANCE}) {}",
                    r.ratio,
                    1.0 / p,
                    if pass { "pass" } else { "FAIL" }
                );
            }
            (Operator::Zeiler, _) => {
                let sigmas = (r.ratio - 1.0).abs() / se;
                let pass = sigmas > ZEILER_MIN_SIGMAS;
                ok &= pass;
                eprintln!(
                    "summary: zeiler train/test {:.4} stderr {se:.2e} ({sigmas:.1} sigma from 1) {}",
                    r.ratio,
                    if pass { "pass" } else { "FAIL" }
                );
            }
            (op, p) => {
                eprintln!("summary: {op} p={} train/test {:.4} stderr {se:.2e}", p.unwrap_or(1.0), r.ratio);
            }
        }
    }
    if ok {
        Outcome::Ok
    } else {
        Outcome::OutOfTolerance
    }
}

fn patterns(cli: &Cli, a: &PatternsArgs) -> Result<Outcome> {
    let kind: PatternKind = a.kind.parse()?;
    let mode: ChannelMode = a.channel_mode.parse()?;
    let spec = PatternSpec::new(kind, a.s).with_channel_mode(mode);
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    eprintln!(
        "patterns: kind={kind} l={} s={} p={} count={} channel_mode={mode} seed={} out={}",
        a.l,
        a.s,
        a.p,
        a.count,
        cli.seed,
        dir.display()
    );
    spec.validate(a.l, a.p)?;
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut rng = RngStream::new(cli.seed, PATTERN_STREAM);
    let mut fractions = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let mask = make_pattern_mask(&spec, a.l, a.p, &mut rng)?;
        let path = dir.join(format!("{kind}_{i:03}.pgm"));
        fs::write(&path, mask.to_pgm()).map_err(|e| io_err(&path, e))?;
        fractions.push(mask.kept_fraction());
    }
    let list: Vec<String> = fractions.iter().map(|f| f.to_string()).collect();
    println!("kept_fraction {}", list.join(" "));
    Ok(Outcome::Ok)
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<Outcome> {
    let head = Head::from_name(&a.head, a.p)?;
    let cfg = TrainConfig {
        steps: a.steps,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        eval_every: a.eval_every,
        ..TrainConfig::new(head, cli.seed)
    };
    eprintln!("train: {cfg:?} out={}", out_name(cli));
    let trace = train_toy(&cfg)?;
    write_output(cli, &trace.to_csv_string()?)?;
    eprintln!(
        "final train_acc {} test_acc {}",
        trace.final_train_acc, trace.final_test_acc
    );
    Ok(Outcome::Ok)
}
