//! End-to-end runs of the `stochpool` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stochpool::masks::KeepMask;
use stochpool::moments::CSV_HEADER;
use stochpool::toynet::TRACE_HEADER;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stochpool"));
    cmd.env_remove("STOCHPOOL_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs `args` writing to a temp file and compares it byte-for-byte to a golden file.
fn assert_golden(args: &[&str], name: &str) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join(name);
    let mut full: Vec<&str> = args.to_vec();
    let out_str = out.to_str().unwrap();
    full.extend(["--out", out_str]);
    let o = run(&full);
    assert!(o.status.code().is_some(), "{}", stderr(&o));
    let got = std::fs::read_to_string(&out).unwrap();
    let want = std::fs::read_to_string(golden(name)).unwrap();
    assert_eq!(got, want, "{name} drifted from its golden file");
}

#[test]
fn moments_csv_matches_golden() {
    assert_golden(
        &["moments", "--batch", "2", "--channels", "3", "--sizes", "2,4", "--trials", "2", "--seed", "7"],
        "moments_small.csv",
    );
}

#[test]
fn keep_prob_csv_matches_golden() {
    assert_golden(
        &["keep-prob", "--batch", "2", "--channels", "3", "--size", "4", "--p", "0.25,0.5", "--trials", "2", "--seed", "7"],
        "keep_prob_small.csv",
    );
}

#[test]
fn demos_csv_matches_golden() {
    assert_golden(
        &["demos", "--batch", "2", "--channels", "3", "--size", "4", "--trials", "2", "--seed", "7"],
        "demos_small.csv",
    );
}

#[test]
fn train_trace_matches_golden() {
    assert_golden(
        &["train", "--head", "sap", "--steps", "12", "--eval-every", "6", "--seed", "7"],
        "train_small.csv",
    );
}

#[test]
fn pattern_pgm_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "patterns", "--kind", "duplication", "--l", "8", "--s", "4", "--p", "0.5", "--count", "1", "--seed", "7",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = std::fs::read_to_string(dir.path().join("duplication_000.pgm")).unwrap();
    assert_eq!(got, std::fs::read_to_string(golden("duplication_000.pgm")).unwrap());
}

#[test]
fn moments_is_deterministic_and_job_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("m{i}.csv"))).collect();
    let common = ["moments", "--batch", "3", "--channels", "4", "--sizes", "2,4,8", "--trials", "4", "--seed", "7"];
    for (path, jobs) in paths.iter().zip(["1", "1", "3"]) {
        let mut args = common.to_vec();
        args.extend(["--jobs", jobs, "--out", path.to_str().unwrap()]);
        run(&args);
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    assert_eq!(a, std::fs::read(&paths[2]).unwrap());
}

#[test]
fn seed_env_var_is_the_default_seed() {
    let with_flag = run(&["moments", "--batch", "2", "--channels", "2", "--sizes", "2", "--trials", "2", "--seed", "11"]);
    let with_env = bin()
        .args(["moments", "--batch", "2", "--channels", "2", "--sizes", "2", "--trials", "2"])
        .env("STOCHPOOL_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(with_flag.stdout, with_env.stdout);
    assert!(stderr(&with_env).contains("seed=11"));
}

#[test]
fn default_moments_grid_has_24_rows() {
    // small N and C keep this fast; the row count depends only on sizes and series
    let o = run(&["moments", "--batch", "1", "--channels", "1", "--trials", "1"]);
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 24);
    let err = stderr(&o);
    assert!(err.contains("sizes=[2, 4, 8, 16, 32, 64, 128, 256]"), "{err}");
    assert!(err.contains("summary: with-scaling max deviation"));
}

#[test]
fn no_scaling_emits_unscaled_series_only() {
    let o = run(&["moments", "--batch", "2", "--channels", "2", "--sizes", "2,4", "--trials", "1", "--no-scaling"]);
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.contains(",none,") || r.contains(",without,")));
}

#[test]
fn summary_reports_with_scaling_deviation_within_tolerance() {
    let o = run(&["moments", "--batch", "16", "--channels", "64", "--sizes", "4,8,16", "--trials", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    let line = err.lines().find(|l| l.starts_with("summary:")).unwrap();
    let dev: f64 = line
        .split("with-scaling max deviation ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap();
    assert!(dev <= 0.05, "{line}");
}

#[test]
fn tolerance_failure_exits_three() {
    // two outputs per cell cannot estimate a moment to 5%
    let o = run(&["moments", "--batch", "1", "--channels", "2", "--sizes", "2", "--trials", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    for args in [vec!["moments", "--bogus"], vec![], vec!["moments", "--p", "half"], vec!["fly"]] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let o = run(&["patterns", "--kind", "grid", "--l", "8", "--s", "2", "--p", "0.4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported configuration"), "{}", stderr(&o));

    let o = run(&["moments", "--p", "1.5", "--sizes", "2"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["moments", "--sizes", "2", "--batch", "1", "--channels", "1", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["train", "--head", "sap", "--p", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn patterns_write_pgm_with_exact_kept_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "patterns", "--kind", "block", "--l", "8", "--s", "4", "--p", "0.5", "--count", "5",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(stats.trim(), "kept_fraction 0.5 0.5 0.5 0.5 0.5");
    for i in 0..5 {
        let text = std::fs::read_to_string(dir.path().join(format!("block_{i:03}.pgm"))).unwrap();
        let mask = KeepMask::from_pgm(&text).unwrap();
        assert_eq!(mask.count_kept(), 32);
    }
}

#[test]
fn uniform_full_block_pattern_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["patterns", "--kind", "uniform", "--l", "8", "--s", "8", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn final_accuracies(o: &Output) -> String {
    stderr(o)
        .lines()
        .find(|l| l.starts_with("final train_acc"))
        .unwrap_or_default()
        .to_string()
}

#[test]
fn train_is_deterministic_and_full_keep_sap_equals_gap() {
    let short = ["--steps", "300", "--eval-every", "100", "--seed", "1"];
    let gap = || {
        let mut a = vec!["train", "--head", "gap"];
        a.extend(short);
        run(&a)
    };
    let (a, b) = (gap(), gap());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut args = vec!["train", "--head", "sap", "--p", "1.0"];
    args.extend(short);
    let sap = run(&args);
    assert_eq!(sap.stdout, a.stdout);
    assert_eq!(final_accuracies(&sap), final_accuracies(&a));
    assert!(String::from_utf8_lossy(&a.stdout).starts_with(TRACE_HEADER));
}

#[test]
fn train_sap_half_reaches_accuracy_floor() {
    let o = run(&["train", "--head", "sap", "--p", "0.5", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = final_accuracies(&o);
    let acc: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(acc >= 0.85, "{line}");
}
