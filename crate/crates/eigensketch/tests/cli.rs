//! Drives the compiled binary end to end: artifact layout, byte-level
//! reproducibility of reruns, and the exit code contract.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigensketch"))
}

const SMALL: &[&str] = &[
    "--set", "n=32", "--set", "rank=2", "--set", "sparsity=3", "--set", "k=7", "--set", "q=7",
    "--set", "d=1", "--set", "dense_limit=600",
];

fn run(args: &[&str], extra: &[&str]) -> Output {
    bin().args(SMALL).args(args).args(extra).output().expect("spawn")
}

fn run_ok(args: &[&str], extra: &[&str]) -> String {
    let out = run(args, extra);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn pipeline_artifacts_and_reruns_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let d = dir.to_str().unwrap();

    let stdout = run_ok(&["--set", "emit_entries=true", "--out-dir", d, "generate"], &[]);
    assert!(stdout.contains("planted rank 2"), "generate summary: {stdout:?}");
    assert!(dir.join("truth/manifest.txt").is_file());
    let entries = dir.join("entries.csv");
    assert!(entries.is_file());

    run_ok(&["--out-dir", d, "sketch", "--input", entries.to_str().unwrap()], &[]);
    let sketch = dir.join("sketch.bin");
    assert!(sketch.is_file());

    let stdout = run_ok(&["--out-dir", d, "recover", "--sketch", sketch.to_str().unwrap()], &[]);
    assert!(stdout.contains("eigenvalue"), "recover summary: {stdout:?}");
    for name in ["eigs.csv", "ensemble.txt", "rec_001.csv", "rec_002.csv"] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }

    run_ok(
        &["--out-dir", d, "evaluate", "--truth", dir.join("truth").to_str().unwrap(), "--run", d],
        &[],
    );
    let trials = std::fs::read_to_string(dir.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 3, "header plus one row per factor: {trials:?}");
    assert!(trials.starts_with("trial,j,pre_err,post_err,beta,sign"));

    // The same stream sketched and recovered again must reproduce both
    // artifacts byte for byte.
    let dir2 = tmp.path().join("rerun");
    let d2 = dir2.to_str().unwrap();
    run_ok(&["--out-dir", d2, "sketch", "--input", entries.to_str().unwrap()], &[]);
    run_ok(
        &["--out-dir", d2, "recover", "--sketch", dir2.join("sketch.bin").to_str().unwrap()],
        &[],
    );
    let same_sketch = std::fs::read(&sketch).unwrap() == std::fs::read(dir2.join("sketch.bin")).unwrap();
    let same_eigs =
        std::fs::read(dir.join("eigs.csv")).unwrap() == std::fs::read(dir2.join("eigs.csv")).unwrap();
    assert!(same_sketch, "sketch.bin differs between identical runs");
    assert!(same_eigs, "eigs.csv differs between identical runs");
}

#[test]
fn all_subcommand_writes_experiment_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let stdout = run_ok(&["--set", "trials=2", "--out-dir", d, "all"], &[]);
    assert!(stdout.contains("trials"), "all summary: {stdout:?}");
    for name in ["config.txt", "trials.csv", "aggregate.csv"] {
        assert!(Path::new(d).join(name).is_file(), "missing {name}");
    }
    let agg = std::fs::read_to_string(Path::new(d).join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("x,j,mean_pre_err,mean_post_err,mean_beta"));
    // x column carries the planted density.
    assert!(agg.lines().nth(1).unwrap().starts_with("3,1,"), "{agg:?}");
}

#[test]
fn exit_codes_distinguish_config_io_and_numeric_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();

    let out = run(&["--set", "no_such_key=1", "--out-dir", d, "generate"], &[]);
    assert_eq!(out.status.code(), Some(2), "unknown config key");
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let out = run(&["--out-dir", d, "sketch", "--input", "/no/such/file.csv"], &[]);
    assert_eq!(out.status.code(), Some(3), "missing input file");

    // An entry stream that is not Hermitian fails the finalize defect check.
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "1,2,1.0\n").unwrap();
    let out = run(&["--out-dir", d, "sketch", "--input", bad.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(4), "asymmetric stream");
    assert!(String::from_utf8_lossy(&out.stderr).contains("asymmetry"));
}
