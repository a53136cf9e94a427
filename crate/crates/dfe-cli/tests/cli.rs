//! End-to-end checks of the `dfe` binary: exit codes, output files,
//! determinism, and the verify suite.

use std::path::Path;
use std::process::Command;

fn dfe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dfe"))
}

#[test]
fn run_writes_deterministic_results() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let output = dfe()
            .args([
                "run",
                "--state",
                "ghz",
                "--n",
                "2",
                "--p",
                "0.1",
                "--samples",
                "10",
                "--ell",
                "200",
                "--seed",
                "4",
            ])
            .arg("--out")
            .arg(out)
            .env("DFE_THREADS", "2")
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        let stdout = String::from_utf8_lossy(&output.stdout);
        assert!(stdout.contains("original"));
        assert!(stdout.contains("vs original: variance ratio"));
    }
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap()
    );
    assert!(Path::new(&out_a.with_extension("summary.json")).exists());

    let text = std::fs::read_to_string(&out_a).unwrap();
    assert!(text.starts_with(
        "sample_id,mode,n,state,p,estimate,true_fidelity,residual,total_copies,num_groups,seed"
    ));
    assert_eq!(text.lines().count(), 1 + 30);
}

#[test]
fn groups_prints_norm_table() {
    let output = dfe()
        .args(["groups", "--state", "ghz", "--n", "3", "--mode", "fc"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("groups=2"));
    assert!(stdout.contains("norm_sq"));
    assert!(stdout.contains("III"));
}

#[test]
fn verify_suite_exits_zero() {
    let output = dfe().args(["verify", "--seed", "11"]).output().unwrap();
    assert!(
        output.status.success(),
        "stdout: {}",
        String::from_utf8_lossy(&output.stdout)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("ok ")).count() >= 8);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn usage_errors_exit_with_code_two() {
    let output = dfe().args(["run", "--state", "bogus"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = dfe().args(["frobnicate"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = dfe()
        .args(["run"])
        .env("DFE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_code_one() {
    let output = dfe()
        .args(["run", "--n", "13", "--samples", "1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}
