//! CLI behavior: exit codes, flag handling and the self test.

use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segloc"))
        .args(args)
        .output()
        .expect("spawn segloc")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("segloc_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn no_command_is_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage"));
}

#[test]
fn unknown_command_and_flag_are_usage_errors() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--bogus", "1"]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--seed"]).status.code(), Some(1));
}

#[test]
fn train_without_data_prints_usage_and_exits_1() {
    let out = run(&["train"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--data"), "stderr: {err}");
    assert!(err.contains("usage"), "usage text missing: {err}");
}

#[test]
fn missing_data_directory_is_a_data_error() {
    let out = run(&[
        "describe",
        "--data",
        "/nonexistent/archive",
        "--net",
        "/nonexistent/net.bin",
        "--out",
        tmp("desc").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_policy_is_usage_error() {
    let data = tmp("pol_data");
    let out_dir = tmp("pol_out");
    let synth = run(&[
        "synth",
        "--seed",
        "2",
        "--out",
        data.to_str().unwrap(),
        "--scan-count",
        "4",
        "--n-objects",
        "4",
        "--width",
        "64",
    ]);
    assert!(synth.status.success());
    let out = run(&[
        "localize",
        "--data",
        data.join("seq_001").to_str().unwrap(),
        "--db",
        data.join("seq_000").to_str().unwrap(),
        "--net",
        "/nonexistent.bin",
        "--policy",
        "7nn",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_twice_produces_identical_trees() {
    let a = tmp("synth_a");
    let b = tmp("synth_b");
    for dir in [&a, &b] {
        let out = run(&[
            "synth",
            "--seed",
            "5",
            "--out",
            dir.to_str().unwrap(),
            "--scan-count",
            "5",
            "--n-objects",
            "6",
            "--width",
            "64",
        ]);
        assert!(out.status.success());
    }
    for rel in [
        "manifest.txt",
        "world.csv",
        "seq_000/scan_000000.csv",
        "seq_000/poses.csv",
        "seq_001/labels_000004.csv",
    ] {
        let fa = std::fs::read(a.join(rel)).unwrap();
        let fb = std::fs::read(b.join(rel)).unwrap();
        assert_eq!(fa, fb, "{rel} differs");
    }
}

#[test]
fn selftest_exits_zero_on_fresh_checkout() {
    let out = run(&["selftest"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("projection oracle"));
    assert!(stdout.contains("gradient check"));
    assert!(stdout.contains("knn linear-scan oracle"));
}

#[test]
fn config_file_applies_and_flags_override() {
    let dir = tmp("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# test config\nscan_count=3\nn_objects=4\nwidth=64\nseed=8\n").unwrap();
    let out_a = dir.join("a");
    let r = run(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    // 3 scans from the config file.
    assert!(out_a.join("seq_000/scan_000002.csv").exists());
    assert!(!out_a.join("seq_000/scan_000003.csv").exists());
    // Flag overrides the file.
    let out_b = dir.join("b");
    let r = run(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--scan-count",
        "2",
    ]);
    assert!(r.status.success());
    assert!(out_b.join("seq_000/scan_000001.csv").exists());
    assert!(!out_b.join("seq_000/scan_000002.csv").exists());
}
