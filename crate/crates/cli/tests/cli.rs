use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mimicry(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimicry")).args(args).env_remove("MIMICRY_THREADS").output().expect("binary runs")
}

fn config(name: &str) -> String {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    path.to_str().unwrap().to_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn calibrate_poisson_rate() {
    let out = mimicry(&["calibrate", "--family", "poisson", "--kappa", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("rate = 1.270747\n"), "{}", stdout(&out));
}

#[test]
fn calibrate_infeasible_exits_2() {
    let out =
        mimicry(&["calibrate", "--family", "compound-poisson-exponential", "--kappa", "0.5", "--free", "theta", "--rate", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn simulate_writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = mimicry(&["simulate", "--config", &config("brownian_poisson"), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("ensemble.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("path_id,t_1,t_2,t_3,t_4,t_5"));
    assert_eq!(lines.count(), 10_000);
    assert!(dir.path().join("ensemble.json").exists());
    assert!(dir.path().join("paths.svg").exists());
}

#[test]
fn miscalibrated_verify_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = mimicry(&[
        "verify",
        "--config",
        &config("miscalibrated"),
        "--tests",
        "marginal,martingale,selfsim",
        "--out-dir",
        out_dir,
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let records: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 3);
    let martingale = records.iter().find(|r| r["test_name"] == "martingale").unwrap();
    assert_eq!(martingale["verdict"], "reject");

    let summary = mimicry(&["report", "--out-dir", out_dir]);
    assert_eq!(summary.status.code(), Some(1));
    assert!(stdout(&summary).contains("2 passed, 1 rejected"), "{}", stdout(&summary));
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn calibrated_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mimicry(&[
        "verify",
        "--config",
        &config("brownian_poisson"),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(!dir.path().join("ensemble.csv").exists());
}

#[test]
fn unknown_key_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\nn_paths = 10\nbogus = 3\n").unwrap();
    let out = mimicry(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("bogus"), "{err}");
}

#[test]
fn unconfigured_test_name_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mimicry(&[
        "verify",
        "--config",
        &config("qv_signflip"),
        "--tests",
        "martingale",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generator_check_writes_probe_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = mimicry(&["generator-check", "--config", &config("generator_signflip"), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = fs::read_to_string(dir.path().join("generator.json")).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["variant", "spec", "f", "t", "x", "closed_form", "composed", "fd_estimate", "fd_se"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(first["closed_form"], 9.0);
}
