//! End-to-end runs of the `modstein` binary.

use std::path::Path;
use std::process::{Command, Output};

fn modstein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modstein")).args(args).output().expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_reports_symmetric_law_as_json() {
    let out = modstein(&["phi4", "eval", "--gamma", "2", "--c", "1/3", "--x", "-1", "0", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let f = |i: usize, k: &str| rows[i][k].as_f64().unwrap();
    assert!((f(0, "pdf") - f(2, "pdf")).abs() <= 1e-15);
    assert!((f(0, "cdf") - f(2, "tail")).abs() <= 1e-12);
    assert!((f(1, "cdf") - 0.5).abs() <= 1e-12);
}

#[test]
fn sample_writes_requested_draws() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("draws.csv");
    let out = modstein(&["phi4", "sample", "--gamma", "1", "--c", "1", "--n", "500", "--seed", "7", "--out", path_arg(&file)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&file).unwrap();
    let values: Vec<f64> = text.lines().filter_map(|l| l.trim().parse().ok()).collect();
    assert_eq!(values.len(), 500);
    assert!(values.iter().all(|v| v.is_finite()));
}

#[test]
fn iid_sum_writes_csv_with_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sum.csv");
    let json = dir.path().join("sum.json");
    let out = modstein(&["experiment", "iid-sum", "--n-list", "4,16,64", "--out", path_arg(&csv), "--json", path_arg(&json)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(modstein_core::experiments::CSV_HEADER));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(first[0], 4.0);
    assert!((first[2] - 0.1875).abs() <= 1e-14);
    assert_eq!(text.lines().count(), 4);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(report["failures"].as_array().unwrap().is_empty());
}

#[test]
fn iid_sum_accepts_a_custom_law_file() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("law.csv");
    let out_csv = dir.path().join("out.csv");
    // Unit variance, E X^4 = 2.
    let a = 2f64.sqrt();
    std::fs::write(&law, format!("atom,prob\n{},0.25\n0,0.5\n{},0.25\n", -a, a)).unwrap();
    let out = modstein(&["experiment", "iid-sum", "--dist", path_arg(&law), "--n-list", "4,8", "--out", path_arg(&out_csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&out_csv).unwrap().lines().count(), 3);
}

#[test]
fn asymmetric_law_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("law.csv");
    std::fs::write(&law, "atom,prob\n-1,0.5\n2,0.5\n").unwrap();
    let out = modstein(&["experiment", "iid-sum", "--dist", path_arg(&law), "--n-list", "4", "--out", path_arg(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("symmetric"));
}

#[test]
fn failing_inequality_family_exits_with_verification_code() {
    let out = modstein(&["verify", "appendix", "--gamma-list", "2", "--c-list", "1/3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("phi_sum"));
}

#[test]
fn holding_inequality_family_exits_cleanly() {
    let out = modstein(&["verify", "appendix", "--gamma-list", "2,5", "--c-list", "1/3,1", "--lemma", "tail_upper"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_exits_with_usage_code() {
    assert_eq!(modstein(&["verify", "appendix", "--lemma", "bogus"]).status.code(), Some(2));
    assert_eq!(modstein(&["phi4", "eval", "--gamma=-1", "--c", "1", "--x", "0"]).status.code(), Some(2));
    assert_eq!(modstein(&["phi4", "eval", "--gamma", "1", "--c", "1/0", "--x", "0"]).status.code(), Some(2));
}

#[test]
fn edgeworth_coefficients_start_near_one_and_alternate_parity() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.csv");
    let out = modstein(&["edgeworth", "--gamma", "2", "--c", "1/3", "--k", "6", "--out", path_arg(&file)]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&file).unwrap();
    let a: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(a.len(), 7);
    assert!(a[0] > 0.9 && a[0] <= 1.0);
    assert!(a.iter().skip(1).step_by(2).all(|v| v.abs() <= 1e-14));
}

#[test]
fn poisson_duality_gap_is_at_roundoff() {
    let out = modstein(&["duality", "poisson"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_gap"].as_f64().unwrap() <= 1e-12, "{v}");
}

#[test]
fn signed_measure_grid_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.csv");
    let out = modstein(&["signed-measure", "--gamma", "2", "--c", "1/3", "--grid", "-3:3:13", "--out", path_arg(&file)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&file).unwrap().lines().count(), 14);
}
