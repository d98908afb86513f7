//! End-to-end CLI tests: exit codes, determinism, and output artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netident"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn netident")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Simulate the benchmark network into `dir`, returning the dataset path.
fn simulate_into(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let out = run(&[
        "simulate",
        "--network",
        &path_str(&config("benchmark_4node.json")),
        "--excitation",
        &path_str(&config("excitation_white.json")),
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        &path_str(dir),
    ]);
    assert_code(&out, 0);
    dir.join("data.csv")
}

#[test]
fn simulate_is_deterministic_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    simulate_into(&a, 200, 5);
    simulate_into(&b, 200, 5);
    let bytes_a = std::fs::read(a.join("data.csv")).unwrap();
    let bytes_b = std::fs::read(b.join("data.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert!(a.join("data.meta.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn simulate_rejects_zero_length() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--network",
        &path_str(&config("benchmark_4node.json")),
        "--excitation",
        &path_str(&config("excitation_white.json")),
        "--n",
        "0",
        "--seed",
        "1",
        "--out-dir",
        &path_str(tmp.path()),
    ]);
    assert_code(&out, 2);
}

#[test]
fn simulate_divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let network = tmp.path().join("unstable.json");
    std::fs::write(
        &network,
        r#"{
            "nodes": 2,
            "modules": [
                {"from": 2, "to": 1, "num": [0, 2], "den": [1]},
                {"from": 1, "to": 2, "num": [0, 2], "den": [1]}
            ],
            "noise_cov": {"diag": [0, 0]},
            "references": [1]
        }"#,
    )
    .unwrap();
    let excitation = tmp.path().join("excite.json");
    std::fs::write(
        &excitation,
        r#"{"excitations": {"1": {"kind": "white", "variance": 1.0}}}"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        "--network",
        &path_str(&network),
        "--excitation",
        &path_str(&excitation),
        "--n",
        "500",
        "--seed",
        "1",
        "--out-dir",
        &path_str(&tmp.path().join("out")),
    ]);
    assert_code(&out, 3);
}

#[test]
fn identify_two_stage_writes_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = simulate_into(&tmp.path().join("sim"), 500, 3);
    let out_dir = tmp.path().join("ident");
    let out = run(&[
        "identify",
        "--dataset",
        &path_str(&dataset),
        "--network",
        &path_str(&config("benchmark_4node.json")),
        "--output",
        "3",
        "--input",
        "1",
        "--predictors",
        "1,2,4",
        "--method",
        "two-stage",
        "--out-dir",
        &path_str(&out_dir),
    ]);
    assert_code(&out, 0);
    let estimate: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("estimate.json")).unwrap())
            .unwrap();
    assert_eq!(estimate["method"], "two_stage");
    assert_eq!(estimate["theta"].as_array().unwrap().len(), 4);
    assert!(estimate["validity"]["membership"].as_bool().unwrap());
    assert!(out_dir.join("target_frf.csv").exists());
}

#[test]
fn identify_direct_shares_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = simulate_into(&tmp.path().join("sim"), 500, 3);
    let out_dir = tmp.path().join("ident");
    let out = run(&[
        "identify",
        "--dataset",
        &path_str(&dataset),
        "--network",
        &path_str(&config("benchmark_4node.json")),
        "--output",
        "3",
        "--input",
        "1",
        "--predictors",
        "1,2,4",
        "--method",
        "direct",
        "--orders-file",
        &path_str(&config("direct_orders.json")),
        "--restarts",
        "1",
        "--out-dir",
        &path_str(&out_dir),
    ]);
    assert_code(&out, 0);
    let estimate: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("estimate.json")).unwrap())
            .unwrap();
    assert_eq!(estimate["method"], "direct_pe");
    // Shared envelope keys across both methods.
    for key in ["theta", "orders", "cost", "converged", "validity", "stable"] {
        assert!(!estimate[key].is_null(), "missing key {key}");
    }
    assert_eq!(estimate["theta"].as_array().unwrap().len(), 4);
}

#[test]
fn identify_rejects_predictor_set_containing_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = simulate_into(&tmp.path().join("sim"), 200, 3);
    let out = run(&[
        "identify",
        "--dataset",
        &path_str(&dataset),
        "--network",
        &path_str(&config("benchmark_4node.json")),
        "--output",
        "3",
        "--input",
        "1",
        "--predictors",
        "1,2,3,4",
        "--out-dir",
        &path_str(&tmp.path().join("ident")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn montecarlo_smoke_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "montecarlo",
        "--config",
        &path_str(&config("benchmark_mc_smoke.json")),
        "--out-dir",
        &path_str(tmp.path()),
    ]);
    assert_code(&out, 0);
    for file in ["mc_report.json", "fits.csv", "params.csv", "frf_stats.csv"] {
        assert!(tmp.path().join(file).exists(), "missing {file}");
    }
    let fits = std::fs::read_to_string(tmp.path().join("fits.csv")).unwrap();
    // Header plus 2 replicates x 2 methods.
    assert_eq!(fits.lines().count(), 5, "{fits}");
}

#[test]
fn montecarlo_rejects_malformed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = run(&[
        "montecarlo",
        "--config",
        &path_str(&cfg),
        "--out-dir",
        &path_str(&tmp.path().join("out")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn check_predictors_exit_codes() {
    let valid = run(&[
        "check-predictors",
        "--network",
        &path_str(&config("benchmark_4node.json")),
        "--output",
        "3",
        "--input",
        "1",
        "--predictors",
        "1,2,4",
    ]);
    assert_code(&valid, 0);
    let invalid = run(&[
        "check-predictors",
        "--network",
        &path_str(&config("benchmark_4node.json")),
        "--output",
        "3",
        "--input",
        "1",
        "--predictors",
        "1",
    ]);
    assert_code(&invalid, 2);
}

#[test]
fn frf_dumps_analytic_responses() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "frf",
        "--network",
        &path_str(&config("benchmark_4node.json")),
        "--n",
        "128",
        "--out-dir",
        &path_str(tmp.path()),
    ]);
    assert_code(&out, 0);
    let modules = std::fs::read_to_string(tmp.path().join("modules_frf.csv")).unwrap();
    // Header plus 7 modules x 65 lines.
    assert_eq!(modules.lines().count(), 1 + 7 * 65);
    assert!(tmp.path().join("closed_loop_frm.csv").exists());
}
