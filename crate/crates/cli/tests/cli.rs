//! End-to-end runs of the `shjb` binary on the bundled problem files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shjb")).args(args).output().expect("binary runs")
}

fn run_cmd(cmd: &str, input: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn solve_sare_converges_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("lqgb");
    let out = run_cmd("solve-sare", &input, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sol = json(&dir.path().join("solution.json"));
    assert_eq!(sol["status"], "converged");
    let p = matrix(&sol["P"]);
    assert!((p[0][1] - p[1][0]).abs() < 1e-14);
    assert!(p[0][0] > 0.0 && p[0][0] * p[1][1] > p[0][1] * p[0][1]);

    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(history.starts_with("tau,p_norm,delta_norm,residual\n"));

    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "solve-sare");
    assert_eq!(manifest["exit_code"], 0);
    let digest = manifest["input_sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["solution.json", "history.csv"]);
}

#[test]
fn noiseless_double_integrator_has_closed_form() {
    // F = [0 1; 0 0], G = e2, Q = I, R = 1: P = [√3 1; 1 √3], K = -[1 √3].
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("solve-sare", &fixture("lqr_noiseless"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let sol = json(&dir.path().join("solution.json"));
    let s3 = 3f64.sqrt();
    assert!(max_diff(&matrix(&sol["P"]), &[vec![s3, 1.0], vec![1.0, s3]]) < 1e-9);
    assert!(max_diff(&matrix(&sol["K"]), &[vec![-1.0, -s3]]) < 1e-9);
}

#[test]
fn strong_noise_diverges_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("solve-sare", &fixture("lqgb_noise10x"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&dir.path().join("solution.json"))["status"], "diverged");
    assert_eq!(json(&dir.path().join("manifest.json"))["exit_code"], 2);
}

#[test]
fn missing_input_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("solve-sare", &dir.path().join("nope.json"), &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn pendulum_series_report_and_methods_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("direct"), dir.path().join("iterative"));
    let input = fixture("pendulum");
    let out = run_cmd("solve-hjb", &input, &a, &["--degree", "6"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(run_cmd("solve-hjb", &input, &b, &["--degree", "6", "--method", "iterative"]).status.code(), Some(0));

    let report = std::fs::read_to_string(a.join("report.txt")).unwrap();
    assert!(report.contains("kappa_1(x):") && report.contains("certificates:"));
    let residual = std::fs::read_to_string(a.join("residual.csv")).unwrap();
    assert!(residual.contains("# leading residual degree = 8"));

    let (da, db) = (json(&a.join("solution.json")), json(&b.join("solution.json")));
    assert_eq!(da["pi"].as_array().unwrap().len(), db["pi"].as_array().unwrap().len());
    for (ta, tb) in da["pi"].as_array().unwrap().iter().zip(db["pi"].as_array().unwrap()) {
        for (ra, rb) in ta["records"].as_array().unwrap().iter().zip(tb["records"].as_array().unwrap()) {
            assert_eq!(ra["exponents"], rb["exponents"]);
            let (x, y) = (ra["coeff"].as_f64().unwrap(), rb["coeff"].as_f64().unwrap());
            assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
    let certs = json(&a.join("certificates.json"));
    assert_eq!(certs.as_array().unwrap().len(), 4);
}

#[test]
fn degree_above_cap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("solve-hjb", &fixture("pendulum"), dir.path(), &["--degree", "9"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn linear_problem_has_no_corrections() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("solve-hjb", &fixture("lqgb"), dir.path(), &["--degree", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sol = json(&dir.path().join("solution.json"));
    for term in sol["pi"].as_array().unwrap().iter().chain(sol["kappa"].as_array().unwrap()) {
        if term["degree"].as_u64().unwrap() > 2 {
            for r in term["records"].as_array().unwrap() {
                assert!(r["coeff"].as_f64().unwrap().abs() < 1e-12);
            }
        }
    }
}

/// `dx = (-x/2 + x² + u)dt + x dw`, `q = 1/4`: the cubic operator `3(a + σ²)` vanishes.
const SINGULAR: &str = r#"{
  "schema_version": 1,
  "n": 1, "m": 1, "r": 1,
  "alpha": 0.0,
  "F": [[-0.5]], "G": [[1.0]], "Q": [[0.25]], "R": [[1.0]],
  "C": [[[1.0]]], "D": [[[0.0]]],
  "terms": [
    {"block": "f", "component": 1, "degree": 2, "records": [{"exponents": [2, 0], "coeff": 1.0}]}
  ],
  "degree_cap": 4
}"#;

#[test]
fn singular_operator_is_exit_3_with_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("singular.json");
    std::fs::write(&input, SINGULAR).unwrap();
    let out = run_cmd("solve-hjb", &input, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = json(&dir.path().join("o/certificate.json"));
    assert!(cert.to_string().contains("margin"));
}

#[test]
fn long_horizon_sdre_reaches_sare() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("sare"), dir.path().join("sdre"));
    assert_eq!(run_cmd("solve-sare", &fixture("lqgb"), &a, &["--tol", "1e-12"]).status.code(), Some(0));
    let out = run_cmd("solve-sdre", &fixture("sdre_lqgb"), &b, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let p_sare = matrix(&json(&a.join("solution.json"))["P"]);
    let summary = json(&b.join("summary.json"));
    assert!(max_diff(&matrix(&summary["P"]), &p_sare) < 1e-3);
    let csv = std::fs::read_to_string(b.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,p11,p12,p21,p22,k11,k12\n"));
    assert_eq!(csv.lines().count(), 3002);
}

#[test]
fn zero_cost_sdre_stays_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("solve-sdre", &fixture("zero_cost"), dir.path(), &["--steps", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0), "{line}");
    }
}

#[test]
fn sdre_without_horizon_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("solve-sdre", &fixture("lqgb"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
}

fn simulate(dir: &Path, name: &str, input: &Path, solution: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--solution", solution.to_str().unwrap()];
    args.extend_from_slice(extra);
    run_cmd("simulate", input, &dir.join(name), &args)
}

#[test]
fn simulate_is_deterministic_and_zero_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("pendulum");
    let sol_dir = dir.path().join("hjb");
    assert_eq!(run_cmd("solve-hjb", &input, &sol_dir, &[]).status.code(), Some(0));
    let sol = sol_dir.join("solution.json");
    let common = ["--horizon", "2", "--dt", "1e-2", "--paths", "64", "--degree", "1,5"];

    let mut a = vec!["--x0", "0.5,-0.1"];
    a.extend_from_slice(&common);
    assert_eq!(simulate(dir.path(), "a", &input, &sol, &a).status.code(), Some(0));
    assert_eq!(simulate(dir.path(), "b", &input, &sol, &a).status.code(), Some(0));
    let ra = std::fs::read_to_string(dir.path().join("a/results.csv")).unwrap();
    assert_eq!(ra, std::fs::read_to_string(dir.path().join("b/results.csv")).unwrap());
    assert!(ra.starts_with("rank,feedback,mean,std_error,paths,diverged\n"));
    assert_eq!(ra.lines().count(), 3);

    let mut z = vec!["--x0", "0,0", "--per-path"];
    z.extend_from_slice(&common);
    assert_eq!(simulate(dir.path(), "z", &input, &sol, &z).status.code(), Some(0));
    let rz = std::fs::read_to_string(dir.path().join("z/results.csv")).unwrap();
    for line in rz.lines().skip(1) {
        assert_eq!(line.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.0);
    }
    assert!(dir.path().join("z/paths.csv").exists());
}

#[test]
fn simulate_rejects_wrong_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("lqgb");
    let sol_dir = dir.path().join("sare");
    assert_eq!(run_cmd("solve-sare", &input, &sol_dir, &[]).status.code(), Some(0));
    let out = simulate(dir.path(), "m", &input, &sol_dir.join("solution.json"), &["--x0", "1,2,3", "--paths", "4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn spectrum_lists_every_degree() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("spectrum", &fixture("lqgb"), dir.path(), &["--degree", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("degree,operator,re,im\n"));
    for d in 2..=3 {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{d},"))));
    }
    assert_eq!(json(&dir.path().join("certificates.json")).as_array().unwrap().len(), 2);
}
