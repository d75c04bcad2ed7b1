use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn clarke(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clarke")).args(args).env_remove("CLARKE_WORKERS").output().expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = clarke(args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn audits_pass(v: &Value) -> bool {
    v["invariant_audits"].as_array().is_some_and(|a| !a.is_empty() && a.iter().all(|x| x["passed"] == true))
}

#[test]
fn ellipsoid_capacity_is_pi_r1_squared() {
    let v = report(&["capacity", "--gauge", "ellipsoid", "--radii", "1,2"]);
    let cap = v["results"]["capacity"].as_f64().unwrap();
    assert!((cap - PI).abs() < 1e-6, "capacity {cap}");
    assert!(audits_pass(&v));
    assert_eq!(v["config"]["problem"]["n"], 2);
    assert!(v["versions"]["clarke_core"].is_string());
}

#[test]
fn ball_index_flags_agree() {
    let v = report(&["index", "--gauge", "ball", "--n", "1", "--profile", "quadratic", "--eta", "4"]);
    let orbits = v["results"]["orbits"].as_array().unwrap();
    assert_eq!(orbits.len(), 1);
    let o = &orbits[0];
    assert_eq!(o["relative_index"], 3);
    assert_eq!(o["cz_index"], 3);
    assert_eq!(o["dual_index"], 2);
    assert_eq!(o["agreement"], true);
    assert!(audits_pass(&v));
}

#[test]
fn spectrum_requires_window() {
    let out = clarke(&["spectrum", "--gauge", "ball", "--n", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn spectrum_matches_closed_form() {
    let v = report(&["spectrum", "--gauge", "ellipsoid", "--radii", "1,2", "--t-max", "13"]);
    let actions: Vec<f64> = v["results"]["entries"].as_array().unwrap().iter().map(|e| e["action"].as_f64().unwrap()).collect();
    let want = [PI, 2.0 * PI, 3.0 * PI, 4.0 * PI];
    assert_eq!(actions.len(), want.len(), "{actions:?}");
    for (a, b) in actions.iter().zip(want) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    assert!(audits_pass(&v));
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "bogus = 1\n").unwrap();
    assert_eq!(clarke(&["capacity", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(clarke(&["capacity", "--gauge", "ellipsoid", "--radii", "1,-2"]).status.code(), Some(1));
    assert_eq!(clarke(&["orbits", "--gauge", "ball", "--n", "1", "--m", "8", "--q", "20"]).status.code(), Some(1));
    assert_eq!(clarke(&["orbits", "--gauge", "ball", "--n", "1", "--head-cutoff", "0", "--eta", "7"]).status.code(), Some(1));
    let out =
        Command::new(env!("CARGO_BIN_EXE_clarke")).args(["verify", "--n", "1"]).env("CLARKE_WORKERS", "many").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical() {
    let args = ["orbits", "--gauge", "ellipsoid", "--radii", "1,2", "--eta", "7"];
    let a = clarke(&args);
    let b = clarke(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn wall_clock_adds_timings() {
    let v = report(&["orbits", "--gauge", "ball", "--n", "1", "--wall-clock"]);
    assert!(v["timings"]["search"].as_f64().is_some());
    let v = report(&["orbits", "--gauge", "ball", "--n", "1"]);
    assert!(v["timings"].as_object().unwrap().is_empty());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[problem]\ngauge = \"ellipsoid\"\nn = 2\nradii = [1.0, 3.0]\n\n[numerics]\nseed = 3\n\n[outputs]\nwall_clock = false\n",
    )
    .unwrap();
    let v = report(&["capacity", "--config", cfg.to_str().unwrap()]);
    assert!((v["results"]["capacity"].as_f64().unwrap() - PI).abs() < 1e-6);
    let v = report(&["capacity", "--config", cfg.to_str().unwrap(), "--radii", "2,3"]);
    assert!((v["results"]["capacity"].as_f64().unwrap() - 4.0 * PI).abs() < 1e-5);
    assert_eq!(v["config"]["numerics"]["seed"], 3);
}

fn csv_header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn csv_and_plot_exports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let rep = dir.path().join("report.json");
    let status = clarke(&[
        "orbits",
        "--gauge",
        "ball",
        "--n",
        "1",
        "--csv-dir",
        out.to_str().unwrap(),
        "--report",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0));
    assert!(status.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(v["config"]["command"], "orbits");
    assert!(csv_header(&out.join("orbits.csv")).starts_with("orbit,action,morse_index"));
    assert!(!out.join("orbit_0.csv").exists());
    clarke(&["orbits", "--gauge", "ball", "--n", "1", "--csv-dir", out.to_str().unwrap(), "--plot-data", "--report", rep.to_str().unwrap()]);
    assert_eq!(csv_header(&out.join("orbit_0.csv")), "t,q1,p1");
}

#[test]
fn verify_suites_pass() {
    for suite in ["conjugate", "duality", "derivatives", "reduction", "indices"] {
        let v = report(&["verify", "--gauge", "ellipsoid", "--radii", "1,2", "--suite", suite, "--trials", "40"]);
        assert_eq!(v["results"]["passed"], true, "{suite}: {}", v["invariant_audits"]);
        assert!(v["results"][suite].is_object());
    }
}

#[test]
fn double_well_complex() {
    let v = report(&["complex", "--profile", "double-well", "--n", "1"]);
    assert_eq!(v["results"]["betti"], serde_json::json!([1, 0]));
    assert!(audits_pass(&v));
}

#[test]
fn worker_pool_gives_same_report() {
    let args = ["orbits", "--gauge", "ellipsoid", "--radii", "1,2", "--eta", "7"];
    let serial = clarke(&[&args[..], &["--workers", "1"]].concat());
    let pooled = clarke(&[&args[..], &["--workers", "2"]].concat());
    let strip = |o: &Output| {
        let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["config"]["numerics"]["workers"] = Value::Null;
        v
    };
    assert_eq!(strip(&serial), strip(&pooled));
}
