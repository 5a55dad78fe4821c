use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn harness(dir: &Path, args: &[&str], config: &str) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_harness"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--set")
        .arg(format!("output.directory={}", dir.join("out").display()))
        .output()
        .unwrap()
}

const SINGLE_SITE: &str = r#"{
  "model": {"dim": 1, "alpha": 0.5},
  "geometry": {"lower": [0], "upper": [0]},
  "fields": {"d": {"kind": "constant", "value": 2.0}, "y": {"kind": "constant", "value": 0.0}}
}"#;

const CHAIN: &str = r#"{
  "model": {"dim": 1, "alpha": 0.5, "sigma2": 0.5},
  "geometry": {"lower": [0], "upper": [9], "shell": 1},
  "fields": {
    "d": {"kind": "ramp", "slope": [0.5]},
    "y": {"kind": "random", "lo": -1, "hi": 1, "seed": 4},
    "z_init": {"kind": "delta", "site": [3], "value": 5.0}
  },
  "run": {"window": [0, 8], "seed": 11}
}"#;

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ground_state_single_site_is_one() {
    let dir = TempDir::new().unwrap();
    let out = harness(dir.path(), &["ground-state"], SINGLE_SITE);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("out/ground_state.json"));
    assert!((doc["m"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(doc["site_order"], "lexicographic");
    let csv = fs::read_to_string(dir.path().join("out/ground_state.csv")).unwrap();
    assert!(csv.starts_with("x0,m,m_lambda,r_lambda\n"));
    let manifest = read_json(&dir.path().join("out/manifest.json"));
    assert_eq!(manifest["command"], "ground-state");
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn dual_check_agrees_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = harness(dir.path(), &["dual-check"], CHAIN);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/dual_check.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "abs_diff").unwrap();
    let mut rows = 0;
    for line in lines {
        let diff: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!(diff <= 1e-9);
        rows += 1;
    }
    assert_eq!(rows, 10);
    assert!(!csv.contains('\r'));
}

#[test]
fn simulate_without_seed_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = CHAIN.replace(r#", "seed": 11"#, "");
    let out = harness(dir.path(), &["simulate"], &config);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ConfigInvalid"));
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(harness(a.path(), &["simulate"], CHAIN).status.code(), Some(0));
    assert_eq!(harness(b.path(), &["simulate"], CHAIN).status.code(), Some(0));
    for name in ["trajectory.csv", "epochs.json", "final_state.json"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let run = |workers: &str| {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("config.json");
        fs::write(&path, CHAIN).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_harness"))
            .args(["kernel", "--config"])
            .arg(&path)
            .args(["--set", "run.n_walks=20000", "--set"])
            .arg(format!("output.directory={}", dir.path().join("out").display()))
            .env("HARNESS_WORKERS", workers)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(dir.path().join("out/kernel_row.csv")).unwrap()
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn overrides_reach_the_run() {
    let dir = TempDir::new().unwrap();
    let out = harness(dir.path(), &["simulate", "--set", "run.window.1=2", "--set", "run.snapshots=4"], CHAIN);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let last_time: f64 = csv.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(last_time, 2.0);
    assert_eq!(csv.lines().count(), 1 + 5 * 10);
}

#[test]
fn gibbs_verify_passes_and_reports() {
    let dir = TempDir::new().unwrap();
    let out = harness(dir.path(), &["gibbs-verify", "--set", "run.n_samples=5000"], CHAIN);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let reports = fs::read_to_string(dir.path().join("out/reports.jsonl")).unwrap();
    let names: Vec<String> = reports
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["name"].as_str().unwrap().to_string())
        .collect();
    assert!(names.contains(&"stationary_law".to_string()));
    assert!(names.contains(&"dlr_conditionals".to_string()));
    assert_eq!(names.len(), 6);
    let g = read_json(&dir.path().join("out/gaussian.json"));
    assert_eq!(g["covariance"].as_array().unwrap().len(), 100);
}

#[test]
fn full_suite_passes() {
    let dir = TempDir::new().unwrap();
    let out = harness(
        dir.path(),
        &["full-suite", "--set", "run.n_samples=2000", "--set", "run.n_seeds=500"],
        CHAIN,
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    for name in ["duality", "ergodic_forgetting", "survival_mass", "thermo_limit", "variance_bound"] {
        assert!(stdout.contains(name), "{name} missing from summary");
    }
}

#[test]
fn failing_check_exits_one() {
    let dir = TempDir::new().unwrap();
    // almost no burn-in from the zero state and strongly correlated samples
    let out = harness(
        dir.path(),
        &["gibbs-verify", "--set", "run.thin=0.01", "--set", "run.burn_in=0.01", "--set", "run.n_samples=20000"],
        CHAIN,
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CheckFailed"));
}

#[test]
fn mismatched_command_and_bad_kernel_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let with_command = CHAIN.replacen('{', r#"{"command": "kernel","#, 1);
    assert_eq!(harness(dir.path(), &["simulate"], &with_command).status.code(), Some(2));
    let asym = CHAIN.replace(
        r#""alpha": 0.5,"#,
        r#""alpha": 0.5, "kernel": {"dim": 1, "range": 2, "offsets": {"1": 0.7, "-1": 0.3}},"#,
    );
    let out = harness(dir.path(), &["ground-state"], &asym);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lattice"));
}
