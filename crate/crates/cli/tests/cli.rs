use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn mechd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mechd"))
        .args(args)
        .env_remove("MECHD_GRID_N")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn solve_to(dir: &TempDir, cfg: &str, extra: &[&str]) -> (Output, PathBuf, PathBuf) {
    let csv = dir.path().join("mech.csv");
    let diag = dir.path().join("diag.json");
    let cfg = config(cfg);
    let mut args = vec!["solve", "--config", s(&cfg), "--out", s(&csv), "--diag", s(&diag)];
    args.extend_from_slice(extra);
    (mechd(&args), csv, diag)
}

#[test]
fn solve_writes_mechanism_and_diagnostics() {
    let dir = TempDir::new().unwrap();
    let (o, csv, diag) = solve_to(&dir, "e2.json", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d: Value = serde_json::from_str(&fs::read_to_string(diag).unwrap()).unwrap();
    assert_eq!(d["intervene"], Value::Bool(true));
    assert!((d["theta_H_star"].as_f64().unwrap() - 1.5).abs() < 1e-6);
    assert_eq!(d["mu_star"].as_f64().unwrap(), 0.0);
    let kinds: Vec<&str> = d["regions"].as_array().unwrap().iter().map(|r| r["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["subsidy", "private_market"]);
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("theta,q,t,U,q_lf,U_lf,region\n"));
    assert_eq!(text.lines().count(), 10002);
}

#[test]
fn verify_accepts_solver_output() {
    let dir = TempDir::new().unwrap();
    let (_, csv, _) = solve_to(&dir, "e2.json", &[]);
    let cfg = config("e2.json");
    let o = mechd(&["verify", "--config", s(&cfg), s(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["passes"], Value::Bool(true));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (_, csv_a, diag_a) = solve_to(&a, "e4.json", &["--grid", "2001"]);
    let (_, csv_b, diag_b) = solve_to(&b, "e4.json", &["--grid", "2001"]);
    assert_eq!(fs::read(csv_a).unwrap(), fs::read(csv_b).unwrap());
    assert_eq!(fs::read(diag_a).unwrap(), fs::read(diag_b).unwrap());
}

#[test]
fn malformed_config_names_the_missing_key() {
    let dir = TempDir::new().unwrap();
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(config("e2.json")).unwrap()).unwrap();
    cfg.as_object_mut().unwrap().remove("theta_max");
    let path = dir.path().join("bad.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = dir.path().join("mech.csv");
    let o = mechd(&["solve", "--config", s(&path), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta_max"));
    assert!(!out.exists());
}

#[test]
fn invalid_values_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(config("e2.json")).unwrap().replace("\"cost\": 1.0", "\"cost\": -1.0");
    let path = dir.path().join("neg_cost.json");
    fs::write(&path, text).unwrap();
    assert_eq!(code(&mechd(&["solve", "--config", s(&path)])), 2);
}

#[test]
fn missing_config_is_an_io_failure() {
    let o = mechd(&["solve", "--config", "/nonexistent/mechd.json"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn boundary_config_reproduces_laissez_faire() {
    let dir = TempDir::new().unwrap();
    let (o, csv, diag) = solve_to(&dir, "boundary.json", &[]);
    assert_eq!(code(&o), 0);
    let d: Value = serde_json::from_str(&fs::read_to_string(diag).unwrap()).unwrap();
    assert_eq!(d["intervene"], Value::Bool(false));
    let lf = dir.path().join("lf.csv");
    let cfg = config("boundary.json");
    assert_eq!(code(&mechd(&["laissez-faire", "--config", s(&cfg), "--out", s(&lf)])), 0);
    assert_eq!(fs::read(csv).unwrap(), fs::read(lf).unwrap());
}

#[test]
fn verify_flags_negative_payments() {
    let dir = TempDir::new().unwrap();
    let cfg = config("e2.json");
    let lf = dir.path().join("lf.csv");
    assert_eq!(code(&mechd(&["laissez-faire", "--config", s(&cfg), "--out", s(&lf), "--grid", "101"])), 0);
    let o = mechd(&["verify", "--config", s(&cfg), "--grid", "101", s(&lf)]);
    assert_eq!(code(&o), 0);

    let text = fs::read_to_string(&lf).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[50].split(',').map(str::to_string).collect();
    cells[2] = "-0.5".into();
    lines[50] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = mechd(&["verify", "--config", s(&cfg), "--grid", "101", s(&bad)]);
    assert_eq!(code(&o), 1);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["ls_violation"].as_f64().unwrap() >= 0.5);
}

#[test]
fn verify_rejects_wrong_schema() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "theta,q\n1,1\n").unwrap();
    let cfg = config("e2.json");
    assert_eq!(code(&mechd(&["verify", "--config", s(&cfg), s(&bad)])), 2);
}

#[test]
fn oracle_agrees_on_rising_weight() {
    let cfg = config("e4.json");
    let o = mechd(&["oracle", "--config", s(&cfg), "--grid", "2000"]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["objective_gap"].as_f64().unwrap().abs() <= 1e-4);
    assert_eq!(r["converged"], Value::Bool(true));
}

#[test]
fn oracle_boundary_gap_is_small() {
    let cfg = config("boundary.json");
    let o = mechd(&["oracle", "--config", s(&cfg), "--grid", "400"]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["nu_gap"].as_f64().unwrap() <= 1e-2);
}

#[test]
fn oracle_rejects_tiny_grid_without_writing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("gap.json");
    let cfg = config("e4.json");
    let o = mechd(&["oracle", "--config", s(&cfg), "--grid", "8", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn sweep_reports_multiplier_path() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep.csv");
    let cfg = config("e4.json");
    let o = mechd(&[
        "sweep", "--config", s(&cfg), "--grid", "2001", "--from", "1.0", "--to", "2.5", "--steps", "4", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let mut r = csv::Reader::from_path(&out).unwrap();
    let mu: Vec<f64> = r.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(mu, [0.5, 0.0, 0.0, 0.0]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta_L nondecreasing: true"));
}

#[test]
fn sweep_prints_subsidy_ceiling_direction() {
    let cfg = config("e2.json");
    let o = mechd(&["sweep", "--config", s(&cfg), "--grid", "2001", "--from", "1", "--to", "3", "--steps", "5"]);
    assert_eq!(code(&o), 0);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("theta_H nonincreasing: true"));
    assert!(err.contains("theta_H nondecreasing: false"));
}

#[test]
fn sweep_rejects_bad_ranges() {
    let cfg = config("e4.json");
    let c = s(&cfg);
    assert_eq!(code(&mechd(&["sweep", "--config", c, "--from", "1", "--to", "2", "--steps", "1"])), 2);
    assert_eq!(code(&mechd(&["sweep", "--config", c, "--from", "2", "--to", "1", "--steps", "3"])), 2);
    assert_eq!(code(&mechd(&["sweep", "--config", c, "--from", "0", "--to", "1", "--steps", "3"])), 2);
    assert_eq!(code(&mechd(&["sweep", "--config", c, "--param", "cost", "--from", "1", "--to", "2", "--steps", "3"])), 2);
}

#[test]
fn grid_flag_overrides_environment_variable() {
    let cfg = config("boundary.json");
    let run = |args: &[&str], var: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_mechd"));
        cmd.args(args).env_remove("MECHD_GRID_N");
        if let Some(v) = var {
            cmd.env("MECHD_GRID_N", v);
        }
        let o = cmd.output().unwrap();
        assert_eq!(code(&o), 0);
        String::from_utf8(o.stdout).unwrap().lines().count() - 1
    };
    assert_eq!(run(&["laissez-faire", "--config", s(&cfg)], Some("51")), 51);
    assert_eq!(run(&["laissez-faire", "--config", s(&cfg), "--grid", "21"], Some("51")), 21);
}
