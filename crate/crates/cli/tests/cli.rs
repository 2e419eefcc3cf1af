use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BUNDLED: &str = include_str!("../../core/scenarios/section5.scenario");

fn regsim(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_regsim"));
    cmd.args(args).env_remove("REGSIM_SEED");
    if let Some(s) = seed {
        cmd.env("REGSIM_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn scenario_with(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> String {
    let mut v: Value = serde_json::from_str(BUNDLED).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn short(v: &mut Value) {
    v["sim"]["t_final"] = 0.5.into();
}

#[test]
fn check_bundled_passes() {
    let out = regsim(&["check", "section5"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["audit_passes"], true);
    assert!(rep.get("agents").is_none());
}

#[test]
fn check_isolated_leader_fails_audit() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_with(dir.path(), "iso.scenario", |v| {
        v["topology"]["segments"][0]["edges"][0]["from"] = 4.into();
    });
    let out = regsim(&["check", &path], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("A4"));
}

#[test]
fn runtime_errors_exit_2() {
    assert_eq!(regsim(&["check", "/nonexistent/file.scenario"], None).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_with(dir.path(), "bad.scenario", |v| {
        v["exosystem"]["S0"] = serde_json::json!([[1.0, 2.0]]);
    });
    let out = regsim(&["check", &path], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exosystem.S0"));
    assert_eq!(regsim(&["check", "section5"], Some("not-a-number")).status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_honours_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_with(dir.path(), "short.scenario", short);
    let run = |out: &str, seed: Option<&str>| {
        let out_dir = dir.path().join(out);
        let o = regsim(&["run", &sc, "--out", out_dir.to_str().unwrap(), "--decimate", "10"], seed);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out_dir
    };
    let a = run("a", Some("9"));
    let b = run("b", Some("9"));
    let c = run("c", None);
    for f in ["trace.csv", "summary.json", "plot_trace.py"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let csv_a = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(csv_a, fs::read_to_string(b.join("trace.csv")).unwrap());
    assert_ne!(csv_a, fs::read_to_string(c.join("trace.csv")).unwrap());
    assert!(csv_a.contains("# seed = 9"));
    let rows = csv_a.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 51);
    let summary: Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["agents"].as_array().unwrap().len(), 4);
}

#[test]
fn run_refuses_failed_audit_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_with(dir.path(), "a3.scenario", |v| {
        short(v);
        v["exosystem"]["S0"] = serde_json::json!([[0.1, 2.0], [-2.0, 0.1]]);
    });
    let out = dir.path().join("o");
    let o = regsim(&["run", &sc, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    let o = regsim(&["run", &sc, "--out", out.to_str().unwrap(), "--force"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_reports_fractions() {
    let out = regsim(&["sweep", "section5", "--radius-grid", "0,0.05,100", "--samples", "8"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = rep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["fraction"], 1.0);
    assert!(rows[2]["fraction"].as_f64().unwrap() < 1.0);
    assert_eq!(rep["fixed_probe"], serde_json::json!([true, true, true, true]));
}

#[test]
fn plot_emits_script() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_with(dir.path(), "short.scenario", short);
    let out_dir = dir.path().join("run");
    assert_eq!(
        regsim(&["run", &sc, "--out", out_dir.to_str().unwrap()], None).status.code(),
        Some(0)
    );
    let csv = out_dir.join("trace.csv");
    let o = regsim(&["plot", csv.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let script = fs::read_to_string(out_dir.join("trace.py")).unwrap();
    assert!(script.contains("import matplotlib"));
    assert_eq!(regsim(&["plot", "/nonexistent.csv"], None).status.code(), Some(2));
}
