use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sode(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sode"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest(dir: &Path) -> Value {
    json(&dir.join("run_manifest.json"))
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn verify_default_scenario_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = sode(dir.path(), &["verify", "--scenario", "oscillator-B"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("verify_report.json"));
    assert_eq!(r["report"]["verdict"], Value::Bool(true));
    let m = manifest(dir.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "verify");
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["verify_report.json", "run_manifest.json"]);
}

#[test]
fn structure_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = sode(dir.path(), &["verify", "--scenario", "rotation"]);
    assert_eq!(o.status.code(), Some(1));
    let r = json(&dir.path().join("verify_report.json"));
    assert_eq!(r["error"]["kind"], "FunctionalDependence");
    assert_eq!(manifest(dir.path())["status"], "domain_failure");
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario": "custom", "vars": ["a", "b"], "field": ["b", "-a +"], "base": ["a"]}"#);
    let o = sode(dir.path(), &["build", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(manifest(dir.path())["status"], "usage_error");

    let o = sode(dir.path(), &["build", "--scenario", "no-such-thing"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), r#"{"unknown_key": 1}"#);
    assert_eq!(sode(dir.path(), &["build", "--config", &cfg]).status.code(), Some(2));

    assert_eq!(sode(dir.path(), &["verify", "--tol", "-1"]).status.code(), Some(2));
}

#[test]
fn custom_blowup_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"scenario": "custom", "vars": ["x", "v"], "field": ["x^2", "0"], "initial": [1, 0], "t_end": 3}"#,
    );
    let o = sode(dir.path(), &["integrate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("integrate_report.json"));
    let text = r["status"].to_string();
    assert!(text.contains("blow_up") || text.contains("BlowUp"), "{text}");
}

#[test]
fn match_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = sode(d.path(), &["match", "--seed", "7"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["fig1.csv", "fig2.csv", "matching.json", "motions.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert!(x == y, "{name} differs");
    }
    // manifests differ only in the output directory
    let (mut ma, mut mb) = (manifest(a.path()), manifest(b.path()));
    ma["config"]["out"] = Value::Null;
    mb["config"]["out"] = Value::Null;
    assert_eq!(ma, mb);
    let fig = fs::read_to_string(a.path().join("fig1.csv")).unwrap();
    assert_eq!(fig.lines().next(), Some("t,absQ,absV,label"));
    assert_eq!(fig.lines().count(), 1 + 3 * 513);
}

#[test]
fn empty_energy_grid_gives_header_only_figures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"energies": []}"#);
    let o = sode(dir.path(), &["match", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["fig1.csv", "fig2.csv"] {
        assert_eq!(fs::read_to_string(dir.path().join(name)).unwrap(), "t,absQ,absV,label\n");
    }
    let m = json(&dir.path().join("matching.json"));
    assert_eq!(m["pairs"].as_array().map(Vec::len), Some(0));
}

#[test]
fn undeformed_oscillator_fails_to_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"deformation": "xi"}"#);
    let o = sode(dir.path(), &["match", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(dir.path());
    assert_eq!(m["status"], "domain_failure");
    assert!(m["message"].as_str().unwrap().contains("mismatch"));
}

#[test]
fn period_of_default_oscillator() {
    let dir = tempfile::tempdir().unwrap();
    let o = sode(dir.path(), &["period"]);
    assert_eq!(o.status.code(), Some(0));
    let p = json(&dir.path().join("period.json"));
    let t = p["estimate"]["period"].as_f64().unwrap();
    assert!((t - std::f64::consts::TAU).abs() < 1e-6, "{t}");
}
