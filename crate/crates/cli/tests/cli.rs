use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blowup-profiles"))
        .args(args)
        .env("BLOWUP_PROFILES_OUT", out)
        .output()
        .expect("run CLI")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn validate(path: &Path) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    let schema = read_json(&schema_path);
    let validator = jsonschema::validator_for(&schema).unwrap();
    let doc = read_json(path);
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", path.display());
}

#[test]
fn solve_writes_trace_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["solve", "--p", "0.5", "--n", "3", "--alpha", "0.2", "--eta-max", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.starts_with("eta,w,wp,V\n0.0000000000000000e0,2.0000000000000001e-1,"));
    let meta = read_json(&dir.path().join("solve.json"));
    assert_eq!(meta["data"]["method_tag"], "rk_continuation");
    validate(&dir.path().join("solve.json"));
}

#[test]
fn zero_amplitude_is_the_zero_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["solve", "--alpha", "0", "--eta-max", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(&cols[1..], &[0.0, 0.0, 0.0]);
    }
}

#[test]
fn sigma_prints_the_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["sigma", "--p", "0.5", "--m", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let values: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 3);
    assert_eq!(values[0], 0.0);
    assert!((values[1] - 2.0).abs() < 1e-15);
    assert!((values[2] - 10.0 / 3.0).abs() < 1e-15);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["solve", "--p", "1.5"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
    let missing = dir.path().join("missing.cfg");
    let out = run(dir.path(), &["solve", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    // an impossible oscillation requirement is a diagnostic failure
    let out = run(dir.path(), &["zeros", "--eta-max", "3", "--min-zeros", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("zeros_report.json"), "{stderr}");
    validate(&dir.path().join("zeros_report.json"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "[params]\np = 0.25\nalpha = 0.001\neta-max = 4\n[sigma]\nm = 5\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(run(dir.path(), &["solve", "--config", c, "--p", "0.75"]).status.code(), Some(0));
    let meta = read_json(&dir.path().join("solve.json"));
    assert_eq!(meta["params"]["p"], 0.75);
    assert_eq!(meta["params"]["alpha"], 0.001);
    assert_eq!(meta["params"]["eta_max"], 4.0);
    let out = run(dir.path(), &["sigma", "--config", c]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 5);
    std::fs::write(&cfg, "[params]\nbogus = 1\n").unwrap();
    assert_eq!(run(dir.path(), &["solve", "--config", c]).status.code(), Some(1));
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let flag = dir.path().join("flag");
    let out = run(dir.path(), &["sigma", "--m", "2", "--out", flag.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(flag.join("sigma.csv").exists());
    assert!(!dir.path().join("sigma.csv").exists());
}

#[test]
fn json_tables_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["energy", "--eta-max", "8", "--format", "json"]);
    // η_max < 50 skips the convergence check; the rest pass
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read_json(&dir.path().join("energy.json"));
    assert_eq!(table["columns"], serde_json::json!(["eta", "F"]));
    validate(&dir.path().join("energy.json"));
    validate(&dir.path().join("energy_report.json"));
}

#[test]
fn sweep_sorts_and_deduplicates() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["sweep", "--alphas", "0.2,0.1,0.2", "--eta-max", "20", "--window", "8,20"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr).unwrap().contains("duplicate"));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let alphas: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(alphas, vec![0.1, 0.2]);
    validate(&dir.path().join("sweep_report.json"));

    let out = run(dir.path(), &["sweep", "--alphas="]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert_eq!(run(dir.path(), &["sweep", "--alphas", "0.9"]).status.code(), Some(1));
}

#[test]
fn cpplus_and_pde_reports_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["cpplus", "--g", "1", "--ms", "1,2", "--r-points", "80", "--t-steps", "40"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cpplus.csv")).unwrap();
    assert!(csv.starts_with("r,t,u,m\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 80 * 41);
    validate(&dir.path().join("probe.json"));

    run(dir.path(), &["pde-check", "--eta-max", "13", "--r-points", "41", "--t-points", "11"]);
    let report = read_json(&dir.path().join("pde_report.json"));
    assert!(report["data"]["ratio"].as_f64().unwrap() > 0.0);
    validate(&dir.path().join("pde_report.json"));
}

#[test]
fn window_mode_flag() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["literal", "offset"] {
        let out = run(dir.path(), &["solve", "--eta-max", "10", "--mode", mode]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(read_json(&dir.path().join("solve.json"))["params"]["window_mode"], mode);
    }
    assert_eq!(run(dir.path(), &["solve", "--mode", "sideways"]).status.code(), Some(1));
}
