use std::path::Path;
use std::process::{Command, Output};

fn qns(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qns")).current_dir(dir).args(args).output().expect("binary runs")
}

const SMALL: &str = r#"{
  "schema_version": 1,
  "noise": {"benchmark": {}},
  "plan": {"k_max": 8, "m": 6, "period": 5e-6},
  "simulation": {"n_trajectories": 40, "shots": null, "seed": 5, "keep_trajectories": true},
  "estimation": {"bootstrap_resamples": 20},
  "output_dir": "out"
}"#;

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), config).unwrap();
    dir
}

#[test]
fn plan_reports_counts() {
    let dir = setup(SMALL);
    let out = qns(dir.path(), &["plan", "--config", "run.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("settings: 31"), "{text}");
    let plan: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/plan.json")).unwrap()).unwrap();
    assert_eq!(plan["settings"].as_array().unwrap().len(), 31);
}

#[test]
fn simulate_then_reconstruct() {
    let dir = setup(SMALL);
    let sim = qns(dir.path(), &["simulate", "--config", "run.json", "--threads", "2"]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let rec: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/records.json")).unwrap()).unwrap();
    assert_eq!(rec["provenance"]["master_seed"], 5);
    assert_eq!(rec["provenance"]["config_hash"].as_str().unwrap().len(), 64);

    let r = qns(dir.path(), &["reconstruct", "--config", "run.json", "--records", "out/records.json", "--truth", "out/truth.csv"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/spectra.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert!(lines.next().unwrap().starts_with("omega_rad_s,s11,s22,re_s12,im_s12,s1212,s11_ci_lo"));
    assert_eq!(lines.count(), 8);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["mae"].as_array().unwrap().len(), 5);
    assert!(report["statics"]["j"].as_f64().unwrap() > 0.0);
}

#[test]
fn seed_override_is_reproducible() {
    let dir = setup(SMALL);
    let a = qns(dir.path(), &["simulate", "--config", "run.json", "--seed", "9", "--out-dir", "a"]);
    let b = qns(dir.path(), &["simulate", "--config", "run.json", "--seed", "9", "--out-dir", "b", "--threads", "1"]);
    assert!(a.status.success() && b.status.success());
    let ra = std::fs::read(dir.path().join("a/records.json")).unwrap();
    let rb = std::fs::read(dir.path().join("b/records.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn oracle_records_reconstruct_without_bootstrap() {
    let dir = setup(SMALL);
    assert!(qns(dir.path(), &["simulate", "--config", "run.json", "--oracle"]).status.success());
    let r = qns(dir.path(), &["reconstruct", "--config", "run.json", "--records", "out/records.json", "--truth", "out/truth.csv"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("skipping bootstrap"));
    // Background subtraction of a run from itself leaves zero.
    let s = qns(dir.path(), &["reconstruct", "--config", "run.json", "--records", "out/records.json", "--subtract", "out/records.json"]);
    assert!(s.status.success());
    let csv = std::fs::read_to_string(dir.path().join("out/spectra.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let v: Vec<f64> = line.split(',').skip(1).take(5).map(|x| x.parse().unwrap()).collect();
        assert!(v.iter().all(|x| x.abs() < 1e-9), "{line}");
    }
}

#[test]
fn oracle_table_written() {
    let dir = setup(SMALL);
    assert!(qns(dir.path(), &["oracle", "--config", "run.json"]).status.success());
    let csv = std::fs::read_to_string(dir.path().join("out/oracle.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("combo,k,theta1"));
    assert_eq!(csv.lines().count(), 2 + 31);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = setup(&SMALL.replace("\"k_max\": 8", "\"k_max\": -1"));
    let out = qns(dir.path(), &["simulate", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan.k_max"));
    assert!(!dir.path().join("out").exists());

    let dir = setup(&SMALL.replace("\"m\": 6", "\"m\": 6, \"tau_pi\": 1e-7"));
    assert_eq!(qns(dir.path(), &["plan", "--config", "run.json"]).status.code(), Some(2));
}

#[test]
fn bad_records_exit_3() {
    let dir = setup(SMALL);
    std::fs::write(dir.path().join("bad.json"), "{\"schema_version\": 1}").unwrap();
    let out = qns(dir.path(), &["reconstruct", "--config", "run.json", "--records", "bad.json"]);
    assert_eq!(out.status.code(), Some(3));
    let out = qns(dir.path(), &["reconstruct", "--config", "run.json", "--records", "missing.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn incomplete_records_exit_3() {
    let dir = setup(SMALL);
    assert!(qns(dir.path(), &["simulate", "--config", "run.json", "--oracle"]).status.success());
    let path = dir.path().join("out/records.json");
    let mut rec: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    rec["settings"].as_array_mut().unwrap().pop();
    std::fs::write(&path, serde_json::to_vec(&rec).unwrap()).unwrap();
    let out = qns(dir.path(), &["reconstruct", "--config", "run.json", "--records", "out/records.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn pulse_width_study_runs() {
    let cfg = SMALL.replace(
        "\"output_dir\": \"out\"",
        "\"output_dir\": \"out\", \"studies\": {\"pulse_width\": {\"k_max\": 4, \"m\": 6, \"n_trajectories\": 2, \"seeds\": [1, 2]}}",
    );
    let dir = setup(&cfg);
    let out = qns(dir.path(), &["study", "pulse-width", "--config", "run.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/pulse_width.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
