use std::path::Path;
use std::process::{Command, Output};

fn rdmest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdmest")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "model": {"name": "growth"},
  "channel": {"lambda": 0.8, "max_delay": 3},
  "steps": 20, "mc_runs": 3, "particles": 50,
  "filters": ["gaf", "smc", "standard_pf", "pf_rd"],
  "seed": 4, "timing": false
}"#;

#[test]
fn benchmark_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let out = dir.path().join("out");
    let o = rdmest(&["benchmark", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["rmse_gaf.csv", "rmse_smc.csv", "rmse_standard_pf.csv", "rmse_pf_rd.csv", "summary.json", "channel.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["filters"].as_array().unwrap().len(), 4);
    assert_eq!(summary["config"]["seed"], 4);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", &SMALL.replace("\"seed\": 4", "\"seed\": 4, \"sead\": 5"));
    let o = rdmest(&["benchmark", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sead"));
}

#[test]
fn invalid_values_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", &SMALL.replace("\"particles\": 50", "\"particles\": 0"));
    assert_eq!(rdmest(&["benchmark", "--config", &cfg]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(rdmest(&["simulate", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"model": {"name": "growth", "params": {"process_var": 1.0e308, "meas_var": 1.0, "initial_mean": 0.0, "initial_var": 1.0}},
            "channel": {"lambda": 0.8, "max_delay": 3}, "steps": 10, "mc_runs": 2, "particles": 10,
            "filters": ["gaf"], "seed": 1}"#,
    );
    let o = rdmest(&["benchmark", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn channel_stats_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let o = rdmest(&["channel-stats", "--config", &cfg, "--samples", "20000"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["samples"], 20000);
    assert_eq!(report["observed"].as_array().unwrap().len(), 5);
    assert_eq!(rdmest(&["channel-stats", "--config", &cfg, "--samples", "10"]).status.code(), Some(2));
}

#[test]
fn simulate_trace_writes_per_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let out = dir.path().join("trace");
    let o = rdmest(&["simulate", "--config", &cfg, "--runs", "1", "--trace", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("run 0 smc"));
    for f in ["truth_run0.csv", "channel_run0.csv", "estimates_smc_run0.csv", "diagnostics_smc_run0.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}
