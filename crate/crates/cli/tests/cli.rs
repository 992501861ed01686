use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wgqd(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgqd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("WGQD_CONFIG")
        .env_remove("WGQD_PAPER_MODE")
        .env_remove("WGQD_SEED")
        .output()
        .expect("launch wgqd")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn budget_infer_recovers_source_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgqd(dir.path(), &["budget", "infer", "--rate", "5521", "--sigma", "100"]);
    assert!(o.status.success());
    let report = json(&dir.path().join("budget.json"));
    let rate = report["source"]["rate"].as_f64().unwrap();
    assert!((rate / 2.249e5 - 1.0).abs() < 5e-3, "{rate}");
    assert!((report["total_db"].as_f64().unwrap() - 16.1).abs() < 1e-12);
    assert!(String::from_utf8_lossy(&o.stdout).contains("2.249"));
}

#[test]
fn placement_analytic_prints_six() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgqd(dir.path(), &["placement", "analytic", "--p", "0.55", "--target", "0.99"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "6");
    assert_eq!(json(&dir.path().join("analytic.json"))["iterations"], 6);
}

#[test]
fn manifest_lists_outputs_with_digests() {
    let dir = tempfile::tempdir().unwrap();
    assert!(wgqd(dir.path(), &["placement", "simulate", "--trials", "50", "--seed", "4"])
        .status
        .success());
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["tool"], "wgqd");
    assert_eq!(m["seed"], 4);
    let files: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["file"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["config.json", "yield.csv", "summary.json"]);
    assert_eq!(m["config_sha256"], m["outputs"][0]["sha256"]);
}

#[test]
fn g2_simulate_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = wgqd(&out, &["g2", "simulate", "--duration", "0.1", "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        json(&out.join("manifest.json"))["outputs"].clone()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_ne!(a, run("c", "2"));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("budget.json");
    std::fs::write(
        &cfg,
        r#"{"chain": {"stages": [{"name": "a", "attenuation_db": 10.0}]}, "detected_rate": 100.0}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = wgqd(&out, &["budget", "infer", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let rate = json(&out.join("budget.json"))["source"]["rate"].as_f64().unwrap();
    assert!((rate - 1000.0).abs() < 1e-9);
}

#[test]
fn failures_write_a_machine_readable_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgqd(dir.path(), &["placement", "analytic", "--p", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let report = json(&dir.path().join("error.json"));
    assert_eq!(report["kind"], "unreachable");
    assert_eq!(report["command"], "placement analytic");
    let stderr: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(stderr, report);

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"detected_rate": 1.0, "typo": 2}"#).unwrap();
    let o = wgqd(dir.path(), &["budget", "infer", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&dir.path().join("error.json"))["kind"], "config");

    let o = wgqd(dir.path(), &["fdtd", "sweep"]);
    assert_eq!(o.status.code(), Some(1));
}
