use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ofdm-isac"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"{
    "frame": {"n_subcarriers": 64, "n_symbols": 16, "cp_samples": 16,
              "subcarrier_spacing_hz": 30000.0, "carrier_frequency_hz": 3.5e9},
    "scene": {"targets": [{"distance_m": 60, "velocity_mps": 10},
                          {"distance_m": 120, "velocity_mps": -40}]},
    "trials": 4,
    "seed": 3
}"#;

fn small_config(dir: &Path) -> String {
    write_config(dir, SMALL)
}

#[test]
fn simulate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("mse_per_target.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "target_index,truth_d_mean,mse_d,crb_d,mse_v,crb_v,miss_rate");
    assert_eq!(lines.count(), 2);
    let trials = fs::read_to_string(out.join("trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trials"], 4);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"trails": 3}"#);
    let o = run(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = run(&["crb", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn infeasible_target_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scene": {"targets": [{"distance_m": 500, "velocity_mps": 0}]}}"#);
    let o = run(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn crb_at_fixed_snr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["crb", "--config", &cfg, "--snr", "-10"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "snr_db,var_d,var_v");
    let fields: Vec<f64> = lines.next().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    let small = ofdm_isac::frame::FrameConfig {
        n_subcarriers: 64,
        n_symbols: 16,
        cp_samples: 16,
        ..ofdm_isac::frame::FrameConfig::desk()
    };
    let (d, v) = ofdm_isac::estimate::crb(&small, 0.1).unwrap();
    assert_eq!(fields[0], -10.0);
    assert!((fields[1] / d - 1.0).abs() < 1e-12);
    assert!((fields[2] / v - 1.0).abs() < 1e-12);

    let per_target = run(&["crb", "--config", &cfg]);
    let text = String::from_utf8(per_target.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn rdm_dump_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("rdm.csv");
    let o = run(&["rdm-dump", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 65);
    assert!(lines.iter().all(|l| l.split(',').count() == 17));
}

#[test]
fn sweep_writes_each_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    let o = run(&["sweep", "--config", &cfg, "--snr", "-10:10:10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    for s in ["-10", "0", "10"] {
        assert!(out.join(format!("snr_{s}")).join("report.json").exists(), "snr_{s}");
    }
    let bad = run(&["sweep", "--config", &cfg, "--snr", "0:-1:5", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}
