//! End-to-end runs of the binary and of the experiment driver.

mod common;

use std::fs;
use std::process::Command;

use mlsmc::harness::{self, ExperimentConfig, Mode, Scale};

const BIN: &str = env!("CARGO_BIN_EXE_mlsmc");

fn config_path() -> String {
    format!("{}/../../configs/k2.json", env!("CARGO_MANIFEST_DIR"))
}

fn trace(out: &std::path::Path) -> Vec<u8> {
    let status = Command::new(BIN)
        .args(["acceptance-trace", "--config", &config_path(), "--seed", "9", "--repeats", "2", "--out"])
        .arg(out)
        .output()
        .unwrap();
    assert!(status.status.success());
    fs::read(out.join("acceptance.csv")).unwrap()
}

#[test]
fn acceptance_trace_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = trace(&dir.path().join("a"));
    let b = trace(&dir.path().join("b"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,mean_acceptance"));
    for line in lines {
        let rate: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(rate > 0.0 && rate < 1.0);
    }
}

#[test]
fn invalid_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"K": 2, "bar_u": 0.05, "sigmas": [0.1, 0.025]}"#).unwrap();
    let out =
        Command::new(BIN).args(["rate-probe", "--config"]).arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

fn small_scale() -> Scale {
    Scale {
        ground_truth_level: 5,
        ground_truth_repeats: 4,
        ground_truth_n: 200,
        ladder_max: 3,
        ladder_base_n: 20,
        mse_repeats: 3,
        pilot_n: 100,
        pilot_repeats: 8,
        ..Scale::desk()
    }
}

fn mse_run(out: &std::path::Path) -> (String, String, String) {
    let mut cfg = ExperimentConfig::new(common::bundled_config(), Mode::MseVsCost, 4, out);
    cfg.scale = small_scale();
    cfg.force = true;
    let summary = harness::run(&cfg).unwrap();
    assert_eq!(summary.files.len(), 3);
    let read = |name: &str| fs::read_to_string(out.join(name)).unwrap();
    (read("mse_vs_cost.csv"), read("estimates.jsonl"), read("planner.json"))
}

#[test]
fn mse_vs_cost_writes_every_artifact_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let first = mse_run(&dir.path().join("a"));
    assert!(dir.path().join("a/ground_truth.json").exists());
    let (csv, jsonl, planner) = &first;

    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("algorithm,L,cost_units,mse,stderr,n_repeats"));
    let algorithms: Vec<&str> = rows.map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(algorithms.iter().filter(|a| **a == "mlsmc").count(), 4);
    assert_eq!(algorithms.iter().filter(|a| **a == "smc").count(), 4);

    let keys = ["L", "cost_units", "increments", "seed", "sizes", "wall_ms", "y_hat", "z_ratios"];
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let mut got: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        got.sort_unstable();
        assert_eq!(got, keys);
    }
    assert_eq!(jsonl.lines().count(), 4 * 3);

    let schedules: Vec<serde_json::Value> = serde_json::from_str(planner).unwrap();
    for s in &schedules {
        for k in ["epsilon", "alpha", "beta", "zeta", "L", "sizes", "K_L", "predicted_variance", "cross_term_ratio"] {
            assert!(s.get(k).is_some(), "planner output lacks {k}");
        }
    }

    // wall-clock time is the only field allowed to differ between runs
    let second = mse_run(&dir.path().join("b"));
    assert_eq!(first.0, second.0);
    assert_eq!(first.2, second.2);
    let strip = |s: &str| -> Vec<serde_json::Value> {
        s.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_ms");
                v
            })
            .collect()
    };
    assert_eq!(strip(&first.1), strip(&second.1));
}
