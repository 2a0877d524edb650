use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mgct::cli::read_km_csv;
use mgct::dataio::read_manifest;
use mgct::train::read_history_csv;
use tempfile::TempDir;

fn mgct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgct")).args(args).arg("--quiet").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let path = dir.to_str().unwrap();
    let mut args = vec!["synth", "--out", path, "--n", "24", "--d-in", "6"];
    args.extend_from_slice(extra);
    let out = mgct(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join("manifest.csv")
}

fn tiny_config(dir: &Path, manifest: &Path, folds: usize) -> PathBuf {
    let cfg = serde_json::json!({
        "manifest": manifest,
        "run_root": dir.join("runs"),
        "folds": folds,
        "train": {
            "epochs": 2,
            "accumulation": 4,
            "snn_hidden": 8,
            "fusion": {"d": 8, "d_a": 8, "d_ff": 16}
        }
    });
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    synth(&tmp.path().join("a"), &[]);
    synth(&tmp.path().join("b"), &[]);
    synth(&tmp.path().join("c"), &["--seed", "99"]);
    let (a, b, c) = (tree_bytes(&tmp.path().join("a")), tree_bytes(&tmp.path().join("b")), tree_bytes(&tmp.path().join("c")));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_censor_rate_gives_all_events() {
    let tmp = TempDir::new().unwrap();
    let manifest = synth(tmp.path(), &["--censor-rate", "0"]);
    let rows = read_manifest(&manifest).unwrap();
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().all(|r| r.event));
}

#[test]
fn synth_refuses_non_empty_directory_without_force() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let out = mgct(&["synth", "--out", tmp.path().to_str().unwrap(), "--n", "24"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--force"));
    synth(tmp.path(), &["--force"]);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&mgct(&["frobnicate"])), 2);
    assert_eq!(code(&mgct(&["cv", "--config", "x.json", "--model", "Z"])), 2);
    assert_eq!(code(&mgct(&["cv", "--config", tmp.path().join("missing.json").to_str().unwrap()])), 2);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"folds": 2, "trian": {}, "train": {"epochz": 3}}"#).unwrap();
    let out = mgct(&["cv", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("trian") && msg.contains("train.epochz"), "{msg}");

    fs::write(&bad, r#"{"train": {"lr": 0}}"#).unwrap();
    assert_eq!(code(&mgct(&["train", "--config", bad.to_str().unwrap()])), 2);
}

#[test]
fn missing_data_is_a_runtime_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), &tmp.path().join("nowhere/manifest.csv"), 1);
    let out = mgct(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nowhere"));
}

#[test]
fn train_then_eval_writes_parseable_outputs() {
    let tmp = TempDir::new().unwrap();
    let manifest = synth(&tmp.path().join("data"), &[]);
    let cfg = tiny_config(tmp.path(), &manifest, 1);
    let run = tmp.path().join("run");
    let out = mgct(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["config.json", "splits.json", "metrics.csv", "model.mgck", "summary.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert_eq!(read_history_csv(run.join("metrics.csv")).unwrap().len(), 2);

    let again = mgct(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(code(&again), 2, "existing run directory must be refused");

    let stem = tmp.path().join("km/val");
    let out = mgct(&[
        "eval",
        "--checkpoint",
        run.join("model.mgck").to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--km-out",
        stem.to_str().unwrap(),
        "--split",
        run.join("splits.json").to_str().unwrap(),
        "--fold",
        "0",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let km_dir = tmp.path().join("km");
    for side in ["val_low.csv", "val_high.csv"] {
        let points = read_km_csv(&km_dir.join(side)).unwrap();
        assert!(!points.is_empty());
        assert!(points.windows(2).all(|w| w[1].survival <= w[0].survival && w[0].time < w[1].time));
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(km_dir.join("val_logrank.json")).unwrap()).unwrap();
    assert_eq!(report["n_low"].as_u64().unwrap() + report["n_high"].as_u64().unwrap(), 4);
    let risks = fs::read_to_string(km_dir.join("val_risk.csv")).unwrap();
    assert_eq!(risks.lines().count(), 5);
}

#[test]
fn eval_rejects_mismatched_dimensions() {
    let tmp = TempDir::new().unwrap();
    let manifest = synth(&tmp.path().join("data"), &[]);
    let cfg = tiny_config(tmp.path(), &manifest, 1);
    let run = tmp.path().join("run");
    assert_eq!(code(&mgct(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()])), 0);

    let other = tmp.path().join("wide");
    let out = mgct(&["synth", "--out", other.to_str().unwrap(), "--n", "10", "--d-in", "9"]);
    assert_eq!(code(&out), 0);
    let out = mgct(&[
        "eval",
        "--checkpoint",
        run.join("model.mgck").to_str().unwrap(),
        "--manifest",
        other.join("manifest.csv").to_str().unwrap(),
        "--km-out",
        tmp.path().join("km").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("patch embedding width"), "{}", stderr(&out));
}

#[test]
fn cv_writes_one_row_per_fold_and_epoch() {
    let tmp = TempDir::new().unwrap();
    let manifest = synth(&tmp.path().join("data"), &[]);
    let cfg = tiny_config(tmp.path(), &manifest, 3);
    let out = mgct(&["cv", "--config", cfg.to_str().unwrap(), "--model", "C"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let runs: Vec<_> = fs::read_dir(tmp.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let name = runs[0].file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.ends_with("-seed7-cv"), "{name}");
    let history = read_history_csv(runs[0].join("metrics.csv")).unwrap();
    assert_eq!(history.len(), 6);
    for k in 0..3 {
        assert!(runs[0].join(format!("fold{k}.mgck")).is_file());
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(runs[0].join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["folds"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_detects_injected_fault() {
    let ok = mgct(&["verify"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = mgct(&["verify", "--inject-fault", "tanh-grad-sign"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("grad/op/tanh"));
}
