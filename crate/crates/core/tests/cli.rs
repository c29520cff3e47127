//! Runs the binary end to end and checks exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn vitalcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vitalcast"))
        .args(args)
        .env_remove("VITALCAST_OUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const CONFIG: &str = r#"
seed = 1
target = "mbp"
covariates = false

[data]
source = "csv"
vitals = "vitals.csv"
diagnoses = "diagnoses.csv"

[model]
kind = "nhits"
hidden_width = 8
theta_dim = 4

[loss]
kind = "mse"

[training]
max_epochs = 1
"#;

#[test]
fn synth_train_evaluate_forecast() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = vitalcast(&["synth", "--patients", "12", "--seed", "4", "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = write_config(dir.path(), CONFIG);
    let run = dir.path().join("run");
    let run = run.to_str().unwrap();
    let out = vitalcast(&["train", "--config", &cfg, "--out", run]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = format!("{run}/checkpoint.json");

    let out = vitalcast(&["evaluate", "--config", &cfg, "--checkpoint", &ckpt, "--out", run]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.json", "horizon_curve.csv", "results_table.txt", "training_log.csv"] {
        assert!(dir.path().join("run").join(f).exists(), "missing {f}");
    }

    // Forecast from the first 72 rows of one synthetic stay.
    let vitals = std::fs::read_to_string(dir.path().join("vitals.csv")).unwrap();
    let window: Vec<&str> = vitals.lines().take(73).collect();
    let input = dir.path().join("window.csv");
    std::fs::write(&input, window.join("\n")).unwrap();
    let out = vitalcast(&["forecast", "--checkpoint", &ckpt, "--input", input.to_str().unwrap(), "--target", "mbp"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 37);
    assert!(csv.starts_with("step,minutes_ahead,value"));

    // Wrong target for the checkpoint.
    let out = vitalcast(&["forecast", "--checkpoint", &ckpt, "--input", input.to_str().unwrap(), "--target", "hr"]);
    assert_eq!(out.status.code(), Some(3));

    // A different architecture against the same checkpoint.
    let other = write_config(dir.path(), &CONFIG.replace("nhits", "nbeats"));
    let out = vitalcast(&["evaluate", "--config", &other, "--checkpoint", &ckpt, "--out", run]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("seed = 1", "seed = 1\nbogus = true"));
    let out = vitalcast(&["train", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
