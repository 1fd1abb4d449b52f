use std::fs;
use std::process::{Command, Stdio};

use crnl::tasks::{run_task, RunConfig, Task};
use crnl::{DenseTensor, MetricReport};

#[test]
fn constant_image_is_recovered_almost_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.json");
    crnl::io::save_tensor_json(&DenseTensor::filled(&[30, 30, 3], 0.6), &input).unwrap();
    let mut cfg = RunConfig::defaults(Task::Inpaint);
    cfg.input = Some(input);
    cfg.output = Default::default();
    cfg.sampling_rate = 0.2;
    cfg.inr.iterations = 200;
    cfg.inr.hidden = vec![32, 32];
    cfg.train.iterations = 300;
    cfg.similar = 5;
    let out = run_task(&cfg).unwrap();
    let MetricReport::Image { recovered, .. } = out.report else {
        panic!("expected image metrics");
    };
    assert!(recovered.psnr >= 40.0, "PSNR {}", recovered.psnr);
}

#[test]
fn cli_oracles_succeed() {
    let status = Command::new(env!("CARGO_BIN_EXE_crnl"))
        .args(["oracles", "--trials", "500"])
        .output()
        .unwrap();
    assert!(status.status.success());
    let text = String::from_utf8(status.stdout).unwrap();
    assert!(text.lines().count() >= 8 && !text.contains("FAIL"));
}

#[test]
fn cli_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{"seed": 3, "split": 0.5, "samples": 300, "inr": {"iterations": 20}, "train": {"iterations": 20}}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let status = Command::new(env!("CARGO_BIN_EXE_crnl"))
        .arg("regress")
        .arg("--config")
        .arg(&config)
        .args(["--split", "0.3", "--function", "f2", "--output"])
        .arg(&out)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let cfg = &manifest["config"];
    assert_eq!(cfg["seed"], 3);
    assert_eq!(cfg["split"], 0.3);
    assert_eq!(cfg["function"], "f2");
    assert_eq!(cfg["inr"]["iterations"], 20);
    // untouched nested fields keep their defaults
    assert_eq!(cfg["inr"]["omega"], 30.0);
    assert!(out.join("metrics.json").exists() && out.join("predictions.csv").exists());
}

#[test]
fn cli_reports_stage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("empty.csv");
    fs::write(&bad, "").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_crnl"))
        .arg("regress")
        .arg("--input")
        .arg(&bad)
        .arg("--output")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("data"), "{err}");
}
