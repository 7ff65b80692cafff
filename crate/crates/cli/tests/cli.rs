//! End-to-end smoke tests of the `swinseg` binary on a miniature
//! configuration: dataset generation, training, evaluation, prediction and
//! the complexity table, plus exit codes for bad inputs.

use std::path::Path;
use std::process::Command;

fn swinseg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swinseg"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let manifest = dir.join("data/manifest.json");
    let config = serde_json::json!({
        "data": {
            "count": 12,
            "spec": { "height": 16, "width": 32, "seed": 3 }
        },
        "train": {
            "model": {
                "input_h": 16, "input_w": 16, "embed_dim": 8,
                "encoder_stages": 2, "heads": [2, 4, 8], "window": 2,
                "classes": 3, "rel_bias": true
            },
            "baseline": {
                "input_h": 16, "input_w": 16, "base_channels": 4,
                "depth": 2, "classes": 3
            },
            "epochs": 1,
            "batch_size": 4,
            "seed": 3,
            "pretext": { "count": 8, "epochs": 1 },
            "manifest": manifest
        }
    });
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn full_command_surface_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data_dir = dir.path().join("data");

    let out = swinseg()
        .args(["gen-data", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&data_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "gen-data: {}", String::from_utf8_lossy(&out.stderr));
    assert!(data_dir.join("manifest.json").exists());

    let train_dir = dir.path().join("run");
    let out = swinseg()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&train_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "train: {}", String::from_utf8_lossy(&out.stderr));
    let checkpoint = train_dir.join("swin-unet.ckpt");
    assert!(checkpoint.exists());
    assert!(train_dir.join("runlog.json").exists());

    let eval_dir = dir.path().join("eval");
    let out = swinseg()
        .args(["eval", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--out")
        .arg(&eval_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "eval: {}", String::from_utf8_lossy(&out.stderr));
    assert!(eval_dir.join("metrics.json").exists());
    assert!(eval_dir.join("metrics.csv").exists());

    // predict on one generated full-width slice
    let predict_dir = dir.path().join("pred");
    let out = swinseg()
        .args(["predict", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--stir")
        .arg(data_dir.join("slices/0000_stir.pgm"))
        .arg("--t1")
        .arg(data_dir.join("slices/0000_t1.pgm"))
        .arg("--t2")
        .arg(data_dir.join("slices/0000_t2.pgm"))
        .arg("--out")
        .arg(&predict_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "predict: {}", String::from_utf8_lossy(&out.stderr));
    let mask = swinseg_datagen::read_pgm(&predict_dir.join("prediction.pgm")).unwrap();
    match mask {
        swinseg_datagen::PgmImage::Eight { width, height, data } => {
            assert_eq!((width, height), (32, 16), "mask keeps the full slice extent");
            assert!(data.iter().all(|&v| v <= 2));
        }
        other => panic!("expected 8-bit mask, got {:?}", other),
    }

    let out = swinseg()
        .args(["complexity", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("cx"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("msa_flops"), "table header missing: {}", text);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = swinseg().args(["complexity", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    // no gen-data run: the manifest does not exist
    let out = swinseg()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}
