//! End-to-end tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn galenet_bin() -> &'static str {
    env!("CARGO_BIN_EXE_galenet")
}

fn run(args: &[&str]) -> Output {
    Command::new(galenet_bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small synthetic dataset on disk; returns the manifest path.
fn synth_dataset(dir: &Path, seed: u64) -> PathBuf {
    let out = run(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--n-examples",
        "200",
        "--signal-strength",
        "4.0",
    ]);
    assert_success(&out);
    let path = String::from_utf8(out.stdout).unwrap().trim().to_string();
    PathBuf::from(path)
}

fn write_tiny_synth_config(dir: &Path) -> PathBuf {
    let path = dir.join("synth.json");
    std::fs::write(
        &path,
        r#"{"n_examples": 200, "signal_strength": 4.0, "seed": 9, "image_dim": 6}"#,
    )
    .unwrap();
    path
}

#[test]
fn synth_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_dataset(a.path(), 3);
    synth_dataset(b.path(), 3);
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let left = std::fs::read(a.path().join(&name)).unwrap();
        let right = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(left, right, "{name:?} differs");
    }
}

#[test]
fn featurize_is_idempotent_and_row_per_building() {
    let data = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(data.path(), 5);
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    for out in [&out1, &out2] {
        let r = run(&[
            "featurize",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ]);
        assert_success(&r);
    }
    for file in ["trajectory_features.csv", "weather_features.csv"] {
        let a = std::fs::read(out1.path().join(file)).unwrap();
        let b = std::fs::read(out2.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} not byte-identical");
        // Header plus one row per building.
        let rows = a.iter().filter(|&&c| c == b'\n').count();
        assert_eq!(rows, 201, "{file} row count");
    }
}

#[test]
fn missing_track_file_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(dir.path(), 1);
    std::fs::remove_file(dir.path().join("track_synth-d0.csv")).unwrap();
    let out = run(&[
        "featurize",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("cache").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("track_synth-d0.csv"),
        "stderr lacks the path: {stderr}"
    );
}

fn train_into(dir: &Path, synth_config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--synthetic",
        synth_config.to_str().unwrap(),
        "--model",
        "galenet",
        "--scenario",
        "proactive",
        "--seeds",
        "1",
        "--seed",
        "7",
        "--max-epochs",
        "4",
        "--batch-size",
        "64",
        "--lr",
        "0.01",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn train_reruns_are_byte_identical() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let synth_config = write_tiny_synth_config(cfg_dir.path());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = train_into(a.path(), &synth_config, &[]);
    assert_success(&out_a);
    let out_b = train_into(b.path(), &synth_config, &[]);
    assert_success(&out_b);

    assert_eq!(out_a.stdout, out_b.stdout, "stdout report differs");
    for file in ["report.json", "galenet-proactive-seed7.ckpt", "history-seed7.jsonl"] {
        let left = std::fs::read(a.path().join(file)).unwrap();
        let right = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(left, right, "{file} differs between reruns");
    }
}

#[test]
fn proactive_training_never_opens_post_files() {
    let data = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(data.path(), 11);
    // Remove every post-disaster embedding; proactive training must not care.
    for scale in ["scale1", "scale4", "scale16", "scale32"] {
        std::fs::remove_file(data.path().join(format!("post_{scale}.emb"))).unwrap();
    }
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "logreg",
        "--scenario",
        "proactive",
        "--seeds",
        "1",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_success(&out);

    // The reactive scenario must fail: its files are gone.
    let out = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "logreg",
        "--scenario",
        "reactive",
        "--seeds",
        "1",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn logreg_warns_about_ignored_neural_flags() {
    let data = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(data.path(), 13);
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "logreg",
        "--seeds",
        "1",
        "--lr",
        "0.5",
        "--max-epochs",
        "3",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_success(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("--lr") && stderr.contains("--max-epochs"),
        "expected a warning naming the ignored flags: {stderr}"
    );
}

#[test]
fn evaluate_and_predict_round_trip() {
    let data = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(data.path(), 21);
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "galenet",
        "--seeds",
        "1",
        "--seed",
        "3",
        "--max-epochs",
        "4",
        "--batch-size",
        "64",
        "--lr",
        "0.01",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_success(&out);
    let checkpoint = out_dir.path().join("galenet-proactive-seed3.ckpt");
    assert!(checkpoint.exists());

    // evaluate: JSON parses and keeps the headline metric order.
    let out = run(&[
        "evaluate",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--split",
        "test",
    ]);
    assert_success(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(parsed["balanced_accuracy"].is_f64());
    assert!(parsed["confusion"].is_array());
    let ba = text.find("balanced_accuracy").unwrap();
    let pr = text.find("macro_pr_auc").unwrap();
    let roc = text.find("macro_roc_auc").unwrap();
    assert!(ba < pr && pr < roc, "headline metric order");

    // train split needs the explicit opt-in.
    let out = run(&[
        "evaluate",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--split",
        "train",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "evaluate",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--split",
        "train",
        "--allow-train",
    ]);
    assert_success(&out);

    // predict: structurally valid GeoJSON with the fixed palette.
    let geojson_path = out_dir.path().join("map.geojson");
    let out = run(&[
        "predict",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        geojson_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let geo: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&geojson_path).unwrap()).unwrap();
    assert_eq!(geo["type"], "FeatureCollection");
    let features = geo["features"].as_array().unwrap();
    assert_eq!(features.len(), 200);
    let palette = ["green", "wheat", "orange", "red"];
    for f in features {
        assert_eq!(f["type"], "Feature");
        assert_eq!(f["geometry"]["type"], "Polygon");
        let ring = f["geometry"]["coordinates"][0].as_array().unwrap();
        assert_eq!(ring.first(), ring.last(), "ring must be closed");
        let color = f["properties"]["severity_color"].as_str().unwrap();
        assert!(palette.contains(&color));
        let probs = f["properties"]["probs"].as_array().unwrap();
        let sum: f64 = probs.iter().map(|p| p.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        // Labels are present in this manifest, so correctness must be too.
        assert!(f["properties"]["correct"].is_boolean());
    }
}
