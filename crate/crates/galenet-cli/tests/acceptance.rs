//! CLI-level acceptance: command reruns are byte-identical and predict
//! output is valid GeoJSON. The library-level criteria live in the core
//! crate's `acceptance` target.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_galenet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path) -> PathBuf {
    let out = run(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "17",
        "--n-examples",
        "220",
        "--signal-strength",
        "4.0",
    ]);
    assert_success(&out);
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn train(manifest: &Path, out_dir: &Path) -> Output {
    run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "galenet",
        "--scenario",
        "proactive",
        "--seeds",
        "2",
        "--seed",
        "5",
        "--max-epochs",
        "4",
        "--batch-size",
        "64",
        "--lr",
        "0.01",
        "--out",
        out_dir.to_str().unwrap(),
    ])
}

#[test]
fn criterion_command_determinism() {
    let data = tempfile::tempdir().unwrap();
    let manifest = synth(data.path());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = train(&manifest, a.path());
    assert_success(&out_a);
    let out_b = train(&manifest, b.path());
    assert_success(&out_b);
    assert_eq!(out_a.stdout, out_b.stdout, "report stream differs");

    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n.ends_with(".ckpt")));
    assert!(names.contains(&"report.json".to_string()));
    for name in &names {
        let left = std::fs::read(a.path().join(name)).unwrap();
        let right = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between reruns");
    }
    println!("[PASS] determinism: identical train reruns give byte-identical checkpoints and reports");
}

#[test]
fn criterion_predict_output_is_geojson() {
    let data = tempfile::tempdir().unwrap();
    let manifest = synth(data.path());
    let out_dir = tempfile::tempdir().unwrap();
    assert_success(&train(&manifest, out_dir.path()));

    let geojson_path = out_dir.path().join("severity.geojson");
    let out = run(&[
        "predict",
        "--checkpoint",
        out_dir.path().join("galenet-proactive-seed5.ckpt").to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        geojson_path.to_str().unwrap(),
    ]);
    assert_success(&out);

    let value: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&geojson_path).unwrap()).unwrap();
    assert_eq!(value["type"], "FeatureCollection");
    let features = value["features"].as_array().unwrap();
    assert_eq!(features.len(), 220);
    for f in features {
        assert_eq!(f["type"], "Feature");
        let geom = &f["geometry"];
        assert_eq!(geom["type"], "Polygon");
        let rings = geom["coordinates"].as_array().unwrap();
        assert_eq!(rings.len(), 1);
        let ring = rings[0].as_array().unwrap();
        assert!(ring.len() >= 4, "linear ring needs 4+ positions");
        assert_eq!(ring.first(), ring.last(), "linear ring must close");
        for pos in ring {
            let lon = pos[0].as_f64().unwrap();
            let lat = pos[1].as_f64().unwrap();
            assert!((-180.0..180.0).contains(&lon));
            assert!((-90.0..=90.0).contains(&lat));
        }
        let props = &f["properties"];
        assert!(props["id"].is_string());
        assert!(["green", "wheat", "orange", "red"]
            .contains(&props["severity_color"].as_str().unwrap()));
        let probs = props["probs"].as_array().unwrap();
        assert_eq!(probs.len(), 4);
        let sum: f64 = probs.iter().map(|p| p.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "probabilities sum {sum}");
    }
    println!("[PASS] format: predict output is a valid GeoJSON FeatureCollection");
}
