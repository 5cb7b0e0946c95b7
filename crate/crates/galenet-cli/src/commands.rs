//! Subcommand implementations.

use std::path::Path;

use anyhow::{bail, Context};
use galenet::dataset::{
    assemble_examples, assemble_features, generate_synthetic, load_manifest_with,
    synthetic::write_synthetic_dataset, compute_raw_features, DatasetHandle, EmbeddingCheck,
    NormStats, Scenario, Split, SyntheticConfig,
};
use galenet::metrics::{argmax_predictions, evaluate as evaluate_scores, write_roc_csv};
use galenet::models::{
    load_checkpoint, save_checkpoint, CheckpointMetadata, FeatureBatch, FeatureSelection,
    ModelKind,
};
use galenet::training::{run_experiment, TrainConfig};

use crate::geojson::{self, PredictionRecord};
use crate::TrainArgs;

fn parse_scenario(s: &str) -> anyhow::Result<Scenario> {
    match s {
        "proactive" => Ok(Scenario::Proactive),
        "reactive" => Ok(Scenario::Reactive),
        other => Err(galenet::Error::InvalidParameter(format!(
            "scenario must be proactive or reactive, got {other:?}"
        ))
        .into()),
    }
}

fn parse_model(s: &str) -> anyhow::Result<ModelKind> {
    match s {
        "logreg" => Ok(ModelKind::Logreg),
        "concat-mlp" => Ok(ModelKind::ConcatMlp),
        "galenet" => Ok(ModelKind::Galenet),
        other => Err(galenet::Error::InvalidParameter(format!(
            "model must be logreg, concat-mlp or galenet, got {other:?}"
        ))
        .into()),
    }
}

fn parse_features(s: &str) -> anyhow::Result<FeatureSelection> {
    match s {
        "all" => Ok(FeatureSelection::All),
        "image-only" => Ok(FeatureSelection::ImageOnly),
        "weather-only" => Ok(FeatureSelection::WeatherOnly),
        "trajectory-only" => Ok(FeatureSelection::TrajectoryOnly),
        other => Err(galenet::Error::InvalidParameter(format!(
            "features must be all, image-only, weather-only or trajectory-only, got {other:?}"
        ))
        .into()),
    }
}

fn parse_split(s: &str) -> anyhow::Result<Split> {
    Ok(Split::parse(s)?)
}

pub fn featurize(manifest: &Path, out: &Path) -> anyhow::Result<()> {
    let handle = load_manifest_with(manifest, EmbeddingCheck::None)?;
    let raw = compute_raw_features(&handle)?;
    std::fs::create_dir_all(out)?;

    let mut tw = csv::Writer::from_path(out.join("trajectory_features.csv"))?;
    tw.write_record(["building_id", "disaster_id", "distance_km", "wind_kt", "pressure_mb"])?;
    for (b, f) in handle.buildings().iter().zip(&raw.trajectory) {
        tw.write_record([
            b.id.clone(),
            b.disaster_id.clone(),
            format!("{}", f.distance_km),
            format!("{}", f.wind_kt),
            format!("{}", f.pressure_mb),
        ])?;
    }
    tw.flush()?;

    let n_features = raw.weather.values().next().map_or(0, Vec::len);
    let mut ww = csv::Writer::from_path(out.join("weather_features.csv"))?;
    let mut header = vec!["building_id".to_string(), "disaster_id".to_string()];
    header.extend((0..n_features).map(|i| format!("f{i}")));
    ww.write_record(&header)?;
    for b in handle.buildings() {
        let mut record = vec![b.id.clone(), b.disaster_id.clone()];
        record.extend(raw.weather[&b.disaster_id].iter().map(|v| format!("{v}")));
        ww.write_record(&record)?;
    }
    ww.flush()?;

    log::info!(
        "wrote feature tables for {} buildings to {}",
        handle.buildings().len(),
        out.display()
    );
    Ok(())
}

pub fn synth(
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    n_examples: Option<usize>,
    signal_strength: Option<f64>,
) -> anyhow::Result<()> {
    let mut cfg: SyntheticConfig = match config {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading synthetic config {}", path.display()))?;
            serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing synthetic config {}", path.display()))?
        }
        None => SyntheticConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = n_examples {
        cfg.n_examples = n;
    }
    if let Some(s) = signal_strength {
        cfg.signal_strength = s;
    }
    let manifest = write_synthetic_dataset(&cfg, out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn load_train_dataset(args: &TrainArgs, scenario: Scenario) -> anyhow::Result<DatasetHandle> {
    match (&args.manifest, &args.synthetic) {
        (Some(path), None) => {
            Ok(load_manifest_with(path, EmbeddingCheck::Scenario(scenario))?)
        }
        (None, Some(path)) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading synthetic config {}", path.display()))?;
            let cfg: SyntheticConfig = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing synthetic config {}", path.display()))?;
            Ok(generate_synthetic(&cfg)?)
        }
        _ => bail!("exactly one of --manifest or --synthetic is required"),
    }
}

pub fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let scenario = parse_scenario(&args.scenario)?;
    let kind = parse_model(&args.model)?;

    if kind == ModelKind::Logreg {
        let ignored: Vec<&str> = [
            args.batch_size.map(|_| "--batch-size"),
            args.lr.map(|_| "--lr"),
            args.patience.map(|_| "--patience"),
            args.max_epochs.map(|_| "--max-epochs"),
        ]
        .into_iter()
        .flatten()
        .collect();
        if !ignored.is_empty() {
            log::warn!("logreg ignores neural-training flags: {}", ignored.join(", "));
        }
    }

    let mut config = TrainConfig {
        scenario,
        ..TrainConfig::default()
    };
    if let Some(s) = args.seeds {
        config.n_seeds = s;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }
    if let Some(p) = args.patience {
        config.patience = p;
    }
    if let Some(e) = args.max_epochs {
        config.max_epochs = e;
    }
    if let Some(f) = &args.features {
        config.logreg_features = parse_features(f)?;
    }

    let handle = load_train_dataset(args, scenario)?;
    let data = assemble_examples(&handle, scenario)?;
    let outcome = run_experiment(kind, &data, &config)?;

    std::fs::create_dir_all(&args.out)?;
    let report_json = serde_json::to_string_pretty(&outcome.report)? + "\n";
    std::fs::write(args.out.join("report.json"), &report_json)?;
    for run in &outcome.runs {
        let name = format!("{}-{}-seed{}.ckpt", kind.as_str(), scenario.as_str(), run.seed);
        let metadata = CheckpointMetadata {
            seed: run.seed,
            epochs_trained: run.history.as_ref().map_or(0, |h| h.epochs.len()),
            best_epoch: run.history.as_ref().map(|h| h.best_epoch),
            best_val_loss: run.history.as_ref().map(|h| h.best_val_loss),
            scenario: Some(scenario),
        };
        save_checkpoint(&run.model, Some(&data.norm), &metadata, &args.out.join(name))?;
        if let Some(history) = &run.history {
            let file = std::fs::File::create(
                args.out.join(format!("history-seed{}.jsonl", run.seed)),
            )?;
            history.write_jsonl(std::io::BufWriter::new(file))?;
        }
    }
    print!("{report_json}");
    Ok(())
}

fn resolve_scenario(
    flag: Option<&str>,
    metadata: &CheckpointMetadata,
) -> anyhow::Result<Scenario> {
    match flag {
        Some(s) => parse_scenario(s),
        None => metadata.scenario.ok_or_else(|| {
            galenet::Error::InvalidParameter(
                "checkpoint records no scenario; pass --scenario".into(),
            )
            .into()
        }),
    }
}

fn norm_or_fail(norm: Option<NormStats>, checkpoint: &Path) -> anyhow::Result<NormStats> {
    norm.ok_or_else(|| {
        galenet::Error::CorruptedCheckpoint(format!(
            "{}: no standardization statistics stored",
            checkpoint.display()
        ))
        .into()
    })
}

pub fn evaluate(
    checkpoint: &Path,
    manifest: &Path,
    split: &str,
    allow_train: bool,
    scenario_flag: Option<&str>,
    roc_csv: Option<&Path>,
) -> anyhow::Result<()> {
    let split = parse_split(split)?;
    if split == Split::Train && !allow_train {
        return Err(galenet::Error::InvalidParameter(
            "evaluating the train split needs --allow-train".into(),
        )
        .into());
    }
    let (model, norm, metadata) = load_checkpoint(checkpoint)?;
    let scenario = resolve_scenario(scenario_flag, &metadata)?;
    let norm = norm_or_fail(norm, checkpoint)?;
    let handle = load_manifest_with(manifest, EmbeddingCheck::Scenario(scenario))?;
    let inputs = assemble_features(&handle, scenario, &norm)?;

    let selected: Vec<_> = handle
        .buildings()
        .iter()
        .zip(inputs)
        .filter(|(b, _)| b.split == split)
        .map(|(_, i)| i)
        .collect();
    if selected.is_empty() {
        return Err(galenet::Error::EmptySplit(split.as_str().into()).into());
    }
    if selected.iter().any(|i| i.label.is_none()) {
        return Err(galenet::Error::Schema(format!(
            "split {} holds unlabeled buildings; cannot evaluate",
            split.as_str()
        ))
        .into());
    }
    let batch = FeatureBatch::from_prediction_inputs(&selected)?;
    let proba = model.predict_proba(&batch)?;
    let report = evaluate_scores(&batch.labels, &proba)?;
    if let Some(path) = roc_csv {
        write_roc_csv(&report, std::fs::File::create(path)?)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn predict(
    checkpoint: &Path,
    manifest: &Path,
    out: &Path,
    scenario_flag: Option<&str>,
) -> anyhow::Result<()> {
    let (model, norm, metadata) = load_checkpoint(checkpoint)?;
    let scenario = resolve_scenario(scenario_flag, &metadata)?;
    let norm = norm_or_fail(norm, checkpoint)?;
    let handle = load_manifest_with(manifest, EmbeddingCheck::Scenario(scenario))?;
    let inputs = assemble_features(&handle, scenario, &norm)?;
    let batch = FeatureBatch::from_prediction_inputs(&inputs)?;
    let proba = model.predict_proba(&batch)?;
    let predictions = argmax_predictions(&proba);

    let mut features = Vec::with_capacity(inputs.len());
    for (row, building) in handle.buildings().iter().enumerate() {
        let probs: [f64; 4] = proba.row(row).try_into().map_err(|_| {
            galenet::Error::ShapeMismatch("predictions must have 4 classes".into())
        })?;
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let record = PredictionRecord {
            building_id: building.id.clone(),
            predicted: galenet::dataset::DamageLabel::from_index(predictions[row] as u8)?,
            probs,
            scenario,
        };
        features.push(geojson::feature(&record, building));
    }
    let collection = geojson::feature_collection(features);
    std::fs::write(out, serde_json::to_string_pretty(&collection)? + "\n")?;
    log::info!("wrote {} predictions to {}", handle.buildings().len(), out.display());
    Ok(())
}
