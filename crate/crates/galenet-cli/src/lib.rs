//! Command-line surface for the damage-severity pipeline.
//!
//! Subcommands: `featurize` (feature cache CSVs), `synth` (materialize a
//! synthetic dataset), `train` (multi-seed experiment with checkpoints,
//! report and history), `evaluate` (metrics JSON on a split), and `predict`
//! (GeoJSON severity map). Set `GALENET_LOG` for verbosity.

mod commands;
mod geojson;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub use geojson::PredictionRecord;

#[derive(Debug, Parser)]
#[command(name = "galenet", version, about = "Multimodal hurricane damage-severity pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write per-building trajectory and weather feature tables as CSV.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the feature cache.
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize a deterministic synthetic dataset on disk.
    Synth {
        /// JSON config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of examples.
        #[arg(long)]
        n_examples: Option<usize>,
        /// Override the signal strength.
        #[arg(long)]
        signal_strength: Option<f64>,
    },
    /// Train a model over several seeds and write checkpoints + report.
    Train(TrainArgs),
    /// Print an evaluation report (JSON) for one split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Split to evaluate: train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Evaluating the train split silently invites leakage; require an
        /// explicit opt-in.
        #[arg(long)]
        allow_train: bool,
        /// Override the checkpoint's recorded scenario.
        #[arg(long)]
        scenario: Option<String>,
        /// Also write ROC curve points as CSV.
        #[arg(long)]
        roc_csv: Option<PathBuf>,
    },
    /// Write a GeoJSON FeatureCollection of per-building predictions.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the checkpoint's recorded scenario.
        #[arg(long)]
        scenario: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest; mutually exclusive with --synthetic.
    #[arg(long, conflicts_with = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Synthetic dataset config (JSON), generated in memory.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Model: logreg, concat-mlp or galenet.
    #[arg(long)]
    pub model: String,
    /// Scenario: proactive or reactive.
    #[arg(long, default_value = "proactive")]
    pub scenario: String,
    /// Number of seeds to train.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Base seed; runs use seed..seed+seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// LogReg only: all, image-only, weather-only or trajectory-only.
    #[arg(long)]
    pub features: Option<String>,
    /// Output directory for checkpoints, report and history.
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command; errors bubble up for exit-code mapping.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Featurize { manifest, out } => commands::featurize(&manifest, &out),
        Command::Synth {
            config,
            out,
            seed,
            n_examples,
            signal_strength,
        } => commands::synth(config.as_deref(), &out, seed, n_examples, signal_strength),
        Command::Train(args) => commands::train(&args),
        Command::Evaluate {
            checkpoint,
            manifest,
            split,
            allow_train,
            scenario,
            roc_csv,
        } => commands::evaluate(
            &checkpoint,
            &manifest,
            &split,
            allow_train,
            scenario.as_deref(),
            roc_csv.as_deref(),
        ),
        Command::Predict {
            checkpoint,
            manifest,
            out,
            scenario,
        } => commands::predict(&checkpoint, &manifest, &out, scenario.as_deref()),
    }
}

/// Exit code for a failed run: dataset/model errors are user-input problems
/// (2); anything else is internal (1).
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.chain().any(|c| c.downcast_ref::<galenet::Error>().is_some()) {
        2
    } else {
        1
    }
}
