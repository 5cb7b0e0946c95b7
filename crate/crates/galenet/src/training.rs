//! Training loop with early stopping and multi-seed experiment runs.
//!
//! Each run is a pure function of (architecture, data, config, seed): init,
//! shuffling and dropout all draw from streams derived from the seed, and
//! the best-validation-loss parameters are restored at the end. Experiments
//! train one model per seed (in parallel with the `parallel` feature) and
//! report mean and standard deviation per metric, merged in seed order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{AssembledDataset, Scenario};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::models::{
    combined_loss, train_logreg, ConcatMlpConfig, FeatureBatch, FeatureSelection, FusionModel,
    GaLeNetConfig, GaLeNetModel, ModelKind, DEFAULT_C_GRID, DEFAULT_FOCAL_GAMMA,
};
use crate::models::concat_mlp::ConcatMlpModel;
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::layers::softmax;
use crate::nn::lbfgs::LbfgsConfig;
use crate::nn::loss::focal_loss;
use crate::nn::rng::{StreamKind, StreamRng};
use crate::par;

/// Validation loss must drop by more than this to count as improvement.
pub const IMPROVEMENT_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub n_seeds: usize,
    pub scenario: Scenario,
    pub base_seed: u64,
    pub focal_gamma: f64,
    /// Per-class focal weights; `None` is uniform.
    pub focal_alpha: Option<Vec<f64>>,
    /// LogReg only: which modalities the linear model sees.
    pub logreg_features: FeatureSelection,
    /// LogReg only: the C grid searched on validation ROC AUC.
    pub logreg_c_grid: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 256,
            max_epochs: 200,
            patience: 5,
            n_seeds: 5,
            scenario: Scenario::Proactive,
            base_seed: 0,
            focal_gamma: DEFAULT_FOCAL_GAMMA,
            focal_alpha: None,
            logreg_features: FeatureSelection::All,
            logreg_c_grid: DEFAULT_C_GRID.to_vec(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.n_seeds == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidParameter(
                "patience, n_seeds, batch_size and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    fn alpha(&self) -> Vec<f64> {
        self.focal_alpha.clone().unwrap_or_else(|| vec![1.0; 4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_balanced_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    /// One JSON record per epoch, for external monitoring.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for rec in &self.epochs {
            serde_json::to_writer(&mut writer, rec)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// The early-stopping rule: track the best validation loss (strict
/// improvement by more than [`IMPROVEMENT_DELTA`]) and stop after
/// `patience` consecutive epochs without improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stalled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stalled: 0,
        }
    }

    /// Feeds the `epoch` (1-based) validation loss; returns whether this
    /// epoch improved and whether to stop.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, StopDecision) {
        let improved = val_loss < self.best - IMPROVEMENT_DELTA;
        if improved {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stalled = 0;
        } else {
            self.stalled += 1;
        }
        let decision = if self.stalled >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        (improved, decision)
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Architecture to instantiate per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NeuralArch {
    ConcatMlp(ConcatMlpConfig),
    GaLeNet(GaLeNetConfig),
}

enum LiveModel {
    ConcatMlp(ConcatMlpModel),
    GaLeNet(GaLeNetModel),
}

impl LiveModel {
    fn params(&self) -> Vec<&crate::nn::tensor::Tensor2> {
        match self {
            LiveModel::ConcatMlp(m) => m.params(),
            LiveModel::GaLeNet(m) => m.params(),
        }
    }

    fn clone_box(&self) -> LiveModel {
        match self {
            LiveModel::ConcatMlp(m) => LiveModel::ConcatMlp(m.clone()),
            LiveModel::GaLeNet(m) => LiveModel::GaLeNet(m.clone()),
        }
    }

    fn into_fusion(self) -> FusionModel {
        match self {
            LiveModel::ConcatMlp(m) => FusionModel::ConcatMlp(m),
            LiveModel::GaLeNet(m) => FusionModel::GaLeNet(m),
        }
    }

    /// Loss on a batch in eval mode (running statistics, no dropout).
    fn eval_loss(&self, batch: &FeatureBatch, gamma: f64, alpha: &[f64]) -> Result<f64> {
        match self {
            LiveModel::ConcatMlp(m) => {
                let out = m.forward_eval(batch)?;
                Ok(focal_loss(&out.main_logits, &batch.labels, gamma, alpha)?.0)
            }
            LiveModel::GaLeNet(m) => {
                let out = m.forward_eval(batch)?;
                let expect_aux = m.config.aux_heads;
                Ok(combined_loss(&out, &batch.labels, gamma, alpha, expect_aux)?.0)
            }
        }
    }

    fn eval_proba(&self, batch: &FeatureBatch) -> Result<crate::nn::tensor::Tensor2> {
        let logits = match self {
            LiveModel::ConcatMlp(m) => m.forward_eval(batch)?.main_logits,
            LiveModel::GaLeNet(m) => m.forward_eval(batch)?.main_logits,
        };
        Ok(softmax(&logits))
    }

    /// One optimization step on a batch; returns the train-mode loss.
    fn train_step(
        &mut self,
        batch: &FeatureBatch,
        gamma: f64,
        alpha: &[f64],
        dropout_rng: &mut StreamRng,
        adam: &mut AdamState,
    ) -> Result<f64> {
        match self {
            LiveModel::ConcatMlp(m) => {
                let (out, caches) = m.forward_train(batch)?;
                let (loss, d_logits) = focal_loss(&out.main_logits, &batch.labels, gamma, alpha)?;
                let grads = m.backward(&caches, &d_logits);
                adam.step(&mut m.params_mut(), &grads)?;
                Ok(loss)
            }
            LiveModel::GaLeNet(m) => {
                let (out, caches) = m.forward_train(batch, Some(dropout_rng))?;
                let expect_aux = m.config.aux_heads;
                let (loss, d_main, d_aux) =
                    combined_loss(&out, &batch.labels, gamma, alpha, expect_aux)?;
                let grads = m.backward(&caches, &d_main, d_aux.as_deref())?;
                m.apply_bn_updates(&caches);
                adam.step(&mut m.params_mut(), &grads)?;
                Ok(loss)
            }
        }
    }
}

/// Splits a shuffled index order into mini-batches. The final incomplete
/// batch is kept, unless it would be a single row, in which case it merges
/// into the previous batch (train-mode batchnorm needs at least two rows).
fn plan_batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order
        .chunks(batch_size)
        .map(|c| c.to_vec())
        .collect();
    if batches.len() >= 2 && batches.last().map(Vec::len) == Some(1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

/// Trains one freshly seeded model with early stopping and returns the
/// best-validation-loss parameters plus the per-epoch history.
pub fn train(
    arch: &NeuralArch,
    data: &AssembledDataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<(FusionModel, TrainHistory)> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if data.val.is_empty() {
        return Err(Error::EmptySplit("val".into()));
    }
    let train_batch = FeatureBatch::from_examples(&data.train)?;
    let val_batch = FeatureBatch::from_examples(&data.val)?;
    train_seeded(arch, &train_batch, &val_batch, config, seed)
}

fn train_seeded(
    arch: &NeuralArch,
    train_batch: &FeatureBatch,
    val_batch: &FeatureBatch,
    config: &TrainConfig,
    seed: u64,
) -> Result<(FusionModel, TrainHistory)> {
    let mut model = match arch {
        NeuralArch::ConcatMlp(c) => LiveModel::ConcatMlp(ConcatMlpModel::init(c.clone(), seed)?),
        NeuralArch::GaLeNet(c) => LiveModel::GaLeNet(GaLeNetModel::init(c.clone(), seed)?),
    };
    let alpha = config.alpha();
    let gamma = config.focal_gamma;
    let mut shuffle_rng = StreamRng::new(seed, StreamKind::Shuffle);
    let mut dropout_rng = StreamRng::new(seed, StreamKind::Dropout);
    let mut adam = AdamState::new(
        &model.params(),
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );

    let n = train_batch.len();
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best_model = model.clone_box();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for indices in plan_batches(&order, config.batch_size) {
            let batch = train_batch.select(&indices);
            let loss = model.train_step(&batch, gamma, &alpha, &mut dropout_rng, &mut adam)?;
            loss_sum += loss * indices.len() as f64;
        }
        let train_loss = loss_sum / n as f64;

        let val_loss = model.eval_loss(val_batch, gamma, &alpha)?;
        let val_proba = model.eval_proba(val_batch)?;
        let val_preds = crate::metrics::argmax_predictions(&val_proba);
        let val_ba = crate::metrics::balanced_accuracy(&val_batch.labels, &val_preds)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_balanced_accuracy: val_ba,
        });

        let (improved, decision) = stopper.observe(epoch, val_loss);
        if improved {
            best_model = model.clone_box();
        }
        if decision == StopDecision::Stop {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    let history = TrainHistory {
        epochs,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        stop_reason,
    };
    Ok((best_model.into_fusion(), history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    // A constant sample has exactly zero spread; skip the arithmetic that
    // would smear it with rounding noise.
    if values.windows(2).all(|w| w[0] == w[1]) {
        return MetricSummary {
            mean: values[0],
            std: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricSummary {
        mean,
        std: var.sqrt(),
    }
}

/// Mean and standard deviation of each metric over the seeds, plus every
/// per-seed report. Field order mirrors the reporting convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: ModelKind,
    pub scenario: Scenario,
    pub n_seeds: usize,
    pub seeds: Vec<u64>,
    pub balanced_accuracy: MetricSummary,
    pub macro_pr_auc: MetricSummary,
    pub macro_roc_auc: MetricSummary,
    pub per_seed: Vec<EvalReport>,
}

/// One trained model with its test report and (for neural models) history.
pub struct SeedRun {
    pub seed: u64,
    pub model: FusionModel,
    pub report: EvalReport,
    pub history: Option<TrainHistory>,
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub runs: Vec<SeedRun>,
}

/// Trains `n_seeds` models with seeds `base..base + n`, evaluates each on
/// the test split, and aggregates. Seed runs are independent; results merge
/// deterministically in seed order.
pub fn run_experiment(
    kind: ModelKind,
    data: &AssembledDataset,
    config: &TrainConfig,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    if data.test.is_empty() {
        return Err(Error::EmptySplit("test".into()));
    }
    let test_batch = FeatureBatch::from_examples(&data.test)?;
    let arch = match kind {
        ModelKind::ConcatMlp => Some(NeuralArch::ConcatMlp(ConcatMlpConfig::new(
            data.image_dim,
            data.weather_dim,
        ))),
        ModelKind::Galenet => Some(NeuralArch::GaLeNet(GaLeNetConfig {
            image_dim: data.image_dim,
            weather_dim: data.weather_dim,
            ..GaLeNetConfig::default()
        })),
        ModelKind::Logreg => None,
    };
    let (train_batch, val_batch) = match kind {
        ModelKind::Logreg => (
            Some(FeatureBatch::from_examples(&data.train)?),
            Some(FeatureBatch::from_examples(&data.val)?),
        ),
        _ => (None, None),
    };

    let runs: Vec<Result<SeedRun>> = par::map_range(config.n_seeds, |i| {
        let seed = config.base_seed + i as u64;
        let (model, history) = match (&arch, &train_batch, &val_batch) {
            (Some(arch), _, _) => {
                let (model, history) = train(arch, data, config, seed)?;
                (model, Some(history))
            }
            (None, Some(train_b), Some(val_b)) => {
                let fit = train_logreg(
                    config.logreg_features,
                    train_b,
                    val_b,
                    &config.logreg_c_grid,
                    &LbfgsConfig {
                        tol: 1e-6,
                        ..LbfgsConfig::default()
                    },
                )?;
                (FusionModel::LogReg(fit.model), None)
            }
            _ => unreachable!("arch/batches are set per kind"),
        };
        let proba = model.predict_proba(&test_batch)?;
        let report = evaluate(&test_batch.labels, &proba)?;
        Ok(SeedRun {
            seed,
            model,
            report,
            history,
        })
    });
    let runs: Vec<SeedRun> = runs.into_iter().collect::<Result<_>>()?;

    let gather = |f: fn(&EvalReport) -> f64| -> MetricSummary {
        summarize(&runs.iter().map(|r| f(&r.report)).collect::<Vec<_>>())
    };
    let report = ExperimentReport {
        model: kind,
        scenario: config.scenario,
        n_seeds: config.n_seeds,
        seeds: runs.iter().map(|r| r.seed).collect(),
        balanced_accuracy: gather(|r| r.balanced_accuracy),
        macro_pr_auc: gather(|r| r.macro_pr_auc),
        macro_roc_auc: gather(|r| r.macro_roc_auc),
        per_seed: runs.iter().map(|r| r.report.clone()).collect(),
    };
    Ok(ExperimentOutcome { report, runs })
}
