//! The three classifier architectures and their shared plumbing.
//!
//! [`LogRegModel`] is the linear baseline fit by L-BFGS over a C grid;
//! [`ConcatMlpModel`] is the naive early-concatenation network; and
//! [`GaLeNetModel`] late-fuses six modality-specific encoders with auxiliary
//! per-scale heads. All of them consume a [`FeatureBatch`].

pub mod checkpoint;
pub mod concat_mlp;
pub mod galenet;
pub mod logreg;

use serde::{Deserialize, Serialize};

use crate::dataset::{MultimodalExample, PredictionInput, N_SCALES};
use crate::error::{Error, Result};
use crate::nn::loss::focal_loss;
use crate::nn::softmax;
use crate::nn::tensor::Tensor2;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointMetadata, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use concat_mlp::{ConcatMlpConfig, ConcatMlpModel};
pub use galenet::{GaLeNetConfig, GaLeNetModel, TRAJECTORY_DIM};
pub use logreg::{train_logreg, LogRegConfig, LogRegFit, LogRegModel, DEFAULT_C_GRID};

/// Focal-loss focusing default.
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logreg,
    ConcatMlp,
    Galenet,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::ConcatMlp => "concat-mlp",
            ModelKind::Galenet => "galenet",
        }
    }
}

/// A batch of aligned features in model layout: image scales concatenated
/// column-wise (scale-major), weather, trajectory, plus labels when known.
#[derive(Debug, Clone)]
pub struct FeatureBatch {
    pub image: Tensor2,
    pub weather: Tensor2,
    pub trajectory: Tensor2,
    pub labels: Vec<usize>,
}

impl FeatureBatch {
    pub fn from_examples(examples: &[MultimodalExample]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("feature batch from no examples".into()));
        }
        let image_dim = examples[0].image[0].len();
        let mut image = Tensor2::zeros(examples.len(), N_SCALES * image_dim);
        let mut weather = Tensor2::zeros(examples.len(), examples[0].weather.len());
        let mut trajectory = Tensor2::zeros(examples.len(), examples[0].trajectory.len());
        let mut labels = Vec::with_capacity(examples.len());
        for (r, e) in examples.iter().enumerate() {
            for (k, scale) in e.image.iter().enumerate() {
                if scale.len() != image_dim {
                    return Err(Error::ShapeMismatch(
                        "inconsistent image embedding widths in batch".into(),
                    ));
                }
                image.row_mut(r)[k * image_dim..(k + 1) * image_dim].copy_from_slice(scale);
            }
            weather.row_mut(r).copy_from_slice(&e.weather);
            trajectory.row_mut(r).copy_from_slice(&e.trajectory);
            labels.push(e.label.index());
        }
        Ok(Self {
            image,
            weather,
            trajectory,
            labels,
        })
    }

    /// Batch for inference; rows without labels leave `labels` empty.
    pub fn from_prediction_inputs(inputs: &[PredictionInput]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyInput("feature batch from no inputs".into()));
        }
        let image_dim = inputs[0].image[0].len();
        let mut image = Tensor2::zeros(inputs.len(), N_SCALES * image_dim);
        let mut weather = Tensor2::zeros(inputs.len(), inputs[0].weather.len());
        let mut trajectory = Tensor2::zeros(inputs.len(), inputs[0].trajectory.len());
        let mut labels = Vec::new();
        for (r, e) in inputs.iter().enumerate() {
            for (k, scale) in e.image.iter().enumerate() {
                image.row_mut(r)[k * image_dim..(k + 1) * image_dim].copy_from_slice(scale);
            }
            weather.row_mut(r).copy_from_slice(&e.weather);
            trajectory.row_mut(r).copy_from_slice(&e.trajectory);
            if let Some(l) = e.label {
                labels.push(l.index());
            }
        }
        if !labels.is_empty() && labels.len() != inputs.len() {
            return Err(Error::Schema(
                "either every building carries a label or none does".into(),
            ));
        }
        Ok(Self {
            image,
            weather,
            trajectory,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.image.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image_dim(&self) -> usize {
        self.image.cols() / N_SCALES
    }

    /// Gathers the given rows into a new batch.
    pub fn select(&self, indices: &[usize]) -> Self {
        let gather = |t: &Tensor2| {
            let mut out = Tensor2::zeros(indices.len(), t.cols());
            for (r, &i) in indices.iter().enumerate() {
                out.row_mut(r).copy_from_slice(t.row(i));
            }
            out
        };
        Self {
            image: gather(&self.image),
            weather: gather(&self.weather),
            trajectory: gather(&self.trajectory),
            labels: if self.labels.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.labels[i]).collect()
            },
        }
    }

    /// All modalities concatenated: `[E_i1..E_i4, E_w, E_t]`.
    pub fn concat_all(&self) -> Tensor2 {
        Tensor2::hconcat(&[&self.image, &self.weather, &self.trajectory])
    }
}

/// Which modalities a linear model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSelection {
    All,
    ImageOnly,
    WeatherOnly,
    TrajectoryOnly,
}

impl FeatureSelection {
    pub fn extract(self, batch: &FeatureBatch) -> Tensor2 {
        match self {
            FeatureSelection::All => batch.concat_all(),
            FeatureSelection::ImageOnly => batch.image.clone(),
            FeatureSelection::WeatherOnly => batch.weather.clone(),
            FeatureSelection::TrajectoryOnly => batch.trajectory.clone(),
        }
    }

    pub fn width(self, image_dim: usize, weather_dim: usize) -> usize {
        match self {
            FeatureSelection::All => N_SCALES * image_dim + weather_dim + TRAJECTORY_DIM,
            FeatureSelection::ImageOnly => N_SCALES * image_dim,
            FeatureSelection::WeatherOnly => weather_dim,
            FeatureSelection::TrajectoryOnly => TRAJECTORY_DIM,
        }
    }
}

/// Logits per head; auxiliary heads are present only on the late-fusion
/// network with `aux_heads` enabled.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub main_logits: Tensor2,
    pub aux_logits: Option<Vec<Tensor2>>,
}

/// Sum of focal losses over the auxiliary heads plus the main head, equally
/// weighted, with the gradient for every head.
pub fn combined_loss(
    output: &ModelOutput,
    labels: &[usize],
    gamma: f64,
    alpha: &[f64],
    expect_aux: bool,
) -> Result<(f64, Tensor2, Option<Vec<Tensor2>>)> {
    if expect_aux && output.aux_logits.is_none() {
        return Err(Error::ShapeMismatch(
            "auxiliary heads enabled but output carries no aux logits".into(),
        ));
    }
    let (mut total, main_grad) = focal_loss(&output.main_logits, labels, gamma, alpha)?;
    let aux_grads = match &output.aux_logits {
        Some(heads) => {
            let mut grads = Vec::with_capacity(heads.len());
            for logits in heads {
                let (l, g) = focal_loss(logits, labels, gamma, alpha)?;
                total += l;
                grads.push(g);
            }
            Some(grads)
        }
        None => None,
    };
    Ok((total, main_grad, aux_grads))
}

/// Any of the three classifiers, as stored in checkpoints.
#[derive(Debug, Clone)]
pub enum FusionModel {
    LogReg(LogRegModel),
    ConcatMlp(ConcatMlpModel),
    GaLeNet(GaLeNetModel),
}

impl FusionModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FusionModel::LogReg(_) => ModelKind::Logreg,
            FusionModel::ConcatMlp(_) => ModelKind::ConcatMlp,
            FusionModel::GaLeNet(_) => ModelKind::Galenet,
        }
    }

    /// Eval-mode main logits.
    pub fn predict_logits(&self, batch: &FeatureBatch) -> Result<Tensor2> {
        match self {
            FusionModel::LogReg(m) => m.logits(batch),
            FusionModel::ConcatMlp(m) => Ok(m.forward_eval(batch)?.main_logits),
            FusionModel::GaLeNet(m) => Ok(m.forward_eval(batch)?.main_logits),
        }
    }

    /// Eval-mode class probabilities (softmax over the main logits).
    pub fn predict_proba(&self, batch: &FeatureBatch) -> Result<Tensor2> {
        Ok(softmax(&self.predict_logits(batch)?))
    }

    /// Trainable parameter count: weights, biases, batchnorm gamma/beta.
    /// Running statistics are state, not parameters.
    pub fn count_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn params(&self) -> Vec<&Tensor2> {
        match self {
            FusionModel::LogReg(m) => m.params(),
            FusionModel::ConcatMlp(m) => m.params(),
            FusionModel::GaLeNet(m) => m.params(),
        }
    }
}

/// Flattens parameter tensors into one vector (gradient-check plumbing).
pub fn flatten_params(params: &[&Tensor2]) -> Vec<f64> {
    params.iter().flat_map(|t| t.data().iter().copied()).collect()
}

/// Writes a flat vector back into parameter tensors of matching total size.
pub fn assign_params(params: &mut [&mut Tensor2], flat: &[f64]) {
    let mut offset = 0;
    for t in params.iter_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, flat.len(), "flat parameter vector size");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DamageLabel;

    fn tiny_examples(n: usize, image_dim: usize) -> Vec<MultimodalExample> {
        (0..n)
            .map(|i| MultimodalExample {
                building_id: format!("b{i}"),
                image: std::array::from_fn(|k| {
                    (0..image_dim).map(|j| (i + k + j) as f64 * 0.1).collect()
                }),
                weather: vec![i as f64 * 0.2; 3],
                trajectory: vec![i as f64, 0.5, -0.5],
                label: DamageLabel::from_index((i % 4) as u8).unwrap(),
            })
            .collect()
    }

    #[test]
    fn feature_batch_lays_out_scales_scale_major() {
        let examples = tiny_examples(2, 3);
        let batch = FeatureBatch::from_examples(&examples).unwrap();
        assert_eq!(batch.image.shape(), (2, 12));
        assert_eq!(batch.image_dim(), 3);
        // Row 0, scale 1 occupies columns 3..6.
        assert_eq!(&batch.image.row(0)[3..6], examples[0].image[1].as_slice());
        let all = batch.concat_all();
        assert_eq!(all.cols(), 12 + 3 + 3);
    }

    #[test]
    fn select_gathers_rows_and_labels() {
        let examples = tiny_examples(5, 2);
        let batch = FeatureBatch::from_examples(&examples).unwrap();
        let sub = batch.select(&[4, 0]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.labels, vec![0, 0]);
        assert_eq!(sub.image.row(0), batch.image.row(4));
    }

    #[test]
    fn combined_loss_of_identical_heads_is_five_times_one_head() {
        let logits = Tensor2::from_vec(2, 4, vec![0.3, -0.1, 0.2, 0.0, 1.0, 0.5, -0.5, 0.1]).unwrap();
        let labels = [1usize, 2];
        let alpha = [1.0; 4];
        let single = focal_loss(&logits, &labels, 2.0, &alpha).unwrap().0;
        let output = ModelOutput {
            main_logits: logits.clone(),
            aux_logits: Some(vec![logits.clone(); 4]),
        };
        let (total, _, aux) = combined_loss(&output, &labels, 2.0, &alpha, true).unwrap();
        assert!((total - 5.0 * single).abs() < 1e-12);
        assert_eq!(aux.unwrap().len(), 4);
    }

    #[test]
    fn combined_loss_without_aux_is_the_main_loss() {
        let logits = Tensor2::from_vec(1, 4, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let output = ModelOutput {
            main_logits: logits.clone(),
            aux_logits: None,
        };
        let (total, _, aux) = combined_loss(&output, &[0], 2.0, &[1.0; 4], false).unwrap();
        let single = focal_loss(&logits, &[0], 2.0, &[1.0; 4]).unwrap().0;
        assert_eq!(total, single);
        assert!(aux.is_none());
    }

    #[test]
    fn missing_aux_when_expected_is_an_error() {
        let output = ModelOutput {
            main_logits: Tensor2::zeros(1, 4),
            aux_logits: None,
        };
        assert!(combined_loss(&output, &[0], 2.0, &[1.0; 4], true).is_err());
    }

    #[test]
    fn perfect_one_hot_predictions_give_zero_combined_loss() {
        let mut logits = Tensor2::zeros(4, 4);
        for r in 0..4 {
            logits.set(r, r, 300.0);
        }
        let labels = [0usize, 1, 2, 3];
        let output = ModelOutput {
            main_logits: logits.clone(),
            aux_logits: Some(vec![logits; 4]),
        };
        let (total, ..) = combined_loss(&output, &labels, 2.0, &[1.0; 4], true).unwrap();
        assert!(total.abs() < 1e-12);
    }
}
