//! Multinomial logistic regression fit by L-BFGS.
//!
//! The objective is mean cross-entropy plus `||W||^2 / (2 C N)` (bias
//! unpenalized). The inverse regularization strength C is grid-searched;
//! the fit with the best validation macro ROC AUC wins, earlier (smaller)
//! C on ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::roc_auc_macro;
use crate::models::{FeatureBatch, FeatureSelection};
use crate::nn::layers::softmax;
use crate::nn::lbfgs::{lbfgs_minimize, LbfgsConfig};
use crate::nn::loss::cross_entropy;
use crate::nn::tensor::Tensor2;

/// Seven log-spaced values spanning `10^-3 .. 10^3`.
pub const DEFAULT_C_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub input_dim: usize,
    pub n_classes: usize,
    pub features: FeatureSelection,
}

impl LogRegConfig {
    pub fn new(input_dim: usize, features: FeatureSelection) -> Self {
        Self {
            input_dim,
            n_classes: 4,
            features,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogRegModel {
    pub config: LogRegConfig,
    pub weight: Tensor2,
    pub bias: Tensor2,
    /// Chosen inverse regularization strength, once fitted.
    pub chosen_c: Option<f64>,
}

/// Per-C search record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateFit {
    pub c: f64,
    pub val_roc_auc: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct LogRegFit {
    pub model: LogRegModel,
    pub chosen_c: f64,
    pub candidates: Vec<CandidateFit>,
}

impl LogRegModel {
    pub fn build(input_dim: usize, features: FeatureSelection) -> Self {
        let config = LogRegConfig::new(input_dim, features);
        Self {
            weight: Tensor2::zeros(config.input_dim, config.n_classes),
            bias: Tensor2::zeros(1, config.n_classes),
            config,
            chosen_c: None,
        }
    }

    pub fn logits_of(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "logreg expects {} features, got {}",
                self.config.input_dim,
                x.cols()
            )));
        }
        let mut y = x.matmul(&self.weight);
        y.add_row_broadcast(&self.bias);
        Ok(y)
    }

    pub fn logits(&self, batch: &FeatureBatch) -> Result<Tensor2> {
        self.logits_of(&self.config.features.extract(batch))
    }

    pub fn params(&self) -> Vec<&Tensor2> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn param_names(&self) -> Vec<String> {
        vec!["weight".into(), "bias".into()]
    }

    fn unpack(flat: &[f64], input_dim: usize, n_classes: usize) -> (Tensor2, Tensor2) {
        let w = Tensor2::from_vec(input_dim, n_classes, flat[..input_dim * n_classes].to_vec())
            .expect("packed weight");
        let b = Tensor2::from_vec(1, n_classes, flat[input_dim * n_classes..].to_vec())
            .expect("packed bias");
        (w, b)
    }
}

/// Regularized objective and gradient on the flattened `[W | b]` vector.
pub fn logreg_objective(
    flat: &[f64],
    x: &Tensor2,
    labels: &[usize],
    n_classes: usize,
    c: f64,
) -> (f64, Vec<f64>) {
    let n = x.rows() as f64;
    let input_dim = x.cols();
    let (w, b) = LogRegModel::unpack(flat, input_dim, n_classes);
    let mut logits = x.matmul(&w);
    logits.add_row_broadcast(&b);
    let (ce, d_logits) = cross_entropy(&logits, labels).expect("validated labels");
    let reg = w.sum_of_squares() / (2.0 * c * n);
    let loss = ce + reg;

    // d_logits already carries the 1/N factor from the mean.
    let mut dw = x.matmul_tn(&d_logits);
    let scale = 1.0 / (c * n);
    for (dv, wv) in dw.data_mut().iter_mut().zip(w.data()) {
        *dv += wv * scale;
    }
    let db = d_logits.sum_rows();
    let mut grad = dw.data().to_vec();
    grad.extend_from_slice(db.data());
    (loss, grad)
}

/// Fits one multinomial model per C on the train matrix, scores each on the
/// validation split by macro ROC AUC, and returns the best. Non-convergence
/// is flagged per candidate, never fatal.
pub fn train_logreg(
    features: FeatureSelection,
    train: &FeatureBatch,
    val: &FeatureBatch,
    c_grid: &[f64],
    lbfgs: &LbfgsConfig,
) -> Result<LogRegFit> {
    if train.labels.is_empty() || val.labels.is_empty() {
        return Err(Error::EmptySplit("logreg needs train and val labels".into()));
    }
    let distinct: std::collections::BTreeSet<usize> = train.labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateLabels(format!(
            "training labels collapse to a single class {distinct:?}"
        )));
    }
    let n_classes = 4;
    let x_train = features.extract(train);
    let x_val = features.extract(val);
    let input_dim = x_train.cols();

    let mut best: Option<(usize, f64)> = None;
    let mut candidates = Vec::with_capacity(c_grid.len());
    let mut fitted: Vec<(Tensor2, Tensor2)> = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "C must be positive, got {c}"
            )));
        }
        let x0 = vec![0.0; input_dim * n_classes + n_classes];
        let report = lbfgs_minimize(
            |flat| logreg_objective(flat, &x_train, &train.labels, n_classes, c),
            x0,
            lbfgs,
        );
        if !report.converged {
            log::warn!(
                "logreg C={c}: L-BFGS stopped without convergence (grad norm {:.3e} after {} iterations)",
                report.grad_inf_norm,
                report.iterations
            );
        }
        let (w, b) = LogRegModel::unpack(&report.x, input_dim, n_classes);
        let mut val_logits = x_val.matmul(&w);
        val_logits.add_row_broadcast(&b);
        let val_auc = roc_auc_macro(&val.labels, &softmax(&val_logits))?;
        candidates.push(CandidateFit {
            c,
            val_roc_auc: val_auc,
            converged: report.converged,
            iterations: report.iterations,
        });
        fitted.push((w, b));
        let better = match best {
            None => true,
            Some((_, best_auc)) => val_auc > best_auc,
        };
        if better {
            best = Some((candidates.len() - 1, val_auc));
        }
    }
    let (best_idx, _) = best.expect("at least one C");
    let chosen_c = candidates[best_idx].c;
    let (weight, bias) = fitted.swap_remove(best_idx);
    Ok(LogRegFit {
        model: LogRegModel {
            config: LogRegConfig::new(input_dim, features),
            weight,
            bias,
            chosen_c: Some(chosen_c),
        },
        chosen_c,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{argmax_predictions, balanced_accuracy};
    use crate::nn::rng::{StreamKind, StreamRng};

    /// Two separable 2-D blobs mapped into the trajectory slot (the other
    /// modalities are zero-width-free but unused by TrajectoryOnly).
    fn blob_batch(n: usize, seed: u64, gap: f64) -> FeatureBatch {
        let mut rng = StreamRng::new(seed, StreamKind::Synthetic);
        let mut trajectory = Tensor2::zeros(n, 3);
        let mut labels = Vec::with_capacity(n);
        for r in 0..n {
            let class = r % 2;
            let cx = if class == 0 { -gap } else { gap };
            trajectory.set(r, 0, cx + rng.normal() * 0.3);
            trajectory.set(r, 1, rng.normal() * 0.3);
            trajectory.set(r, 2, 1.0);
            labels.push(class);
        }
        FeatureBatch {
            image: Tensor2::zeros(n, 4),
            weather: Tensor2::zeros(n, 1),
            trajectory,
            labels,
        }
    }

    #[test]
    fn separable_blobs_reach_high_train_accuracy() {
        let train = blob_batch(200, 1, 2.0);
        let val = blob_batch(60, 2, 2.0);
        let fit = train_logreg(
            FeatureSelection::TrajectoryOnly,
            &train,
            &val,
            &DEFAULT_C_GRID,
            &LbfgsConfig {
                tol: 1e-6,
                ..LbfgsConfig::default()
            },
        )
        .unwrap();
        let logits = fit.model.logits(&train).unwrap();
        let preds = argmax_predictions(&logits);
        let ba = balanced_accuracy(&train.labels, &preds).unwrap();
        assert!(ba >= 0.99, "train balanced accuracy {ba}");
        assert_eq!(fit.candidates.len(), DEFAULT_C_GRID.len());
    }

    #[test]
    fn weights_grow_with_c_on_separable_data() {
        let train = blob_batch(120, 3, 3.0);
        let lbfgs = LbfgsConfig {
            tol: 1e-7,
            max_iter: 300,
            ..LbfgsConfig::default()
        };
        let mut norms = Vec::new();
        for &c in &[1e-2, 1.0, 1e2] {
            let x = FeatureSelection::TrajectoryOnly.extract(&train);
            let x0 = vec![0.0; 3 * 4 + 4];
            let report = lbfgs_minimize(
                |flat| logreg_objective(flat, &x, &train.labels, 4, c),
                x0,
                &lbfgs,
            );
            let (w, _) = LogRegModel::unpack(&report.x, 3, 4);
            norms.push(w.sum_of_squares().sqrt());
        }
        assert!(
            norms[0] < norms[1] && norms[1] < norms[2],
            "regularization path not monotone: {norms:?}"
        );
    }

    #[test]
    fn single_class_labels_are_degenerate() {
        let mut train = blob_batch(40, 4, 1.0);
        train.labels = vec![2; 40];
        let val = blob_batch(10, 5, 1.0);
        assert!(matches!(
            train_logreg(
                FeatureSelection::TrajectoryOnly,
                &train,
                &val,
                &DEFAULT_C_GRID,
                &LbfgsConfig::default()
            ),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        use crate::nn::gradcheck::{grad_check, DEFAULT_STEP};
        let batch = blob_batch(12, 6, 1.0);
        let x = FeatureSelection::TrajectoryOnly.extract(&batch);
        let mut rng = StreamRng::new(7, StreamKind::Init);
        let theta: Vec<f64> = (0..3 * 4 + 4).map(|_| rng.normal() * 0.5).collect();
        let mut objective = |t: &[f64]| logreg_objective(t, &x, &batch.labels, 4, 0.7);
        let err = grad_check(&mut objective, &theta, DEFAULT_STEP).unwrap();
        assert!(err < 1e-6, "logreg objective rel err {err}");
    }
}
