//! The early-concatenation baseline: all modality features stacked into one
//! vector, then 128 -> 32 -> classes with ReLU between layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FeatureBatch, ModelOutput};
use crate::nn::layers::{relu, relu_backward, Linear};
use crate::nn::rng::{StreamKind, StreamRng};
use crate::nn::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatMlpConfig {
    /// Width of the concatenated input, `4 * D + F + 3`.
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub n_classes: usize,
}

impl ConcatMlpConfig {
    pub fn new(image_dim: usize, weather_dim: usize) -> Self {
        Self {
            input_dim: 4 * image_dim + weather_dim + 3,
            hidden: [128, 32],
            n_classes: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConcatMlpModel {
    pub config: ConcatMlpConfig,
    l1: Linear,
    l2: Linear,
    head: Linear,
}

/// Pre-activation intermediates for the backward pass.
pub struct ConcatMlpCaches {
    input: Tensor2,
    pre1: Tensor2,
    act1: Tensor2,
    pre2: Tensor2,
    act2: Tensor2,
}

impl ConcatMlpModel {
    pub fn init(config: ConcatMlpConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.hidden.iter().any(|&h| h == 0) || config.n_classes == 0 {
            return Err(Error::InvalidParameter(
                "all layer widths must be positive".into(),
            ));
        }
        let mut rng = StreamRng::new(seed, StreamKind::Init);
        Ok(Self {
            l1: Linear::init_he(config.input_dim, config.hidden[0], &mut rng),
            l2: Linear::init_he(config.hidden[0], config.hidden[1], &mut rng),
            head: Linear::init_xavier(config.hidden[1], config.n_classes, &mut rng),
            config,
        })
    }

    pub fn zeros(config: ConcatMlpConfig) -> Result<Self> {
        Self::init(config, 0).map(|mut m| {
            for p in m.params_mut() {
                for v in p.data_mut() {
                    *v = 0.0;
                }
            }
            m
        })
    }

    fn logits(&self, x: &Tensor2) -> Result<(Tensor2, ConcatMlpCaches)> {
        let pre1 = self.l1.forward(x)?;
        let act1 = relu(&pre1);
        let pre2 = self.l2.forward(&act1)?;
        let act2 = relu(&pre2);
        let logits = self.head.forward(&act2)?;
        Ok((
            logits,
            ConcatMlpCaches {
                input: x.clone(),
                pre1,
                act1,
                pre2,
                act2,
            },
        ))
    }

    pub fn forward_eval(&self, batch: &FeatureBatch) -> Result<ModelOutput> {
        let (main_logits, _) = self.logits(&batch.concat_all())?;
        Ok(ModelOutput {
            main_logits,
            aux_logits: None,
        })
    }

    /// The MLP has no dropout or batch statistics, so train-mode forward is
    /// the eval computation plus caches.
    pub fn forward_train(&self, batch: &FeatureBatch) -> Result<(ModelOutput, ConcatMlpCaches)> {
        let (main_logits, caches) = self.logits(&batch.concat_all())?;
        Ok((
            ModelOutput {
                main_logits,
                aux_logits: None,
            },
            caches,
        ))
    }

    /// Gradients aligned with [`ConcatMlpModel::params`].
    pub fn backward(&self, caches: &ConcatMlpCaches, d_logits: &Tensor2) -> Vec<Tensor2> {
        let (d_act2, d_head_w, d_head_b) = self.head.backward(&caches.act2, d_logits);
        let d_pre2 = relu_backward(&caches.pre2, &d_act2);
        let (d_act1, d_l2_w, d_l2_b) = self.l2.backward(&caches.act1, &d_pre2);
        let d_pre1 = relu_backward(&caches.pre1, &d_act1);
        let (_, d_l1_w, d_l1_b) = self.l1.backward(&caches.input, &d_pre1);
        vec![d_l1_w, d_l1_b, d_l2_w, d_l2_b, d_head_w, d_head_b]
    }

    pub fn param_names(&self) -> Vec<String> {
        ["layer1", "layer2", "head"]
            .iter()
            .flat_map(|n| [format!("{n}.weight"), format!("{n}.bias")])
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor2> {
        vec![
            &self.l1.weight,
            &self.l1.bias,
            &self.l2.weight,
            &self.l2.bias,
            &self.head.weight,
            &self.head.bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![
            &mut self.l1.weight,
            &mut self.l1.bias,
            &mut self.l2.weight,
            &mut self.l2.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }
}
