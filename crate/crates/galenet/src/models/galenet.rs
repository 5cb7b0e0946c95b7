//! The late-fusion network: six modality-specific encoders, a fusion
//! encoder, a main classification layer, and one auxiliary head per image
//! scale.
//!
//! Every encoder is linear projection -> batch normalization -> ReLU ->
//! dropout. The four per-scale image activations, the weather activation and
//! the trajectory activation are concatenated (243 wide at defaults) and
//! passed through the fusion encoder before the main head.

use serde::{Deserialize, Serialize};

use crate::dataset::N_SCALES;
use crate::error::{Error, Result};
use crate::models::{FeatureBatch, ModelOutput};
use crate::nn::layers::{EncoderBlock, EncoderCache, Linear};
use crate::nn::rng::{StreamKind, StreamRng};
use crate::nn::tensor::Tensor2;

/// Trajectory features are always the (distance, wind, pressure) triple.
pub const TRAJECTORY_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaLeNetConfig {
    pub image_dim: usize,
    pub weather_dim: usize,
    pub image_encoder_out: usize,
    pub weather_encoder_out: usize,
    pub trajectory_encoder_out: usize,
    pub fusion_out: usize,
    pub n_classes: usize,
    pub dropout: f64,
    pub aux_heads: bool,
}

impl Default for GaLeNetConfig {
    fn default() -> Self {
        Self {
            image_dim: 768,
            weather_dim: 16,
            image_encoder_out: 56,
            weather_encoder_out: 16,
            trajectory_encoder_out: 3,
            fusion_out: 56,
            n_classes: 4,
            dropout: 0.1,
            aux_heads: true,
        }
    }
}

impl GaLeNetConfig {
    /// Width of the concatenated activation fed to the fusion encoder
    /// (4 * 56 + 16 + 3 = 243 at defaults).
    pub fn concat_width(&self) -> usize {
        N_SCALES * self.image_encoder_out + self.weather_encoder_out + self.trajectory_encoder_out
    }

    fn validate(&self) -> Result<()> {
        if self.image_dim == 0
            || self.weather_dim == 0
            || self.image_encoder_out == 0
            || self.weather_encoder_out == 0
            || self.trajectory_encoder_out == 0
            || self.fusion_out == 0
            || self.n_classes == 0
        {
            return Err(Error::InvalidParameter(
                "all layer widths must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GaLeNetModel {
    pub config: GaLeNetConfig,
    image_encoders: Vec<EncoderBlock>,
    weather_encoder: EncoderBlock,
    trajectory_encoder: EncoderBlock,
    fusion: EncoderBlock,
    main_head: Linear,
    aux_heads: Option<Vec<Linear>>,
}

/// Train-mode intermediates for one forward pass.
pub struct GaLeNetCaches {
    image: Vec<EncoderCache>,
    weather: EncoderCache,
    trajectory: EncoderCache,
    fusion: EncoderCache,
}

impl GaLeNetModel {
    /// Fresh model with seeded init: He-uniform for encoder projections
    /// (ReLU follows), Xavier-uniform for classification heads.
    pub fn init(config: GaLeNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = StreamRng::new(seed, StreamKind::Init);
        let image_encoders = (0..N_SCALES)
            .map(|_| EncoderBlock::init(config.image_dim, config.image_encoder_out, config.dropout, &mut rng))
            .collect();
        let weather_encoder = EncoderBlock::init(
            config.weather_dim,
            config.weather_encoder_out,
            config.dropout,
            &mut rng,
        );
        let trajectory_encoder = EncoderBlock::init(
            TRAJECTORY_DIM,
            config.trajectory_encoder_out,
            config.dropout,
            &mut rng,
        );
        let fusion = EncoderBlock::init(config.concat_width(), config.fusion_out, config.dropout, &mut rng);
        let main_head = Linear::init_xavier(config.fusion_out, config.n_classes, &mut rng);
        let aux_heads = config.aux_heads.then(|| {
            (0..N_SCALES)
                .map(|_| Linear::init_xavier(config.image_encoder_out, config.n_classes, &mut rng))
                .collect()
        });
        Ok(Self {
            config,
            image_encoders,
            weather_encoder,
            trajectory_encoder,
            fusion,
            main_head,
            aux_heads,
        })
    }

    /// All-zero parameters; used as the target of checkpoint loading.
    pub fn zeros(config: GaLeNetConfig) -> Result<Self> {
        Self::init(config, 0).map(|mut m| {
            for p in m.params_mut() {
                for v in p.data_mut() {
                    *v = 0.0;
                }
            }
            m
        })
    }

    fn check_batch(&self, batch: &FeatureBatch) -> Result<()> {
        let c = &self.config;
        if batch.image.cols() != N_SCALES * c.image_dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} image columns (4 x {}), got {}",
                N_SCALES * c.image_dim,
                c.image_dim,
                batch.image.cols()
            )));
        }
        if batch.weather.cols() != c.weather_dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} weather features, got {}",
                c.weather_dim,
                batch.weather.cols()
            )));
        }
        if batch.trajectory.cols() != TRAJECTORY_DIM {
            return Err(Error::ShapeMismatch(format!(
                "expected {TRAJECTORY_DIM} trajectory features, got {}",
                batch.trajectory.cols()
            )));
        }
        Ok(())
    }

    fn image_slice(&self, batch: &FeatureBatch, k: usize) -> Tensor2 {
        let d = self.config.image_dim;
        batch.image.col_slice(k * d, (k + 1) * d)
    }

    pub fn forward_eval(&self, batch: &FeatureBatch) -> Result<ModelOutput> {
        self.check_batch(batch)?;
        let mut activations = Vec::with_capacity(N_SCALES);
        for (k, enc) in self.image_encoders.iter().enumerate() {
            activations.push(enc.forward_eval(&self.image_slice(batch, k))?);
        }
        let a_w = self.weather_encoder.forward_eval(&batch.weather)?;
        let a_t = self.trajectory_encoder.forward_eval(&batch.trajectory)?;
        let mut parts: Vec<&Tensor2> = activations.iter().collect();
        parts.push(&a_w);
        parts.push(&a_t);
        let concat = Tensor2::hconcat(&parts);
        let fused = self.fusion.forward_eval(&concat)?;
        let main_logits = self.main_head.forward(&fused)?;
        let aux_logits = match &self.aux_heads {
            Some(heads) => Some(
                heads
                    .iter()
                    .zip(&activations)
                    .map(|(h, a)| h.forward(a))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(ModelOutput {
            main_logits,
            aux_logits,
        })
    }

    /// Train-mode forward. Pass `None` for the dropout stream to freeze
    /// dropout (gradient checking).
    pub fn forward_train(
        &self,
        batch: &FeatureBatch,
        mut dropout_rng: Option<&mut StreamRng>,
    ) -> Result<(ModelOutput, GaLeNetCaches)> {
        self.check_batch(batch)?;
        let mut image_caches = Vec::with_capacity(N_SCALES);
        for (k, enc) in self.image_encoders.iter().enumerate() {
            let x = self.image_slice(batch, k);
            let (_, cache) = enc.forward_train(&x, dropout_rng.as_deref_mut())?;
            image_caches.push(cache);
        }
        let (_, weather_cache) = self
            .weather_encoder
            .forward_train(&batch.weather, dropout_rng.as_deref_mut())?;
        let (_, traj_cache) = self
            .trajectory_encoder
            .forward_train(&batch.trajectory, dropout_rng.as_deref_mut())?;
        let mut parts: Vec<&Tensor2> = image_caches.iter().map(|c| &c.output).collect();
        parts.push(&weather_cache.output);
        parts.push(&traj_cache.output);
        let concat = Tensor2::hconcat(&parts);
        let (fused, fusion_cache) = self.fusion.forward_train(&concat, dropout_rng)?;
        let main_logits = self.main_head.forward(&fused)?;
        let aux_logits = match &self.aux_heads {
            Some(heads) => Some(
                heads
                    .iter()
                    .zip(&image_caches)
                    .map(|(h, c)| h.forward(&c.output))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok((
            ModelOutput {
                main_logits,
                aux_logits,
            },
            GaLeNetCaches {
                image: image_caches,
                weather: weather_cache,
                trajectory: traj_cache,
                fusion: fusion_cache,
            },
        ))
    }

    /// Backward through every head and encoder; the returned gradients align
    /// with [`GaLeNetModel::params`].
    pub fn backward(
        &self,
        caches: &GaLeNetCaches,
        d_main: &Tensor2,
        d_aux: Option<&[Tensor2]>,
    ) -> Result<Vec<Tensor2>> {
        if self.aux_heads.is_some() != d_aux.is_some() {
            return Err(Error::ShapeMismatch(
                "aux gradient presence must match aux head configuration".into(),
            ));
        }
        let (d_fused, d_main_w, d_main_b) = self.main_head.backward(&caches.fusion.output, d_main);
        let (d_concat, fusion_grads) = self.fusion.backward(&caches.fusion, &d_fused);

        let eo = self.config.image_encoder_out;
        let wo = self.config.weather_encoder_out;
        let to = self.config.trajectory_encoder_out;

        let mut aux_param_grads = Vec::new();
        let mut image_grads = Vec::with_capacity(N_SCALES);
        for k in 0..N_SCALES {
            let mut d_ak = d_concat.col_slice(k * eo, (k + 1) * eo);
            if let (Some(heads), Some(d_aux)) = (&self.aux_heads, d_aux) {
                let (d_from_aux, dw, db) =
                    heads[k].backward(&caches.image[k].output, &d_aux[k]);
                d_ak.add_in_place(&d_from_aux);
                aux_param_grads.push((dw, db));
            }
            let (_, grads) = self.image_encoders[k].backward(&caches.image[k], &d_ak);
            image_grads.push(grads);
        }
        let d_aw = d_concat.col_slice(N_SCALES * eo, N_SCALES * eo + wo);
        let (_, weather_grads) = self.weather_encoder.backward(&caches.weather, &d_aw);
        let d_at = d_concat.col_slice(N_SCALES * eo + wo, N_SCALES * eo + wo + to);
        let (_, traj_grads) = self.trajectory_encoder.backward(&caches.trajectory, &d_at);

        let mut out = Vec::new();
        for g in image_grads {
            out.extend([g.weight, g.bias, g.gamma, g.beta]);
        }
        out.extend([
            weather_grads.weight,
            weather_grads.bias,
            weather_grads.gamma,
            weather_grads.beta,
        ]);
        out.extend([traj_grads.weight, traj_grads.bias, traj_grads.gamma, traj_grads.beta]);
        out.extend([
            fusion_grads.weight,
            fusion_grads.bias,
            fusion_grads.gamma,
            fusion_grads.beta,
        ]);
        out.extend([d_main_w, d_main_b]);
        for (dw, db) in aux_param_grads {
            out.extend([dw, db]);
        }
        Ok(out)
    }

    /// Applies the pending batchnorm running-stat updates from a forward.
    pub fn apply_bn_updates(&mut self, caches: &GaLeNetCaches) {
        for (enc, cache) in self.image_encoders.iter_mut().zip(&caches.image) {
            enc.update_running(cache);
        }
        self.weather_encoder.update_running(&caches.weather);
        self.trajectory_encoder.update_running(&caches.trajectory);
        self.fusion.update_running(&caches.fusion);
    }

    fn encoder_names() -> [&'static str; 6] {
        [
            "image_encoder0",
            "image_encoder1",
            "image_encoder2",
            "image_encoder3",
            "weather_encoder",
            "trajectory_encoder",
        ]
    }

    fn encoders(&self) -> Vec<&EncoderBlock> {
        let mut v: Vec<&EncoderBlock> = self.image_encoders.iter().collect();
        v.push(&self.weather_encoder);
        v.push(&self.trajectory_encoder);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for n in Self::encoder_names() {
            for suffix in ["weight", "bias", "bn_gamma", "bn_beta"] {
                names.push(format!("{n}.{suffix}"));
            }
        }
        for suffix in ["weight", "bias", "bn_gamma", "bn_beta"] {
            names.push(format!("fusion.{suffix}"));
        }
        names.push("main_head.weight".into());
        names.push("main_head.bias".into());
        if self.aux_heads.is_some() {
            for k in 0..N_SCALES {
                names.push(format!("aux_head{k}.weight"));
                names.push(format!("aux_head{k}.bias"));
            }
        }
        names
    }

    pub fn params(&self) -> Vec<&Tensor2> {
        let mut out = Vec::new();
        for enc in self.encoders() {
            out.extend([&enc.linear.weight, &enc.linear.bias, &enc.bn.gamma, &enc.bn.beta]);
        }
        out.extend([
            &self.fusion.linear.weight,
            &self.fusion.linear.bias,
            &self.fusion.bn.gamma,
            &self.fusion.bn.beta,
        ]);
        out.extend([&self.main_head.weight, &self.main_head.bias]);
        if let Some(heads) = &self.aux_heads {
            for h in heads {
                out.extend([&h.weight, &h.bias]);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = Vec::new();
        for enc in self.image_encoders.iter_mut() {
            out.extend([
                &mut enc.linear.weight,
                &mut enc.linear.bias,
                &mut enc.bn.gamma,
                &mut enc.bn.beta,
            ]);
        }
        out.extend([
            &mut self.weather_encoder.linear.weight,
            &mut self.weather_encoder.linear.bias,
            &mut self.weather_encoder.bn.gamma,
            &mut self.weather_encoder.bn.beta,
        ]);
        out.extend([
            &mut self.trajectory_encoder.linear.weight,
            &mut self.trajectory_encoder.linear.bias,
            &mut self.trajectory_encoder.bn.gamma,
            &mut self.trajectory_encoder.bn.beta,
        ]);
        out.extend([
            &mut self.fusion.linear.weight,
            &mut self.fusion.linear.bias,
            &mut self.fusion.bn.gamma,
            &mut self.fusion.bn.beta,
        ]);
        out.extend([&mut self.main_head.weight, &mut self.main_head.bias]);
        if let Some(heads) = &mut self.aux_heads {
            for h in heads {
                out.extend([&mut h.weight, &mut h.bias]);
            }
        }
        out
    }

    /// Batchnorm running statistics, named for checkpointing.
    pub fn buffers(&self) -> Vec<(String, &Tensor2)> {
        let mut out = Vec::new();
        let names = Self::encoder_names();
        for (n, enc) in names.iter().zip(self.encoders()) {
            out.push((format!("{n}.bn_running_mean"), &enc.bn.running_mean));
            out.push((format!("{n}.bn_running_var"), &enc.bn.running_var));
        }
        out.push(("fusion.bn_running_mean".into(), &self.fusion.bn.running_mean));
        out.push(("fusion.bn_running_var".into(), &self.fusion.bn.running_var));
        out
    }

    /// Every named tensor (parameters and running statistics) mutably, for
    /// checkpoint loading. Lookup is by name, so order is immaterial.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor2)> {
        let mut out: Vec<(String, &mut Tensor2)> = Vec::new();
        let names = Self::encoder_names();
        let blocks = self
            .image_encoders
            .iter_mut()
            .chain([&mut self.weather_encoder, &mut self.trajectory_encoder]);
        for (n, enc) in names.iter().zip(blocks) {
            out.push((format!("{n}.weight"), &mut enc.linear.weight));
            out.push((format!("{n}.bias"), &mut enc.linear.bias));
            out.push((format!("{n}.bn_gamma"), &mut enc.bn.gamma));
            out.push((format!("{n}.bn_beta"), &mut enc.bn.beta));
            out.push((format!("{n}.bn_running_mean"), &mut enc.bn.running_mean));
            out.push((format!("{n}.bn_running_var"), &mut enc.bn.running_var));
        }
        out.push(("fusion.weight".into(), &mut self.fusion.linear.weight));
        out.push(("fusion.bias".into(), &mut self.fusion.linear.bias));
        out.push(("fusion.bn_gamma".into(), &mut self.fusion.bn.gamma));
        out.push(("fusion.bn_beta".into(), &mut self.fusion.bn.beta));
        out.push((
            "fusion.bn_running_mean".into(),
            &mut self.fusion.bn.running_mean,
        ));
        out.push((
            "fusion.bn_running_var".into(),
            &mut self.fusion.bn.running_var,
        ));
        out.push(("main_head.weight".into(), &mut self.main_head.weight));
        out.push(("main_head.bias".into(), &mut self.main_head.bias));
        if let Some(heads) = &mut self.aux_heads {
            for (k, h) in heads.iter_mut().enumerate() {
                out.push((format!("aux_head{k}.weight"), &mut h.weight));
                out.push((format!("aux_head{k}.bias"), &mut h.bias));
            }
        }
        out
    }
}
