//! Dense layers with exact analytic gradients.
//!
//! Each forward has a matching backward satisfying the chain rule; all pairs
//! are covered by finite-difference checks in the test suite. BatchNorm uses
//! biased batch variance with eps 1e-5 and momentum 0.1 on its running
//! statistics; dropout is inverted (kept units scaled by `1/(1-p)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::rng::StreamRng;
use crate::nn::tensor::Tensor2;

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;

/// Affine map `y = x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor2,
    pub bias: Tensor2,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Tensor2::zeros(in_dim, out_dim),
            bias: Tensor2::zeros(1, out_dim),
        }
    }

    /// He-uniform init, for layers feeding a ReLU.
    pub fn init_he(in_dim: usize, out_dim: usize, rng: &mut StreamRng) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        Self::init_uniform(in_dim, out_dim, limit, rng)
    }

    /// Xavier-uniform init, for classification heads.
    pub fn init_xavier(in_dim: usize, out_dim: usize, rng: &mut StreamRng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self::init_uniform(in_dim, out_dim, limit, rng)
    }

    fn init_uniform(in_dim: usize, out_dim: usize, limit: f64, rng: &mut StreamRng) -> Self {
        let mut weight = Tensor2::zeros(in_dim, out_dim);
        for v in weight.data_mut() {
            *v = rng.uniform_in(-limit, limit);
        }
        Self {
            weight,
            bias: Tensor2::zeros(1, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.weight.rows() {
            return Err(Error::ShapeMismatch(format!(
                "linear expects {} input features, got {}",
                self.weight.rows(),
                x.cols()
            )));
        }
        let mut y = x.matmul(&self.weight);
        y.add_row_broadcast(&self.bias);
        Ok(y)
    }

    /// Gradients w.r.t. input, weight and bias given upstream `dy`.
    pub fn backward(&self, x: &Tensor2, dy: &Tensor2) -> (Tensor2, Tensor2, Tensor2) {
        debug_assert_eq!(dy.cols(), self.weight.cols());
        debug_assert_eq!(x.rows(), dy.rows());
        let dx = dy.matmul_nt(&self.weight); // dy @ W^T
        let dw = x.matmul_tn(dy); // x^T @ dy
        let db = dy.sum_rows();
        (dx, dw, db)
    }
}

/// Gradients for one linear layer.
#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub weight: Tensor2,
    pub bias: Tensor2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch normalization over features (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Tensor2,
    pub beta: Tensor2,
    pub running_mean: Tensor2,
    pub running_var: Tensor2,
}

/// Train-mode cache needed by the backward pass and the running-stat update.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Tensor2,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor2::filled(1, dim, 1.0),
            beta: Tensor2::zeros(1, dim),
            running_mean: Tensor2::zeros(1, dim),
            running_var: Tensor2::filled(1, dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.cols()
    }

    /// Normalizes by batch mean and biased batch variance. Needs at least
    /// two rows. Does not touch the running statistics; apply the cache via
    /// [`BatchNorm::update_running`] once the step is accepted.
    pub fn forward_train(&self, x: &Tensor2) -> Result<(Tensor2, BnCache)> {
        self.check_width(x)?;
        let n = x.rows();
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        let inv_n = 1.0 / n as f64;
        for m in &mut mean {
            *m *= inv_n;
        }
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                let c = v - m;
                *s += c * c;
            }
        }
        for s in &mut var {
            *s *= inv_n; // biased variance
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt()).collect();

        let mut x_hat = Tensor2::zeros(n, d);
        let mut y = Tensor2::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                let xh = (x.get(r, c) - mean[c]) * inv_std[c];
                x_hat.set(r, c, xh);
                y.set(r, c, self.gamma.get(0, c) * xh + self.beta.get(0, c));
            }
        }
        Ok((
            y,
            BnCache {
                x_hat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    /// Normalizes by the running statistics.
    pub fn forward_eval(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check_width(x)?;
        let d = self.dim();
        let inv_std: Vec<f64> = (0..d)
            .map(|c| 1.0 / (self.running_var.get(0, c) + BATCHNORM_EPS).sqrt())
            .collect();
        let mut y = Tensor2::zeros(x.rows(), d);
        for r in 0..x.rows() {
            for c in 0..d {
                let xh = (x.get(r, c) - self.running_mean.get(0, c)) * inv_std[c];
                y.set(r, c, self.gamma.get(0, c) * xh + self.beta.get(0, c));
            }
        }
        Ok(y)
    }

    /// Exponential update of the running statistics from a train-mode cache.
    pub fn update_running(&mut self, cache: &BnCache) {
        for c in 0..self.dim() {
            let m = (1.0 - BATCHNORM_MOMENTUM) * self.running_mean.get(0, c)
                + BATCHNORM_MOMENTUM * cache.batch_mean[c];
            let v = (1.0 - BATCHNORM_MOMENTUM) * self.running_var.get(0, c)
                + BATCHNORM_MOMENTUM * cache.batch_var[c];
            self.running_mean.set(0, c, m);
            self.running_var.set(0, c, v);
        }
    }

    /// Standard batchnorm backward for the train-mode forward.
    pub fn backward(&self, cache: &BnCache, dy: &Tensor2) -> (Tensor2, Tensor2, Tensor2) {
        let n = dy.rows();
        let d = self.dim();
        let mut dgamma = Tensor2::zeros(1, d);
        let mut dbeta = Tensor2::zeros(1, d);
        for r in 0..n {
            for c in 0..d {
                dgamma.data_mut()[c] += dy.get(r, c) * cache.x_hat.get(r, c);
                dbeta.data_mut()[c] += dy.get(r, c);
            }
        }
        // dx = inv_std/N * (N*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
        let mut sum_dxhat = vec![0.0; d];
        let mut sum_dxhat_xhat = vec![0.0; d];
        for r in 0..n {
            for c in 0..d {
                let dxhat = dy.get(r, c) * self.gamma.get(0, c);
                sum_dxhat[c] += dxhat;
                sum_dxhat_xhat[c] += dxhat * cache.x_hat.get(r, c);
            }
        }
        let inv_n = 1.0 / n as f64;
        let mut dx = Tensor2::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                let dxhat = dy.get(r, c) * self.gamma.get(0, c);
                let v = cache.inv_std[c]
                    * inv_n
                    * (n as f64 * dxhat - sum_dxhat[c] - cache.x_hat.get(r, c) * sum_dxhat_xhat[c]);
                dx.set(r, c, v);
            }
        }
        (dx, dgamma, dbeta)
    }

    fn check_width(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm expects {} features, got {}",
                self.dim(),
                x.cols()
            )));
        }
        Ok(())
    }
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

/// Gates `dy` on the sign of the pre-activation input.
pub fn relu_backward(pre: &Tensor2, dy: &Tensor2) -> Tensor2 {
    debug_assert_eq!(pre.shape(), dy.shape());
    let mut dx = dy.clone();
    for (d, &p) in dx.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Keep/drop mask with the inverted-dropout scale baked in.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    scale_per_unit: Vec<f64>, // 0 for dropped, 1/(1-p) for kept
    rows: usize,
    cols: usize,
}

/// Inverted dropout: kept units are scaled by `1/(1-p)` so the expectation
/// matches eval mode, where dropout is the identity.
pub fn dropout_train(x: &Tensor2, p: f64, rng: &mut StreamRng) -> Result<(Tensor2, DropoutMask)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "dropout rate must be in [0, 1), got {p}"
        )));
    }
    let keep_scale = 1.0 / (1.0 - p);
    let mut mask = Vec::with_capacity(x.len());
    let mut y = x.clone();
    for v in y.data_mut() {
        let s = if p > 0.0 && rng.uniform() < p {
            0.0
        } else {
            keep_scale
        };
        mask.push(s);
        *v *= s;
    }
    Ok((
        y,
        DropoutMask {
            scale_per_unit: mask,
            rows: x.rows(),
            cols: x.cols(),
        },
    ))
}

pub fn dropout_backward(mask: &DropoutMask, dy: &Tensor2) -> Tensor2 {
    debug_assert_eq!(dy.shape(), (mask.rows, mask.cols));
    let mut dx = dy.clone();
    for (d, s) in dx.data_mut().iter_mut().zip(&mask.scale_per_unit) {
        *d *= s;
    }
    dx
}

/// Row-wise stable softmax; each output row sums to 1.
pub fn softmax(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Backward through a row-wise softmax: given the forward output `p` and
/// upstream `dy`, `dx = p * (dy - sum(dy * p))` per row.
pub fn softmax_backward(p: &Tensor2, dy: &Tensor2) -> Tensor2 {
    debug_assert_eq!(p.shape(), dy.shape());
    let mut dx = Tensor2::zeros(p.rows(), p.cols());
    for r in 0..p.rows() {
        let dot: f64 = p.row(r).iter().zip(dy.row(r)).map(|(a, b)| a * b).sum();
        for c in 0..p.cols() {
            dx.set(r, c, p.get(r, c) * (dy.get(r, c) - dot));
        }
    }
    dx
}

/// Row-wise log-softmax via logsumexp.
pub fn log_softmax(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// The shared encoder block: linear projection, batch normalization, ReLU,
/// dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub linear: Linear,
    pub bn: BatchNorm,
    pub dropout_p: f64,
}

/// Intermediates for one encoder block forward in train mode.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub input: Tensor2,
    bn: BnCache,
    pre_relu: Tensor2,
    dropout: Option<DropoutMask>,
    pub output: Tensor2,
}

/// Parameter gradients for one encoder block.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub weight: Tensor2,
    pub bias: Tensor2,
    pub gamma: Tensor2,
    pub beta: Tensor2,
}

impl EncoderBlock {
    pub fn init(in_dim: usize, out_dim: usize, dropout_p: f64, rng: &mut StreamRng) -> Self {
        Self {
            linear: Linear::init_he(in_dim, out_dim, rng),
            bn: BatchNorm::new(out_dim),
            dropout_p,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.linear.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.linear.out_dim()
    }

    pub fn forward_train(
        &self,
        x: &Tensor2,
        dropout_rng: Option<&mut StreamRng>,
    ) -> Result<(Tensor2, EncoderCache)> {
        let (bn_out, bn_cache) = self.bn.forward_train(&self.linear.forward(x)?)?;
        let activated = relu(&bn_out);
        let (output, dropout) = match dropout_rng {
            Some(rng) if self.dropout_p > 0.0 => {
                let (y, m) = dropout_train(&activated, self.dropout_p, rng)?;
                (y, Some(m))
            }
            _ => (activated.clone(), None),
        };
        Ok((
            output.clone(),
            EncoderCache {
                input: x.clone(),
                bn: bn_cache,
                pre_relu: bn_out,
                dropout,
                output,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor2) -> Result<Tensor2> {
        let pre_bn = self.linear.forward(x)?;
        let bn_out = self.bn.forward_eval(&pre_bn)?;
        Ok(relu(&bn_out))
    }

    pub fn backward(&self, cache: &EncoderCache, dy: &Tensor2) -> (Tensor2, EncoderGrads) {
        let d_act = match &cache.dropout {
            Some(mask) => dropout_backward(mask, dy),
            None => dy.clone(),
        };
        let d_bn_out = relu_backward(&cache.pre_relu, &d_act);
        let (d_pre_bn, dgamma, dbeta) = self.bn.backward(&cache.bn, &d_bn_out);
        let (dx, dw, db) = self.linear.backward(&cache.input, &d_pre_bn);
        (
            dx,
            EncoderGrads {
                weight: dw,
                bias: db,
                gamma: dgamma,
                beta: dbeta,
            },
        )
    }

    pub fn update_running(&mut self, cache: &EncoderCache) {
        self.bn.update_running(&cache.bn);
    }
}
