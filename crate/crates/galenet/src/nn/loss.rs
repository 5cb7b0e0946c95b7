//! Classification losses on logits, with exact gradients.

use crate::error::{Error, Result};
use crate::nn::layers::log_softmax;
use crate::nn::tensor::Tensor2;

/// Mean focal loss over a batch, `FL(p_t) = -alpha_t (1 - p_t)^gamma ln p_t`
/// on softmax probabilities, plus the gradient w.r.t. the logits.
///
/// `alpha` carries one weight per class. With `gamma = 0` and uniform alpha
/// this is exactly mean cross-entropy.
pub fn focal_loss(
    logits: &Tensor2,
    labels: &[usize],
    gamma: f64,
    alpha: &[f64],
) -> Result<(f64, Tensor2)> {
    let (batch, classes) = logits.shape();
    if batch == 0 {
        return Err(Error::EmptyInput("focal loss needs at least one row".into()));
    }
    if labels.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{batch} logit rows vs {} labels",
            labels.len()
        )));
    }
    if alpha.len() != classes {
        return Err(Error::ShapeMismatch(format!(
            "{classes} classes vs {} alpha weights",
            alpha.len()
        )));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }

    let logp = log_softmax(logits);
    let inv_b = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = Tensor2::zeros(batch, classes);
    for (r, &t) in labels.iter().enumerate() {
        let lp_t = logp.get(r, t);
        let p_t = lp_t.exp();
        let a = alpha[t];
        let one_minus = (1.0 - p_t).max(0.0);
        loss += -a * one_minus.powf(gamma) * lp_t;

        // d/dz_j = -a (delta_tj - p_j) [ (1-p_t)^g - g p_t (1-p_t)^(g-1) ln p_t ]
        // The bracket tends to 0 as p_t -> 1 for g > 0; guard the pole in
        // (1-p_t)^(g-1) there.
        let bracket = if gamma == 0.0 {
            1.0
        } else if one_minus <= 0.0 {
            0.0
        } else {
            one_minus.powf(gamma) - gamma * p_t * one_minus.powf(gamma - 1.0) * lp_t
        };
        for j in 0..classes {
            let p_j = logp.get(r, j).exp();
            let delta = if j == t { 1.0 } else { 0.0 };
            grad.set(r, j, -a * (delta - p_j) * bracket * inv_b);
        }
    }
    Ok((loss * inv_b, grad))
}

/// Mean cross-entropy and its gradient: focal loss at `gamma = 0` with
/// uniform class weights.
pub fn cross_entropy(logits: &Tensor2, labels: &[usize]) -> Result<(f64, Tensor2)> {
    let alpha = vec![1.0; logits.cols()];
    focal_loss(logits, labels, 0.0, &alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_zero_equals_cross_entropy_at_half_confidence() {
        // Two classes with equal logits: p_t = 0.5, loss = ln 2.
        let logits = Tensor2::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let (loss, _) = focal_loss(&logits, &[0], 0.0, &[1.0, 1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn perfect_confidence_gives_zero_loss() {
        let logits = Tensor2::from_vec(1, 4, vec![200.0, 0.0, 0.0, 0.0]).unwrap();
        let (loss, grad) = focal_loss(&logits, &[0], 2.0, &[1.0; 4]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn focal_scalar_case_gamma_two() {
        // p_t = 0.9: loss = 0.01 * (-ln 0.9) = 1.0536052e-3.
        let p = 0.9f64;
        let z0 = (p / (1.0 - p)).ln(); // two-class logits producing p_t = 0.9
        let logits = Tensor2::from_vec(1, 2, vec![z0, 0.0]).unwrap();
        let (loss, _) = focal_loss(&logits, &[0], 2.0, &[1.0, 1.0]).unwrap();
        assert!((loss - 0.0010536052).abs() < 1e-7, "{loss}");
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let logits = Tensor2::zeros(1, 4);
        assert!(focal_loss(&logits, &[4], 2.0, &[1.0; 4]).is_err());
    }

    #[test]
    fn gamma_zero_matches_cross_entropy_on_random_batches() {
        use crate::nn::rng::{StreamKind, StreamRng};
        let mut rng = StreamRng::new(21, StreamKind::Init);
        for _ in 0..20 {
            let mut logits = Tensor2::zeros(6, 4);
            for v in logits.data_mut() {
                *v = rng.normal() * 2.0;
            }
            let labels: Vec<usize> = (0..6).map(|_| rng.below(4)).collect();
            let (fl, fg) = focal_loss(&logits, &labels, 0.0, &[1.0; 4]).unwrap();
            let (ce, cg) = cross_entropy(&logits, &labels).unwrap();
            assert!((fl - ce).abs() < 1e-12);
            for (a, b) in fg.data().iter().zip(cg.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
