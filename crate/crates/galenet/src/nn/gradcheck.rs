//! Central finite-difference gradient checking.

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Max relative error between the analytic gradient and central differences,
/// over all coordinates of `point`.
///
/// `objective` must return the value and the analytic gradient and be
/// deterministic (freeze dropout before checking). The relative error per
/// coordinate is `|ga - gfd| / max(1, |ga|, |gfd|)`.
pub fn grad_check<F>(objective: &mut F, point: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(objective, point, h, &coords)
}

/// [`grad_check`] restricted to a coordinate subset; useful when the full
/// sweep would be needlessly expensive on larger parameter vectors.
pub fn grad_check_coords<F>(
    objective: &mut F,
    point: &[f64],
    h: f64,
    coords: &[usize],
) -> Result<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (f0, analytic) = objective(point);
    if !f0.is_finite() {
        return Err(Error::NonFinite("objective value at the check point".into()));
    }
    if analytic.len() != point.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient has {} entries for {} coordinates",
            analytic.len(),
            point.len()
        )));
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let saved = x[i];
        x[i] = saved + h;
        let (f_plus, _) = objective(&x);
        x[i] = saved - h;
        let (f_minus, _) = objective(&x);
        x[i] = saved;
        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective value while perturbing coordinate {i}"
            )));
        }
        let fd = (f_plus - f_minus) / (2.0 * h);
        let ga = analytic[i];
        let rel = (ga - fd).abs() / 1.0f64.max(ga.abs()).max(fd.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_gradient_passes() {
        let mut f = |x: &[f64]| {
            let v = x.iter().map(|v| v * v).sum::<f64>();
            (v, x.iter().map(|v| 2.0 * v).collect())
        };
        let err = grad_check(&mut f, &[0.3, -1.2, 2.0], DEFAULT_STEP).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn wrong_gradient_fails() {
        let mut f = |x: &[f64]| {
            let v = x.iter().map(|v| v * v).sum::<f64>();
            (v, x.iter().map(|v| 3.0 * v).collect()) // deliberately off
        };
        let err = grad_check(&mut f, &[1.0, 2.0], DEFAULT_STEP).unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let mut f = |x: &[f64]| (x[0].ln(), vec![1.0 / x[0]]);
        assert!(grad_check(&mut f, &[-1.0], DEFAULT_STEP).is_err());
    }
}
