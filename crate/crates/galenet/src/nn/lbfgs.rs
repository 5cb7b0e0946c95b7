//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The inverse-Hessian action is the standard two-loop recursion over the
//! last `memory` curvature pairs; the line search brackets and zooms until
//! both the sufficient-decrease and strong curvature conditions hold.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Number of curvature pairs retained.
    pub memory: usize,
    pub max_iter: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

/// Outcome of a minimization. A failed line search is reported here rather
/// than as an error: `x` is the best iterate seen and `converged` is false.
#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_EXPANSIONS: usize = 20;
const MAX_ZOOM: usize = 50;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// `-H_k g` via the two-loop recursion.
fn two_loop_direction(grad: &[f64], history: &VecDeque<CurvaturePair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        axpy(&mut q, -a, &pair.y);
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for v in &mut q {
            *v *= gamma;
        }
    }
    for (pair, &a) in history.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        axpy(&mut q, a - b, &pair.s);
    }
    for v in &mut q {
        *v = -*v;
    }
    q
}

struct LineEval {
    alpha: f64,
    f: f64,
    grad: Vec<f64>,
    slope: f64,
}

/// Minimizes `objective` (which returns the value and gradient) from `x0`.
///
/// Stops when the gradient infinity norm drops below `config.tol`, the
/// iteration budget runs out, or the line search fails after bounded
/// bracketing; the best iterate is always returned.
pub fn lbfgs_minimize<F>(mut objective: F, x0: Vec<f64>, config: &LbfgsConfig) -> LbfgsReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut grad) = objective(&x);
    let mut history: VecDeque<CurvaturePair> = VecDeque::with_capacity(config.memory);

    let mut best_x = x.clone();
    let mut best_f = f;
    let mut best_g = inf_norm(&grad);
    let mut line_search_failed = false;
    let mut iterations = 0;

    for iter in 0..config.max_iter {
        let ginf = inf_norm(&grad);
        if ginf < config.tol {
            return LbfgsReport {
                x,
                f,
                grad_inf_norm: ginf,
                iterations: iter,
                converged: true,
                line_search_failed: false,
            };
        }

        let mut direction = two_loop_direction(&grad, &history);
        let mut slope0 = dot(&direction, &grad);
        if !slope0.is_finite() || slope0 >= 0.0 {
            // Curvature information went stale; restart from steepest descent.
            history.clear();
            direction = grad.iter().map(|g| -g).collect();
            slope0 = dot(&direction, &grad);
        }

        let alpha_init = if history.is_empty() {
            (1.0 / ginf).min(1.0)
        } else {
            1.0
        };

        let mut eval_at = |alpha: f64| -> LineEval {
            let mut xt = x.clone();
            axpy(&mut xt, alpha, &direction);
            let (ft, gt) = objective(&xt);
            let slope = dot(&gt, &direction);
            LineEval {
                alpha,
                f: ft,
                grad: gt,
                slope,
            }
        };

        let found = wolfe_search(&mut eval_at, f, slope0, alpha_init);
        iterations = iter + 1;

        match found {
            Some(ev) => {
                let mut x_new = x.clone();
                axpy(&mut x_new, ev.alpha, &direction);
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = ev.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if sy > 1e-10 * s_norm * y_norm {
                    if history.len() == config.memory {
                        history.pop_front();
                    }
                    history.push_back(CurvaturePair { s, y, rho: 1.0 / sy });
                }
                x = x_new;
                f = ev.f;
                grad = ev.grad;
                if f < best_f {
                    best_f = f;
                    best_x = x.clone();
                    best_g = inf_norm(&grad);
                }
            }
            None => {
                line_search_failed = true;
                break;
            }
        }
        let _ = n;
    }

    let ginf = inf_norm(&grad);
    let converged = ginf < config.tol;
    if converged || f <= best_f {
        LbfgsReport {
            grad_inf_norm: ginf,
            x,
            f,
            iterations,
            converged,
            line_search_failed,
        }
    } else {
        LbfgsReport {
            x: best_x,
            f: best_f,
            grad_inf_norm: best_g,
            iterations,
            converged: false,
            line_search_failed,
        }
    }
}

/// Absolute slack on the sufficient-decrease test. Near a minimum the true
/// decrease falls below f64 resolution; without slack the Armijo comparison
/// turns into noise and the search stalls with the gradient still above
/// tolerance. The curvature condition still gates acceptance.
fn armijo_slack(f0: f64) -> f64 {
    1e-14 * (1.0 + f0.abs())
}

/// Strong-Wolfe search: bracketing phase with doubling steps, then zoom.
fn wolfe_search(
    eval: &mut impl FnMut(f64) -> LineEval,
    f0: f64,
    slope0: f64,
    alpha_init: f64,
) -> Option<LineEval> {
    let slack = armijo_slack(f0);
    let mut prev = LineEval {
        alpha: 0.0,
        f: f0,
        grad: Vec::new(),
        slope: slope0,
    };
    let mut alpha = alpha_init;
    for i in 0..MAX_EXPANSIONS {
        let cur = eval(alpha);
        if !cur.f.is_finite() {
            // Step overshot into a non-finite region; treat as a high wall.
            return zoom(eval, f0, slope0, prev, cur);
        }
        if cur.f > f0 + C1 * cur.alpha * slope0 + slack || (i > 0 && cur.f >= prev.f + slack) {
            return zoom(eval, f0, slope0, prev, cur);
        }
        if cur.slope.abs() <= -C2 * slope0 {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            return zoom(eval, f0, slope0, cur, prev);
        }
        alpha = cur.alpha * 2.0;
        prev = cur;
    }
    None
}

/// Narrows a bracket `[lo, hi]` that is known to contain a strong-Wolfe
/// point, by bisection.
fn zoom(
    eval: &mut impl FnMut(f64) -> LineEval,
    f0: f64,
    slope0: f64,
    mut lo: LineEval,
    mut hi: LineEval,
) -> Option<LineEval> {
    let slack = armijo_slack(f0);
    for _ in 0..MAX_ZOOM {
        let alpha = 0.5 * (lo.alpha + hi.alpha);
        if (hi.alpha - lo.alpha).abs() < 1e-16 * (1.0 + lo.alpha.abs()) {
            break;
        }
        let cur = eval(alpha);
        if !cur.f.is_finite() || cur.f > f0 + C1 * alpha * slope0 + slack || cur.f >= lo.f + slack
        {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * slope0 {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = LineEval {
                    alpha: lo.alpha,
                    f: lo.f,
                    grad: std::mem::take(&mut lo.grad),
                    slope: lo.slope,
                };
            }
            lo = cur;
        }
    }
    // Bounded zoom exhausted: accept lo when it at least yields sufficient
    // decrease, otherwise report failure.
    if !lo.grad.is_empty() && lo.f <= f0 + C1 * lo.alpha * slope0 + armijo_slack(f0) && lo.alpha > 0.0
    {
        Some(lo)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::{StreamKind, StreamRng};

    #[test]
    fn one_dimensional_quadratic() {
        let report = lbfgs_minimize(
            |x| {
                let d = x[0] - 3.0;
                (d * d, vec![2.0 * d])
            },
            vec![0.0],
            &LbfgsConfig::default(),
        );
        assert!(report.converged);
        assert!((report.x[0] - 3.0).abs() < 1e-8, "{}", report.x[0]);
    }

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (f, g)
    }

    #[test]
    fn rosenbrock_reaches_the_minimum() {
        let report = lbfgs_minimize(
            rosenbrock,
            vec![-1.2, 1.0],
            &LbfgsConfig {
                tol: 1e-10,
                ..LbfgsConfig::default()
            },
        );
        assert!((report.x[0] - 1.0).abs() < 1e-5, "{:?}", report.x);
        assert!((report.x[1] - 1.0).abs() < 1e-5, "{:?}", report.x);
    }

    #[test]
    fn random_spd_quadratic_dim_10() {
        // f(x) = 0.5 x'Ax - b'x, minimized at the solution of Ax = b.
        let dim = 10;
        let mut rng = StreamRng::new(42, StreamKind::Init);
        let mut m = vec![vec![0.0; dim]; dim];
        for row in &mut m {
            for v in row.iter_mut() {
                *v = rng.normal();
            }
        }
        // A = M^T M + I is SPD.
        let mut a = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for row in m.iter() {
                    acc += row[i] * row[j];
                }
                a[i][j] = acc + if i == j { 1.0 } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();

        let report = lbfgs_minimize(
            |x| {
                let mut ax = vec![0.0; dim];
                for i in 0..dim {
                    ax[i] = dot(&a[i], x);
                }
                let f = 0.5 * dot(x, &ax) - dot(&b, x);
                let g: Vec<f64> = ax.iter().zip(&b).map(|(av, bv)| av - bv).collect();
                (f, g)
            },
            vec![0.0; dim],
            &LbfgsConfig::default(),
        );
        assert!(report.converged, "{report:?}");
        assert!(report.grad_inf_norm < 1e-8);
        assert!(report.iterations <= 50, "{}", report.iterations);

        // Direct-solve oracle: Gaussian elimination with partial pivoting.
        let mut aug: Vec<Vec<f64>> = a
            .iter()
            .zip(&b)
            .map(|(row, bv)| {
                let mut r = row.clone();
                r.push(*bv);
                r
            })
            .collect();
        for col in 0..dim {
            let piv = (col..dim)
                .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
                .unwrap();
            aug.swap(col, piv);
            let p = aug[col][col];
            for r in col + 1..dim {
                let factor = aug[r][col] / p;
                for c in col..=dim {
                    aug[r][c] -= factor * aug[col][c];
                }
            }
        }
        let mut solution = vec![0.0; dim];
        for r in (0..dim).rev() {
            let mut acc = aug[r][dim];
            for c in r + 1..dim {
                acc -= aug[r][c] * solution[c];
            }
            solution[r] = acc / aug[r][r];
        }
        for (xi, si) in report.x.iter().zip(&solution) {
            assert!((xi - si).abs() < 1e-6, "{xi} vs {si}");
        }
    }
}
