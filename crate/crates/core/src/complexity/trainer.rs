use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::optimal_sigma;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tasks::{ModelFamily, Task};
use crate::Real;

/// Full-batch gradient descent settings used to find `w₀` for complexity
/// evaluations. Noise free, so complexity numbers are deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub step: f64,
    pub max_iters: usize,
    /// Stop when `max |∇| < grad_tol`, or when the Newton-like step
    /// `max |∇| · λ²/β` of the ridge term drops below it.
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    /// Standard deviation of the Gaussian initialization; 0 starts at the origin.
    #[serde(default)]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
    /// Also descend the log-determinant term, i.e. minimize the full
    /// `C_β(w)` rather than `L(w) + β‖w‖²/(2λ²)`.
    #[serde(default)]
    pub curvature_gradient: bool,
}

fn default_grad_tol() -> f64 {
    1e-7
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            max_iters: 5000,
            grad_tol: default_grad_tol(),
            init_scale: 0.0,
            seed: 0,
            curvature_gradient: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T: Real> {
    pub w: DVector<T>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: T,
}

pub(crate) fn initial_weights<T: Real>(d: usize, cfg: &TrainerConfig) -> DVector<T> {
    if cfg.init_scale == 0.0 {
        return DVector::zeros(d);
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let s = T::of(cfg.init_scale);
    DVector::from_fn(d, |_, _| s * T::standard_normal(&mut rng))
}

/// `∇_w ½ tr(F(w) Σ)` with `Σ` held fixed.
///
/// Exact for the logistic family, whose logit Jacobian does not depend on
/// `w`; central differences otherwise.
pub fn curvature_trace_grad<T: Real>(t: &Task<T>, w: &DVector<T>, sigma: &DMatrix<T>) -> DVector<T> {
    let half = T::of(0.5);
    match t.model().family {
        ModelFamily::Logistic => {
            let n = t.data().len();
            let mut g = DVector::zeros(w.len());
            let model = t.model();
            for i in 0..n {
                let x = t.data().inputs().row(i).transpose();
                let p = t.predictive(w, i);
                let jac = model.logit_jacobian(w, x.column(0));
                let m = &jac * sigma * jac.transpose();
                let mp = &m * &p;
                let pmp = p.dot(&mp);
                let avg_diag = (0..p.len()).fold(T::zero(), |acc, k| acc + p[k] * m[(k, k)]);
                let two = T::of(2.0);
                let dz = DVector::from_fn(p.len(), |j, _| p[j] * (m[(j, j)] - avg_diag - two * mp[j] + two * pmp));
                g += jac.transpose() * dz;
            }
            g * (half / T::from_count(n))
        }
        ModelFamily::Mlp { .. } => {
            let h = T::of(1e-5);
            let mut probe = w.clone();
            DVector::from_fn(w.len(), |i, _| {
                let x = probe[i];
                let step = h * x.abs().max(T::one());
                probe[i] = x + step;
                let up = t.fisher_matrix(&probe).component_mul(sigma).sum();
                probe[i] = x - step;
                let down = t.fisher_matrix(&probe).component_mul(sigma).sum();
                probe[i] = x;
                half * (up - down) / (step + step)
            })
        }
    }
}

/// Value descended by [`train_minimizer`]: `L(w) + β‖w‖²/(2λ²)`, plus
/// `(β/2) log|2λ²/β · F(w) + I|` in curvature mode, i.e. `C_β(w)`.
fn objective<T: Real>(t: &Task<T>, w: &DVector<T>, beta: T, lambda2: T, curvature: bool) -> Result<T> {
    let half = T::of(0.5);
    let mut obj = t.data_loss(w) + half * beta * w.norm_squared() / lambda2;
    if curvature {
        let scale = T::of(2.0) * lambda2 / beta;
        for f in crate::linalg::sym_eigenvalues(&t.fisher_matrix(w))?.iter() {
            obj += half * beta * (scale * f.max(T::zero())).ln_1p();
        }
    }
    Ok(obj)
}

fn objective_grad<T: Real>(t: &Task<T>, w: &DVector<T>, beta: T, lambda2: T, curvature: bool) -> Result<DVector<T>> {
    let mut g = t.data_grad(w) + w * (beta / lambda2);
    if curvature {
        // ∇ (β/2) log|2λ²/β F + I| = tr(Σ* ∂F) = 2 ∇ ½tr(F Σ*).
        let sigma = optimal_sigma(&t.fisher_matrix(w), beta, lambda2)?;
        g += curvature_trace_grad(t, w, &sigma) * T::of(2.0);
    }
    Ok(g)
}

const MAX_BACKTRACKS: usize = 60;

/// Gradient descent with Armijo backtracking on `L(w) + β‖w‖²/(2λ²)` (plus
/// the curvature terms when `cfg.curvature_gradient`), starting from `start`
/// or the configured init. Each iteration first tries `cfg.step`.
pub fn train_minimizer<T: Real>(
    t: &Task<T>,
    beta: T,
    lambda2: T,
    cfg: &TrainerConfig,
    start: Option<&DVector<T>>,
    label: &str,
) -> Result<TrainOutcome<T>> {
    let d = t.param_count();
    let mut w = match start {
        Some(s) => s.clone(),
        None => initial_weights(d, cfg),
    };
    if beta <= T::zero() || lambda2 <= T::zero() {
        return Err(Error::contract("train_minimizer needs beta > 0 and lambda2 > 0"));
    }
    let curv = cfg.curvature_gradient;
    let diverged = |reason: String| Error::TrainingDiverged {
        dataset: label.to_string(),
        reason,
    };
    let tol = T::of(cfg.grad_tol) * T::one().max(beta / lambda2);
    let mut obj = objective(t, &w, beta, lambda2, curv)?;
    if !obj.is_finite() {
        return Err(diverged("objective is not finite at the initial weights".into()));
    }
    let mut grad_norm = T::infinity();
    for iter in 0..cfg.max_iters {
        let g = objective_grad(t, &w, beta, lambda2, curv)?;
        grad_norm = g.amax();
        if !grad_norm.is_finite() {
            return Err(diverged(format!("non-finite gradient at iteration {iter}")));
        }
        if grad_norm < tol {
            return Ok(TrainOutcome {
                w,
                iterations: iter,
                converged: true,
                grad_norm,
            });
        }
        let g2 = g.norm_squared();
        let mut step = T::of(cfg.step);
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &w - &g * step;
            let trial_obj = objective(t, &trial, beta, lambda2, curv)?;
            if trial_obj.is_finite() && trial_obj <= obj - T::of(1e-4) * step * g2 {
                w = trial;
                obj = trial_obj;
                accepted = true;
                break;
            }
            step *= T::of(0.5);
        }
        if !accepted {
            return Err(diverged(format!(
                "line search found no decrease at iteration {iter} (|grad|={:e})",
                grad_norm.to_f64_lossy()
            )));
        }
    }
    Ok(TrainOutcome {
        w,
        iterations: cfg.max_iters,
        converged: false,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{generate_blobs, ModelSpec};

    #[test]
    fn objective_gradient_matches_differences() {
        let d = generate_blobs::<f64>(3, 60, 2, 4.0, 3).unwrap();
        let t = Task::new(d, ModelSpec::logistic(2, 3, 0.0)).unwrap();
        for beta in [10.0, 1.0, 0.1] {
            let mut rng = stream_rng(1, 0);
            let w = DVector::from_fn(t.param_count(), |_, _| f64::standard_normal(&mut rng));
            let g = objective_grad(&t, &w, beta, 1.0, true).unwrap();
            let c = super::super::c_beta(&t, &w, beta, 1.0).unwrap().total;
            assert!((objective(&t, &w, beta, 1.0, true).unwrap() - c).abs() < 1e-12);
            for i in 0..w.len() {
                let mut a = w.clone();
                let mut b = w.clone();
                a[i] += 1e-5;
                b[i] -= 1e-5;
                let fd =
                    (objective(&t, &a, beta, 1.0, true).unwrap() - objective(&t, &b, beta, 1.0, true).unwrap()) / 2e-5;
                assert!(
                    (fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "beta {beta} i {i}: {fd} vs {}",
                    g[i]
                );
            }
        }
    }
}
