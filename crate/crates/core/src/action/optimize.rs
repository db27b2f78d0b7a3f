use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{action_and_grad, om_action, ActionBreakdown};
use crate::diffusion::Path;
use crate::error::{check_dim, Error, Result};
use crate::landscape::{path_potential_grad, Potential};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinActionConfig {
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    /// Stop when the Newton step moves no knot coordinate by more than this.
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    /// Also start from the two gradient-flow interpolants.
    #[serde(default = "default_true")]
    pub restarts: bool,
    /// Optima closer than this in sup norm count as the same path.
    #[serde(default = "default_distinct")]
    pub distinct_tol: f64,
}

fn default_iters() -> usize {
    1000
}
fn default_step_tol() -> f64 {
    1e-10
}
fn default_true() -> bool {
    true
}
fn default_distinct() -> f64 {
    1e-3
}

impl Default for MinActionConfig {
    fn default() -> Self {
        Self {
            max_iters: default_iters(),
            step_tol: default_step_tol(),
            restarts: true,
            distinct_tol: default_distinct(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolant {
    Linear,
    GradientFlowForward,
    GradientFlowBackward,
}

/// A local minimizer of the discretized action with fixed endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPath<T: Real> {
    pub path: Path<T>,
    pub action: ActionBreakdown<T>,
    /// `max_k ‖(w_{k+1} − 2w_k + w_{k−1})/dt² − ∇V(w_k)‖_∞` over interior knots.
    pub el_residual: T,
    /// `max_k ‖∇V(w_k)‖_∞` over all knots, the natural scale of the residual.
    pub el_scale: T,
    pub converged: bool,
    pub iterations: usize,
    pub start: Interpolant,
}

/// JSON sidecar of a critical path (the knots go to the path CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CriticalPathMeta<T: Real> {
    pub action: ActionBreakdown<T>,
    pub el_residual: T,
    pub el_scale: T,
    pub converged: bool,
    pub iterations: usize,
    pub start: Interpolant,
    pub n_knots: usize,
    pub horizon: T,
}

impl<T: Real> CriticalPath<T> {
    pub fn meta(&self) -> CriticalPathMeta<T> {
        CriticalPathMeta {
            action: self.action.clone(),
            el_residual: self.el_residual,
            el_scale: self.el_scale,
            converged: self.converged,
            iterations: self.iterations,
            start: self.start,
            n_knots: self.path.len(),
            horizon: self.path.duration(),
        }
    }

    /// Writes `<stem>.csv` (knots) and `<stem>.json` (breakdown, residual, flags).
    pub fn write(&self, dir: impl AsRef<std::path::Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        self.path.write_csv(dir.join(format!("{stem}.csv")), 1)?;
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&self.meta())?,
        )?;
        Ok(())
    }
}

fn el_residual<T: Real, P: Potential<T> + ?Sized>(p: &P, path: &Path<T>, diffusion: T) -> Result<(T, T)> {
    let pts = path.points();
    let dt2 = path.dt() * path.dt();
    let mut residual = T::zero();
    let mut scale = T::zero();
    for (k, w) in pts.iter().enumerate() {
        let gv = path_potential_grad(p, w, diffusion)?;
        scale = scale.max(gv.amax());
        if k > 0 && k + 1 < pts.len() {
            let acc = (&pts[k + 1] - w * T::of(2.0) + &pts[k - 1]) / dt2;
            residual = residual.max((acc - gv).amax());
        }
    }
    Ok((residual, scale))
}

fn action_total<T: Real, P: Potential<T> + ?Sized>(p: &P, pts: &[DVector<T>], dt: T, diffusion: T) -> T {
    let half = T::of(0.5);
    let quarter_d = T::one() / (T::of(4.0) * diffusion);
    let mut g = DVector::zeros(pts[0].len());
    let mut total = T::zero();
    for k in 0..pts.len() - 1 {
        let v = (&pts[k + 1] - &pts[k]) / dt;
        let m = (&pts[k + 1] + &pts[k]) * half;
        p.grad_into(&m, &mut g);
        total += dt * (quarter_d * (v + &g).norm_squared() - half * p.laplacian(&m));
    }
    total
}

/// Block-tridiagonal Hessian of the action over interior knots: `diag[i]`
/// and `upper[i] = ∂²S/∂w_i∂w_{i+1}`. Knot gradients only couple neighbours,
/// so three colours of central differences of the analytic gradient suffice.
fn hessian_blocks<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    pts: &[DVector<T>],
    dt: T,
    diffusion: T,
) -> (Vec<DMatrix<T>>, Vec<DMatrix<T>>) {
    let n = pts.len();
    let m = n - 2;
    let dim = pts[0].len();
    let mut diag = vec![DMatrix::zeros(dim, dim); m];
    let mut lower = vec![DMatrix::zeros(dim, dim); m];
    let mut upper = vec![DMatrix::zeros(dim, dim); m];
    let scale = pts.iter().fold(T::one(), |a, w| a.max(w.amax()));
    let h = T::of(1e-5) * scale;
    for colour in 0..3 {
        for j in 0..dim {
            let shifted = |sign: T| -> Vec<DVector<T>> {
                let mut q = pts.to_vec();
                for k in (1 + colour..n - 1).step_by(3) {
                    q[k][j] += sign * h;
                }
                action_and_grad(p, &q, dt, diffusion).1
            };
            let up = shifted(T::one());
            let down = shifted(-T::one());
            for i in 0..m {
                let col = (&up[i + 1] - &down[i + 1]) / (h + h);
                // interior index i is knot i + 1; find which neighbour moved
                match (i + 3 - colour) % 3 {
                    0 => diag[i].set_column(j, &col),
                    1 if i > 0 => lower[i].set_column(j, &col),
                    2 if i + 1 < m => upper[i].set_column(j, &col),
                    _ => {}
                }
            }
        }
    }
    let half = T::of(0.5);
    for i in 0..m {
        let d = &diag[i];
        diag[i] = (d + d.transpose()) * half;
        if i + 1 < m {
            upper[i] = (&upper[i] + lower[i + 1].transpose()) * half;
        }
    }
    (diag, upper)
}

/// Solves `(H + μI) x = rhs` for a block-tridiagonal SPD `H` by block
/// elimination; `None` if a pivot block is not positive definite.
fn block_tridiagonal_solve<T: Real>(
    diag: &[DMatrix<T>],
    upper: &[DMatrix<T>],
    shift: T,
    rhs: &[DVector<T>],
) -> Option<Vec<DVector<T>>> {
    let m = diag.len();
    let dim = rhs[0].len();
    let eye = DMatrix::<T>::identity(dim, dim) * shift;
    let mut pivots = Vec::with_capacity(m);
    let mut y: Vec<DVector<T>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut s = &diag[i] + &eye;
        let mut r = rhs[i].clone();
        if i > 0 {
            let chol: &nalgebra::Cholesky<T, nalgebra::Dyn> = &pivots[i - 1];
            let b = &upper[i - 1];
            s -= b.transpose() * chol.solve(b);
            r -= b.transpose() * chol.solve(&y[i - 1]);
        }
        pivots.push(s.cholesky()?);
        y.push(r);
    }
    let mut x = vec![DVector::zeros(dim); m];
    for i in (0..m).rev() {
        let r = if i + 1 < m {
            &y[i] - &upper[i] * &x[i + 1]
        } else {
            y[i].clone()
        };
        x[i] = pivots[i].solve(&r);
    }
    Some(x)
}

/// Integrates `ẇ = −∇U` with RK4 and returns states at `n_knots` uniform times.
fn gradient_flow_knots<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    dt: T,
    n_knots: usize,
) -> Vec<DVector<T>> {
    let sub = 8;
    let h = dt / T::from_count(sub);
    let half = T::of(0.5);
    let sixth = T::one() / T::of(6.0);
    let mut w = w0.clone();
    let mut out = Vec::with_capacity(n_knots);
    out.push(w.clone());
    for _ in 1..n_knots {
        for _ in 0..sub {
            let k1 = -p.grad(&w);
            let k2 = -p.grad(&(&w + &k1 * (h * half)));
            let k3 = -p.grad(&(&w + &k2 * (h * half)));
            let k4 = -p.grad(&(&w + &k3 * h));
            w += (k1 + (k2 + k3) * T::of(2.0) + k4) * (h * sixth);
        }
        out.push(w.clone());
    }
    out
}

fn initial_knots<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    wf: &DVector<T>,
    dt: T,
    n_knots: usize,
    kind: Interpolant,
) -> Vec<DVector<T>> {
    let last = T::from_count(n_knots - 1);
    match kind {
        Interpolant::Linear => (0..n_knots)
            .map(|k| {
                let s = T::from_count(k) / last;
                w0 * (T::one() - s) + wf * s
            })
            .collect(),
        Interpolant::GradientFlowForward => {
            let flow = gradient_flow_knots(p, w0, dt, n_knots);
            let miss = wf - &flow[n_knots - 1];
            flow.iter()
                .enumerate()
                .map(|(k, q)| q + &miss * (T::from_count(k) / last))
                .collect()
        }
        Interpolant::GradientFlowBackward => {
            let flow = gradient_flow_knots(p, wf, dt, n_knots);
            let miss = w0 - &flow[n_knots - 1];
            (0..n_knots)
                .map(|k| &flow[n_knots - 1 - k] + &miss * (T::one() - T::from_count(k) / last))
                .collect()
        }
    }
}

fn optimize_from<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    mut pts: Vec<DVector<T>>,
    horizon: T,
    diffusion: T,
    cfg: &MinActionConfig,
    start: Interpolant,
) -> Result<CriticalPath<T>> {
    let n = pts.len();
    let dt = horizon / T::from_count(n - 1);
    let tol = T::of(cfg.step_tol);
    let (mut s, mut grads) = action_and_grad(p, &pts, dt, diffusion);
    let mut converged = false;
    let mut iterations = cfg.max_iters;
    let mut shift = T::zero();
    for iter in 0..cfg.max_iters {
        if !s.is_finite() {
            return Err(Error::numerical(format!(
                "minimum-action optimizer hit non-finite values at iteration {iter}"
            )));
        }
        let (diag, upper) = hessian_blocks(p, &pts, dt, diffusion);
        let g = &grads[1..n - 1];
        let hscale = diag.iter().fold(T::zero(), |a, b| a.max(b.amax()));
        // Levenberg shift until the damped Hessian is positive definite and
        // gives a descent direction.
        let mut dir = None;
        for _ in 0..60 {
            if let Some(x) = block_tridiagonal_solve(&diag, &upper, shift, g) {
                if g.iter().zip(&x).fold(T::zero(), |a, (gi, xi)| a + gi.dot(xi)) > T::zero() {
                    dir = Some(x);
                    break;
                }
            }
            shift = (shift * T::of(4.0)).max(T::of(1e-8) * hscale);
        }
        let Some(dir) = dir else {
            return Err(Error::numerical(
                "minimum-action optimizer could not build a descent direction",
            ));
        };
        let step_norm = dir.iter().fold(T::zero(), |a, d| a.max(d.amax()));
        if !step_norm.is_finite() {
            return Err(Error::numerical(format!(
                "minimum-action optimizer hit non-finite values at iteration {iter}"
            )));
        }
        if step_norm < tol {
            converged = true;
            iterations = iter;
            break;
        }
        let slope = g.iter().zip(&dir).fold(T::zero(), |a, (gi, d)| a + gi.dot(d));
        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..50 {
            let trial: Vec<DVector<T>> = pts
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    if k == 0 || k == n - 1 {
                        w.clone()
                    } else {
                        w - &dir[k - 1] * alpha
                    }
                })
                .collect();
            let st = action_total(p, &trial, dt, diffusion);
            if st.is_finite() && st <= s - T::of(1e-4) * alpha * slope {
                // a decrease below float resolution is a stall, not progress
                accepted = s - st > T::of(64.0) * T::epsilon() * s.abs().max(T::one());
                pts = trial;
                break;
            }
            alpha *= T::of(0.5);
        }
        if !accepted {
            // The action no longer decreases in float precision.
            converged = step_norm < tol.sqrt();
            iterations = iter;
            break;
        }
        if alpha == T::one() {
            shift *= T::of(0.25);
        }
        let (s_new, g_new) = action_and_grad(p, &pts, dt, diffusion);
        s = s_new;
        grads = g_new;
    }
    let path = Path::uniform(T::zero(), dt, pts)?;
    let action = om_action(p, &path, diffusion)?;
    let (el_residual, el_scale) = el_residual(p, &path, diffusion)?;
    if !converged {
        log::warn!("minimum_action_path ({start:?} start) stopped without converging after {iterations} iterations");
    }
    Ok(CriticalPath {
        path,
        action,
        el_residual,
        el_scale,
        converged,
        iterations,
        start,
    })
}

/// All distinct local minima of the discretized action reached from the
/// linear and (if enabled) gradient-flow interpolants, sorted by action.
pub fn minimum_action_paths<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    wf: &DVector<T>,
    horizon: T,
    n_knots: usize,
    diffusion: T,
    cfg: &MinActionConfig,
) -> Result<Vec<CriticalPath<T>>> {
    check_dim(p.dim(), w0.len(), "minimum_action_path start")?;
    check_dim(p.dim(), wf.len(), "minimum_action_path end")?;
    if n_knots < 10 {
        return Err(Error::contract("minimum_action_path needs n_knots >= 10"));
    }
    if !(horizon > T::zero()) {
        return Err(Error::contract("minimum_action_path needs T > 0"));
    }
    if !(diffusion > T::zero()) {
        return Err(Error::contract("the path action is undefined for D <= 0"));
    }
    let dt = horizon / T::from_count(n_knots - 1);
    let starts: &[Interpolant] = if cfg.restarts {
        &[
            Interpolant::Linear,
            Interpolant::GradientFlowForward,
            Interpolant::GradientFlowBackward,
        ]
    } else {
        &[Interpolant::Linear]
    };
    let mut found: Vec<CriticalPath<T>> = Vec::new();
    let tol = T::of(cfg.distinct_tol);
    for &kind in starts {
        let cp = optimize_from(
            p,
            initial_knots(p, w0, wf, dt, n_knots, kind),
            horizon,
            diffusion,
            cfg,
            kind,
        )?;
        match found
            .iter_mut()
            .find(|f| f.path.sup_distance(&cp.path).map(|d| d <= tol).unwrap_or(false))
        {
            Some(same) => {
                if cp.action.total < same.action.total {
                    *same = cp;
                }
            }
            None => found.push(cp),
        }
    }
    found.sort_by(|a, b| {
        a.action
            .total
            .partial_cmp(&b.action.total)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}

/// The lowest-action path among [`minimum_action_paths`].
pub fn minimum_action_path<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    wf: &DVector<T>,
    horizon: T,
    n_knots: usize,
    diffusion: T,
    cfg: &MinActionConfig,
) -> Result<CriticalPath<T>> {
    let mut all = minimum_action_paths(p, w0, wf, horizon, n_knots, diffusion, cfg)?;
    if all.len() > 1 {
        log::info!(
            "minimum_action_path: {} distinct local minima; returning the lowest",
            all.len()
        );
    }
    Ok(all.swap_remove(0))
}
