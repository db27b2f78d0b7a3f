//! Discretized Onsager–Machlup actions of Langevin paths.
//!
//! With descent drift `f = −∇U` the Lagrangian is
//! `𝓛 = (1/4D)‖ẇ + ∇U‖² − ½ ΔU`. Expanding the square splits the action into
//! an endpoint term `ΔU/2D` and a path term `(1/2D)∫ ½‖ẇ‖² + V(w) dt` with
//! `V = ½‖∇U‖² − D ΔU`. All sums use midpoint evaluation.

mod channel;
mod optimize;
mod transition;

pub use channel::{channel_marginal_check, ChannelReport};
pub use optimize::{
    minimum_action_path, minimum_action_paths, CriticalPath, CriticalPathMeta, Interpolant, MinActionConfig,
};
pub use transition::{transition_counts, transition_ratio, TransitionCounts};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diffusion::Path;
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ActionBreakdown<T: Real> {
    pub total: T,
    /// `(U(w_end) − U(w_start)) / 2D`.
    pub static_term: T,
    /// `Σ dt (1/2D) [½‖Δw/dt‖² + V(w_mid)]`.
    pub dynamic_term: T,
    /// Contribution of each segment to `total`.
    pub per_segment: Vec<T>,
}

impl<T: Real> ActionBreakdown<T> {
    /// `total − static_term − dynamic_term`; vanishes as `dt → 0`.
    pub fn defect(&self) -> T {
        self.total - self.static_term - self.dynamic_term
    }
}

fn check_action_inputs<T: Real, P: Potential<T> + ?Sized>(p: &P, path: &Path<T>, diffusion: T) -> Result<()> {
    if !(diffusion > T::zero()) {
        return Err(Error::contract("the path action is undefined for D <= 0"));
    }
    if path.len() < 3 {
        return Err(Error::contract("om_action needs a path with at least three knots"));
    }
    check_dim(p.dim(), path.dim(), "om_action")
}

/// Midpoint-discretized Onsager–Machlup action and its static/dynamic split.
pub fn om_action<T: Real, P: Potential<T> + ?Sized>(p: &P, path: &Path<T>, diffusion: T) -> Result<ActionBreakdown<T>> {
    check_action_inputs(p, path, diffusion)?;
    let dt = path.dt();
    let half = T::of(0.5);
    let quarter_d = T::one() / (T::of(4.0) * diffusion);
    let half_d = T::one() / (T::of(2.0) * diffusion);
    let pts = path.points();
    let mut g = DVector::zeros(path.dim());
    let mut total = T::zero();
    let mut dynamic = T::zero();
    let mut per_segment = Vec::with_capacity(pts.len() - 1);
    for k in 0..pts.len() - 1 {
        let v = (&pts[k + 1] - &pts[k]) / dt;
        let m = (&pts[k + 1] + &pts[k]) * half;
        p.grad_into(&m, &mut g);
        let lap = p.laplacian(&m);
        let seg = dt * (quarter_d * (&v + &g).norm_squared() - half * lap);
        let vpot = half * g.norm_squared() - diffusion * lap;
        dynamic += dt * half_d * (half * v.norm_squared() + vpot);
        total += seg;
        per_segment.push(seg);
    }
    let static_term = (p.value(path.end()) - p.value(path.start())) * half_d;
    Ok(ActionBreakdown {
        total,
        static_term,
        dynamic_term: dynamic,
        per_segment,
    })
}

/// Total action and its gradient with respect to every knot (endpoint rows
/// included; callers that fix the endpoints ignore them).
pub(crate) fn action_and_grad<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    pts: &[DVector<T>],
    dt: T,
    diffusion: T,
) -> (T, Vec<DVector<T>>) {
    let half = T::of(0.5);
    let quarter_d = T::one() / (T::of(4.0) * diffusion);
    let coef = dt / (T::of(2.0) * diffusion);
    let dim = pts[0].len();
    let mut grads = vec![DVector::zeros(dim); pts.len()];
    let mut g = DVector::zeros(dim);
    let mut total = T::zero();
    for k in 0..pts.len() - 1 {
        let v = (&pts[k + 1] - &pts[k]) / dt;
        let m = (&pts[k + 1] + &pts[k]) * half;
        p.grad_into(&m, &mut g);
        let r = &v + &g;
        total += dt * (quarter_d * r.norm_squared() - half * p.laplacian(&m));
        // d/dw_{k+1} of (dt/4D)‖r‖² is (dt/2D)(r/dt + ½ H r); d/dw_k flips the r/dt sign.
        let hr = p.hessian(&m) * &r * half;
        let rv = &r / dt;
        let lg = p.laplacian_grad(&m) * (dt * T::of(0.25));
        grads[k + 1] += (&rv + &hr) * coef - &lg;
        grads[k] += (&hr - &rv) * coef - &lg;
    }
    (total, grads)
}
