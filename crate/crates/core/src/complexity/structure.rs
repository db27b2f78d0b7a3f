use serde::{Deserialize, Serialize};

use super::trainer::{train_minimizer, TrainerConfig};
use super::{expected_loss_surrogate, gaussian_kl, optimal_sigma, GaussianPosterior};
use crate::error::{Error, Result};
use crate::tasks::Task;
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StructurePoint<T: Real> {
    pub beta: T,
    /// `KL(Q ‖ P)` in nats.
    pub kl_nats: T,
    /// `L(w₀) + ½ tr(F Σ*)`.
    pub expected_loss: T,
    /// `L(w₀)` alone.
    pub point_loss: T,
    pub converged: bool,
    pub iterations: usize,
}

/// Trade-off between information in the weights and expected loss, one
/// point per swept `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StructureCurve<T: Real> {
    pub lambda2: T,
    pub points: Vec<StructurePoint<T>>,
}

impl<T: Real> StructureCurve<T> {
    /// Converged points sorted by KL.
    pub fn sorted_converged(&self) -> Vec<&StructurePoint<T>> {
        let mut pts: Vec<_> = self.points.iter().filter(|p| p.converged).collect();
        pts.sort_by(|a, b| a.kl_nats.partial_cmp(&b.kl_nats).unwrap_or(std::cmp::Ordering::Equal));
        pts
    }

    /// Largest increase of expected loss between KL-consecutive converged
    /// points; `≤ tol` means the curve is monotone.
    pub fn max_monotonicity_violation(&self) -> T {
        self.sorted_converged()
            .windows(2)
            .fold(T::zero(), |acc, w| acc.max(w[1].expected_loss - w[0].expected_loss))
    }

    pub fn is_monotone(&self, tol: T) -> bool {
        self.max_monotonicity_violation() <= tol
    }

    /// Expected loss at `kl` by linear interpolation between converged
    /// points; `None` outside the sampled KL range.
    pub fn interpolate(&self, kl: T) -> Option<T> {
        let pts = self.sorted_converged();
        pts.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            if kl >= a.kl_nats && kl <= b.kl_nats {
                let span = b.kl_nats - a.kl_nats;
                if span <= T::zero() {
                    return Some(a.expected_loss.min(b.expected_loss));
                }
                let s = (kl - a.kl_nats) / span;
                Some(a.expected_loss + s * (b.expected_loss - a.expected_loss))
            } else {
                None
            }
        })
    }
}

/// Sweeps `β` over a descending grid. Each `w₀(β)` is found by alternating a
/// gradient step on `w₀` with a refresh of `Σ* = Σ*(F(w₀))`, warm-started
/// from the previous grid point.
pub fn structure_curve<T: Real>(
    t: &Task<T>,
    beta_grid: &[T],
    lambda2: T,
    cfg: &TrainerConfig,
) -> Result<StructureCurve<T>> {
    if beta_grid.is_empty() || beta_grid.iter().any(|&b| b <= T::zero()) {
        return Err(Error::contract(
            "structure_curve needs a non-empty grid of positive betas",
        ));
    }
    if beta_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::contract("structure_curve beta grid must be strictly descending"));
    }
    let alt_cfg = TrainerConfig {
        curvature_gradient: true,
        ..cfg.clone()
    };
    let mut start = None;
    let mut points = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        let out = train_minimizer(t, beta, lambda2, &alt_cfg, start.as_ref(), "structure-curve")?;
        let f = t.fisher_matrix(&out.w);
        let sigma = optimal_sigma(&f, beta, lambda2)?;
        let point_loss = t.data_loss(&out.w);
        let expected_loss = expected_loss_surrogate(point_loss, &f, &sigma);
        let kl = gaussian_kl(&GaussianPosterior::new(out.w.clone(), sigma)?, lambda2)?;
        if !out.converged {
            log::warn!(
                "structure_curve: beta={} did not converge (|grad|={:e}); point flagged",
                beta.to_f64_lossy(),
                out.grad_norm.to_f64_lossy()
            );
        }
        points.push(StructurePoint {
            beta,
            kl_nats: kl,
            expected_loss,
            point_loss,
            converged: out.converged,
            iterations: out.iterations,
        });
        start = Some(out.w);
    }
    Ok(StructureCurve { lambda2, points })
}
