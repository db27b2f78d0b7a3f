use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionParams, LangevinStepper};
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::Real;

/// Langevin runs that ended inside each candidate ball at time `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub counts: Vec<u64>,
    pub n_runs: usize,
    pub steps: usize,
}

impl TransitionCounts {
    /// `counts[j] / counts[0]`.
    pub fn ratios(&self) -> Result<Vec<f64>> {
        let reference = self.counts[0];
        if reference == 0 {
            return Err(Error::NoReferenceHits { n_runs: self.n_runs });
        }
        Ok(self.counts.iter().map(|&c| c as f64 / reference as f64).collect())
    }

    /// Binomial standard error of each ratio by the delta method.
    pub fn ratio_std_errors(&self) -> Result<Vec<f64>> {
        let n = self.n_runs as f64;
        let p0 = self.counts[0] as f64 / n;
        let ratios = self.ratios()?;
        Ok(self
            .counts
            .iter()
            .zip(ratios)
            .map(|(&c, r)| {
                let pj = c as f64 / n;
                let var_j = if pj > 0.0 { (1.0 - pj) / (n * pj) } else { 0.0 };
                let var_0 = (1.0 - p0) / (n * p0);
                r * (var_j + var_0).sqrt()
            })
            .collect())
    }
}

/// Runs `n_runs` Langevin paths from `w0` for `round(T/dt)` steps and counts
/// how many end inside each candidate ball. Run `i` uses stream `(seed, i)`.
pub fn transition_counts<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    candidates: &[DVector<T>],
    radius: T,
    horizon: T,
    params: &DiffusionParams<T>,
    n_runs: usize,
) -> Result<TransitionCounts> {
    params.validate()?;
    check_dim(p.dim(), w0.len(), "transition start")?;
    if candidates.len() < 2 {
        return Err(Error::contract("transition_ratio needs at least two candidates"));
    }
    for c in candidates {
        check_dim(p.dim(), c.len(), "transition candidate")?;
    }
    if !(radius > T::zero()) || !(horizon > T::zero()) || n_runs == 0 {
        return Err(Error::contract(
            "transition_ratio needs radius > 0, T > 0 and n_runs >= 1",
        ));
    }
    let steps = (horizon / params.dt).round().to_usize().unwrap_or(0).max(1);
    let r2 = radius * radius;
    let hits: Vec<Option<usize>> = (0..n_runs)
        .into_par_iter()
        .map(|run| -> Result<Option<usize>> {
            let mut s = LangevinStepper::new(p, w0, params, run as u64)?;
            for _ in 0..steps {
                s.step()?;
            }
            Ok(candidates.iter().position(|c| (s.state() - c).norm_squared() <= r2))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; candidates.len()];
    for j in hits.into_iter().flatten() {
        counts[j] += 1;
    }
    Ok(TransitionCounts { counts, n_runs, steps })
}

/// Relative transition probabilities `p(c_j, T | w0) / p(c_0, T | w0)`,
/// estimated by Monte Carlo. Absolute probabilities are never reported.
pub fn transition_ratio<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    candidates: &[DVector<T>],
    radius: T,
    horizon: T,
    params: &DiffusionParams<T>,
    n_runs: usize,
) -> Result<Vec<f64>> {
    transition_counts(p, w0, candidates, radius, horizon, params, n_runs)?.ratios()
}
