//! Overdamped Langevin dynamics, minibatch SGD, and the ensemble statistics
//! built on them (first passage, convergence time, stationary histograms,
//! minibatch noise covariance).

mod langevin;
mod path;
mod sgd;
pub mod stats;

pub use langevin::{
    first_passage, simulate_langevin, simulate_langevin_thinned, stationary_check_1d, LangevinStepper, StationaryReport,
};
pub use path::Path;
pub use sgd::{
    convergence_time, exact_noise_covariance, noise_covariance, simulate_sgd, Sampling, SgdConfig, SgdTrajectory,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Settings shared by every Langevin simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct DiffusionParams<T: Real> {
    /// Diffusion coefficient `D` of `ẇ = −∇U + √(2D) n(t)`.
    #[serde(rename = "D")]
    pub d: T,
    pub dt: T,
    pub max_steps: usize,
    pub seed: u64,
}

impl<T: Real> DiffusionParams<T> {
    pub fn new(d: T, dt: T, max_steps: usize, seed: u64) -> Result<Self> {
        let p = Self { d, dt, max_steps, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d >= T::zero()) {
            return Err(Error::contract(format!(
                "D must be finite and >= 0 (got {})",
                self.d.to_f64_lossy()
            )));
        }
        if !(self.dt.is_finite() && self.dt > T::zero()) {
            return Err(Error::contract(format!(
                "dt must be finite and > 0 (got {})",
                self.dt.to_f64_lossy()
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_d(self, d: T) -> Self {
        Self { d, ..self }
    }
}

/// First-passage (or convergence) times of an ensemble.
///
/// `samples[i]` is `None` when run `i` hit its step budget. Mean, standard
/// deviation and median are over uncensored runs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EscapeStats<T: Real> {
    pub samples: Vec<Option<T>>,
    pub mean: T,
    pub std: T,
    pub median: T,
    /// `1 / mean`.
    pub rate: T,
    pub n_censored: usize,
    pub n_runs: usize,
}

impl<T: Real> EscapeStats<T> {
    /// Summarizes per-run times; fails with [`Error::AllCensored`] when no run
    /// finished within `max_steps`.
    pub fn from_samples(samples: Vec<Option<T>>, max_steps: usize) -> Result<Self> {
        let n_runs = samples.len();
        let mut done: Vec<T> = samples.iter().flatten().copied().collect();
        if done.is_empty() {
            return Err(Error::AllCensored { n_runs, max_steps });
        }
        let n_censored = n_runs - done.len();
        let (mean, std) = stats::mean_std(&done);
        let median = stats::median(&mut done);
        Ok(Self {
            samples,
            mean,
            std,
            median,
            rate: T::one() / mean,
            n_censored,
            n_runs,
        })
    }

    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / self.n_runs as f64
    }

    /// Standard error of the mean over uncensored runs.
    pub fn mean_std_error(&self) -> T {
        let n = self.n_runs - self.n_censored;
        self.std / T::from_count(n).sqrt()
    }
}
