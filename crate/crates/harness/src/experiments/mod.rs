//! One module per experiment kind. Each writes its files into the output
//! directory and returns records, a summary and per-cell failure flags.

mod action;
mod batch;
mod finetune;
mod kramers;
mod label;
mod structure;

use nalgebra::DVector;
use rayon::prelude::*;
use reachlab_core::complexity::{train_minimizer, TrainerConfig};
use reachlab_core::diffusion::{convergence_time, SgdConfig};
use reachlab_core::rng::derive_seed;
use reachlab_core::tasks::{generate_blobs, Task};
use reachlab_core::{Dataset64, Error as CoreError, EscapeStats64, Task64};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bundle::CellFlag;
use crate::checkpoint::Checkpoints;
use crate::config::{BlobSpec, Experiment, ExperimentConfig, ThresholdSpec};
use crate::error::Result;
use crate::output::OutputDir;

pub use label::ComplexityCell;

pub struct Outcome {
    pub records: Value,
    pub summary: Value,
    pub flags: Vec<CellFlag>,
}

pub fn run(cfg: &ExperimentConfig, out: &mut OutputDir, ck: &Checkpoints) -> Result<Outcome> {
    let seed = cfg.seed;
    match &cfg.experiment {
        Experiment::KramersSweep(c) => kramers::run(c, seed, out),
        Experiment::LabelSweep(c) => label::run_sweep(c, seed, out, ck),
        Experiment::ComplexityScatter(c) => label::run_scatter(c, seed, out, ck),
        Experiment::BatchSweep(c) => batch::run(c, seed, out, ck),
        Experiment::FinetuneMatrix(c) => finetune::run(c, seed, out, ck),
        Experiment::StructureCurve(c) => structure::run(c, seed, out),
        Experiment::ActionCheck(c) => action::run(c, seed, out),
    }
}

// Salts separating the random streams of one experiment.
const SALT_DATA: u64 = 1;
const SALT_CORRUPT: u64 = 2;
const SALT_SGD: u64 = 100;
const SALT_NOISE: u64 = 200;
const SALT_PASSAGE: u64 = 300;
const SALT_PATHS: u64 = 400;
const SALT_FINETUNE: u64 = 1000;

pub(crate) fn blobs(spec: &BlobSpec, seed: u64) -> Result<Dataset64> {
    Ok(generate_blobs(
        spec.classes,
        spec.n,
        spec.dim,
        spec.separation,
        derive_seed(seed, SALT_DATA),
    )?)
}

/// Minimizer of the task's SGD objective found by full-batch descent.
pub(crate) fn sgd_minimizer(t: &Task64, iters: usize, label: &str) -> Result<DVector<f64>> {
    let cfg = TrainerConfig {
        max_iters: iters,
        ..TrainerConfig::default()
    };
    // L + β‖w‖²/2 with β = γ is the SGD objective; a tiny ridge keeps β > 0.
    let beta = t.weight_decay().max(1e-10);
    Ok(train_minimizer(t, beta, 1.0, &cfg, None, label)?.w)
}

/// Lowest loss reached by full-batch descent on the task's SGD objective.
pub(crate) fn min_loss_estimate(t: &Task64, iters: usize, label: &str) -> Result<f64> {
    Ok(t.loss(&sgd_minimizer(t, iters, label)?))
}

pub(crate) fn threshold_for(t: &Task64, spec: &ThresholdSpec, label: &str) -> Result<(f64, Option<f64>)> {
    Ok(match spec {
        ThresholdSpec::MinPlus { margin, descent_iters } => {
            let m = min_loss_estimate(t, *descent_iters, label)?;
            (m + margin, Some(m))
        }
        ThresholdSpec::Absolute { value } => (*value, None),
    })
}

/// Convergence times of an SGD ensemble. Censored runs count as `+∞` in
/// the median, so the median is `None` once half the runs are censored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub median: Option<f64>,
    /// Mean over uncensored runs.
    pub mean: Option<f64>,
    pub n_censored: usize,
    pub n_runs: usize,
}

impl TimeSummary {
    pub fn from_samples(samples: &[Option<f64>]) -> Self {
        let mut sorted: Vec<f64> = samples.iter().map(|s| s.unwrap_or(f64::INFINITY)).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n == 0 {
            f64::INFINITY
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let done: Vec<f64> = samples.iter().flatten().copied().collect();
        Self {
            median: median.is_finite().then_some(median),
            mean: (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64),
            n_censored: n - done.len(),
            n_runs: n,
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / self.n_runs.max(1) as f64
    }

    /// The median as a rank key: censored sorts last.
    pub fn median_key(&self) -> f64 {
        self.median.unwrap_or(f64::INFINITY)
    }
}

pub(crate) fn sgd_times(
    t: &Task64,
    w0: &DVector<f64>,
    threshold: f64,
    cfg: &SgdConfig,
    n_runs: usize,
) -> Result<TimeSummary> {
    match convergence_time(t, w0, threshold, cfg, n_runs) {
        Ok(stats) => Ok(TimeSummary::from_samples(&stats.samples)),
        Err(CoreError::AllCensored { .. }) => Ok(TimeSummary::from_samples(&vec![None; n_runs])),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn escape_stats(s: &TimeSummary, samples: Vec<Option<f64>>) -> Option<EscapeStats64> {
    (s.n_censored < s.n_runs).then(|| EscapeStats64::from_samples(samples, 0).expect("has uncensored runs"))
}

pub(crate) fn flag(cell: impl Into<String>, e: &impl std::fmt::Display) -> CellFlag {
    let cell = cell.into();
    log::warn!("cell `{cell}` failed: {e}");
    CellFlag {
        cell,
        reason: e.to_string(),
    }
}

/// Spearman correlation over pairs where both values are present.
pub(crate) fn spearman_pairs(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 3 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    reachlab_core::diffusion::stats::spearman(&x, &y)
        .ok()
        .filter(|r| r.is_finite())
}

/// Runs `f` over `items` in parallel, preserving order.
pub(crate) fn par_cells<I: Sync, O: Send>(items: &[I], f: impl Fn(usize, &I) -> O + Sync + Send) -> Vec<O> {
    items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

pub(crate) fn task(data: Dataset64, model: &reachlab_core::tasks::ModelSpec) -> Result<Task64> {
    Ok(Task::new(data, *model)?)
}
