use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EscapeStats, Path};
use crate::error::{check_dim, Error, Result};
use crate::rng::{stream_rng, StreamRng};
use crate::tasks::Task;
use crate::Real;

/// How the minibatch of each step is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// `B` indices drawn uniformly with replacement; noise covariance is
    /// exactly `Σ₁/B`.
    #[default]
    WithReplacement,
    /// `B` distinct indices per step.
    WithoutReplacement,
    /// Every sample every step: plain gradient descent.
    FullBatch,
    /// Full gradient plus isotropic Gaussian noise whose trace matches the
    /// with-replacement minibatch noise at the current weights.
    IsotropicSurrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub eta: f64,
    pub batch: usize,
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    /// Keep every n-th state in [`simulate_sgd`] paths.
    #[serde(default = "one")]
    pub record_every: usize,
    /// Evaluate the full loss every n steps in [`convergence_time`].
    #[serde(default = "one")]
    pub check_every: usize,
}

fn one() -> usize {
    1
}

impl SgdConfig {
    pub fn new(eta: f64, batch: usize, max_steps: usize, seed: u64) -> Self {
        Self {
            eta,
            batch,
            max_steps,
            seed,
            sampling: Sampling::default(),
            record_every: 1,
            check_every: 1,
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::contract(format!("eta must be > 0 (got {})", self.eta)));
        }
        if self.batch == 0 {
            return Err(Error::contract("batch size must be >= 1"));
        }
        if self.sampling == Sampling::WithoutReplacement && self.batch > n {
            return Err(Error::contract(format!(
                "batch {} exceeds the {} samples available without replacement",
                self.batch, n
            )));
        }
        Ok(())
    }
}

const DIVERGENCE_LOSS: f64 = 1e6;

struct SgdStepper<'a, T: Real> {
    task: &'a Task<T>,
    w: DVector<T>,
    grad: DVector<T>,
    indices: Vec<usize>,
    eta: T,
    batch: usize,
    sampling: Sampling,
    rng: StreamRng,
}

impl<'a, T: Real> SgdStepper<'a, T> {
    fn new(task: &'a Task<T>, w0: &DVector<T>, cfg: &SgdConfig, stream: u64) -> Result<Self> {
        check_dim(task.param_count(), w0.len(), "sgd start")?;
        cfg.validate(task.data().len())?;
        Ok(Self {
            task,
            w: w0.clone(),
            grad: DVector::zeros(w0.len()),
            indices: Vec::with_capacity(cfg.batch.max(task.data().len())),
            eta: T::of(cfg.eta),
            batch: cfg.batch,
            sampling: cfg.sampling,
            rng: stream_rng(cfg.seed, stream),
        })
    }

    /// One update; returns false once the weights stop being finite.
    fn step(&mut self) -> bool {
        let n = self.task.data().len();
        fill_batch(&mut self.indices, &mut self.rng, n, self.batch, self.sampling);
        self.task.minibatch_grad_into(&self.w, &self.indices, &mut self.grad);
        self.grad.axpy(self.task.weight_decay(), &self.w, T::one());
        self.w.axpy(-self.eta, &self.grad, T::one());
        if self.sampling == Sampling::IsotropicSurrogate {
            let d = self.w.len();
            let trace = per_sample_covariance(self.task, &self.w).trace().max(T::zero());
            let sd = self.eta * (trace / T::from_count(self.batch * d)).sqrt();
            for i in 0..d {
                self.w[i] += sd * T::standard_normal(&mut self.rng);
            }
        }
        self.w.iter().all(|x| x.is_finite())
    }
}

fn fill_batch(indices: &mut Vec<usize>, rng: &mut StreamRng, n: usize, batch: usize, sampling: Sampling) {
    indices.clear();
    match sampling {
        Sampling::WithReplacement => indices.extend((0..batch).map(|_| rng.random_range(0..n))),
        Sampling::WithoutReplacement => indices.extend(rand::seq::index::sample(rng, n, batch).iter()),
        Sampling::FullBatch | Sampling::IsotropicSurrogate => indices.extend(0..n),
    }
}

/// Per-sample gradient covariance `Σ₁ = (1/N) Σᵢ (gᵢ − ḡ)(gᵢ − ḡ)ᵀ` of the
/// unregularized loss.
fn per_sample_covariance<T: Real>(t: &Task<T>, w: &DVector<T>) -> DMatrix<T> {
    let g = t.per_sample_grads(w);
    let n = T::from_count(g.nrows());
    let mean = g.row_mean();
    let mut centered = g;
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let mut cov = centered.transpose() * &centered / n;
    crate::linalg::symmetrize(&mut cov);
    cov
}

/// One SGD run. `diverged_at` is the step at which the loss exceeded 10⁶ or
/// the weights stopped being finite; the path is truncated there.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdTrajectory<T: Real> {
    pub path: Path<T>,
    /// Regularized loss `U` at each recorded state.
    pub losses: Vec<T>,
    pub diverged_at: Option<usize>,
}

/// `w ← w − η (∇L̂_batch(w) + γ w)` for `max_steps` steps on stream
/// `(seed, 0)`. Path time is `steps · η`.
pub fn simulate_sgd<T: Real>(t: &Task<T>, w0: &DVector<T>, cfg: &SgdConfig) -> Result<SgdTrajectory<T>> {
    if cfg.max_steps == 0 {
        return Err(Error::contract("simulate_sgd needs max_steps >= 1"));
    }
    let mut s = SgdStepper::new(t, w0, cfg, 0)?;
    let every = cfg.record_every.clamp(1, cfg.max_steps);
    let limit = T::of(DIVERGENCE_LOSS);
    let mut points = vec![w0.clone()];
    let mut losses = vec![t.loss(w0)];
    let mut diverged_at = None;
    for k in 1..=cfg.max_steps {
        if !s.step() {
            diverged_at = Some(k);
            break;
        }
        if k % every == 0 {
            let loss = t.loss(&s.w);
            points.push(s.w.clone());
            losses.push(loss);
            if !(loss <= limit) {
                diverged_at = Some(k);
                break;
            }
        }
    }
    if let Some(k) = diverged_at {
        log::warn!("simulate_sgd: diverged at step {k}; path truncated");
        if points.len() < 2 {
            return Err(Error::NonFinite { step: k });
        }
    }
    let path = Path::uniform(T::zero(), T::of(cfg.eta) * T::from_count(every), points)?;
    Ok(SgdTrajectory {
        path,
        losses,
        diverged_at,
    })
}

/// Empirical covariance of `n_draws` independent minibatch gradients at `w`
/// (stream `(seed, 0)`).
pub fn noise_covariance<T: Real>(
    t: &Task<T>,
    w: &DVector<T>,
    batch: usize,
    n_draws: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<DMatrix<T>> {
    check_dim(t.param_count(), w.len(), "noise_covariance")?;
    if n_draws < 100 {
        return Err(Error::contract("noise_covariance needs n_draws >= 100"));
    }
    if sampling == Sampling::IsotropicSurrogate {
        return Err(Error::contract(
            "noise_covariance measures minibatch noise; the surrogate has none to sample",
        ));
    }
    SgdConfig::new(1.0, batch, 1, seed)
        .with_sampling(sampling)
        .validate(t.data().len())?;
    let d = w.len();
    let n = t.data().len();
    let mut rng = stream_rng(seed, 0);
    let mut indices = Vec::with_capacity(batch.max(n));
    let mut g = DVector::zeros(d);
    let mut draws = DMatrix::zeros(n_draws, d);
    for k in 0..n_draws {
        fill_batch(&mut indices, &mut rng, n, batch, sampling);
        t.minibatch_grad_into(w, &indices, &mut g);
        draws.set_row(k, &g.transpose());
    }
    let mean = draws.row_mean();
    for mut row in draws.row_iter_mut() {
        row -= &mean;
    }
    let mut cov = draws.transpose() * &draws / T::from_count(n_draws - 1);
    crate::linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// Exact minibatch gradient covariance from per-sample gradients:
/// `Σ₁/B` with replacement, `Σ₁/B · (N−B)/(N−1)` without, zero for full batch.
pub fn exact_noise_covariance<T: Real>(
    t: &Task<T>,
    w: &DVector<T>,
    batch: usize,
    sampling: Sampling,
) -> Result<DMatrix<T>> {
    check_dim(t.param_count(), w.len(), "exact_noise_covariance")?;
    if batch == 0 {
        return Err(Error::contract("batch size must be >= 1"));
    }
    let n = t.data().len();
    let sigma1 = per_sample_covariance(t, w);
    let b = T::from_count(batch);
    Ok(match sampling {
        Sampling::WithReplacement | Sampling::IsotropicSurrogate => sigma1 / b,
        Sampling::WithoutReplacement => {
            if batch > n {
                return Err(Error::contract("batch exceeds dataset size"));
            }
            if n == 1 {
                DMatrix::zeros(w.len(), w.len())
            } else {
                sigma1 / b * (T::from_count(n - batch) / T::from_count(n - 1))
            }
        }
        Sampling::FullBatch => DMatrix::zeros(w.len(), w.len()),
    })
}

/// Time (`steps · η`) for the regularized loss to reach `threshold`, per run.
/// Run `i` uses stream `(cfg.seed, i)`; runs that diverge count as censored.
pub fn convergence_time<T: Real>(
    t: &Task<T>,
    w0: &DVector<T>,
    threshold: T,
    cfg: &SgdConfig,
    n_runs: usize,
) -> Result<EscapeStats<T>> {
    check_dim(t.param_count(), w0.len(), "convergence_time")?;
    cfg.validate(t.data().len())?;
    if n_runs == 0 {
        return Err(Error::contract("convergence_time needs n_runs >= 1"));
    }
    let eta = T::of(cfg.eta);
    let check = cfg.check_every.max(1);
    let limit = T::of(DIVERGENCE_LOSS);
    let samples: Vec<Option<T>> = (0..n_runs)
        .into_par_iter()
        .map(|run| -> Result<Option<T>> {
            if t.loss(w0) <= threshold {
                return Ok(Some(T::zero()));
            }
            let mut s = SgdStepper::new(t, w0, cfg, run as u64)?;
            for k in 1..=cfg.max_steps {
                if !s.step() {
                    log::warn!("convergence_time: run {run} produced non-finite weights at step {k}");
                    return Ok(None);
                }
                if k % check == 0 {
                    let loss = t.loss(&s.w);
                    if loss <= threshold {
                        return Ok(Some(eta * T::from_count(k)));
                    }
                    if !(loss <= limit) {
                        log::warn!("convergence_time: run {run} diverged at step {k}");
                        return Ok(None);
                    }
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let stats = EscapeStats::from_samples(samples, cfg.max_steps)?;
    if stats.n_censored > 0 {
        log::warn!("convergence_time: {} of {} runs censored", stats.n_censored, n_runs);
    }
    Ok(stats)
}
