use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{bin_probabilities, half_split_drift, tv_distance, Histogram};
use super::{DiffusionParams, EscapeStats, Path};
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::linalg::sym_eigenvalues;
use crate::rng::{stream_rng, StreamRng};
use crate::Real;

/// Euler–Maruyama integrator for `ẇ = −∇U(w) + √(2D) n(t)`:
/// `w ← w − dt ∇U(w) + √(2D dt) ξ`.
pub struct LangevinStepper<'a, T: Real, P: Potential<T> + ?Sized> {
    potential: &'a P,
    w: DVector<T>,
    grad: DVector<T>,
    dt: T,
    noise: T,
    rng: StreamRng,
    steps: usize,
}

impl<'a, T: Real, P: Potential<T> + ?Sized> LangevinStepper<'a, T, P> {
    /// Starts at `w0` with the noise stream `(params.seed, stream)`.
    pub fn new(potential: &'a P, w0: &DVector<T>, params: &DiffusionParams<T>, stream: u64) -> Result<Self> {
        params.validate()?;
        check_dim(potential.dim(), w0.len(), "langevin start")?;
        Ok(Self {
            potential,
            w: w0.clone(),
            grad: DVector::zeros(w0.len()),
            dt: params.dt,
            noise: (T::of(2.0) * params.d * params.dt).sqrt(),
            rng: stream_rng(params.seed, stream),
            steps: 0,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        self.potential.grad_into(&self.w, &mut self.grad);
        for i in 0..self.w.len() {
            let xi = T::standard_normal(&mut self.rng);
            self.w[i] += -self.dt * self.grad[i] + self.noise * xi;
        }
        self.steps += 1;
        if self.w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: self.steps });
        }
        Ok(())
    }

    pub fn state(&self) -> &DVector<T> {
        &self.w
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> T {
        self.dt * T::from_count(self.steps)
    }
}

fn warn_if_stiff<T: Real, P: Potential<T> + ?Sized>(p: &P, w0: &DVector<T>, dt: T) {
    if let Ok(eig) = sym_eigenvalues(&p.hessian(w0)) {
        let lmax = eig.iter().fold(T::zero(), |a, l| a.max(l.abs()));
        if dt * lmax > T::of(0.5) {
            log::warn!(
                "dt * max|eig H| = {:.3} at the start point exceeds 0.5; Euler-Maruyama may be inaccurate",
                (dt * lmax).to_f64_lossy()
            );
        }
    }
}

/// One Langevin trajectory with all `max_steps + 1` states, on stream
/// `(seed, 0)`.
pub fn simulate_langevin<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    params: &DiffusionParams<T>,
) -> Result<Path<T>> {
    simulate_langevin_thinned(p, w0, params, 1)
}

/// As [`simulate_langevin`], keeping every `every`-th state.
pub fn simulate_langevin_thinned<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    params: &DiffusionParams<T>,
    every: usize,
) -> Result<Path<T>> {
    if params.max_steps == 0 {
        return Err(Error::contract("simulate_langevin needs max_steps >= 1"));
    }
    let every = every.max(1);
    let mut s = LangevinStepper::new(p, w0, params, 0)?;
    warn_if_stiff(p, w0, params.dt);
    let mut points = Vec::with_capacity(params.max_steps / every + 2);
    points.push(w0.clone());
    for k in 1..=params.max_steps {
        s.step()?;
        if k % every == 0 {
            points.push(s.state().clone());
        }
    }
    if points.len() < 2 {
        points.push(s.state().clone());
        return Path::new(vec![T::zero(), s.time()], points);
    }
    Path::uniform(T::zero(), params.dt * T::from_count(every), points)
}

/// First time each run enters the ball `‖w − center‖ ≤ radius`.
///
/// Run `i` uses stream `(params.seed, i)`, so results do not depend on how
/// runs are scheduled across threads.
pub fn first_passage<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: &DVector<T>,
    center: &DVector<T>,
    radius: T,
    params: &DiffusionParams<T>,
    n_runs: usize,
) -> Result<EscapeStats<T>> {
    params.validate()?;
    check_dim(p.dim(), w0.len(), "first_passage start")?;
    check_dim(p.dim(), center.len(), "first_passage target")?;
    if !(radius > T::zero()) {
        return Err(Error::contract("first_passage needs radius > 0"));
    }
    if n_runs == 0 {
        return Err(Error::contract("first_passage needs n_runs >= 1"));
    }
    warn_if_stiff(p, w0, params.dt);
    let r2 = radius * radius;
    let inside = |w: &DVector<T>| (w - center).norm_squared() <= r2;
    let samples: Vec<Option<T>> = (0..n_runs)
        .into_par_iter()
        .map(|run| -> Result<Option<T>> {
            if inside(w0) {
                return Ok(Some(T::zero()));
            }
            let mut s = LangevinStepper::new(p, w0, params, run as u64)?;
            while s.steps() < params.max_steps {
                s.step()?;
                if inside(s.state()) {
                    return Ok(Some(s.time()));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let stats = EscapeStats::from_samples(samples, params.max_steps)?;
    if stats.n_censored > 0 {
        log::warn!("first_passage: {} of {} runs censored", stats.n_censored, n_runs);
    }
    Ok(stats)
}

/// Long-run statistics of a one-dimensional potential, pooled over chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub n_chains: usize,
    pub steps_per_chain: usize,
    pub mean: f64,
    pub variance: f64,
    pub histogram: Histogram,
    /// Bin masses of `e^{−U/D}` restricted to the histogram range.
    pub gibbs_probabilities: Vec<f64>,
    pub tv: f64,
    /// Largest half-split mean drift over chains, in pooled standard deviations.
    pub max_chain_drift: f64,
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

/// Runs `n_chains` independent chains from `w0`, discards `burn_in` steps of
/// each, then records `params.max_steps` states per chain and compares the
/// pooled histogram on `[lo, hi)` with the Gibbs density `∝ e^{−U/D}`.
#[allow(clippy::too_many_arguments)]
pub fn stationary_check_1d<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w0: T,
    params: &DiffusionParams<T>,
    burn_in: usize,
    n_chains: usize,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<StationaryReport> {
    if p.dim() != 1 {
        return Err(Error::contract("stationary_check_1d needs a one-dimensional potential"));
    }
    if n_chains == 0 || params.max_steps == 0 {
        return Err(Error::contract(
            "stationary_check_1d needs n_chains >= 1 and max_steps >= 1",
        ));
    }
    if !(params.d > T::zero()) {
        return Err(Error::contract("stationary_check_1d needs D > 0"));
    }
    let start = DVector::from_element(1, w0);
    let per_chain: Vec<(Moments, Histogram, f64)> = (0..n_chains)
        .into_par_iter()
        .map(|c| -> Result<_> {
            let mut s = LangevinStepper::new(p, &start, params, c as u64)?;
            for _ in 0..burn_in {
                s.step()?;
            }
            let mut m = Moments::default();
            let mut h = Histogram::new(lo, hi, bins)?;
            // block means keep the drift check cheap on long chains
            let block = (params.max_steps / 1000).max(1);
            let mut blocks = Vec::with_capacity(1000);
            let mut acc = 0.0;
            for k in 0..params.max_steps {
                s.step()?;
                let x = s.state()[0].to_f64_lossy();
                m.push(x);
                h.add(x);
                acc += x;
                if (k + 1) % block == 0 {
                    blocks.push(acc / block as f64);
                    acc = 0.0;
                }
            }
            Ok((m, h, half_split_drift(&blocks)))
        })
        .collect::<Result<_>>()?;

    let mut moments = Moments::default();
    let mut hist = Histogram::new(lo, hi, bins)?;
    let mut max_drift = 0.0f64;
    for (m, h, d) in &per_chain {
        moments = moments.merge(*m);
        hist.merge(h);
        max_drift = max_drift.max(*d);
    }
    let d = params.d.to_f64_lossy();
    let u = |x: f64| p.value(&DVector::from_element(1, T::of(x))).to_f64_lossy();
    let grid = 4000;
    let u_min = (0..=grid)
        .map(|i| u(lo + (hi - lo) * i as f64 / grid as f64))
        .fold(f64::INFINITY, f64::min);
    let gibbs = bin_probabilities(|x| (-(u(x) - u_min) / d).exp(), lo, hi, bins, 16);
    let tv = tv_distance(&hist.probabilities(), &gibbs)?;
    Ok(StationaryReport {
        n_chains,
        steps_per_chain: params.max_steps,
        mean: moments.mean,
        variance: moments.m2 / (moments.n - 1.0).max(1.0),
        histogram: hist,
        gibbs_probabilities: gibbs,
        tv,
        max_chain_drift: max_drift,
    })
}
