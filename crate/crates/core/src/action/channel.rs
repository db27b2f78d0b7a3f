use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::stats::{bin_probabilities, mean_std, tv_distance, Histogram};
use crate::diffusion::{DiffusionParams, LangevinStepper};
use crate::error::{Error, Result};
use crate::landscape::Channel2D;
use crate::Real;

/// Observed `u`-marginal of a 2D channel compared with the 1D predictions
/// with and without the transverse `b(u)^{−1/2}` factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub histogram: Histogram,
    /// Bin masses of `e^{−a(u)/D} b(u)^{−1/2}`.
    pub corrected: Vec<f64>,
    /// Bin masses of `e^{−a(u)/D}`.
    pub uncorrected: Vec<f64>,
    pub tv_corrected: f64,
    pub tv_uncorrected: f64,
    pub u_variance: f64,
    /// Min of `b` over the histogram range divided by max `|a''|`.
    pub separation_ratio: f64,
    /// z-score of the mean difference between first and second halves of
    /// the chains.
    pub drift_z: f64,
    pub equilibrated: bool,
}

const DRIFT_Z_LIMIT: f64 = 4.0;

/// Range of `u` outside which `e^{−(a − a_min)/D}` is below `e^{−14}`.
fn marginal_range<T: Real>(ch: &Channel2D<T>, d: f64) -> Result<(f64, f64)> {
    let a = |u: f64| ch.a.eval(T::of(u)).to_f64_lossy();
    let n = 20_000;
    let span = 50.0;
    let grid: Vec<f64> = (0..=n).map(|i| -span + 2.0 * span * i as f64 / n as f64).collect();
    let a_min = grid.iter().map(|&u| a(u)).fold(f64::INFINITY, f64::min);
    let live: Vec<f64> = grid.iter().copied().filter(|&u| (a(u) - a_min) / d < 14.0).collect();
    match (live.first(), live.last()) {
        (Some(&lo), Some(&hi)) if lo > -span && hi < span && hi > lo => {
            let pad = 2.0 * span / n as f64;
            Ok((lo - pad, hi + pad))
        }
        _ => Err(Error::contract(
            "channel base potential a(u) must confine u (grow on both sides)",
        )),
    }
}

/// Runs `n_runs` chains of 2D Langevin dynamics from `(u0, 0)`, discards the
/// first fifth of each, and histograms `u`.
pub fn channel_marginal_check<T: Real>(
    ch: &Channel2D<T>,
    u0: T,
    params: &DiffusionParams<T>,
    n_runs: usize,
    bins: usize,
) -> Result<ChannelReport> {
    params.validate()?;
    if !(params.d > T::zero()) || n_runs < 2 || bins < 2 || params.max_steps < 10 {
        return Err(Error::contract(
            "channel_marginal_check needs D > 0, n_runs >= 2, bins >= 2, max_steps >= 10",
        ));
    }
    let d = params.d.to_f64_lossy();
    let (lo, hi) = marginal_range(ch, d)?;
    let min_b = ch.check_transverse_positive(T::of(lo), T::of(hi))?.to_f64_lossy();
    let max_a2 = (0..=1000)
        .map(|i| {
            let u = lo + (hi - lo) * i as f64 / 1000.0;
            ch.a.eval_derivs(T::of(u))[2].to_f64_lossy().abs()
        })
        .fold(0.0, f64::max);
    let separation_ratio = if max_a2 > 0.0 { min_b / max_a2 } else { f64::INFINITY };
    if separation_ratio < 10.0 {
        log::warn!(
            "channel_marginal_check: min b / max|a''| = {separation_ratio:.2}; transverse relaxation is not much faster than motion along u"
        );
    }

    let burn = params.max_steps / 5;
    let start = DVector::from_vec(vec![u0, T::zero()]);
    let chains: Vec<(Histogram, f64, f64)> = (0..n_runs)
        .into_par_iter()
        .map(|run| -> Result<_> {
            let mut s = LangevinStepper::new(ch, &start, params, run as u64)?;
            for _ in 0..burn {
                s.step()?;
            }
            let kept = params.max_steps - burn;
            let mut h = Histogram::new(lo, hi, bins)?;
            let (mut first, mut second) = (0.0, 0.0);
            for k in 0..kept {
                s.step()?;
                let u = s.state()[0].to_f64_lossy();
                h.add(u);
                if k < kept / 2 {
                    first += u;
                } else {
                    second += u;
                }
            }
            Ok((h, first / (kept / 2) as f64, second / (kept - kept / 2) as f64))
        })
        .collect::<Result<_>>()?;

    let mut hist = Histogram::new(lo, hi, bins)?;
    let mut diffs = Vec::with_capacity(n_runs);
    for (h, m1, m2) in &chains {
        hist.merge(h);
        diffs.push(m2 - m1);
    }
    let (mean_diff, sd_diff) = mean_std(&diffs);
    let drift_z = if sd_diff > 0.0 {
        mean_diff / (sd_diff / (n_runs as f64).sqrt())
    } else {
        0.0
    };
    let equilibrated = drift_z.abs() <= DRIFT_Z_LIMIT;
    if !equilibrated {
        log::warn!("channel_marginal_check: running mean drifts (z = {drift_z:.2}); increase max_steps");
    }

    let a = |u: f64| ch.a.eval(T::of(u)).to_f64_lossy();
    let b = |u: f64| ch.b.eval(T::of(u)).to_f64_lossy();
    let a_min = (0..=2000)
        .map(|i| a(lo + (hi - lo) * i as f64 / 2000.0))
        .fold(f64::INFINITY, f64::min);
    let corrected = bin_probabilities(|u| (-(a(u) - a_min) / d).exp() / b(u).sqrt(), lo, hi, bins, 16);
    let uncorrected = bin_probabilities(|u| (-(a(u) - a_min) / d).exp(), lo, hi, bins, 16);
    let observed = hist.probabilities();
    let centers = hist.centers();
    let mean_u: f64 = observed.iter().zip(&centers).map(|(p, c)| p * c).sum();
    let u_variance = observed
        .iter()
        .zip(&centers)
        .map(|(p, c)| p * (c - mean_u).powi(2))
        .sum();
    Ok(ChannelReport {
        tv_corrected: tv_distance(&observed, &corrected)?,
        tv_uncorrected: tv_distance(&observed, &uncorrected)?,
        histogram: hist,
        corrected,
        uncorrected,
        u_variance,
        separation_ratio,
        drift_z,
        equilibrated,
    })
}
