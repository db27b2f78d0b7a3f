//! Kramers escape rates, the complexity rate law `1/τ = C e^{−ΔC/D}`, and
//! log-linear fits of measured passage times.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diffusion::EscapeStats;
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::Real;

/// Censored fraction at or above which an ensemble is refused by
/// [`arrhenius_fit_escapes`].
pub const MAX_CENSORED_FRACTION: f64 = 0.1;

/// `prefactor · exp(−ΔC / D)`.
pub fn kramers_rate_complexity<T: Real>(delta_c: T, diffusion: T, prefactor: T) -> Result<T> {
    if !(diffusion > T::zero()) || !(prefactor > T::zero()) {
        return Err(Error::contract("kramers_rate_complexity needs D > 0 and prefactor > 0"));
    }
    Ok(prefactor * (-delta_c / diffusion).exp())
}

/// Overdamped Kramers prefactor `√(U''(min) |U''(saddle)|) / 2π`.
pub fn kramers_prefactor<T: Real, P: Potential<T> + ?Sized>(p: &P, min_loc: T, saddle_loc: T) -> Result<T> {
    check_dim(1, p.dim(), "kramers_double_well")?;
    let k_min = p.hessian(&DVector::from_element(1, min_loc))[(0, 0)];
    let k_saddle = p.hessian(&DVector::from_element(1, saddle_loc))[(0, 0)];
    if !(k_min > T::zero()) {
        return Err(Error::contract(format!(
            "U'' at the minimum must be positive (got {})",
            k_min.to_f64_lossy()
        )));
    }
    if !(k_saddle < T::zero()) {
        return Err(Error::contract(format!(
            "U'' at the saddle must be negative (got {})",
            k_saddle.to_f64_lossy()
        )));
    }
    Ok((k_min * k_saddle.abs()).sqrt() / T::two_pi())
}

/// Escape rate over a 1D barrier in the small-`D` limit.
pub fn kramers_double_well<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    diffusion: T,
    min_loc: T,
    saddle_loc: T,
) -> Result<T> {
    let pre = kramers_prefactor(p, min_loc, saddle_loc)?;
    let barrier = p.value(&DVector::from_element(1, saddle_loc)) - p.value(&DVector::from_element(1, min_loc));
    kramers_rate_complexity(barrier, diffusion, pre)
}

/// Least-squares line `log τ = slope · x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RateFit<T: Real> {
    pub slope: T,
    pub intercept: T,
    pub r2: T,
    /// `(x, log τ)` pairs that entered the fit.
    pub points: Vec<(T, T)>,
}

impl<T: Real> RateFit<T> {
    /// Barrier under `τ ∝ e^{ΔC/D}` when `x = 1/D`: the slope itself.
    pub fn barrier(&self) -> T {
        self.slope
    }

    /// Barrier under the `τ ∝ e^{ΔC/2D}` reading of the same data.
    pub fn barrier_half_d(&self) -> T {
        self.slope * T::of(2.0)
    }

    /// Fitted prefactor `C = e^{−intercept}`.
    pub fn prefactor(&self) -> T {
        (-self.intercept).exp()
    }

    pub fn predict_log_time(&self, x: T) -> T {
        self.slope * x + self.intercept
    }

    /// `(x, predicted log τ)` on `n` evenly spaced points spanning the data.
    pub fn curve(&self, n: usize) -> Vec<(T, T)> {
        let lo = self.points.iter().fold(T::infinity(), |a, p| a.min(p.0));
        let hi = self.points.iter().fold(-T::infinity(), |a, p| a.max(p.0));
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * T::from_count(i) / T::from_count(n - 1);
                (x, self.predict_log_time(x))
            })
            .collect()
    }

    /// Two-column plot data `x predicted_log_time`, with a `#` header line.
    pub fn curve_dat(&self, n: usize) -> String {
        let mut out = String::from("# x log_time_fit\n");
        for (x, y) in self.curve(n) {
            out.push_str(&format!("{:?} {:?}\n", x.to_f64_lossy(), y.to_f64_lossy()));
        }
        out
    }
}

/// Fits `log(time)` against `x` by ordinary least squares.
pub fn arrhenius_fit<T: Real>(points: &[(T, T)]) -> Result<RateFit<T>> {
    if points.len() < 3 {
        return Err(Error::contract(format!(
            "arrhenius_fit needs at least 3 points (got {})",
            points.len()
        )));
    }
    if let Some((x, t)) = points
        .iter()
        .find(|(x, t)| !(*t > T::zero()) || !x.is_finite() || !t.is_finite())
    {
        return Err(Error::contract(format!(
            "arrhenius_fit needs finite x and positive finite times (got ({}, {}))",
            x.to_f64_lossy(),
            t.to_f64_lossy()
        )));
    }
    let logs: Vec<(T, T)> = points.iter().map(|&(x, t)| (x, t.ln())).collect();
    let n = T::from_count(logs.len());
    let mx = logs.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = logs.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let sxx = logs.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.0 - mx));
    let sxy = logs.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.1 - my));
    let syy = logs.iter().fold(T::zero(), |a, p| a + (p.1 - my) * (p.1 - my));
    let spread = logs.iter().fold(T::zero(), |a, p| a.max(p.0.abs()));
    if sxx <= T::of(1e3) * T::epsilon() * spread * spread * n {
        return Err(Error::contract("arrhenius_fit: x values are degenerate (all equal)"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = logs.iter().fold(T::zero(), |a, p| {
        let e = p.1 - slope * p.0 - intercept;
        a + e * e
    });
    let r2 = if syy > T::zero() {
        T::one() - ss_res / syy
    } else {
        T::one()
    };
    Ok(RateFit {
        slope,
        intercept,
        r2: r2.max(T::zero()).min(T::one()),
        points: logs,
    })
}

/// [`arrhenius_fit`] on escape ensembles, using each ensemble's mean over
/// uncensored runs. Ensembles with a censored fraction of 10% or more are
/// refused, since their means are biased low.
pub fn arrhenius_fit_escapes<T: Real>(points: &[(T, &EscapeStats<T>)]) -> Result<RateFit<T>> {
    if let Some((x, s)) = points
        .iter()
        .find(|(_, s)| s.censored_fraction() >= MAX_CENSORED_FRACTION)
    {
        return Err(Error::contract(format!(
            "ensemble at x={} has {} of {} runs censored; need < {}%",
            x.to_f64_lossy(),
            s.n_censored,
            s.n_runs,
            MAX_CENSORED_FRACTION * 100.0
        )));
    }
    let pts: Vec<(T, T)> = points.iter().map(|(x, s)| (*x, s.mean)).collect();
    arrhenius_fit(&pts)
}
