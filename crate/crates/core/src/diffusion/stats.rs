//! Small statistics helpers used by the ensemble checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::from_count(xs.len());
    let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
    (mean, (ss / (n - T::one())).sqrt())
}

/// Median; sorts `xs` in place.
pub fn median<T: Real>(xs: &mut [T]) -> T {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) * T::of(0.5)
    }
}

/// Equal-width histogram over `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Samples that fell outside the range.
    pub outside: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 {
            return Err(Error::contract("histogram needs hi > lo and at least one bin"));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
            outside: 0,
        })
    }

    pub fn add(&mut self, x: f64) {
        let bins = self.counts.len();
        let s = (x - self.lo) / (self.hi - self.lo);
        if (0.0..1.0).contains(&s) {
            let b = ((s * bins as f64) as usize).min(bins - 1);
            self.counts[b] += 1;
        } else {
            self.outside += 1;
        }
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.outside += other.outside;
    }

    pub fn total_inside(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin probabilities conditional on landing inside the range.
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.total_inside().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (0..self.counts.len()).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }
}

/// `½ Σ |pᵢ − qᵢ|` after normalizing both vectors to unit mass.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::contract(
            "tv_distance needs two non-empty vectors of equal length",
        ));
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if !(sp > 0.0 && sq > 0.0) {
        return Err(Error::contract("tv_distance needs positive total mass"));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a / sp - b / sq).abs()).sum::<f64>())
}

/// Mass of an unnormalized density on each bin of `[lo, hi)`, by composite
/// Simpson with `sub` (even) panels per bin, normalized to sum to 1.
pub fn bin_probabilities(density: impl Fn(f64) -> f64, lo: f64, hi: f64, bins: usize, sub: usize) -> Vec<f64> {
    let sub = sub.max(2) + sub % 2;
    let w = (hi - lo) / bins as f64;
    let h = w / sub as f64;
    let mass: Vec<f64> = (0..bins)
        .map(|b| {
            let a = lo + b as f64 * w;
            let mut s = density(a) + density(a + w);
            for k in 1..sub {
                s += density(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        })
        .collect();
    let total: f64 = mass.iter().sum();
    mass.into_iter().map(|m| m / total).collect()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // ties share the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::contract("spearman needs two equal-length samples of size >= 2"));
    }
    pearson(&ranks(x), &ranks(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::contract("correlation of a constant sample is undefined"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Compares the means of the two halves of a chain. Returns the difference
/// in units of the pooled standard deviation.
pub fn half_split_drift(xs: &[f64]) -> f64 {
    let mid = xs.len() / 2;
    let (a, b) = xs.split_at(mid);
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let pooled = (0.5 * (sa * sa + sb * sb)).sqrt();
    if pooled == 0.0 {
        return if ma == mb { 0.0 } else { f64::INFINITY };
    }
    (ma - mb).abs() / pooled
}
