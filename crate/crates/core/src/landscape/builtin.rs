use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::poly::Polynomial;
use super::Potential;
use crate::error::{Error, Result};
use crate::tasks::Task;
use crate::Real;

/// `U(w) = ½ Σ aᵢ wᵢ²`. All-zero curvature gives the flat potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic<T: Real> {
    pub curvature: DVector<T>,
}

impl<T: Real> Quadratic<T> {
    pub fn new(curvature: Vec<T>) -> Self {
        Self {
            curvature: DVector::from_vec(curvature),
        }
    }

    pub fn isotropic(dim: usize, a: T) -> Self {
        Self {
            curvature: DVector::from_element(dim, a),
        }
    }

    pub fn flat(dim: usize) -> Self {
        Self::isotropic(dim, T::zero())
    }
}

impl<T: Real> Potential<T> for Quadratic<T> {
    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn value(&self, w: &DVector<T>) -> T {
        let half = T::of(0.5);
        w.iter()
            .zip(self.curvature.iter())
            .fold(T::zero(), |acc, (&x, &a)| acc + half * a * x * x)
    }

    fn grad_into(&self, w: &DVector<T>, out: &mut DVector<T>) {
        out.zip_zip_apply(w, &self.curvature, |o, x, a| *o = a * x);
    }

    fn hessian(&self, _w: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_diagonal(&self.curvature)
    }

    fn laplacian(&self, _w: &DVector<T>) -> T {
        self.curvature.sum()
    }

    fn laplacian_grad(&self, _w: &DVector<T>) -> DVector<T> {
        DVector::zeros(self.dim())
    }
}

/// `U(w) = s (w² − 1)² / 4`: minima at ±1, saddle at 0, barrier `s/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWell1D<T: Real> {
    pub scale: T,
}

impl<T: Real> DoubleWell1D<T> {
    pub fn new() -> Self {
        Self { scale: T::one() }
    }

    pub fn scaled(scale: T) -> Self {
        Self { scale }
    }
}

impl<T: Real> Default for DoubleWell1D<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Potential<T> for DoubleWell1D<T> {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, w: &DVector<T>) -> T {
        let x = w[0];
        let m = x * x - T::one();
        self.scale * m * m * T::of(0.25)
    }

    fn grad_into(&self, w: &DVector<T>, out: &mut DVector<T>) {
        let x = w[0];
        out[0] = self.scale * (x * x * x - x);
    }

    fn hessian(&self, w: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_element(1, 1, self.laplacian(w))
    }

    fn laplacian(&self, w: &DVector<T>) -> T {
        let x = w[0];
        self.scale * (T::of(3.0) * x * x - T::one())
    }

    fn laplacian_grad(&self, w: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, self.scale * T::of(6.0) * w[0])
    }
}

/// Two-dimensional channel `U(u, v) = a(u) + ½ b(u) v²`: a base potential along
/// `u` and a harmonic transverse direction whose stiffness varies with `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel2D<T: Real> {
    pub a: Polynomial<T>,
    pub b: Polynomial<T>,
}

impl<T: Real> Channel2D<T> {
    pub fn new(a: Polynomial<T>, b: Polynomial<T>) -> Self {
        Self { a, b }
    }

    /// Checks `b(u) > 0` on a dense grid over `[lo, hi]`, returning the
    /// minimum found.
    pub fn check_transverse_positive(&self, lo: T, hi: T) -> Result<T> {
        let n = 2000;
        let mut min_b = T::infinity();
        for i in 0..=n {
            let u = lo + (hi - lo) * T::from_count(i) / T::from_count(n);
            min_b = min_b.min(self.b.eval(u));
        }
        if min_b > T::zero() {
            Ok(min_b)
        } else {
            Err(Error::contract(format!(
                "channel transverse curvature b(u) must be positive on [{}, {}], min found {}",
                lo.to_f64_lossy(),
                hi.to_f64_lossy(),
                min_b.to_f64_lossy()
            )))
        }
    }
}

impl<T: Real> Potential<T> for Channel2D<T> {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, w: &DVector<T>) -> T {
        let (u, v) = (w[0], w[1]);
        self.a.eval(u) + T::of(0.5) * self.b.eval(u) * v * v
    }

    fn grad_into(&self, w: &DVector<T>, out: &mut DVector<T>) {
        let (u, v) = (w[0], w[1]);
        let a = self.a.eval_derivs(u);
        let b = self.b.eval_derivs(u);
        out[0] = a[1] + T::of(0.5) * b[1] * v * v;
        out[1] = b[0] * v;
    }

    fn hessian(&self, w: &DVector<T>) -> DMatrix<T> {
        let (u, v) = (w[0], w[1]);
        let a = self.a.eval_derivs(u);
        let b = self.b.eval_derivs(u);
        let uv = b[1] * v;
        DMatrix::from_row_slice(2, 2, &[a[2] + T::of(0.5) * b[2] * v * v, uv, uv, b[0]])
    }

    fn laplacian(&self, w: &DVector<T>) -> T {
        let (u, v) = (w[0], w[1]);
        let a = self.a.eval_derivs(u);
        let b = self.b.eval_derivs(u);
        a[2] + T::of(0.5) * b[2] * v * v + b[0]
    }

    fn laplacian_grad(&self, w: &DVector<T>) -> DVector<T> {
        let (u, v) = (w[0], w[1]);
        let a = self.a.eval_derivs(u);
        let b = self.b.eval_derivs(u);
        DVector::from_vec(vec![a[3] + T::of(0.5) * b[3] * v * v + b[1], b[2] * v])
    }
}

/// The closed set of potentials the harness can build.
#[derive(Debug, Clone)]
pub enum BuiltinPotential<T: Real> {
    Quadratic(Quadratic<T>),
    DoubleWell1D(DoubleWell1D<T>),
    Channel2D(Channel2D<T>),
    ModelLoss(Box<Task<T>>),
}

impl<T: Real> BuiltinPotential<T> {
    fn inner(&self) -> &dyn Potential<T> {
        match self {
            BuiltinPotential::Quadratic(p) => p,
            BuiltinPotential::DoubleWell1D(p) => p,
            BuiltinPotential::Channel2D(p) => p,
            BuiltinPotential::ModelLoss(t) => t.as_ref(),
        }
    }
}

impl<T: Real> Potential<T> for BuiltinPotential<T> {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn value(&self, w: &DVector<T>) -> T {
        self.inner().value(w)
    }

    fn grad_into(&self, w: &DVector<T>, out: &mut DVector<T>) {
        self.inner().grad_into(w, out)
    }

    fn hessian(&self, w: &DVector<T>) -> DMatrix<T> {
        self.inner().hessian(w)
    }

    fn laplacian(&self, w: &DVector<T>) -> T {
        self.inner().laplacian(w)
    }

    fn laplacian_grad(&self, w: &DVector<T>) -> DVector<T> {
        self.inner().laplacian_grad(w)
    }
}

/// JSON description of an analytic potential: a `name` plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Quadratic {
        curvature: Vec<f64>,
    },
    #[serde(rename = "double-well-1d")]
    DoubleWell1D {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Polynomial coefficients (ascending) of `a(u)` and `b(u)`.
    #[serde(rename = "channel-2d")]
    Channel2D {
        a: Vec<f64>,
        b: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl PotentialSpec {
    pub fn build<T: Real>(&self) -> Result<BuiltinPotential<T>> {
        let conv = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        Ok(match self {
            PotentialSpec::Quadratic { curvature } => {
                if curvature.is_empty() {
                    return Err(Error::contract("quadratic potential needs at least one curvature"));
                }
                BuiltinPotential::Quadratic(Quadratic::new(conv(curvature)))
            }
            PotentialSpec::DoubleWell1D { scale } => {
                BuiltinPotential::DoubleWell1D(DoubleWell1D::scaled(T::of(*scale)))
            }
            PotentialSpec::Channel2D { a, b } => {
                if a.is_empty() || b.is_empty() {
                    return Err(Error::contract("channel-2d needs non-empty a and b coefficient lists"));
                }
                BuiltinPotential::Channel2D(Channel2D::new(Polynomial::new(conv(a)), Polynomial::new(conv(b))))
            }
        })
    }
}
