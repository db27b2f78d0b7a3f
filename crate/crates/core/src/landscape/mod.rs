//! Potentials over weight space and the curvature-corrected landscapes built
//! from them.
//!
//! The drift of the diffusion is always the descent direction `f = −∇U`.
//! From it two derived potentials are defined:
//!
//! * the path potential `V(w) = ½‖∇U‖² − D ΔU`, which drives critical paths
//!   of the path action (`ẅ = ∇V`), and
//! * the effective potential `U_eff(w) = U(w) + D log|∇²U(w)|₊`, where `|·|₊`
//!   is the product of the Hessian eigenvalues above a relative floor.

mod builtin;
mod poly;

pub use builtin::{BuiltinPotential, Channel2D, DoubleWell1D, PotentialSpec, Quadratic};
pub use poly::Polynomial;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{positive_part_logdet, sym_eigenvalues};
use crate::Real;

/// Point in weight space.
pub type WeightVector<T> = DVector<T>;

/// Relative eigenvalue floor of the positive-part determinant.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-6;

/// A twice differentiable scalar field over weight space.
///
/// Implementations are pure; evaluation never mutates shared state, so a
/// potential can be used from any number of worker threads.
pub trait Potential<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, w: &DVector<T>) -> T;

    /// Writes `∇U(w)` into `out` (already sized to `dim`).
    fn grad_into(&self, w: &DVector<T>, out: &mut DVector<T>);

    fn hessian(&self, w: &DVector<T>) -> DMatrix<T>;

    fn grad(&self, w: &DVector<T>) -> DVector<T> {
        let mut g = DVector::zeros(self.dim());
        self.grad_into(w, &mut g);
        g
    }

    /// `ΔU = tr ∇²U`.
    fn laplacian(&self, w: &DVector<T>) -> T {
        self.hessian(w).trace()
    }

    /// `∇(ΔU)`. The default uses central differences of [`Potential::laplacian`].
    fn laplacian_grad(&self, w: &DVector<T>) -> DVector<T> {
        let h = T::epsilon().powf(T::of(1.0 / 3.0)) * T::of(4.0);
        let mut probe = w.clone();
        DVector::from_fn(self.dim(), |i, _| {
            let x = probe[i];
            let step = h * x.abs().max(T::one());
            probe[i] = x + step;
            let up = self.laplacian(&probe);
            probe[i] = x - step;
            let down = self.laplacian(&probe);
            probe[i] = x;
            (up - down) / (step + step)
        })
    }
}

impl<T: Real, P: Potential<T> + ?Sized> Potential<T> for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, w: &DVector<T>) -> T {
        (**self).value(w)
    }
    fn grad_into(&self, w: &DVector<T>, out: &mut DVector<T>) {
        (**self).grad_into(w, out)
    }
    fn hessian(&self, w: &DVector<T>) -> DMatrix<T> {
        (**self).hessian(w)
    }
    fn laplacian(&self, w: &DVector<T>) -> T {
        (**self).laplacian(w)
    }
    fn laplacian_grad(&self, w: &DVector<T>) -> DVector<T> {
        (**self).laplacian_grad(w)
    }
}

/// Sign of the curvature correction in `U_eff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureSign {
    /// `U + D log|H|₊`, the convention tied to the information complexity.
    #[default]
    Plus,
    /// `U − D log|H|₊`, kept for comparison only.
    Minus,
}

/// Descent drift `f(w) = −∇U(w)`.
pub fn drift<T: Real, P: Potential<T> + ?Sized>(p: &P, w: &WeightVector<T>) -> Result<DVector<T>> {
    check_dim(p.dim(), w.len(), "drift")?;
    Ok(-p.grad(w))
}

/// `V(w) = ½‖∇U(w)‖² − D ΔU(w)`.
pub fn path_potential<T: Real, P: Potential<T> + ?Sized>(p: &P, w: &WeightVector<T>, diffusion: T) -> Result<T> {
    check_dim(p.dim(), w.len(), "path_potential")?;
    if diffusion < T::zero() {
        return Err(Error::contract("path_potential requires D >= 0"));
    }
    Ok(T::of(0.5) * p.grad(w).norm_squared() - diffusion * p.laplacian(w))
}

/// `∇V(w) = ∇²U ∇U − D ∇ΔU`, the acceleration of a critical path.
pub fn path_potential_grad<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w: &WeightVector<T>,
    diffusion: T,
) -> Result<DVector<T>> {
    check_dim(p.dim(), w.len(), "path_potential_grad")?;
    let g = p.grad(w);
    Ok(p.hessian(w) * g - p.laplacian_grad(w) * diffusion)
}

/// `U(w) + D log|∇²U(w)|₊`.
pub fn effective_potential<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w: &WeightVector<T>,
    diffusion: T,
    eig_floor: T,
) -> Result<T> {
    effective_potential_signed(p, w, diffusion, eig_floor, CurvatureSign::Plus)
}

pub fn effective_potential_signed<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    w: &WeightVector<T>,
    diffusion: T,
    eig_floor: T,
    sign: CurvatureSign,
) -> Result<T> {
    check_dim(p.dim(), w.len(), "effective_potential")?;
    if diffusion < T::zero() {
        return Err(Error::contract("effective_potential requires D >= 0"));
    }
    if eig_floor <= T::zero() {
        return Err(Error::contract("effective_potential requires eig_floor > 0"));
    }
    let eig = sym_eigenvalues(&p.hessian(w))?;
    let logdet = positive_part_logdet(&eig, eig_floor);
    let correction = diffusion * logdet;
    Ok(match sign {
        CurvatureSign::Plus => p.value(w) + correction,
        CurvatureSign::Minus => p.value(w) - correction,
    })
}
