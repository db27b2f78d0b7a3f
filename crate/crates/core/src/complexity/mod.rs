//! Information complexity of a task under a Gaussian prior `N(0, λ² I)` and
//! Gaussian posterior `N(w₀, Σ)`.
//!
//! The pieces are the closed-form Gaussian KL, the Fisher information, the
//! optimal posterior covariance
//! `Σ* = (β/2) (H + β/(2λ²) I)⁻¹`, and the resulting complexity
//! `C_β(w₀) = L(w₀) + (β/2) [‖w₀‖²/λ² + log|2λ²/β · H + I|]`,
//! where `H` is always the Fisher at `w₀`.

mod distance;
mod structure;
mod trainer;

pub use distance::{distance_matrix, task_distance, DistanceMatrix, NamedDataset};
pub use structure::{structure_curve, StructureCurve, StructurePoint};
pub use trainer::{curvature_trace_grad, train_minimizer, TrainOutcome, TrainerConfig};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{logdet_spd, max_asymmetry, sym_eigenvalues};
use crate::tasks::Task;
use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior<T: Real> {
    mean: DVector<T>,
    covariance: DMatrix<T>,
}

impl<T: Real> GaussianPosterior<T> {
    pub fn new(mean: DVector<T>, covariance: DMatrix<T>) -> Result<Self> {
        check_dim(mean.len(), covariance.nrows(), "posterior covariance rows")?;
        check_dim(mean.len(), covariance.ncols(), "posterior covariance cols")?;
        if max_asymmetry(&covariance) > T::of(1e-10) * covariance.amax().max(T::one()) {
            return Err(Error::contract("posterior covariance is not symmetric"));
        }
        let min_eig = sym_eigenvalues(&covariance)?.min();
        if min_eig < T::of(-1e-10) {
            return Err(Error::contract(format!(
                "posterior covariance is not PSD (min eigenvalue {:e})",
                min_eig.to_f64_lossy()
            )));
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fisher information matrix, symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix<T: Real>(DMatrix<T>);

impl<T: Real> FisherMatrix<T> {
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::contract("Fisher matrix must be square"));
        }
        if max_asymmetry(&matrix) > T::of(1e-10) * matrix.amax().max(T::one()) {
            return Err(Error::contract("Fisher matrix is not symmetric"));
        }
        let min_eig = sym_eigenvalues(&matrix)?.min();
        let tol = T::of(1e-8) * matrix.norm().max(T::epsilon());
        if min_eig < -tol {
            return Err(Error::numerical(format!(
                "Fisher matrix has negative eigenvalue {:e}",
                min_eig.to_f64_lossy()
            )));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0
    }

    pub fn trace(&self) -> T {
        self.0.trace()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Pieces of `C_β` at one weight point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ComplexityReport<T: Real> {
    pub beta: T,
    pub lambda2: T,
    /// `L(w₀)`, mean cross-entropy without regularizer.
    pub loss_term: T,
    /// `‖w₀‖² / λ²`.
    pub norm_term: T,
    /// `log|2λ²/β · F + I|`.
    pub logdet_term: T,
    pub total: T,
}

impl<T: Real> ComplexityReport<T> {
    pub const CSV_HEADER: &'static str = "beta,lambda2,loss_term,norm_term,logdet_term,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?},{:?},{:?}",
            self.beta.to_f64_lossy(),
            self.lambda2.to_f64_lossy(),
            self.loss_term.to_f64_lossy(),
            self.norm_term.to_f64_lossy(),
            self.logdet_term.to_f64_lossy(),
            self.total.to_f64_lossy()
        )
    }
}

fn check_beta_lambda<T: Real>(beta: T, lambda2: T) -> Result<()> {
    if beta > T::zero() && lambda2 > T::zero() {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "beta and lambda2 must be positive (got {}, {})",
            beta.to_f64_lossy(),
            lambda2.to_f64_lossy()
        )))
    }
}

/// `KL(N(w₀, Σ) ‖ N(0, λ² I))` in nats.
///
/// A singular covariance has infinite divergence; that case returns `+∞`
/// and logs the reason.
pub fn gaussian_kl<T: Real>(q: &GaussianPosterior<T>, lambda2: T) -> Result<T> {
    if lambda2 <= T::zero() {
        return Err(Error::contract("gaussian_kl requires lambda2 > 0"));
    }
    let k = T::from_count(q.dim());
    let Some(logdet) = logdet_spd(q.covariance()) else {
        log::warn!(
            "gaussian_kl: covariance of dimension {} is singular; divergence is infinite",
            q.dim()
        );
        return Ok(T::infinity());
    };
    let kl = T::of(0.5)
        * (q.mean().norm_squared() / lambda2 + q.covariance().trace() / lambda2 + k * lambda2.ln() - logdet - k);
    // Roundoff can push an exact zero slightly negative.
    Ok(kl.max(T::zero()))
}

/// Fisher information of `p_w(y|x)` at `w0`, in exact class-expectation form.
pub fn fisher<T: Real>(t: &Task<T>, w0: &DVector<T>) -> Result<FisherMatrix<T>> {
    check_dim(t.param_count(), w0.len(), "fisher")?;
    FisherMatrix::new(t.fisher_matrix(w0))
}

/// `Σ* = (β/2) (H + β/(2λ²) I)⁻¹`.
pub fn optimal_sigma<T: Real>(h: &DMatrix<T>, beta: T, lambda2: T) -> Result<DMatrix<T>> {
    check_beta_lambda(beta, lambda2)?;
    if !h.is_square() {
        return Err(Error::contract("optimal_sigma needs a square matrix"));
    }
    let n = h.nrows();
    let ridge = beta / (T::of(2.0) * lambda2);
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::numerical("H + β/(2λ²) I is not positive definite; H must be PSD"))?;
    let mut sigma = chol.inverse() * (beta * T::of(0.5));
    crate::linalg::symmetrize(&mut sigma);
    Ok(sigma)
}

/// `C_β` assembled from its ingredients.
pub fn complexity_from_parts<T: Real>(
    loss: T,
    w0: &DVector<T>,
    fisher: &DMatrix<T>,
    beta: T,
    lambda2: T,
) -> Result<ComplexityReport<T>> {
    check_beta_lambda(beta, lambda2)?;
    check_dim(w0.len(), fisher.nrows(), "complexity_from_parts")?;
    let norm_term = w0.norm_squared() / lambda2;
    let mut m = fisher * (T::of(2.0) * lambda2 / beta);
    for i in 0..m.nrows() {
        m[(i, i)] += T::one();
    }
    // Eigenvalues of 2λ²/β·F + I are all ≥ 1; clamp roundoff below 1.
    let logdet_term = sym_eigenvalues(&m)?
        .iter()
        .fold(T::zero(), |acc, &l| acc + l.max(T::one()).ln());
    let total = loss + beta * T::of(0.5) * (norm_term + logdet_term);
    Ok(ComplexityReport {
        beta,
        lambda2,
        loss_term: loss,
        norm_term,
        logdet_term,
        total,
    })
}

/// `C_β(w₀)` for a task, with the Fisher at `w₀` standing in for the Hessian.
pub fn c_beta<T: Real>(t: &Task<T>, w0: &DVector<T>, beta: T, lambda2: T) -> Result<ComplexityReport<T>> {
    check_dim(t.param_count(), w0.len(), "c_beta")?;
    let f = t.fisher_matrix(w0);
    complexity_from_parts(t.data_loss(w0), w0, &f, beta, lambda2)
}

/// Second-order surrogate of `E_{N(w₀,Σ)}[L]`: `L(w₀) + ½ tr(F Σ)`.
pub fn expected_loss_surrogate<T: Real>(loss: T, fisher: &DMatrix<T>, sigma: &DMatrix<T>) -> T {
    loss + T::of(0.5) * fisher.component_mul(sigma).sum()
}

#[cfg(test)]
mod tests;
