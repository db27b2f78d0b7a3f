//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Real;

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<DVector<T>> {
    if !m.is_square() {
        return Err(Error::contract(format!(
            "eigenvalues of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(format!(
            "eigendecomposition input has non-finite entries ({}x{})",
            m.nrows(),
            m.ncols()
        )));
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), T::epsilon(), 10_000).ok_or_else(|| {
        Error::numerical(format!(
            "symmetric eigendecomposition did not converge (dim {}, max |entry| {:e})",
            m.nrows(),
            m.amax().to_f64_lossy()
        ))
    })?;
    let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(DVector::from_vec(vals))
}

/// Sum of `ln λ` over eigenvalues with `λ > floor * max(max|λ|, 1)`.
pub fn positive_part_logdet<T: Real>(eigenvalues: &DVector<T>, floor: T) -> T {
    let scale = eigenvalues.amax().max(T::one());
    let cut = floor * scale;
    eigenvalues
        .iter()
        .filter(|&&l| l > cut)
        .fold(T::zero(), |acc, &l| acc + l.ln())
}

/// `ln |m|` for a symmetric positive definite matrix, `None` if not PD.
pub fn logdet_spd<T: Real>(m: &DMatrix<T>) -> Option<T> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let two = T::of(2.0);
    Some((0..m.nrows()).fold(T::zero(), |acc, i| acc + two * l[(i, i)].ln()))
}

pub fn max_asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::of(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = half * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_matches_eigenvalues() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let eig = sym_eigenvalues(&m).unwrap();
        let direct: f64 = eig.iter().map(|l: &f64| l.ln()).sum();
        assert!((logdet_spd(&m).unwrap() - direct).abs() < 1e-12);
        assert!(eig[0] < eig[1]);
    }

    #[test]
    fn positive_part_skips_negative_and_tiny() {
        let eig = DVector::from_vec(vec![-1.0, 1e-9, 2.0, 3.0]);
        let v = positive_part_logdet(&eig, 1e-6);
        assert!((v - (2.0f64.ln() + 3.0f64.ln())).abs() < 1e-14);
        assert_eq!(positive_part_logdet(&DVector::from_vec(vec![-1.0]), 1e-6), 0.0);
    }

    #[test]
    fn non_pd_has_no_logdet() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(logdet_spd(&m).is_none());
    }
}
