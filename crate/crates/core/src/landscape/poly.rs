use serde::{Deserialize, Serialize};

use crate::Real;

/// Univariate polynomial, coefficients in ascending order of degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Polynomial<T: Real> {
    pub coeffs: Vec<T>,
}

impl<T: Real> Polynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: T) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    /// Value and first three derivatives at `x`.
    pub fn eval_derivs(&self, x: T) -> [T; 4] {
        let mut out = [T::zero(); 4];
        for (order, slot) in out.iter_mut().enumerate() {
            // Horner over the shifted powers.
            let mut acc = T::zero();
            for (k, &c) in self.coeffs.iter().enumerate().rev() {
                if k < order {
                    break;
                }
                // falling factorial k (k-1) ... (k-order+1)
                let ff: usize = ((k + 1 - order)..=k).product();
                acc = acc * x + c * T::from_count(ff);
            }
            *slot = acc;
        }
        out
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * T::from_count(k))
            .collect();
        Self { coeffs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_agree_with_repeated_differentiation() {
        let p = Polynomial::<f64>::new(vec![0.3, -1.0, 0.5, 2.0, -0.25]);
        let d1 = p.derivative();
        let d2 = d1.derivative();
        let d3 = d2.derivative();
        for &x in &[-1.7, 0.0, 0.4, 2.2] {
            let e = p.eval_derivs(x);
            assert!((e[0] - p.eval(x)).abs() < 1e-12);
            assert!((e[1] - d1.eval(x)).abs() < 1e-12);
            assert!((e[2] - d2.eval(x)).abs() < 1e-12);
            assert!((e[3] - d3.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let p = Polynomial::constant(2.5f32);
        assert_eq!(p.eval_derivs(3.0), [2.5, 0.0, 0.0, 0.0]);
    }
}
