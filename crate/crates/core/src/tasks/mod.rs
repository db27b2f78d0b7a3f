//! Synthetic classification tasks and the loss landscapes they define.
//!
//! A [`Task`] pairs a [`Dataset`] with a [`ModelSpec`]. Its potential is
//! the mean cross-entropy plus `γ/2 ‖w‖²`.

mod dataset;
mod model;

pub use dataset::{blob_centers, concat, corrupt_labels, generate_blobs, select_classes, Dataset, Provenance};
pub use model::{Activation, ModelFamily, ModelSpec};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::Real;
use model::softmax;

#[derive(Debug, Clone, PartialEq)]
pub struct Task<T: Real> {
    data: Dataset<T>,
    model: ModelSpec,
}

impl<T: Real> Task<T> {
    pub fn new(data: Dataset<T>, model: ModelSpec) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::contract("a task needs at least one sample"));
        }
        if model.input_dim != data.dim() {
            return Err(Error::contract(format!(
                "model expects {} inputs, dataset has {} columns",
                model.input_dim,
                data.dim()
            )));
        }
        let max_label = data.labels().iter().copied().max().unwrap_or(0);
        if model.classes < max_label + 1 || model.classes < data.classes() {
            return Err(Error::contract(format!(
                "model has {} classes but the dataset label space has {}",
                model.classes,
                data.classes()
            )));
        }
        Ok(Self { data, model })
    }

    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }

    pub fn weight_decay(&self) -> T {
        T::of(self.model.weight_decay)
    }

    /// Same data, different weight decay.
    pub fn with_weight_decay(&self, weight_decay: f64) -> Self {
        Self {
            data: self.data.clone(),
            model: self.model.with_weight_decay(weight_decay),
        }
    }

    /// `p_w(· | xᵢ)` for sample `i`.
    pub fn predictive(&self, w: &DVector<T>, i: usize) -> DVector<T> {
        let x = self.data.inputs().row(i).transpose();
        softmax(&self.model.logits(w, x.column(0))).0
    }

    fn sample_nll(&self, w: &DVector<T>, i: usize) -> T {
        let x = self.data.inputs().row(i).transpose();
        let z = self.model.logits(w, x.column(0));
        let (_, lse) = softmax(&z);
        lse - z[self.data.labels()[i]]
    }

    /// Mean cross-entropy, no regularizer.
    pub fn data_loss(&self, w: &DVector<T>) -> T {
        let n = self.data.len();
        (0..n).fold(T::zero(), |acc, i| acc + self.sample_nll(w, i)) / T::from_count(n)
    }

    /// Mean cross-entropy plus `γ/2 ‖w‖²`.
    pub fn loss(&self, w: &DVector<T>) -> T {
        self.data_loss(w) + T::of(0.5) * self.weight_decay() * w.norm_squared()
    }

    /// Adds `scale · ∇(−log p_w(yᵢ|xᵢ))` to `out`.
    fn accumulate_sample_grad(&self, w: &DVector<T>, i: usize, scale: T, out: &mut DVector<T>) {
        let x = self.data.inputs().row(i).transpose();
        let z = self.model.logits(w, x.column(0));
        let (mut r, _) = softmax(&z);
        r[self.data.labels()[i]] -= T::one();
        self.model.accumulate_vjp(w, x.column(0), &r, scale, out);
    }

    /// Mean gradient of the unregularized loss over `indices` (repeats allowed).
    pub fn minibatch_grad_into(&self, w: &DVector<T>, indices: &[usize], out: &mut DVector<T>) {
        out.fill(T::zero());
        let scale = T::one() / T::from_count(indices.len());
        for &i in indices {
            self.accumulate_sample_grad(w, i, scale, out);
        }
    }

    pub fn data_grad(&self, w: &DVector<T>) -> DVector<T> {
        let mut g = DVector::zeros(self.param_count());
        let scale = T::one() / T::from_count(self.data.len());
        for i in 0..self.data.len() {
            self.accumulate_sample_grad(w, i, scale, &mut g);
        }
        g
    }

    pub fn grad_loss(&self, w: &DVector<T>) -> DVector<T> {
        self.data_grad(w) + w * self.weight_decay()
    }

    /// Row `i` is `∇(−log p_w(yᵢ|xᵢ))`; no regularizer.
    pub fn per_sample_grads(&self, w: &DVector<T>) -> DMatrix<T> {
        let d = self.param_count();
        let mut out = DMatrix::zeros(self.data.len(), d);
        let mut g = DVector::zeros(d);
        for i in 0..self.data.len() {
            g.fill(T::zero());
            self.accumulate_sample_grad(w, i, T::one(), &mut g);
            out.row_mut(i).copy_from(&g.transpose());
        }
        out
    }

    /// Exact class-expectation Fisher `(1/N) Σᵢ Jᵢᵀ (diag pᵢ − pᵢpᵢᵀ) Jᵢ`,
    /// equal to `(1/N) Σᵢ Σ_y p(y|xᵢ) ∇log p ∇log pᵀ`.
    pub fn fisher_matrix(&self, w: &DVector<T>) -> DMatrix<T> {
        let d = self.param_count();
        let mut f = DMatrix::zeros(d, d);
        for i in 0..self.data.len() {
            let x = self.data.inputs().row(i).transpose();
            let z = self.model.logits(w, x.column(0));
            let (p, _) = softmax(&z);
            let jac = self.model.logit_jacobian(w, x.column(0));
            let mut a = DMatrix::from_diagonal(&p);
            a.ger(-T::one(), &p, &p, T::one());
            f += jac.transpose() * a * &jac;
        }
        f /= T::from_count(self.data.len());
        crate::linalg::symmetrize(&mut f);
        f
    }

    /// `E_x KL(p_{w_ref}(·|x) ‖ p_w(·|x))`.
    pub fn mean_kl(&self, w_ref: &DVector<T>, w: &DVector<T>) -> T {
        let n = self.data.len();
        let mut total = T::zero();
        for i in 0..n {
            let x = self.data.inputs().row(i).transpose();
            let zp = self.model.logits(w_ref, x.column(0));
            let (p, lse_p) = softmax(&zp);
            let zq = self.model.logits(w, x.column(0));
            let (_, lse_q) = softmax(&zq);
            for c in 0..p.len() {
                if p[c] > T::zero() {
                    total += p[c] * ((zp[c] - lse_p) - (zq[c] - lse_q));
                }
            }
        }
        total / T::from_count(n)
    }
}

/// Loss landscape of a task. The Hessian is the Fisher (Gauss–Newton)
/// surrogate plus `γ I`, which is positive semi-definite everywhere.
impl<T: Real> Potential<T> for Task<T> {
    fn dim(&self) -> usize {
        self.param_count()
    }

    fn value(&self, w: &DVector<T>) -> T {
        self.loss(w)
    }

    fn grad_into(&self, w: &DVector<T>, out: &mut DVector<T>) {
        out.copy_from(&self.grad_loss(w));
    }

    fn hessian(&self, w: &DVector<T>) -> DMatrix<T> {
        let mut h = self.fisher_matrix(w);
        let gamma = self.weight_decay();
        for i in 0..h.nrows() {
            h[(i, i)] += gamma;
        }
        h
    }
}

pub fn loss<T: Real>(t: &Task<T>, w: &DVector<T>) -> Result<T> {
    check_dim(t.param_count(), w.len(), "loss")?;
    Ok(t.loss(w))
}

pub fn grad_loss<T: Real>(t: &Task<T>, w: &DVector<T>) -> Result<DVector<T>> {
    check_dim(t.param_count(), w.len(), "grad_loss")?;
    Ok(t.grad_loss(w))
}

pub fn per_sample_grads<T: Real>(t: &Task<T>, w: &DVector<T>) -> Result<DMatrix<T>> {
    check_dim(t.param_count(), w.len(), "per_sample_grads")?;
    Ok(t.per_sample_grads(w))
}

#[cfg(test)]
mod tests;
