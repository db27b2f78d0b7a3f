use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::Real;

/// Smooth hidden-unit nonlinearity. Both are C², so Hessians exist everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    fn apply<T: Real>(self, a: T) -> (T, T) {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                (t, T::one() - t * t)
            }
            Activation::Softplus => {
                let value = a.max(T::zero()) + (-a.abs()).exp().ln_1p();
                let slope = T::one() / (T::one() + (-a).exp());
                (value, slope)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelFamily {
    /// Softmax over affine logits `W x + b`.
    Logistic,
    /// One hidden layer: `W₂ σ(W₁ x + b₁) + b₂`.
    Mlp { hidden: usize, activation: Activation },
}

/// Classifier family plus weight decay; determines the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub input_dim: usize,
    pub classes: usize,
    #[serde(default)]
    pub weight_decay: f64,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, classes: usize, weight_decay: f64) -> Self {
        Self {
            family: ModelFamily::Logistic,
            input_dim,
            classes,
            weight_decay,
        }
    }

    pub fn mlp(input_dim: usize, hidden: usize, classes: usize, weight_decay: f64) -> Self {
        Self {
            family: ModelFamily::Mlp {
                hidden,
                activation: Activation::Tanh,
            },
            input_dim,
            classes,
            weight_decay,
        }
    }

    pub fn param_count(&self) -> usize {
        let (p, k) = (self.input_dim, self.classes);
        match self.family {
            ModelFamily::Logistic => k * (p + 1),
            ModelFamily::Mlp { hidden: h, .. } => h * (p + 1) + k * (h + 1),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    /// Output logits for one input row.
    pub(crate) fn logits<T: Real>(&self, w: &DVector<T>, x: DVectorView<'_, T>) -> DVector<T> {
        let (p, k) = (self.input_dim, self.classes);
        match self.family {
            ModelFamily::Logistic => DVector::from_fn(k, |c, _| {
                let row = &w.as_slice()[c * p..(c + 1) * p];
                row.iter().zip(x.iter()).fold(w[k * p + c], |acc, (&a, &b)| acc + a * b)
            }),
            ModelFamily::Mlp { hidden, activation } => {
                let (h, _) = self.hidden_layer(w, x, hidden, activation);
                self.mlp_output(w, &h, hidden)
            }
        }
    }

    fn hidden_layer<T: Real>(
        &self,
        w: &DVector<T>,
        x: DVectorView<'_, T>,
        hidden: usize,
        activation: Activation,
    ) -> (DVector<T>, DVector<T>) {
        let p = self.input_dim;
        let mut h = DVector::zeros(hidden);
        let mut slope = DVector::zeros(hidden);
        for j in 0..hidden {
            let row = &w.as_slice()[j * p..(j + 1) * p];
            let a = row
                .iter()
                .zip(x.iter())
                .fold(w[hidden * p + j], |acc, (&c, &v)| acc + c * v);
            let (v, s) = activation.apply(a);
            h[j] = v;
            slope[j] = s;
        }
        (h, slope)
    }

    fn mlp_output<T: Real>(&self, w: &DVector<T>, h: &DVector<T>, hidden: usize) -> DVector<T> {
        let (p, k) = (self.input_dim, self.classes);
        let off = hidden * (p + 1);
        DVector::from_fn(k, |c, _| {
            let row = &w.as_slice()[off + c * hidden..off + (c + 1) * hidden];
            row.iter()
                .zip(h.iter())
                .fold(w[off + k * hidden + c], |acc, (&a, &b)| acc + a * b)
        })
    }

    /// Adds `scale · Jᵀ r` to `out`, where `J = ∂logits/∂w` at input `x`.
    pub(crate) fn accumulate_vjp<T: Real>(
        &self,
        w: &DVector<T>,
        x: DVectorView<'_, T>,
        r: &DVector<T>,
        scale: T,
        out: &mut DVector<T>,
    ) {
        let (p, k) = (self.input_dim, self.classes);
        match self.family {
            ModelFamily::Logistic => {
                for c in 0..k {
                    let rc = r[c] * scale;
                    let row = &mut out.as_mut_slice()[c * p..(c + 1) * p];
                    for (o, &xv) in row.iter_mut().zip(x.iter()) {
                        *o += rc * xv;
                    }
                    out[k * p + c] += rc;
                }
            }
            ModelFamily::Mlp { hidden, activation } => {
                let (h, slope) = self.hidden_layer(w, x, hidden, activation);
                let off = hidden * (p + 1);
                for c in 0..k {
                    let rc = r[c] * scale;
                    for j in 0..hidden {
                        out[off + c * hidden + j] += rc * h[j];
                    }
                    out[off + k * hidden + c] += rc;
                }
                for j in 0..hidden {
                    let back = (0..k).fold(T::zero(), |acc, c| acc + w[off + c * hidden + j] * r[c]);
                    let delta = back * slope[j] * scale;
                    for l in 0..p {
                        out[j * p + l] += delta * x[l];
                    }
                    out[hidden * p + j] += delta;
                }
            }
        }
    }

    /// Logit Jacobian `K × d` at input `x`.
    pub(crate) fn logit_jacobian<T: Real>(&self, w: &DVector<T>, x: DVectorView<'_, T>) -> DMatrix<T> {
        let (k, d) = (self.classes, self.param_count());
        let mut jac = DMatrix::zeros(k, d);
        let mut row = DVector::zeros(d);
        for c in 0..k {
            row.fill(T::zero());
            let e = DVector::from_fn(k, |i, _| if i == c { T::one() } else { T::zero() });
            self.accumulate_vjp(w, x, &e, T::one(), &mut row);
            jac.row_mut(c).copy_from(&row.transpose());
        }
        jac
    }
}

/// Softmax probabilities and `log Σ exp(z)` using max subtraction.
pub(crate) fn softmax<T: Real>(z: &DVector<T>) -> (DVector<T>, T) {
    let m = z.max();
    let exps = z.map(|v| (v - m).exp());
    let total = exps.sum();
    (exps / total, m + total.ln())
}
