use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::c_beta;
use super::trainer::{train_minimizer, TrainerConfig};
use crate::error::{Error, Result};
use crate::tasks::{concat, Dataset, ModelSpec, Task};
use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedDataset<T: Real> {
    pub id: String,
    pub data: Dataset<T>,
}

impl<T: Real> NamedDataset<T> {
    pub fn new(id: impl Into<String>, data: Dataset<T>) -> Self {
        Self { id: id.into(), data }
    }
}

/// `M[i][j] = d_β(Dᵢ → Dⱼ)`; cells whose training failed are `None` and the
/// reason is listed in `failures`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DistanceMatrix<T: Real> {
    pub ids: Vec<String>,
    pub entries: Vec<Vec<Option<T>>>,
    /// `C_β(Dᵢ)` at each task's own trained minimizer.
    pub complexities: Vec<Option<T>>,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub row: usize,
    pub col: usize,
    pub reason: String,
}

impl<T: Real> DistanceMatrix<T> {
    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.entries[i][j]
    }

    /// Matrix CSV: first row `from\to,id…`, one row per source task;
    /// failed cells are written as `failed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("from\\to");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (i, row) in self.entries.iter().enumerate() {
            out.push_str(&self.ids[i]);
            for cell in row {
                out.push(',');
                match cell {
                    Some(v) => out.push_str(&format!("{:?}", v.to_f64_lossy())),
                    None => out.push_str("failed"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `C_β` of a dataset at its own trained minimizer.
pub(crate) fn trained_complexity<T: Real>(
    data: &Dataset<T>,
    model: &ModelSpec,
    beta: T,
    lambda2: T,
    cfg: &TrainerConfig,
    label: &str,
) -> Result<T> {
    let t = Task::new(data.clone(), *model)?;
    let out = train_minimizer(&t, beta, lambda2, cfg, None, label)?;
    if !out.converged {
        log::warn!(
            "dataset `{label}`: trainer stopped at the iteration budget (|grad|={:e})",
            out.grad_norm.to_f64_lossy()
        );
    }
    Ok(c_beta(&t, &out.w, beta, lambda2)?.total)
}

/// `d_β(D₁ → D₂) = C_β(D₁ ∪ D₂) − C_β(D₁)`, each at its own trained
/// minimizer under the same trainer settings.
pub fn task_distance<T: Real>(
    d1: &Dataset<T>,
    d2: &Dataset<T>,
    model: &ModelSpec,
    beta: T,
    lambda2: T,
    cfg: &TrainerConfig,
) -> Result<T> {
    if d1.classes() != d2.classes() {
        return Err(Error::contract(format!(
            "task_distance needs a shared label space (got {} and {} classes)",
            d1.classes(),
            d2.classes()
        )));
    }
    let union = concat(d1, d2)?;
    let c_union = trained_complexity(&union, model, beta, lambda2, cfg, "D1 ∪ D2")?;
    let c_first = trained_complexity(d1, model, beta, lambda2, cfg, "D1")?;
    Ok(c_union - c_first)
}

/// Pairwise distances. Training runs execute in parallel; results are
/// assembled in index order, so the output does not depend on thread count.
pub fn distance_matrix<T: Real>(
    tasks: &[NamedDataset<T>],
    model: &ModelSpec,
    beta: T,
    lambda2: T,
    cfg: &TrainerConfig,
) -> Result<DistanceMatrix<T>> {
    let n = tasks.len();
    if n < 2 {
        return Err(Error::contract("distance_matrix needs at least two tasks"));
    }
    if tasks.iter().any(|t| t.data.classes() != tasks[0].data.classes()) {
        return Err(Error::contract("distance_matrix tasks must share one label space"));
    }
    let singles: Vec<Result<T>> = tasks
        .par_iter()
        .map(|t| trained_complexity(&t.data, model, beta, lambda2, cfg, &t.id))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let unions: Vec<Result<T>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let label = format!("{} ∪ {}", tasks[i].id, tasks[j].id);
            let union = concat(&tasks[i].data, &tasks[j].data)?;
            trained_complexity(&union, model, beta, lambda2, cfg, &label)
        })
        .collect();

    let mut entries = vec![vec![None; n]; n];
    let mut failures = Vec::new();
    for (&(i, j), u) in pairs.iter().zip(&unions) {
        match (u, &singles[i]) {
            (Ok(cu), Ok(ci)) => entries[i][j] = Some(*cu - *ci),
            (Err(e), _) | (_, Err(e)) => failures.push(CellFailure {
                row: i,
                col: j,
                reason: e.to_string(),
            }),
        }
    }
    Ok(DistanceMatrix {
        ids: tasks.iter().map(|t| t.id.clone()).collect(),
        entries,
        complexities: singles.iter().map(|r| r.as_ref().ok().copied()).collect(),
        failures,
    })
}
