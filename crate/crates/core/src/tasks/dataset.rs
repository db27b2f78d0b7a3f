use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::Real;

/// How a dataset was produced. Regenerating from the descriptor reproduces
/// the contents bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Provenance {
    Blobs {
        classes: usize,
        n: usize,
        dim: usize,
        separation: f64,
        seed: u64,
    },
    CorruptLabels {
        base: Box<Provenance>,
        rho: f64,
        seed: u64,
    },
    Concat {
        first: Box<Provenance>,
        second: Box<Provenance>,
    },
    ClassSubset {
        base: Box<Provenance>,
        keep: Vec<usize>,
    },
    Empty {
        dim: usize,
        classes: usize,
    },
    /// Loaded from a file without a reproducible generator.
    External {
        source: String,
    },
}

impl Provenance {
    pub fn regenerate<T: Real>(&self) -> Result<Dataset<T>> {
        match self {
            Provenance::Blobs {
                classes,
                n,
                dim,
                separation,
                seed,
            } => generate_blobs(*classes, *n, *dim, T::of(*separation), *seed),
            Provenance::CorruptLabels { base, rho, seed } => corrupt_labels(&base.regenerate()?, *rho, *seed),
            Provenance::Concat { first, second } => concat(&first.regenerate()?, &second.regenerate()?),
            Provenance::ClassSubset { base, keep } => select_classes(&base.regenerate()?, keep),
            Provenance::Empty { dim, classes } => Ok(Dataset::empty(*dim, *classes)),
            Provenance::External { source } => Err(Error::contract(format!(
                "dataset from `{source}` has no generator to regenerate from"
            ))),
        }
    }
}

/// Labeled inputs: `N × p` matrix, labels in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    inputs: DMatrix<T>,
    labels: Vec<usize>,
    classes: usize,
    provenance: Provenance,
}

impl<T: Real> Dataset<T> {
    pub fn new(inputs: DMatrix<T>, labels: Vec<usize>, classes: usize, provenance: Provenance) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::contract(format!(
                "dataset has {} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::contract(format!(
                "label {bad} outside label space of size {classes}"
            )));
        }
        if inputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract("dataset inputs must be finite"));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
            provenance,
        })
    }

    pub fn empty(dim: usize, classes: usize) -> Self {
        Self {
            inputs: DMatrix::zeros(0, dim),
            labels: Vec::new(),
            classes,
            provenance: Provenance::Empty { dim, classes },
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &DMatrix<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Mean input of each class present in the dataset.
    pub fn class_means(&self) -> Vec<Option<DVector<T>>> {
        let mut sums = vec![DVector::zeros(self.dim()); self.classes];
        let mut counts = vec![0usize; self.classes];
        for (i, &y) in self.labels.iter().enumerate() {
            sums[y] += self.inputs.row(i).transpose();
            counts[y] += 1;
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s / T::from_count(c)))
            .collect()
    }

    /// Writes `x0..x{p-1},y` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.inputs.row(i).iter().map(|x| format!("{x:?}")).collect();
            rec.push(self.labels[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = DatasetMeta {
            n: self.len(),
            dim: self.dim(),
            classes: self.classes,
            provenance: self.provenance.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Reads a CSV written by [`Dataset::write_csv`] together with its JSON
    /// sidecar.
    pub fn read_csv(csv_path: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let headers = rdr.headers()?.clone();
        let expected: Vec<String> = (0..meta.dim)
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::contract(format!("unexpected dataset header {headers:?}")));
        }
        let mut values = Vec::with_capacity(meta.n * meta.dim);
        let mut labels = Vec::with_capacity(meta.n);
        for rec in rdr.records() {
            let rec = rec?;
            for j in 0..meta.dim {
                let x: f64 = rec[j]
                    .parse()
                    .map_err(|e| Error::contract(format!("bad input value `{}`: {e}", &rec[j])))?;
                values.push(T::of(x));
            }
            let y: usize = rec[meta.dim]
                .parse()
                .map_err(|e| Error::contract(format!("bad label `{}`: {e}", &rec[meta.dim])))?;
            labels.push(y);
        }
        let inputs = DMatrix::from_row_slice(labels.len(), meta.dim, &values);
        Dataset::new(inputs, labels, meta.classes, meta.provenance)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    n: usize,
    dim: usize,
    classes: usize,
    provenance: Provenance,
}

/// Centers with pairwise distance at least `separation`.
///
/// `K ≤ p + 1` uses a regular simplex (all pairwise distances equal), larger
/// `K` falls back to a regular polygon in the first two coordinates, and
/// `p = 1` to evenly spaced points on the line.
pub fn blob_centers<T: Real>(classes: usize, dim: usize, separation: T) -> Vec<DVector<T>> {
    let k = classes;
    if k <= dim + 1 {
        // Helmert basis of the sum-zero hyperplane in R^K.
        let scale = separation / T::of(2.0).sqrt();
        (0..k)
            .map(|i| {
                DVector::from_fn(dim, |j, _| {
                    if j + 1 >= k {
                        return T::zero();
                    }
                    let m = j + 1;
                    let norm = T::from_count(m * (m + 1)).sqrt();
                    let coord = if i < m {
                        T::one()
                    } else if i == m {
                        -T::from_count(m)
                    } else {
                        T::zero()
                    };
                    scale * coord / norm
                })
            })
            .collect()
    } else if dim >= 2 {
        let radius = separation / (T::of(2.0) * (T::pi() / T::from_count(k)).sin());
        (0..k)
            .map(|i| {
                let angle = T::two_pi() * T::from_count(i) / T::from_count(k);
                DVector::from_fn(dim, |j, _| match j {
                    0 => radius * angle.cos(),
                    1 => radius * angle.sin(),
                    _ => T::zero(),
                })
            })
            .collect()
    } else {
        let offset = T::from_count(k - 1) * T::of(0.5);
        (0..k)
            .map(|i| DVector::from_element(1, separation * (T::from_count(i) - offset)))
            .collect()
    }
}

/// `K` unit-covariance Gaussian clusters, `N / K` points per class (the
/// remainder goes to the last class), rows ordered by class.
pub fn generate_blobs<T: Real>(classes: usize, n: usize, dim: usize, separation: T, seed: u64) -> Result<Dataset<T>> {
    if classes < 2 || n < classes || dim < 1 || separation <= T::zero() {
        return Err(Error::contract(format!(
            "generate_blobs needs K >= 2, N >= K, p >= 1, separation > 0 (got K={classes}, N={n}, p={dim}, sep={})",
            separation.to_f64_lossy()
        )));
    }
    let centers = blob_centers(classes, dim, separation);
    let per_class = n / classes;
    let mut rng = stream_rng(seed, 0);
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        let count = if c + 1 == classes {
            n - per_class * (classes - 1)
        } else {
            per_class
        };
        for _ in 0..count {
            for j in 0..dim {
                values.push(center[j] + T::standard_normal(&mut rng));
            }
            labels.push(c);
        }
    }
    let inputs = DMatrix::from_row_slice(n, dim, &values);
    Dataset::new(
        inputs,
        labels,
        classes,
        Provenance::Blobs {
            classes,
            n,
            dim,
            separation: separation.to_f64_lossy(),
            seed,
        },
    )
}

/// Resamples the labels of `⌊ρN⌋` distinct rows uniformly over `[0, K)`.
pub fn corrupt_labels<T: Real>(d: &Dataset<T>, rho: f64, seed: u64) -> Result<Dataset<T>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::contract(format!(
            "corruption fraction must lie in [0, 1], got {rho}"
        )));
    }
    let n = d.len();
    let count = ((rho * n as f64).floor() as usize).min(n);
    let mut rng = stream_rng(seed, 0);
    let mut labels = d.labels.clone();
    if count > 0 {
        let chosen = index::sample(&mut rng, n, count);
        for i in chosen.iter() {
            labels[i] = rng.random_range(0..d.classes);
        }
    }
    Ok(Dataset {
        inputs: d.inputs.clone(),
        labels,
        classes: d.classes,
        provenance: Provenance::CorruptLabels {
            base: Box::new(d.provenance.clone()),
            rho,
            seed,
        },
    })
}

/// Rows of `d1` followed by rows of `d2`, in the larger of the two label spaces.
pub fn concat<T: Real>(d1: &Dataset<T>, d2: &Dataset<T>) -> Result<Dataset<T>> {
    if d1.dim() != d2.dim() {
        return Err(Error::contract(format!(
            "concat of datasets with input dims {} and {}",
            d1.dim(),
            d2.dim()
        )));
    }
    let n = d1.len() + d2.len();
    let inputs = DMatrix::from_fn(n, d1.dim(), |i, j| {
        if i < d1.len() {
            d1.inputs[(i, j)]
        } else {
            d2.inputs[(i - d1.len(), j)]
        }
    });
    let labels = d1.labels.iter().chain(&d2.labels).copied().collect();
    Ok(Dataset {
        inputs,
        labels,
        classes: d1.classes.max(d2.classes),
        provenance: Provenance::Concat {
            first: Box::new(d1.provenance.clone()),
            second: Box::new(d2.provenance.clone()),
        },
    })
}

/// Rows whose label is in `keep`; the label space is unchanged.
pub fn select_classes<T: Real>(d: &Dataset<T>, keep: &[usize]) -> Result<Dataset<T>> {
    if let Some(&bad) = keep.iter().find(|&&c| c >= d.classes) {
        return Err(Error::contract(format!(
            "class {bad} outside label space of size {}",
            d.classes
        )));
    }
    let rows: Vec<usize> = (0..d.len()).filter(|&i| keep.contains(&d.labels[i])).collect();
    let inputs = DMatrix::from_fn(rows.len(), d.dim(), |i, j| d.inputs[(rows[i], j)]);
    let labels = rows.iter().map(|&i| d.labels[i]).collect();
    Ok(Dataset {
        inputs,
        labels,
        classes: d.classes,
        provenance: Provenance::ClassSubset {
            base: Box::new(d.provenance.clone()),
            keep: keep.to_vec(),
        },
    })
}
