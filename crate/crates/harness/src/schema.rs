//! CSV schemas for every file the harness writes, and a validator.
//!
//! Fixed schemas list their columns; `path` files have a `t` column followed
//! by `w0..w{d-1}`; `matrix` files have a `from\to` column followed by one
//! column per task id, with `failed` or an empty cell for missing entries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Column {
    Float,
    /// Float or empty (censored, failed or not applicable).
    OptFloat,
    Int,
    Bool,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Fixed(&'static [(&'static str, Column)]),
    Path,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub name: &'static str,
    pub layout: Layout,
}

use Column::*;

pub const KRAMERS: CsvSchema = CsvSchema {
    name: "kramers",
    layout: Layout::Fixed(&[
        ("D", Float),
        ("inv_D", Float),
        ("mean_time", OptFloat),
        ("std_time", OptFloat),
        ("median_time", OptFloat),
        ("std_error", OptFloat),
        ("n_censored", Int),
        ("n_runs", Int),
        ("kramers_time", OptFloat),
    ]),
};

pub const PASSAGE_TIMES: CsvSchema = CsvSchema {
    name: "passage-times",
    layout: Layout::Fixed(&[("D", Float), ("run", Int), ("time", OptFloat)]),
};

pub const LABEL_SWEEP: CsvSchema = CsvSchema {
    name: "label-sweep",
    layout: Layout::Fixed(&[
        ("rho", Float),
        ("c_beta", OptFloat),
        ("loss_term", OptFloat),
        ("norm_term", OptFloat),
        ("logdet_term", OptFloat),
        ("threshold", OptFloat),
        ("median_time", OptFloat),
        ("mean_time", OptFloat),
        ("n_censored", Int),
        ("n_runs", Int),
    ]),
};

pub const COMPLEXITY_SCATTER: CsvSchema = CsvSchema {
    name: "complexity-scatter",
    layout: Layout::Fixed(&[
        ("rho", Float),
        ("c_beta", OptFloat),
        ("delta_c", OptFloat),
        ("mean_time", OptFloat),
        ("median_time", OptFloat),
        ("n_censored", Int),
        ("n_runs", Int),
    ]),
};

pub const BATCH_SWEEP: CsvSchema = CsvSchema {
    name: "batch-sweep",
    layout: Layout::Fixed(&[
        ("batch", Int),
        ("noise_trace", Float),
        ("exact_noise_trace", Float),
        ("frobenius_rel_error", Float),
        ("median_time", OptFloat),
        ("mean_time", OptFloat),
        ("n_censored", Int),
        ("n_runs", Int),
    ]),
};

pub const STRUCTURE: CsvSchema = CsvSchema {
    name: "structure",
    layout: Layout::Fixed(&[
        ("beta", Float),
        ("kl_nats", Float),
        ("expected_loss", Float),
        ("point_loss", Float),
        ("converged", Bool),
        ("iterations", Int),
    ]),
};

pub const ACTIONS: CsvSchema = CsvSchema {
    name: "actions",
    layout: Layout::Fixed(&[
        ("path", Int),
        ("total", Float),
        ("static_term", Float),
        ("dynamic_term", Float),
        ("defect", Float),
    ]),
};

pub const DECOMPOSITION: CsvSchema = CsvSchema {
    name: "decomposition",
    layout: Layout::Fixed(&[("path", Int), ("dt", Float), ("defect", Float)]),
};

pub const FINETUNE_PAIRS: CsvSchema = CsvSchema {
    name: "finetune-pairs",
    layout: Layout::Fixed(&[
        ("from", Text),
        ("to", Text),
        ("distance", OptFloat),
        ("median_time", OptFloat),
        ("n_censored", Int),
        ("n_runs", Int),
    ]),
};

pub const PATH: CsvSchema = CsvSchema {
    name: "path",
    layout: Layout::Path,
};

pub const MATRIX: CsvSchema = CsvSchema {
    name: "matrix",
    layout: Layout::Matrix,
};

pub const ALL: [CsvSchema; 12] = [
    KRAMERS,
    PASSAGE_TIMES,
    LABEL_SWEEP,
    COMPLEXITY_SCATTER,
    BATCH_SWEEP,
    STRUCTURE,
    ACTIONS,
    DECOMPOSITION,
    FINETUNE_PAIRS,
    PATH,
    MATRIX,
    CsvSchema {
        name: "rate-fit",
        layout: Layout::Fixed(&[("x", Float), ("log_time", Float)]),
    },
];

pub fn by_name(name: &str) -> Option<CsvSchema> {
    ALL.iter().copied().find(|s| s.name == name)
}

impl CsvSchema {
    /// Header of a fixed-layout schema.
    pub fn header(&self) -> Vec<&'static str> {
        match self.layout {
            Layout::Fixed(cols) => cols.iter().map(|c| c.0).collect(),
            _ => Vec::new(),
        }
    }
}

fn cell_ok(kind: Column, s: &str) -> bool {
    match kind {
        Float => s.parse::<f64>().is_ok(),
        OptFloat => s.is_empty() || s.parse::<f64>().is_ok(),
        Int => s.parse::<u64>().is_ok(),
        Bool => s == "true" || s == "false",
        Text => true,
    }
}

fn bad(path: &Path, msg: String) -> HarnessError {
    HarnessError::Other(format!("{}: {msg}", path.display()))
}

/// Checks header and every cell of `path` against `schema`; returns the
/// number of data rows.
pub fn validate_csv(path: &Path, schema: &CsvSchema) -> Result<usize> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let kinds: Vec<Column> = match schema.layout {
        Layout::Fixed(cols) => {
            let expected: Vec<&str> = cols.iter().map(|c| c.0).collect();
            if header != expected {
                return Err(bad(path, format!("header {header:?}, expected {expected:?}")));
            }
            cols.iter().map(|c| c.1).collect()
        }
        Layout::Path => {
            let ok = header.len() >= 2
                && header[0] == "t"
                && header[1..].iter().enumerate().all(|(i, h)| *h == format!("w{i}"));
            if !ok {
                return Err(bad(path, format!("path header must be t,w0,..; got {header:?}")));
            }
            vec![Float; header.len()]
        }
        Layout::Matrix => {
            if header.len() < 2 || header[0] != "from\\to" {
                return Err(bad(
                    path,
                    format!("matrix header must start with from\\to; got {header:?}"),
                ));
            }
            let mut k = vec![Text];
            k.extend(std::iter::repeat_n(OptFloat, header.len() - 1));
            k
        }
    };
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != kinds.len() {
            return Err(bad(
                path,
                format!("row {} has {} cells, expected {}", i + 1, rec.len(), kinds.len()),
            ));
        }
        for (j, (cell, kind)) in rec.iter().zip(&kinds).enumerate() {
            let cell_valid = cell_ok(*kind, cell) || (schema.layout == Layout::Matrix && cell == "failed");
            if !cell_valid {
                return Err(bad(
                    path,
                    format!("row {} column `{}`: `{cell}` is not {kind:?}", i + 1, header[j]),
                ));
            }
        }
        if schema.layout == Layout::Matrix && rec.get(0).map(|id| id != header[i + 1]).unwrap_or(true) {
            return Err(bad(
                path,
                format!("matrix row {} label does not match column order", i + 1),
            ));
        }
        rows += 1;
    }
    if schema.layout == Layout::Matrix && rows != header.len() - 1 {
        return Err(bad(
            path,
            format!("matrix has {rows} rows for {} columns", header.len() - 1),
        ));
    }
    Ok(rows)
}

/// Validates every CSV listed in the `files` table of `<dir>/bundle.json`.
pub fn validate_output(dir: &Path) -> Result<usize> {
    let bundle: crate::bundle::ResultBundle = serde_json::from_str(&std::fs::read_to_string(dir.join("bundle.json"))?)?;
    let mut n = 0;
    for f in bundle.files.iter().filter(|f| f.path.ends_with(".csv")) {
        let schema = by_name(&f.schema).ok_or_else(|| HarnessError::Other(format!("unknown schema `{}`", f.schema)))?;
        validate_csv(&dir.join(&f.path), &schema)?;
        n += 1;
    }
    Ok(n)
}
