use nalgebra::DVector;
use reachlab_core::complexity::{c_beta, train_minimizer};
use reachlab_core::diffusion::convergence_time;
use reachlab_core::rates::arrhenius_fit_escapes;
use reachlab_core::rng::derive_seed;
use reachlab_core::tasks::corrupt_labels;
use reachlab_core::{ComplexityReport64, EscapeStats64};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    blobs, flag, par_cells, spearman_pairs, task, threshold_for, Outcome, TimeSummary, SALT_CORRUPT, SALT_SGD,
};
use crate::bundle::CellFlag;
use crate::checkpoint::Checkpoints;
use crate::config::LabelSweepConfig;
use crate::error::Result;
use crate::output::{fmt_f64, fmt_opt, OutputDir};
use crate::schema;

/// One corruption level: complexity at the trained minimizer and the SGD
/// convergence-time ensemble from the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCell {
    pub rho: f64,
    pub complexity: ComplexityReport64,
    pub trainer_converged: bool,
    pub threshold: f64,
    pub min_loss_estimate: Option<f64>,
    pub times: TimeSummary,
    /// Per-run times, `None` when censored.
    pub samples: Vec<Option<f64>>,
}

fn compute_cell(c: &LabelSweepConfig, seed: u64, i: usize, rho: f64) -> Result<ComplexityCell> {
    let base = blobs(&c.blobs, seed)?;
    // one corruption seed for the whole grid
    let data = corrupt_labels(&base, rho, derive_seed(seed, SALT_CORRUPT))?;
    let t = task(data, &c.model)?;
    let label = format!("rho={rho}");
    let trained = train_minimizer(&t, c.beta, c.lambda2, &c.trainer, None, &label)?;
    let complexity = c_beta(&t, &trained.w, c.beta, c.lambda2)?;
    let (threshold, min_loss_estimate) = threshold_for(&t, &c.threshold, &label)?;
    let sgd = c.sgd.build(derive_seed(seed, SALT_SGD + i as u64));
    let w0 = DVector::zeros(t.param_count());
    let samples = match convergence_time(&t, &w0, threshold, &sgd, c.n_runs) {
        Ok(s) => s.samples,
        Err(reachlab_core::Error::AllCensored { .. }) => vec![None; c.n_runs],
        Err(e) => return Err(e.into()),
    };
    Ok(ComplexityCell {
        rho,
        complexity,
        trainer_converged: trained.converged,
        threshold,
        min_loss_estimate,
        times: TimeSummary::from_samples(&samples),
        samples,
    })
}

fn cells(c: &LabelSweepConfig, seed: u64, ck: &Checkpoints) -> (Vec<Option<ComplexityCell>>, Vec<CellFlag>) {
    let results = par_cells(&c.rho_grid, |i, &rho| {
        ck.cached(&format!("rho_{i}"), || compute_cell(c, seed, i, rho))
    });
    let mut flags = Vec::new();
    let cells = results
        .into_iter()
        .zip(&c.rho_grid)
        .map(|(r, rho)| match r {
            Ok(cell) => {
                if !cell.trainer_converged {
                    log::warn!("rho={rho}: complexity trainer hit its iteration budget");
                }
                Some(cell)
            }
            Err(e) => {
                flags.push(flag(format!("rho={rho}"), &e));
                None
            }
        })
        .collect();
    (cells, flags)
}

fn monotone(values: &[f64]) -> (bool, bool) {
    let non_decreasing = values.windows(2).all(|w| w[1] >= w[0]);
    let strict = values.windows(2).all(|w| w[1] > w[0]);
    (non_decreasing, strict)
}

pub fn run_sweep(c: &LabelSweepConfig, seed: u64, out: &mut OutputDir, ck: &Checkpoints) -> Result<Outcome> {
    let (cells, flags) = cells(c, seed, ck);
    let mut rows = Vec::new();
    for (rho, cell) in c.rho_grid.iter().zip(&cells) {
        rows.push(match cell {
            Some(x) => vec![
                fmt_f64(*rho),
                fmt_f64(x.complexity.total),
                fmt_f64(x.complexity.loss_term),
                fmt_f64(x.complexity.norm_term),
                fmt_f64(x.complexity.logdet_term),
                fmt_f64(x.threshold),
                fmt_opt(x.times.median),
                fmt_opt(x.times.mean),
                x.times.n_censored.to_string(),
                x.times.n_runs.to_string(),
            ],
            None => {
                let mut r = vec![fmt_f64(*rho)];
                r.extend(std::iter::repeat_n(String::new(), 7));
                r.extend(["0".to_string(), "0".to_string()]);
                r
            }
        });
    }
    out.write_csv("label_sweep.csv", &schema::LABEL_SWEEP, &rows)?;

    let done: Vec<&ComplexityCell> = cells.iter().flatten().collect();
    let cb: Vec<Vec<f64>> = done.iter().map(|x| vec![x.rho, x.complexity.total]).collect();
    out.write_plot(
        "complexity_vs_rho.dat",
        "C_beta vs label corruption",
        &["rho", "c_beta"],
        &cb,
    )?;
    let tm: Vec<Vec<f64>> = done
        .iter()
        .filter_map(|x| x.times.median.map(|m| vec![x.rho, m]))
        .collect();
    out.write_plot(
        "time_vs_rho.dat",
        "median convergence time vs label corruption",
        &["rho", "median_time"],
        &tm,
    )?;
    let tc: Vec<Vec<f64>> = done
        .iter()
        .filter_map(|x| x.times.median.map(|m| vec![x.complexity.total, m]))
        .collect();
    out.write_plot(
        "time_vs_complexity.dat",
        "median convergence time vs C_beta",
        &["c_beta", "median_time"],
        &tc,
    )?;

    let totals: Vec<f64> = done.iter().map(|x| x.complexity.total).collect();
    let (non_decreasing, strict) = monotone(&totals);
    let pairs: Vec<(f64, f64)> = done
        .iter()
        .map(|x| (x.complexity.total, x.times.median_key()))
        .collect();
    let summary = json!({
        "n_cells": c.rho_grid.len(),
        "n_failed": c.rho_grid.len() - done.len(),
        "c_beta_monotone": non_decreasing && done.len() == c.rho_grid.len(),
        "c_beta_strictly_increasing": strict && done.len() == c.rho_grid.len(),
        "spearman_c_beta_median_time": spearman_pairs(&pairs),
        "censored_cells": done.iter().filter(|x| x.times.median.is_none()).count(),
    });
    let records: Vec<serde_json::Value> = done
        .iter()
        .map(|x| {
            json!({
                "rho": x.rho,
                "complexity": x.complexity,
                "trainer_converged": x.trainer_converged,
                "threshold": x.threshold,
                "min_loss_estimate": x.min_loss_estimate,
                "times": x.times,
            })
        })
        .collect();
    Ok(Outcome {
        records: serde_json::Value::Array(records),
        summary,
        flags,
    })
}

pub fn run_scatter(c: &LabelSweepConfig, seed: u64, out: &mut OutputDir, ck: &Checkpoints) -> Result<Outcome> {
    let (cells, mut flags) = cells(c, seed, ck);
    let reference = cells.iter().flatten().map(|x| x.complexity.total).reduce(f64::min);
    let mut rows = Vec::new();
    let mut ensembles: Vec<(f64, EscapeStats64)> = Vec::new();
    for (rho, cell) in c.rho_grid.iter().zip(&cells) {
        match (cell, reference) {
            (Some(x), Some(r)) => {
                let dc = x.complexity.total - r;
                rows.push(vec![
                    fmt_f64(*rho),
                    fmt_f64(x.complexity.total),
                    fmt_f64(dc),
                    fmt_opt(x.times.mean),
                    fmt_opt(x.times.median),
                    x.times.n_censored.to_string(),
                    x.times.n_runs.to_string(),
                ]);
                if let Some(s) = super::escape_stats(&x.times, x.samples.clone()) {
                    ensembles.push((dc, s));
                }
            }
            _ => {
                let mut r = vec![fmt_f64(*rho)];
                r.extend(std::iter::repeat_n(String::new(), 4));
                r.extend(["0".to_string(), "0".to_string()]);
                rows.push(r);
            }
        }
    }
    out.write_csv("complexity_scatter.csv", &schema::COMPLEXITY_SCATTER, &rows)?;
    let pts: Vec<Vec<f64>> = ensembles.iter().map(|(x, s)| vec![*x, s.mean.ln()]).collect();
    out.write_plot(
        "log_time_vs_delta_c.dat",
        "log mean convergence time vs delta C_beta",
        &["delta_c", "log_mean_time"],
        &pts,
    )?;
    let pairs: Vec<(f64, &EscapeStats64)> = ensembles.iter().map(|(x, s)| (*x, s)).collect();
    let fit = match arrhenius_fit_escapes(&pairs) {
        Ok(fit) => {
            let curve: Vec<Vec<f64>> = fit.curve(50).into_iter().map(|(x, y)| vec![x, y]).collect();
            out.write_plot(
                "log_time_fit.dat",
                "fitted log time vs delta C_beta",
                &["delta_c", "log_time_fit"],
                &curve,
            )?;
            Some(fit)
        }
        Err(e) => {
            flags.push(flag("rate-fit", &e));
            None
        }
    };
    let records: Vec<serde_json::Value> = cells
        .iter()
        .flatten()
        .map(|x| json!({ "rho": x.rho, "c_beta": x.complexity.total, "times": x.times }))
        .collect();
    Ok(Outcome {
        records: serde_json::Value::Array(records),
        summary: json!({
            "slope": fit.as_ref().map(|f| f.slope),
            "r2": fit.as_ref().map(|f| f.r2),
            "fit": fit,
        }),
        flags,
    })
}
