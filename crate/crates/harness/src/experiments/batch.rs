use nalgebra::DVector;
use reachlab_core::diffusion::{exact_noise_covariance, noise_covariance, SgdConfig};
use reachlab_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    blobs, flag, par_cells, sgd_times, spearman_pairs, task, threshold_for, Outcome, TimeSummary, SALT_NOISE, SALT_SGD,
};
use crate::checkpoint::Checkpoints;
use crate::config::BatchSweepConfig;
use crate::error::Result;
use crate::output::{fmt_f64, fmt_opt, OutputDir};
use crate::schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BatchCell {
    batch: usize,
    noise_trace: f64,
    exact_noise_trace: f64,
    frobenius_rel_error: f64,
    times: TimeSummary,
}

pub fn run(c: &BatchSweepConfig, seed: u64, out: &mut OutputDir, ck: &Checkpoints) -> Result<Outcome> {
    let t = task(blobs(&c.blobs, seed)?, &c.model)?;
    let (threshold, min_loss) = threshold_for(&t, &c.threshold, "batch-sweep")?;
    // noise is probed where SGD starts
    let w0 = DVector::zeros(t.param_count());
    let results = par_cells(&c.batch_grid, |i, &b| {
        ck.cached(&format!("batch_{i}"), || {
            let est = noise_covariance(
                &t,
                &w0,
                b,
                c.noise_draws,
                derive_seed(seed, SALT_NOISE + i as u64),
                c.sampling,
            )?;
            let exact = exact_noise_covariance(&t, &w0, b, c.sampling)?;
            let norm = exact.norm();
            let cfg =
                SgdConfig::new(c.eta, b, c.max_steps, derive_seed(seed, SALT_SGD + i as u64)).with_sampling(c.sampling);
            Ok(BatchCell {
                batch: b,
                noise_trace: est.trace(),
                exact_noise_trace: exact.trace(),
                frobenius_rel_error: if norm > 0.0 {
                    (&est - &exact).norm() / norm
                } else {
                    est.norm()
                },
                times: sgd_times(&t, &w0, threshold, &cfg, c.n_runs)?,
            })
        })
    });
    let mut flags = Vec::new();
    let mut done = Vec::new();
    for (b, r) in c.batch_grid.iter().zip(results) {
        match r {
            Ok(cell) => done.push(cell),
            Err(e) => flags.push(flag(format!("B={b}"), &e)),
        }
    }
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|x| {
            vec![
                x.batch.to_string(),
                fmt_f64(x.noise_trace),
                fmt_f64(x.exact_noise_trace),
                fmt_f64(x.frobenius_rel_error),
                fmt_opt(x.times.median),
                fmt_opt(x.times.mean),
                x.times.n_censored.to_string(),
                x.times.n_runs.to_string(),
            ]
        })
        .collect();
    out.write_csv("batch_sweep.csv", &schema::BATCH_SWEEP, &rows)?;
    let plot: Vec<Vec<f64>> = done
        .iter()
        .map(|x| vec![x.batch as f64, x.noise_trace, x.times.median.unwrap_or(f64::NAN)])
        .collect();
    out.write_plot(
        "noise_and_time_vs_batch.dat",
        "noise trace and median time vs batch size",
        &["batch", "noise_trace", "median_time"],
        &plot,
    )?;

    let doublings: Vec<serde_json::Value> = done
        .iter()
        .flat_map(|a| done.iter().filter(move |b| b.batch == 2 * a.batch).map(move |b| (a, b)))
        .map(|(a, b)| {
            json!({
                "batch": a.batch,
                "doubled": b.batch,
                "trace_ratio": a.noise_trace / b.noise_trace,
                "exact_ratio": a.exact_noise_trace / b.exact_noise_trace,
            })
        })
        .collect();
    let pairs: Vec<(f64, f64)> = done.iter().map(|x| (x.batch as f64, x.times.median_key())).collect();
    let summary = json!({
        "threshold": threshold,
        "min_loss_estimate": min_loss,
        "doublings": doublings,
        "max_frobenius_rel_error": done.iter().map(|x| x.frobenius_rel_error).fold(0.0, f64::max),
        "spearman_batch_median_time": spearman_pairs(&pairs),
    });
    Ok(Outcome {
        records: serde_json::to_value(&done)?,
        summary,
        flags,
    })
}
