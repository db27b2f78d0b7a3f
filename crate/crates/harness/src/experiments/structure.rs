use reachlab_core::complexity::structure_curve;
use reachlab_core::rng::derive_seed;
use reachlab_core::tasks::corrupt_labels;
use serde_json::json;

use super::{blobs, flag, task, Outcome, SALT_CORRUPT};
use crate::config::StructureCurveConfig;
use crate::error::Result;
use crate::output::{fmt_f64, OutputDir};
use crate::schema;

pub fn run(c: &StructureCurveConfig, seed: u64, out: &mut OutputDir) -> Result<Outcome> {
    let mut data = blobs(&c.blobs, seed)?;
    if c.corruption > 0.0 {
        data = corrupt_labels(&data, c.corruption, derive_seed(seed, SALT_CORRUPT))?;
    }
    let t = task(data, &c.model)?;
    let curve = structure_curve(&t, &c.beta_grid, c.lambda2, &c.trainer)?;
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.beta),
                fmt_f64(p.kl_nats),
                fmt_f64(p.expected_loss),
                fmt_f64(p.point_loss),
                p.converged.to_string(),
                p.iterations.to_string(),
            ]
        })
        .collect();
    out.write_csv("structure.csv", &schema::STRUCTURE, &rows)?;
    let pts: Vec<Vec<f64>> = curve
        .sorted_converged()
        .iter()
        .map(|p| vec![p.kl_nats, p.expected_loss, p.beta])
        .collect();
    out.write_plot(
        "expected_loss_vs_kl.dat",
        "expected loss vs KL (nats)",
        &["kl_nats", "expected_loss", "beta"],
        &pts,
    )?;

    let flags = curve
        .points
        .iter()
        .filter(|p| !p.converged)
        .map(|p| flag(format!("beta={}", p.beta), &"complexity trainer did not converge"))
        .collect();
    let sorted = curve.sorted_converged();
    let summary = json!({
        "n_points": curve.points.len(),
        "n_converged": sorted.len(),
        "max_monotonicity_violation": curve.max_monotonicity_violation(),
        "kl_range": sorted.first().zip(sorted.last()).map(|(a, b)| [a.kl_nats, b.kl_nats]),
        "point_loss_at_smallest_beta": curve.points.last().map(|p| p.point_loss),
        "log_classes": (c.blobs.classes as f64).ln(),
    });
    Ok(Outcome {
        records: serde_json::to_value(&curve)?,
        summary,
        flags,
    })
}
