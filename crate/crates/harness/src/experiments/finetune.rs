use nalgebra::DVector;
use reachlab_core::complexity::{distance_matrix, NamedDataset};
use reachlab_core::rng::derive_seed;
use reachlab_core::tasks::{corrupt_labels, select_classes};
use reachlab_core::{Dataset64, Task64};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    blobs, flag, par_cells, sgd_minimizer, sgd_times, spearman_pairs, task, threshold_for, Outcome, TimeSummary,
    SALT_CORRUPT, SALT_FINETUNE,
};
use crate::checkpoint::Checkpoints;
use crate::config::{FinetuneConfig, FinetuneTask};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_opt, OutputDir};
use crate::schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Prepared {
    /// Pretrained weights: the minimizer of the task's SGD objective.
    w: Vec<f64>,
    threshold: f64,
    min_loss_estimate: Option<f64>,
}

fn dataset(base: &Dataset64, spec: &FinetuneTask, seed: u64, index: usize) -> Result<Dataset64> {
    let mut d = match &spec.classes {
        Some(keep) => select_classes(base, keep)?,
        None => base.clone(),
    };
    if spec.corruption > 0.0 {
        d = corrupt_labels(&d, spec.corruption, derive_seed(seed, SALT_CORRUPT + index as u64))?;
    }
    if d.len() < 2 {
        return Err(HarnessError::Other(format!(
            "task `{}` has fewer than 2 samples",
            spec.id
        )));
    }
    Ok(d)
}

fn classes_of(spec: &FinetuneTask, k: usize) -> Vec<usize> {
    let mut v = spec.classes.clone().unwrap_or_else(|| (0..k).collect());
    v.sort_unstable();
    v.dedup();
    v
}

/// `a` is a strict superset of `b`, both uncorrupted.
fn strictly_nests(a: &FinetuneTask, b: &FinetuneTask, k: usize) -> bool {
    let (ca, cb) = (classes_of(a, k), classes_of(b, k));
    a.corruption == 0.0 && b.corruption == 0.0 && ca.len() > cb.len() && cb.iter().all(|x| ca.contains(x))
}

pub fn run(c: &FinetuneConfig, seed: u64, out: &mut OutputDir, ck: &Checkpoints) -> Result<Outcome> {
    let base = blobs(&c.blobs, seed)?;
    let n = c.tasks.len();
    let data: Vec<Dataset64> = c
        .tasks
        .iter()
        .enumerate()
        .map(|(i, s)| dataset(&base, s, seed, i))
        .collect::<Result<_>>()?;
    let tasks: Vec<Task64> = data.iter().map(|d| task(d.clone(), &c.model)).collect::<Result<_>>()?;

    let mut flags = Vec::new();
    let prepared: Vec<Option<Prepared>> = par_cells(&tasks, |i, t| {
        ck.cached(&format!("task_{i}"), || {
            let id = &c.tasks[i].id;
            let w = sgd_minimizer(t, c.pretrain_iters, id)?;
            let (threshold, min_loss_estimate) = threshold_for(t, &c.threshold, id)?;
            Ok(Prepared {
                w: w.as_slice().to_vec(),
                threshold,
                min_loss_estimate,
            })
        })
    })
    .into_iter()
    .enumerate()
    .map(|(i, r)| {
        r.map_err(|e| flags.push(flag(format!("train {}", c.tasks[i].id), &e)))
            .ok()
    })
    .collect();

    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let times: Vec<Option<TimeSummary>> = par_cells(&cells, |k, &(i, j)| {
        let (Some(from), Some(to)) = (&prepared[i], &prepared[j]) else {
            return Err(HarnessError::Other("a task of this pair failed to train".into()));
        };
        ck.cached(&format!("cell_{i}_{j}"), || {
            let sgd = c.sgd.build(derive_seed(seed, SALT_FINETUNE + k as u64));
            sgd_times(
                &tasks[j],
                &DVector::from_vec(from.w.clone()),
                to.threshold,
                &sgd,
                c.n_runs,
            )
        })
    })
    .into_iter()
    .zip(&cells)
    .map(|(r, &(i, j))| {
        r.map_err(|e| flags.push(flag(format!("{} -> {}", c.tasks[i].id, c.tasks[j].id), &e)))
            .ok()
    })
    .collect();

    let named: Vec<NamedDataset<f64>> = c
        .tasks
        .iter()
        .zip(&data)
        .map(|(s, d)| NamedDataset::new(s.id.clone(), d.clone()))
        .collect();
    let dist = distance_matrix(&named, &c.model, c.beta, c.lambda2, &c.trainer)?;
    for f in &dist.failures {
        flags.push(flag(
            format!("distance {} -> {}", c.tasks[f.row].id, c.tasks[f.col].id),
            &f.reason,
        ));
    }
    out.write_text("distance_matrix.csv", schema::MATRIX.name, &dist.to_csv())?;

    let ids: Vec<&str> = c.tasks.iter().map(|t| t.id.as_str()).collect();
    let mut matrix = format!("from\\to,{}\n", ids.join(","));
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| fmt_opt(times[i * n + j].as_ref().and_then(|t| t.median)))
            .collect();
        matrix.push_str(&format!("{},{}\n", ids[i], row.join(",")));
    }
    out.write_text("finetune_times.csv", schema::MATRIX.name, &matrix)?;

    let mut pair_rows = Vec::new();
    let mut scatter = Vec::new();
    for &(i, j) in cells.iter().filter(|(i, j)| i != j) {
        let t = times[i * n + j].as_ref();
        let d = dist.get(i, j);
        pair_rows.push(vec![
            ids[i].to_string(),
            ids[j].to_string(),
            fmt_opt(d),
            fmt_opt(t.and_then(|t| t.median)),
            t.map(|t| t.n_censored).unwrap_or(0).to_string(),
            t.map(|t| t.n_runs).unwrap_or(0).to_string(),
        ]);
        if let (Some(d), Some(t)) = (d, t) {
            scatter.push((d, t.median_key()));
        }
    }
    out.write_csv("finetune_pairs.csv", &schema::FINETUNE_PAIRS, &pair_rows)?;
    let plot: Vec<Vec<f64>> = scatter
        .iter()
        .filter(|p| p.1.is_finite())
        .map(|&(d, t)| vec![d, t])
        .collect();
    out.write_plot(
        "time_vs_distance.dat",
        "fine-tuning time vs task distance",
        &["distance", "median_time"],
        &plot,
    )?;

    // For each unordered pair: does the faster direction match the shorter distance?
    let mut agree = 0usize;
    let mut compared = 0usize;
    let mut nested = Vec::new();
    let mut nested_consistent = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let (Some(tij), Some(tji)) = (times[i * n + j].as_ref(), times[j * n + i].as_ref()) else {
                continue;
            };
            let (a, b) = (tij.median_key(), tji.median_key());
            if let (Some(dij), Some(dji)) = (dist.get(i, j), dist.get(j, i)) {
                if a != b && dij != dji {
                    compared += 1;
                    if (a < b) == (dij < dji) {
                        agree += 1;
                    }
                }
            }
            for (complex, simple) in [(i, j), (j, i)] {
                if strictly_nests(&c.tasks[complex], &c.tasks[simple], c.blobs.classes) {
                    let down = times[complex * n + simple].as_ref().map(|t| t.median_key());
                    let up = times[simple * n + complex].as_ref().map(|t| t.median_key());
                    let (dd, du) = (dist.get(complex, simple), dist.get(simple, complex));
                    let faster = matches!((down, up), (Some(d), Some(u)) if d < u);
                    let closer = matches!((dd, du), (Some(d), Some(u)) if d < u);
                    nested_consistent += usize::from(faster && closer);
                    nested.push(json!({
                        "complex": ids[complex],
                        "simple": ids[simple],
                        "time_complex_to_simple": down.filter(|x| x.is_finite()),
                        "time_simple_to_complex": up.filter(|x| x.is_finite()),
                        "distance_complex_to_simple": dd,
                        "distance_simple_to_complex": du,
                        "faster_downhill": faster,
                        "closer_downhill": closer,
                    }));
                }
            }
        }
    }
    let records = json!({
        "thresholds": prepared.iter().map(|p| p.as_ref().map(|p| p.threshold)).collect::<Vec<_>>(),
        "min_loss_estimates": prepared.iter().map(|p| p.as_ref().and_then(|p| p.min_loss_estimate)).collect::<Vec<_>>(),
        "times": times,
        "distance": dist,
    });
    let summary = json!({
        "ids": ids,
        "asymmetry_pairs_compared": compared,
        "asymmetry_agreement": if compared > 0 { Some(agree as f64 / compared as f64) } else { None },
        "spearman_distance_time": spearman_pairs(&scatter),
        "nested_consistent_fraction": if nested.is_empty() { None } else { Some(nested_consistent as f64 / nested.len() as f64) },
        "nested": nested,
        "censored_cells": times.iter().flatten().filter(|t| t.median.is_none()).count(),
        "diagonal_times": (0..n).map(|i| times[i * n + i].as_ref().and_then(|t| t.median)).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        records,
        summary,
        flags,
    })
}
