use nalgebra::DVector;
use reachlab_core::diffusion::{first_passage, DiffusionParams};
use reachlab_core::rates::{arrhenius_fit_escapes, kramers_double_well};
use reachlab_core::rng::derive_seed;
use reachlab_core::EscapeStats64;
use serde::Serialize;
use serde_json::json;

use super::{flag, Outcome, SALT_PASSAGE};
use crate::config::KramersSweepConfig;
use crate::error::Result;
use crate::output::{fmt_f64, fmt_opt, OutputDir};
use crate::schema;

#[derive(Serialize)]
struct Record {
    #[serde(rename = "D")]
    d: f64,
    mean_time: f64,
    std_time: f64,
    median_time: f64,
    std_error: f64,
    n_censored: usize,
    n_runs: usize,
    kramers_time: Option<f64>,
    rel_error_vs_kramers: Option<f64>,
}

pub fn run(c: &KramersSweepConfig, seed: u64, out: &mut OutputDir) -> Result<Outcome> {
    let p = c.potential.build::<f64>()?;
    let w0 = DVector::from_vec(c.w0.clone());
    let target = DVector::from_vec(c.target.clone());
    let mut flags = Vec::new();
    let mut ensembles: Vec<(f64, EscapeStats64)> = Vec::new();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut time_rows = Vec::new();
    for (i, &d) in c.d_grid.iter().enumerate() {
        let params = DiffusionParams::new(d, c.dt, c.max_steps, derive_seed(seed, SALT_PASSAGE + i as u64))?;
        let kramers_time = match &c.kramers {
            Some(k) => Some(1.0 / kramers_double_well(&p, d, k.min_loc, k.saddle_loc)?),
            None => None,
        };
        let stats = match first_passage(&p, &w0, &target, c.radius, &params, c.n_runs) {
            Ok(s) => s,
            Err(e) => {
                flags.push(flag(format!("D={d}"), &e));
                rows.push(vec![
                    fmt_f64(d),
                    fmt_f64(1.0 / d),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    c.n_runs.to_string(),
                    c.n_runs.to_string(),
                    fmt_opt(kramers_time),
                ]);
                continue;
            }
        };
        for (run, t) in stats.samples.iter().enumerate() {
            time_rows.push(vec![fmt_f64(d), run.to_string(), fmt_opt(*t)]);
        }
        rows.push(vec![
            fmt_f64(d),
            fmt_f64(1.0 / d),
            fmt_f64(stats.mean),
            fmt_f64(stats.std),
            fmt_f64(stats.median),
            fmt_f64(stats.mean_std_error()),
            stats.n_censored.to_string(),
            stats.n_runs.to_string(),
            fmt_opt(kramers_time),
        ]);
        records.push(Record {
            d,
            mean_time: stats.mean,
            std_time: stats.std,
            median_time: stats.median,
            std_error: stats.mean_std_error(),
            n_censored: stats.n_censored,
            n_runs: stats.n_runs,
            kramers_time,
            rel_error_vs_kramers: kramers_time.map(|k| stats.mean / k - 1.0),
        });
        ensembles.push((1.0 / d, stats));
    }
    out.write_csv("kramers.csv", &schema::KRAMERS, &rows)?;
    out.write_csv("passage_times.csv", &schema::PASSAGE_TIMES, &time_rows)?;

    let points: Vec<Vec<f64>> = ensembles.iter().map(|(x, s)| vec![*x, s.mean.ln()]).collect();
    out.write_plot(
        "arrhenius_points.dat",
        "log mean passage time vs 1/D",
        &["inv_D", "log_mean_time"],
        &points,
    )?;
    let pairs: Vec<(f64, &EscapeStats64)> = ensembles.iter().map(|(x, s)| (*x, s)).collect();
    let summary = match arrhenius_fit_escapes(&pairs) {
        Ok(fit) => {
            let curve: Vec<Vec<f64>> = fit.curve(50).into_iter().map(|(x, y)| vec![x, y]).collect();
            out.write_plot(
                "arrhenius_fit.dat",
                "fitted log time vs 1/D",
                &["inv_D", "log_time_fit"],
                &curve,
            )?;
            json!({
                "barrier": fit.barrier(),
                "barrier_half_d": fit.barrier_half_d(),
                "prefactor": fit.prefactor(),
                "fit": fit,
            })
        }
        Err(e) => {
            flags.push(flag("arrhenius-fit", &e));
            json!({ "barrier": null })
        }
    };
    Ok(Outcome {
        records: serde_json::to_value(records)?,
        summary,
        flags,
    })
}
