use nalgebra::DVector;
use reachlab_core::action::{minimum_action_paths, om_action};
use reachlab_core::diffusion::Path;
use reachlab_core::landscape::Potential;
use reachlab_core::rng::{derive_seed, stream_rng};
use reachlab_core::Real;
use serde_json::json;

use super::{flag, Outcome, SALT_PATHS};
use crate::config::{ActionCheckConfig, DecompositionSpec};
use crate::error::Result;
use crate::output::{fmt_f64, OutputDir};
use crate::schema;

const MODES: usize = 3;

/// CSV rows plus `(dt, max |defect|)` plot rows.
type Decomposition = (Vec<Vec<String>>, Vec<Vec<f64>>);

/// Random smooth path: a straight segment plus a few sine modes that vanish
/// at both ends.
fn fourier_path(dim: usize, horizon: f64, dt: f64, coeffs: &[f64]) -> Result<Path<f64>> {
    let n = (horizon / dt).round() as usize + 1;
    let from = DVector::from_column_slice(&coeffs[..dim]);
    let to = DVector::from_column_slice(&coeffs[dim..2 * dim]);
    let modes = &coeffs[2 * dim..];
    let step = horizon / (n - 1) as f64;
    let points = (0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            let mut w = &from + (&to - &from) * s;
            for m in 0..MODES {
                let sine = ((m + 1) as f64 * std::f64::consts::PI * s).sin() / (m + 1) as f64;
                for d in 0..dim {
                    w[d] += modes[m * dim + d] * sine;
                }
            }
            w
        })
        .collect();
    Ok(Path::uniform(0.0, step, points)?)
}

fn decomposition<P: Potential<f64> + ?Sized>(
    p: &P,
    d: f64,
    spec: &DecompositionSpec,
    seed: u64,
) -> Result<Decomposition> {
    let dim = p.dim();
    let mut rows = Vec::new();
    let mut worst = vec![0.0; spec.dts.len()];
    for i in 0..spec.n_paths {
        let mut rng = stream_rng(derive_seed(seed, SALT_PATHS), i as u64);
        let coeffs: Vec<f64> = (0..(2 + MODES) * dim)
            .map(|_| 0.5 * f64::standard_normal(&mut rng))
            .collect();
        for (j, &dt) in spec.dts.iter().enumerate() {
            let a = om_action(p, &fourier_path(dim, spec.horizon, dt, &coeffs)?, d)?;
            worst[j] = f64::max(worst[j], a.defect().abs());
            rows.push(vec![i.to_string(), fmt_f64(dt), fmt_f64(a.defect())]);
        }
    }
    let plot = spec.dts.iter().zip(worst).map(|(&dt, w)| vec![dt, w]).collect();
    Ok((rows, plot))
}

pub fn run(c: &ActionCheckConfig, seed: u64, out: &mut OutputDir) -> Result<Outcome> {
    let p = c.potential.build::<f64>()?;
    let mut flags = Vec::new();
    let mut summary = serde_json::Map::new();

    let mut rows = Vec::new();
    let mut straight = Vec::new();
    for (i, s) in c.straight_paths.iter().enumerate() {
        let path = Path::linear(
            &DVector::from_vec(s.from.clone()),
            &DVector::from_vec(s.to.clone()),
            s.horizon,
            s.n_knots,
        )?;
        match om_action(&p, &path, c.d) {
            Ok(a) => {
                rows.push(vec![
                    i.to_string(),
                    fmt_f64(a.total),
                    fmt_f64(a.static_term),
                    fmt_f64(a.dynamic_term),
                    fmt_f64(a.defect()),
                ]);
                straight.push(json!({ "path": i, "action": a }));
            }
            Err(e) => flags.push(flag(format!("straight path {i}"), &e)),
        }
    }
    if !c.straight_paths.is_empty() {
        out.write_csv("actions.csv", &schema::ACTIONS, &rows)?;
    }

    let mut critical = Vec::new();
    if let Some(s) = &c.critical {
        let from = DVector::from_vec(s.from.clone());
        let to = DVector::from_vec(s.to.clone());
        match minimum_action_paths(&p, &from, &to, s.horizon, s.n_knots, c.d, &s.optimizer) {
            Ok(paths) => {
                for (k, cp) in paths.iter().enumerate() {
                    let stem = format!("critical_path_{k}");
                    cp.write(out.root(), &stem)?;
                    out.register(&format!("{stem}.csv"), schema::PATH.name);
                    out.register(&format!("{stem}.json"), "json");
                    if !cp.converged {
                        flags.push(flag(&stem, &"minimum-action optimizer did not converge"));
                    }
                    critical.push(json!({
                        "index": k,
                        "start": cp.start,
                        "total": cp.action.total,
                        "static_term": cp.action.static_term,
                        "dynamic_term": cp.action.dynamic_term,
                        "converged": cp.converged,
                        "iterations": cp.iterations,
                        "el_residual": cp.el_residual,
                        "scaled_el_residual": cp.el_residual / cp.el_scale.max(f64::MIN_POSITIVE),
                    }));
                }
                if let Some(best) = paths.first() {
                    let pts: Vec<Vec<f64>> = best
                        .path
                        .times()
                        .iter()
                        .zip(best.path.points())
                        .map(|(&t, w)| std::iter::once(t).chain(w.iter().copied()).collect())
                        .collect();
                    let mut cols = vec!["t".to_string()];
                    cols.extend((0..p.dim()).map(|d| format!("w{d}")));
                    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
                    out.write_plot("critical_path.dat", "lowest-action path", &cols, &pts)?;
                }
            }
            Err(e) => flags.push(flag("critical path", &e)),
        }
    }
    summary.insert("critical_paths".into(), json!(critical));

    if let Some(spec) = &c.decomposition {
        match decomposition(&p, c.d, spec, seed) {
            Ok((rows, plot)) => {
                out.write_csv("decomposition.csv", &schema::DECOMPOSITION, &rows)?;
                out.write_plot(
                    "defect_vs_dt.dat",
                    "largest |defect| vs dt",
                    &["dt", "max_abs_defect"],
                    &plot,
                )?;
                summary.insert(
                    "max_abs_defect_by_dt".into(),
                    json!(plot
                        .iter()
                        .map(|r| json!({ "dt": r[0], "max_abs_defect": r[1] }))
                        .collect::<Vec<_>>()),
                );
            }
            Err(e) => flags.push(flag("decomposition", &e)),
        }
    }
    Ok(Outcome {
        records: json!({ "straight_paths": straight }),
        summary: serde_json::Value::Object(summary),
        flags,
    })
}
