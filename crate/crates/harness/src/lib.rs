//! Experiment harness for the reachability library: JSON configs in, a
//! result bundle, CSV tables and plot data out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod schema;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use bundle::{ResultBundle, Status, Timing};
use checkpoint::Checkpoints;
use config::ExperimentConfig;
use error::{HarnessError, Result};
use output::OutputDir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

/// Runs `cfg` on a pool of `workers` threads and writes everything under
/// `out`. The returned exit code is [`EXIT_OK`] only when every cell
/// succeeded; otherwise whatever finished is still persisted.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<(ResultBundle, i32)> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let mut dir = OutputDir::create(out)?;
    let ck = Checkpoints::new(out, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Other(format!("thread pool: {e}")))?;
    log::info!(
        "running {} (seed {}) with {} workers",
        cfg.experiment.kind(),
        cfg.seed,
        workers
    );
    let result = pool.install(|| experiments::run(cfg, &mut dir, &ck));
    let files = dir.finish()?;
    let (status, error, records, summary, flags) = match result {
        Ok(o) if o.flags.is_empty() => (Status::Complete, None, o.records, o.summary, o.flags),
        Ok(o) => (Status::Partial, None, o.records, o.summary, o.flags),
        Err(e) => {
            log::error!("experiment failed: {e}");
            (
                Status::Failed,
                Some(e.to_string()),
                serde_json::Value::Null,
                serde_json::Value::Null,
                Vec::new(),
            )
        }
    };
    let mut bundle = ResultBundle {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        status,
        error,
        records,
        summary,
        flags,
        files,
        timing: Timing {
            started_unix_ms,
            wall_seconds: 0.0,
            workers: workers.max(1),
        },
    };
    bundle.timing.wall_seconds = started.elapsed().as_secs_f64();
    std::fs::write(out.join("bundle.json"), serde_json::to_string_pretty(&bundle)?)?;
    let code = if bundle.status == Status::Complete {
        EXIT_OK
    } else {
        EXIT_FAILED
    };
    Ok((bundle, code))
}
