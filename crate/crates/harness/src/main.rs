use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use reachlab::config::{ExperimentConfig, KINDS};
use reachlab::error::HarnessError;
use reachlab::run_experiment;

/// Run one reachability experiment from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "reachlab", version)]
struct Cli {
    /// Experiment kind; must match the config's `experiment.kind`.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(KINDS))]
    kind: String,
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .parse_default_env()
        .init();
    let cli = Cli::parse();
    let result = (|| {
        let mut cfg = ExperimentConfig::load(&cli.config)?;
        if cfg.experiment.kind() != cli.kind {
            return Err(HarnessError::Schema(format!(
                "config is a `{}` experiment, not `{}`",
                cfg.experiment.kind(),
                cli.kind
            )));
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        let workers = cli
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
        run_experiment(&cfg, &cli.out, workers)
    })();
    match result {
        Ok((bundle, code)) => {
            log::info!(
                "{:?}: {} files in {}",
                bundle.status,
                bundle.files.len(),
                cli.out.display()
            );
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("reachlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
