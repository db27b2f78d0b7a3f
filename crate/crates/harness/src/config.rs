//! Experiment configuration. Every struct rejects unknown keys.

use std::path::Path;

use reachlab_core::action::MinActionConfig;
use reachlab_core::complexity::TrainerConfig;
use reachlab_core::diffusion::{Sampling, SgdConfig};
use reachlab_core::landscape::{Potential, PotentialSpec};
use reachlab_core::tasks::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream in the experiment.
    pub seed: u64,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    KramersSweep(KramersSweepConfig),
    LabelSweep(LabelSweepConfig),
    BatchSweep(BatchSweepConfig),
    ComplexityScatter(LabelSweepConfig),
    FinetuneMatrix(FinetuneConfig),
    StructureCurve(StructureCurveConfig),
    ActionCheck(ActionCheckConfig),
}

pub const KINDS: [&str; 7] = [
    "kramers-sweep",
    "label-sweep",
    "batch-sweep",
    "complexity-scatter",
    "finetune-matrix",
    "structure-curve",
    "action-check",
];

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::KramersSweep(_) => KINDS[0],
            Experiment::LabelSweep(_) => KINDS[1],
            Experiment::BatchSweep(_) => KINDS[2],
            Experiment::ComplexityScatter(_) => KINDS[3],
            Experiment::FinetuneMatrix(_) => KINDS[4],
            Experiment::StructureCurve(_) => KINDS[5],
            Experiment::ActionCheck(_) => KINDS[6],
        }
    }
}

/// Gaussian blob classification data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub classes: usize,
    pub n: usize,
    pub dim: usize,
    pub separation: f64,
}

/// SGD settings; the seed comes from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSpec {
    pub eta: f64,
    pub batch: usize,
    pub max_steps: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default = "one")]
    pub check_every: usize,
}

fn one() -> usize {
    1
}

impl SgdSpec {
    pub fn build(&self, seed: u64) -> SgdConfig {
        SgdConfig {
            check_every: self.check_every,
            ..SgdConfig::new(self.eta, self.batch, self.max_steps, seed).with_sampling(self.sampling)
        }
    }
}

/// Loss level at which an SGD run counts as converged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThresholdSpec {
    /// Minimum loss found by full-batch descent plus `margin` nats.
    MinPlus {
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_descent_iters")]
        descent_iters: usize,
    },
    /// The same absolute loss for every task.
    Absolute { value: f64 },
}

fn default_margin() -> f64 {
    0.1
}

fn default_descent_iters() -> usize {
    5000
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::MinPlus {
            margin: default_margin(),
            descent_iters: default_descent_iters(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KramersPoints {
    pub min_loc: f64,
    pub saddle_loc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KramersSweepConfig {
    #[serde(default = "double_well")]
    pub potential: PotentialSpec,
    pub w0: Vec<f64>,
    pub target: Vec<f64>,
    pub radius: f64,
    #[serde(rename = "D_grid")]
    pub d_grid: Vec<f64>,
    pub dt: f64,
    pub max_steps: usize,
    pub n_runs: usize,
    /// Minimum and saddle for the closed-form Kramers time (1D only).
    #[serde(default)]
    pub kramers: Option<KramersPoints>,
}

fn double_well() -> PotentialSpec {
    PotentialSpec::DoubleWell1D { scale: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSweepConfig {
    pub blobs: BlobSpec,
    pub model: ModelSpec,
    pub rho_grid: Vec<f64>,
    pub beta: f64,
    pub lambda2: f64,
    #[serde(default)]
    pub trainer: TrainerConfig,
    pub sgd: SgdSpec,
    pub n_runs: usize,
    #[serde(default)]
    pub threshold: ThresholdSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSweepConfig {
    pub blobs: BlobSpec,
    pub model: ModelSpec,
    pub batch_grid: Vec<usize>,
    pub eta: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub sampling: Sampling,
    /// Minibatch gradients drawn per noise-covariance estimate.
    pub noise_draws: usize,
    pub n_runs: usize,
    #[serde(default)]
    pub threshold: ThresholdSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneTask {
    pub id: String,
    /// Classes kept from the shared base data; all classes when absent.
    #[serde(default)]
    pub classes: Option<Vec<usize>>,
    #[serde(default)]
    pub corruption: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub blobs: BlobSpec,
    pub model: ModelSpec,
    pub tasks: Vec<FinetuneTask>,
    /// Full-batch descent iterations used to pretrain on each task.
    #[serde(default = "default_descent_iters")]
    pub pretrain_iters: usize,
    pub beta: f64,
    pub lambda2: f64,
    #[serde(default)]
    pub trainer: TrainerConfig,
    pub sgd: SgdSpec,
    pub n_runs: usize,
    #[serde(default)]
    pub threshold: ThresholdSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureCurveConfig {
    pub blobs: BlobSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub corruption: f64,
    /// Strictly descending.
    pub beta_grid: Vec<f64>,
    pub lambda2: f64,
    #[serde(default)]
    pub trainer: TrainerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StraightPath {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub horizon: f64,
    pub n_knots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSpec {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub horizon: f64,
    pub n_knots: usize,
    #[serde(default)]
    pub optimizer: MinActionConfig,
}

/// Random smooth paths evaluated at several knot spacings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSpec {
    pub n_paths: usize,
    pub horizon: f64,
    pub dts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionCheckConfig {
    pub potential: PotentialSpec,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(default)]
    pub straight_paths: Vec<StraightPath>,
    #[serde(default)]
    pub critical: Option<CriticalSpec>,
    #[serde(default)]
    pub decomposition: Option<DecompositionSpec>,
}

fn reject(msg: impl Into<String>) -> HarnessError {
    HarnessError::Schema(msg.into())
}

fn check_blobs(b: &BlobSpec, m: &ModelSpec) -> Result<(), HarnessError> {
    if b.classes < 2 || b.n < b.classes || b.dim == 0 || !(b.separation > 0.0) {
        return Err(reject(
            "blobs need classes >= 2, n >= classes, dim >= 1, separation > 0",
        ));
    }
    if m.input_dim != b.dim || m.classes != b.classes {
        return Err(reject(format!(
            "model expects {} inputs / {} classes but blobs have {} / {}",
            m.input_dim, m.classes, b.dim, b.classes
        )));
    }
    if m.weight_decay < 0.0 {
        return Err(reject("weight_decay must be >= 0"));
    }
    Ok(())
}

fn check_sgd(s: &SgdSpec, n: usize) -> Result<(), HarnessError> {
    if !(s.eta > 0.0) || s.batch == 0 || s.max_steps == 0 || s.check_every == 0 {
        return Err(reject(
            "sgd needs eta > 0, batch >= 1, max_steps >= 1, check_every >= 1",
        ));
    }
    if s.sampling == Sampling::WithoutReplacement && s.batch > n {
        return Err(reject("batch exceeds dataset size for sampling without replacement"));
    }
    Ok(())
}

fn check_threshold(t: &ThresholdSpec) -> Result<(), HarnessError> {
    match t {
        ThresholdSpec::MinPlus { margin, descent_iters } => {
            if !(*margin >= 0.0) || *descent_iters == 0 {
                return Err(reject("min-plus threshold needs margin >= 0 and descent_iters >= 1"));
            }
        }
        ThresholdSpec::Absolute { value } => {
            if !(*value > 0.0) {
                return Err(reject("absolute threshold must be > 0"));
            }
        }
    }
    Ok(())
}

fn check_positive(name: &str, x: f64) -> Result<(), HarnessError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(reject(format!("{name} must be positive and finite (got {x})")))
    }
}

fn check_label_sweep(c: &LabelSweepConfig) -> Result<(), HarnessError> {
    check_blobs(&c.blobs, &c.model)?;
    check_sgd(&c.sgd, c.blobs.n)?;
    check_threshold(&c.threshold)?;
    check_positive("beta", c.beta)?;
    check_positive("lambda2", c.lambda2)?;
    if c.rho_grid.len() < 3 || c.rho_grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(reject("rho_grid needs at least 3 values in [0, 1]"));
    }
    if c.n_runs == 0 {
        return Err(reject("n_runs must be >= 1"));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses JSON, rejecting unknown keys and out-of-range values.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| reject(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| reject(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match &self.experiment {
            Experiment::KramersSweep(c) => {
                let dim = c.potential.build::<f64>().map_err(|e| reject(e.to_string()))?.dim();
                if c.w0.len() != dim || c.target.len() != dim {
                    return Err(reject(format!(
                        "w0 and target must have the potential's dimension {dim}"
                    )));
                }
                check_positive("radius", c.radius)?;
                check_positive("dt", c.dt)?;
                if c.d_grid.len() < 3 || c.d_grid.iter().any(|d| !(*d > 0.0)) {
                    return Err(reject("D_grid needs at least 3 positive values"));
                }
                if c.n_runs == 0 || c.max_steps == 0 {
                    return Err(reject("n_runs and max_steps must be >= 1"));
                }
                if c.kramers.is_some() && dim != 1 {
                    return Err(reject("kramers points need a 1D potential"));
                }
            }
            Experiment::LabelSweep(c) | Experiment::ComplexityScatter(c) => check_label_sweep(c)?,
            Experiment::BatchSweep(c) => {
                check_blobs(&c.blobs, &c.model)?;
                check_threshold(&c.threshold)?;
                check_positive("eta", c.eta)?;
                if c.batch_grid.len() < 3 || c.batch_grid.contains(&0) {
                    return Err(reject("batch_grid needs at least 3 sizes >= 1"));
                }
                if c.sampling == Sampling::WithoutReplacement && c.batch_grid.iter().any(|&b| b > c.blobs.n) {
                    return Err(reject("batch exceeds dataset size for sampling without replacement"));
                }
                if c.noise_draws < 100 || c.n_runs == 0 || c.max_steps == 0 {
                    return Err(reject("noise_draws must be >= 100; n_runs and max_steps >= 1"));
                }
            }
            Experiment::FinetuneMatrix(c) => {
                check_blobs(&c.blobs, &c.model)?;
                check_sgd(&c.sgd, c.blobs.n)?;
                check_threshold(&c.threshold)?;
                check_positive("beta", c.beta)?;
                check_positive("lambda2", c.lambda2)?;
                if c.tasks.len() < 2 || c.pretrain_iters == 0 {
                    return Err(reject("finetune-matrix needs at least 2 tasks and pretrain_iters >= 1"));
                }
                let mut ids: Vec<&str> = c.tasks.iter().map(|t| t.id.as_str()).collect();
                ids.sort_unstable();
                ids.dedup();
                if ids.len() != c.tasks.len() || ids.iter().any(|id| id.is_empty() || id.contains([',', '\n', '"'])) {
                    return Err(reject(
                        "task ids must be unique, non-empty and free of commas, quotes and newlines",
                    ));
                }
                for t in &c.tasks {
                    if let Some(cl) = &t.classes {
                        if cl.is_empty() || cl.iter().any(|&k| k >= c.blobs.classes) {
                            return Err(reject(format!(
                                "task `{}` selects classes outside the label space",
                                t.id
                            )));
                        }
                    }
                    if !(0.0..=1.0).contains(&t.corruption) {
                        return Err(reject(format!("task `{}` corruption must lie in [0, 1]", t.id)));
                    }
                }
                if c.n_runs == 0 {
                    return Err(reject("n_runs must be >= 1"));
                }
            }
            Experiment::StructureCurve(c) => {
                check_blobs(&c.blobs, &c.model)?;
                check_positive("lambda2", c.lambda2)?;
                if !(0.0..=1.0).contains(&c.corruption) {
                    return Err(reject("corruption must lie in [0, 1]"));
                }
                if c.beta_grid.is_empty()
                    || c.beta_grid.iter().any(|b| !(*b > 0.0))
                    || c.beta_grid.windows(2).any(|w| w[1] >= w[0])
                {
                    return Err(reject("beta_grid must be non-empty, positive and strictly descending"));
                }
            }
            Experiment::ActionCheck(c) => {
                let dim = c.potential.build::<f64>().map_err(|e| reject(e.to_string()))?.dim();
                check_positive("D", c.d)?;
                for p in &c.straight_paths {
                    if p.from.len() != dim || p.to.len() != dim || p.n_knots < 3 || !(p.horizon > 0.0) {
                        return Err(reject(
                            "straight paths need matching dimension, n_knots >= 3, horizon > 0",
                        ));
                    }
                }
                if let Some(cr) = &c.critical {
                    if cr.from.len() != dim || cr.to.len() != dim || cr.n_knots < 10 || !(cr.horizon > 0.0) {
                        return Err(reject(
                            "critical path needs matching dimension, n_knots >= 10, horizon > 0",
                        ));
                    }
                }
                if let Some(d) = &c.decomposition {
                    if d.n_paths == 0 || d.dts.is_empty() || d.dts.iter().any(|x| !(*x > 0.0 && *x < d.horizon)) {
                        return Err(reject("decomposition needs n_paths >= 1 and 0 < dt < horizon"));
                    }
                }
                if c.straight_paths.is_empty() && c.critical.is_none() && c.decomposition.is_none() {
                    return Err(reject("action-check needs straight_paths, critical or decomposition"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ACTION: &str = r#"{
        "seed": 3,
        "experiment": {
            "kind": "action-check",
            "potential": {"name": "quadratic", "curvature": [0.0]},
            "D": 0.25,
            "straight_paths": [{"from": [0.0], "to": [1.0], "horizon": 1.0, "n_knots": 11}]
        }
    }"#;

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::from_json(ACTION).unwrap();
        assert_eq!(cfg.experiment.kind(), "action-check");
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let extra = ACTION.replace("\"D\": 0.25", "\"D\": 0.25, \"colour\": 1");
        assert!(matches!(
            ExperimentConfig::from_json(&extra),
            Err(HarnessError::Schema(_))
        ));
        let top = ACTION.replace("\"seed\": 3", "\"seed\": 3, \"out\": \"x\"");
        assert!(ExperimentConfig::from_json(&top).is_err());
        let kind = ACTION.replace("action-check", "action-chek");
        assert!(ExperimentConfig::from_json(&kind).is_err());
    }

    #[test]
    fn values_are_range_checked() {
        let bad = ACTION.replace("\"D\": 0.25", "\"D\": 0.0");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let dims = ACTION.replace("\"to\": [1.0]", "\"to\": [1.0, 2.0]");
        assert!(ExperimentConfig::from_json(&dims).is_err());
    }
}
