use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::output::FileEntry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Complete,
    /// Some cells failed; their reasons are in `flags`.
    Partial,
    /// The experiment stopped early; `error` says why.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFlag {
    pub cell: String,
    pub reason: String,
}

/// Wall-clock metadata; the only part of a bundle allowed to differ between
/// reruns of one config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub wall_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub records: Value,
    pub summary: Value,
    pub flags: Vec<CellFlag>,
    pub files: Vec<FileEntry>,
    pub timing: Timing,
}

impl ResultBundle {
    /// The bundle as JSON with `timing` removed, for reproducibility checks.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("bundle serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timing");
        }
        serde_json::to_string(&v).expect("bundle serializes")
    }
}
