use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{CliError, ExperimentConfig};

/// Record of one command invocation. Its `config` (with the seeds and λ
/// values actually used) can be passed back through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved experiment config; absent for `plot`.
    pub config: Option<ExperimentConfig>,
    pub seeds: Vec<u64>,
    /// Command-specific inputs such as the evaluated checkpoint.
    #[serde(default)]
    pub inputs: serde_json::Value,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, config: Option<ExperimentConfig>, seeds: Vec<u64>, started_at: String) -> Self {
        RunManifest {
            tool: "gridres".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            seeds,
            inputs: serde_json::Value::Null,
            artifacts: Vec::new(),
            started_at,
            finished_at: String::new(),
        }
    }

    pub fn write(mut self, out: &Path) -> Result<(), CliError> {
        self.finished_at = now();
        self.artifacts.push("manifest.json".into());
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(out.join("manifest.json"), text)
            .map_err(|e| CliError::Runtime(format!("cannot write manifest in {}: {e}", out.display())))
    }

    pub fn read(path: &Path) -> Result<RunManifest, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
