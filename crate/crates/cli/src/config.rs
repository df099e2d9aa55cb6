use std::path::{Path, PathBuf};

use gridres::agent::{ChronicsSource, Scenario, TrainerConfig};
use gridres::env::ChronicsParams;
use gridres::{Chronics, ContingencyEvent, EnvConfig, Grid};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Contingency given inline as line ids or as a path to a JSON list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContingencySpec {
    Lines(Vec<usize>),
    File(PathBuf),
}

/// Everything an experiment needs besides command-line overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundled fixture name (`case5`, `case14`) or path to a grid JSON file.
    pub grid: String,
    /// CSV schedule replayed every episode. Synthetic profiles are drawn
    /// per episode when absent.
    pub chronics: Option<PathBuf>,
    pub chronics_params: ChronicsParams,
    pub contingency: Option<ContingencySpec>,
    pub horizon: usize,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub eval_episodes: usize,
    /// Seed of the evaluation episodes, shared by every compared policy.
    pub eval_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: "case5".into(),
            chronics: None,
            chronics_params: ChronicsParams::default(),
            contingency: None,
            horizon: 100,
            env: EnvConfig::default(),
            trainer: TrainerConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            lambdas: vec![0.0, 1e-8, 1e-5, 1e-3],
            eval_episodes: 20,
            eval_seed: 20_000,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads a config file, or the config embedded in a run manifest.
    /// Relative paths are resolved against the file's directory and a
    /// contingency file is inlined.
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let value = match value.get("config") {
            Some(serde_json::Value::Null) => {
                return Err(CliError::Config(format!("{}: manifest carries no config", path.display())))
            }
            Some(inner) if value.get("tool").is_some() => inner.clone(),
            _ => value,
        };
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolved(base)
    }

    fn resolved(mut self, base: &Path) -> Result<ExperimentConfig, CliError> {
        if !matches!(self.grid.as_str(), "case5" | "case14") {
            self.grid = resolve(base, Path::new(&self.grid)).display().to_string();
        }
        self.chronics = self.chronics.map(|c| resolve(base, &c));
        if let Some(ContingencySpec::File(p)) = &self.contingency {
            let p = resolve(base, p);
            let event = ContingencyEvent::from_path(&p).map_err(|e| CliError::Config(e.to_string()))?;
            self.contingency = Some(ContingencySpec::Lines(event.lines));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.horizon == 0 {
            return Err(CliError::Config("horizon must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(CliError::Config("eval_episodes must be positive".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(CliError::Config(format!("lambda values must be finite and >= 0, got {l}")));
        }
        self.trainer.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn contingency_lines(&self) -> Option<Vec<usize>> {
        match &self.contingency {
            Some(ContingencySpec::Lines(l)) => Some(l.clone()),
            _ => None,
        }
    }

    /// Builds the environment factory. Missing or malformed inputs are
    /// configuration errors.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let grid = Grid::load(&self.grid).map_err(|e| CliError::Config(format!("grid {}: {e}", self.grid)))?;
        let chronics = match &self.chronics {
            Some(path) => {
                if !path.exists() {
                    return Err(CliError::Config(format!("chronics file not found: {}", path.display())));
                }
                ChronicsSource::Fixed(Chronics::from_csv(path, &grid).map_err(|e| CliError::Config(e.to_string()))?)
            }
            None => ChronicsSource::Synthetic(self.chronics_params.clone()),
        };
        let mut scenario = Scenario {
            grid,
            env: self.env.clone(),
            horizon: self.horizon,
            chronics,
            contingency: None,
        };
        if let Some(lines) = self.contingency_lines() {
            if let Some(&bad) = lines.iter().find(|&&l| l >= scenario.grid.n_lines()) {
                return Err(CliError::Config(format!("contingency line {bad} out of range")));
            }
            scenario = scenario.with_contingency(ContingencyEvent::new(lines));
        }
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"gird": "case5"}"#).is_err());
    }

    #[test]
    fn contingency_file_is_inlined() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.json"), "[4, 5]").unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"grid": "case5", "contingency": "c.json"}"#).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.contingency_lines(), Some(vec![4, 5]));
        assert!(cfg.scenario().unwrap().contingency.is_some());
    }

    #[test]
    fn out_of_range_contingency() {
        let cfg = ExperimentConfig {
            contingency: Some(ContingencySpec::Lines(vec![99])),
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.scenario(), Err(CliError::Config(_))));
    }
}
