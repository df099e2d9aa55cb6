//! Markov decision process over the grid: discrete action catalogs, flat
//! observations, chronics, contingencies, rewards and termination. The
//! environment keeps simulating after the grid splits into islands; only the
//! horizon or a total blackout ends an episode.

mod action;
mod chronics;
mod observation;

pub use action::{apply_action, enumerate_actions, Action, ActionCatalog, ActionSpaceKind};
pub use chronics::{Chronics, ChronicsParams};
pub use observation::{
    layout, observation_scale, observation_size, observe, Field, ObservationKind, ObservationVector,
};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{apply_overflow_protection, Grid, GridError, PowerFlowResult};
use crate::metrics::{self, EpisodeLog, LogHeader, StepRecord};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    SteppedAfterDone,
    #[error("line id {0} out of range")]
    InvalidLineId(usize),
    #[error("contingencies can only be injected before the first step")]
    ContingencyAfterStart,
    #[error("action index {0} out of range")]
    InvalidActionIndex(usize),
    #[error("invalid chronics: {0}")]
    Chronics(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Lines opened before the first agent step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContingencyEvent {
    pub lines: Vec<usize>,
}

impl ContingencyEvent {
    pub fn new(lines: Vec<usize>) -> Self {
        ContingencyEvent { lines }
    }

    /// Reads a JSON list of line ids.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| EnvError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub max_overflow_steps: u32,
    pub cooldown_steps: u32,
    /// Redispatch cost per MW.
    pub c_re: f64,
    pub action_space: ActionSpaceKind,
    pub observation_space: ObservationKind,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_overflow_steps: 3,
            cooldown_steps: 3,
            c_re: 1.0,
            action_space: ActionSpaceKind::PowerlineSet,
            observation_space: ObservationKind::Essential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub legal: bool,
    pub n_islands: usize,
    pub load_satisfaction: f64,
    pub line_connectivity: f64,
    pub operational_cost: f64,
    pub blackout: bool,
    /// Lines opened by overflow protection during the step.
    pub tripped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: ObservationVector,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Margin-weighted service reward: the mean over lines of
/// `max(0, 1 - rho²)` times load satisfaction, or -1 on total blackout.
pub fn reward(result: &PowerFlowResult, load_satisfaction: f64, blackout: bool) -> f64 {
    if blackout {
        return -1.0;
    }
    let n = result.line_loading.len();
    if n == 0 {
        return load_satisfaction;
    }
    let margin: f64 = result
        .line_loading
        .iter()
        .map(|&rho| (1.0 - rho * rho).max(0.0))
        .sum::<f64>()
        / n as f64;
    margin * load_satisfaction
}

/// One episode of the grid MDP.
#[derive(Debug, Clone)]
pub struct Environment {
    grid: Grid,
    chronics: Chronics,
    config: EnvConfig,
    catalog: ActionCatalog,
    t: usize,
    result: PowerFlowResult,
    done: bool,
    log: EpisodeLog,
}

impl Environment {
    /// Starts an episode: topology reset, chronics row 0 loaded and solved.
    pub fn new(mut grid: Grid, chronics: Chronics, config: EnvConfig) -> Result<Self, EnvError> {
        chronics.check(&grid)?;
        if chronics.horizon() == 0 {
            return Err(EnvError::Chronics("empty chronics".into()));
        }
        grid.reset_topology();
        grid.set_schedule(&chronics.loads[0], &chronics.gens[0]);
        let result = grid.solve()?;
        let catalog = enumerate_actions(&grid, config.action_space);
        let log = EpisodeLog::new(LogHeader {
            horizon: chronics.horizon(),
            n_substations: grid.n_substations(),
            load_substation: grid.loads.iter().map(|d| d.substation).collect(),
        });
        Ok(Environment {
            grid,
            chronics,
            config,
            catalog,
            t: 0,
            result,
            done: false,
            log,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn catalog(&self) -> &ActionCatalog {
        &self.catalog
    }

    pub fn chronics(&self) -> &Chronics {
        &self.chronics
    }

    pub fn horizon(&self) -> usize {
        self.chronics.horizon()
    }

    /// Steps taken so far.
    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn last_result(&self) -> &PowerFlowResult {
        &self.result
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn observation_size(&self) -> usize {
        observation_size(&self.grid, self.config.observation_space)
    }

    pub fn observation_scale(&self) -> Vec<f64> {
        observation_scale(&self.grid, self.config.observation_space, self.config.max_overflow_steps)
    }

    pub fn observe(&self, kind: ObservationKind) -> ObservationVector {
        observe(&self.grid, &self.result, kind)
    }

    /// Observation in the configured space.
    pub fn observation(&self) -> ObservationVector {
        self.observe(self.config.observation_space)
    }

    /// Opens the listed lines before the first step and re-solves so the
    /// initial observation shows the attacked grid.
    pub fn inject_contingency(&mut self, event: &ContingencyEvent) -> Result<(), EnvError> {
        if self.t != 0 {
            return Err(EnvError::ContingencyAfterStart);
        }
        if let Some(&bad) = event.lines.iter().find(|&&l| l >= self.grid.n_lines()) {
            return Err(EnvError::InvalidLineId(bad));
        }
        if event.lines.is_empty() {
            return Ok(());
        }
        for &l in &event.lines {
            self.grid.disconnect_line(l);
            self.grid.lines[l].cooldown_remaining = self.config.cooldown_steps;
        }
        self.result = self.grid.solve()?;
        Ok(())
    }

    /// Steps with the catalog entry at `index`.
    pub fn step_with_index(&mut self, index: usize) -> Result<StepOutcome, EnvError> {
        let action = *self
            .catalog
            .get(index)
            .ok_or(EnvError::InvalidActionIndex(index))?;
        self.step(&action)
    }

    /// apply action → load chronics row t → solve → overflow protection →
    /// cooldown decrement → reward → t + 1.
    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::SteppedAfterDone);
        }
        let legal = apply_action(&mut self.grid, action, self.config.cooldown_steps);
        let row = self.t.min(self.chronics.horizon() - 1);
        self.grid
            .set_schedule(&self.chronics.loads[row], &self.chronics.gens[row]);
        self.result = self.grid.solve()?;

        let line_status: Vec<bool> = self.grid.lines.iter().map(|l| l.status).collect();
        let tripped = apply_overflow_protection(
            &mut self.grid,
            &self.result,
            self.config.max_overflow_steps,
            self.config.cooldown_steps,
        );
        for line in &mut self.grid.lines {
            line.cooldown_remaining = line.cooldown_remaining.saturating_sub(1);
        }

        let scheduled: f64 = self.grid.loads.iter().map(|d| d.d_scheduled).sum();
        let blackout = scheduled > 0.0 && self.result.is_total_blackout();
        let record = StepRecord {
            t: self.t + 1,
            legal,
            d_scheduled: self.grid.loads.iter().map(|d| d.d_scheduled).collect(),
            d_actual: self.result.served.clone(),
            p_scheduled: self.grid.generators.iter().map(|g| g.p_scheduled).collect(),
            p_actual: self.result.dispatched.clone(),
            line_status,
            islands: self
                .result
                .islands
                .islands
                .iter()
                .map(|members| members.iter().map(|&v| self.result.nodes.nodes[v]).collect())
                .collect(),
            reward: 0.0,
        };
        let ls = metrics::load_satisfaction(&record).unwrap_or(1.0);
        let r = reward(&self.result, ls, blackout);
        let info = StepInfo {
            legal,
            n_islands: self.result.n_islands(),
            load_satisfaction: ls,
            line_connectivity: metrics::line_connectivity(&record),
            operational_cost: metrics::operational_cost(&record, self.config.c_re),
            blackout,
            tripped,
        };
        self.log.records.push(StepRecord { reward: r, ..record });
        self.t += 1;
        self.done = self.t >= self.chronics.horizon() || blackout;
        Ok(StepOutcome {
            observation: self.observation(),
            reward: r,
            done: self.done,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_chronics(grid: &Grid, horizon: usize, scale: f64) -> Chronics {
        let loads: Vec<f64> = grid.loads.iter().map(|d| d.p_nominal * scale).collect();
        let total: f64 = loads.iter().sum();
        let cap: f64 = grid.generators.iter().map(|g| g.p_max).sum();
        let gens: Vec<f64> = grid.generators.iter().map(|g| total * g.p_max / cap).collect();
        Chronics {
            loads: vec![loads; horizon],
            gens: vec![gens; horizon],
        }
    }

    #[test]
    fn reward_formula() {
        let mut g = Grid::case5();
        g.set_schedule(&[1.0, 1.0, 1.0], &[1.5, 1.5]);
        let mut r = g.solve().unwrap();
        r.line_loading = vec![0.0; 8];
        assert_eq!(reward(&r, 1.0, false), 1.0);
        assert_eq!(reward(&r, 1.0, true), -1.0);
        r.line_loading = vec![0.5, 1.2];
        assert_eq!(reward(&r, 1.0, false), 0.375);
    }

    #[test]
    fn light_load_survives_the_horizon() {
        let g = Grid::case5();
        let ch = flat_chronics(&g, 20, 0.3);
        let mut env = Environment::new(g, ch, EnvConfig::default()).unwrap();
        for t in 0..20 {
            let out = env.step(&Action::DoNothing).unwrap();
            assert!(out.reward > 0.0);
            assert_eq!(out.done, t == 19);
        }
        assert!(matches!(env.step(&Action::DoNothing), Err(EnvError::SteppedAfterDone)));
        assert_eq!(env.log().steps_survived(), 20);
    }

    #[test]
    fn cutting_all_lines_blacks_out_case5() {
        let g = Grid::case5();
        let ch = flat_chronics(&g, 20, 0.5);
        let mut env = Environment::new(g, ch, EnvConfig::default()).unwrap();
        env.inject_contingency(&ContingencyEvent::new((0..8).collect())).unwrap();
        assert_eq!(env.last_result().n_islands(), 5);
        assert!(env.last_result().is_total_blackout());
        let out = env.step(&Action::DoNothing).unwrap();
        assert!(out.done);
        assert_eq!(out.reward, -1.0);
        assert_eq!(env.step_index(), 1);
    }

    #[test]
    fn contingency_validation() {
        let g = Grid::case5();
        let ch = flat_chronics(&g, 5, 0.5);
        let mut env = Environment::new(g, ch, EnvConfig::default()).unwrap();
        let before = env.observation();
        env.inject_contingency(&ContingencyEvent::default()).unwrap();
        assert_eq!(env.observation(), before);
        assert!(matches!(
            env.inject_contingency(&ContingencyEvent::new(vec![8])),
            Err(EnvError::InvalidLineId(8))
        ));
        env.step(&Action::DoNothing).unwrap();
        assert!(matches!(
            env.inject_contingency(&ContingencyEvent::new(vec![0])),
            Err(EnvError::ContingencyAfterStart)
        ));
    }

    #[test]
    fn cooldown_expires_after_steps() {
        let g = Grid::case5();
        let ch = flat_chronics(&g, 10, 0.3);
        let mut env = Environment::new(g, ch, EnvConfig::default()).unwrap();
        let out = env.step(&Action::SetLineStatus { line: 0, value: -1 }).unwrap();
        assert!(out.info.legal);
        let reconnect = Action::SetLineStatus { line: 0, value: 1 };
        assert!(!env.step(&reconnect).unwrap().info.legal);
        assert!(!env.step(&reconnect).unwrap().info.legal);
        assert!(env.step(&reconnect).unwrap().info.legal);
        assert!(env.grid().lines[0].status);
    }
}
