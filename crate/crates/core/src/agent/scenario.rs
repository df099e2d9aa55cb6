use crate::env::{Chronics, ChronicsParams, ContingencyEvent, EnvConfig, EnvError, Environment};
use crate::grid::Grid;

/// Builds a fresh environment for an episode from a per-episode seed.
pub trait EnvFactory: Sync {
    type Env;

    fn make(&self, episode_seed: u64) -> Result<Self::Env, EnvError>;
}

impl<F, E> EnvFactory for F
where
    F: Fn(u64) -> Result<E, EnvError> + Sync,
{
    type Env = E;

    fn make(&self, episode_seed: u64) -> Result<E, EnvError> {
        self(episode_seed)
    }
}

/// Where each episode's load and generation schedule comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChronicsSource {
    /// Fresh synthetic profile per episode, seeded by the episode seed.
    Synthetic(ChronicsParams),
    /// The same schedule every episode.
    Fixed(Chronics),
}

/// Grid, schedule source and optional pre-attack event.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Grid,
    pub env: EnvConfig,
    /// Episode length `H`.
    pub horizon: usize,
    pub chronics: ChronicsSource,
    pub contingency: Option<ContingencyEvent>,
}

impl Scenario {
    pub fn synthetic(grid: Grid, env: EnvConfig, horizon: usize, params: ChronicsParams) -> Self {
        Scenario {
            grid,
            env,
            horizon,
            chronics: ChronicsSource::Synthetic(params),
            contingency: None,
        }
    }

    pub fn with_contingency(mut self, event: ContingencyEvent) -> Self {
        self.contingency = Some(event);
        self
    }

    pub fn chronics_for(&self, episode_seed: u64) -> Chronics {
        match &self.chronics {
            ChronicsSource::Synthetic(p) => Chronics::synthetic(&self.grid, self.horizon, episode_seed, p),
            ChronicsSource::Fixed(c) => {
                let h = self.horizon.min(c.horizon());
                Chronics {
                    loads: c.loads[..h].to_vec(),
                    gens: c.gens[..h].to_vec(),
                }
            }
        }
    }
}

impl EnvFactory for Scenario {
    type Env = Environment;

    fn make(&self, episode_seed: u64) -> Result<Environment, EnvError> {
        let mut env = Environment::new(self.grid.clone(), self.chronics_for(episode_seed), self.env.clone())?;
        if let Some(event) = &self.contingency {
            env.inject_contingency(event)?;
        }
        Ok(env)
    }
}
