//! Replay-based double deep Q-learning with a low-rank penalty on the batch
//! Q-value matrix.

mod replay;
mod scenario;
mod trainer;

pub use replay::{FrameStack, ReplayBuffer, Transition};
pub use scenario::{ChronicsSource, EnvFactory, Scenario};
pub use trainer::{episode_seeds, evaluate, train, EpisodeCurve, Evaluation, Policy, TrainOutput};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Environment};
use crate::linalg::Matrix;
use crate::lowrank::{self, LowRankError, RegularizerSpec};
use crate::metrics::{self, EpisodeLog, SummaryRecord};
use crate::nn::{AdamConfig, NetworkSpec, NnError, QNetwork};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    LowRank(#[from] LowRankError),
    #[error("invalid trainer configuration: {0}")]
    Config(String),
}

/// An episode the trainer can interact with through catalog indices.
pub trait Episode {
    fn observation_size(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Network-ready (scaled) observation of the current state.
    fn observe(&self) -> Vec<f64>;
    /// Applies action `index`, returning `(reward, done)`.
    fn act(&mut self, index: usize) -> Result<(f64, bool), AgentError>;
    fn summary(&self) -> SummaryRecord;
    fn log(&self) -> Option<&EpisodeLog> {
        None
    }
}

impl Episode for Environment {
    fn observation_size(&self) -> usize {
        Environment::observation_size(self)
    }

    fn n_actions(&self) -> usize {
        self.catalog().len()
    }

    fn observe(&self) -> Vec<f64> {
        let scale = self.observation_scale();
        let mut obs = self.observation().values;
        obs.iter_mut().zip(&scale).for_each(|(x, s)| *x *= s);
        obs
    }

    fn act(&mut self, index: usize) -> Result<(f64, bool), AgentError> {
        let out = self.step_with_index(index)?;
        Ok((out.reward, out.done))
    }

    fn summary(&self) -> SummaryRecord {
        metrics::episode_summary(Environment::log(self), self.config().c_re)
    }

    fn log(&self) -> Option<&EpisodeLog> {
        Some(Environment::log(self))
    }
}

/// Hidden-layer widths replacing the default dueling architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLayers {
    pub trunk: Vec<usize>,
    pub head_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    /// Discount factor in `[0, 1]`.
    pub gamma: f64,
    /// Weight of the low-rank penalty.
    pub lambda: f64,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps over which ε anneals linearly; `None` means the first 20 % of
    /// training.
    pub epsilon_decay_steps: Option<u64>,
    /// Environment steps between target-network copies.
    pub target_sync: u64,
    pub buffer_capacity: usize,
    pub total_steps: u64,
    /// Steps collected before the first update.
    pub warmup: u64,
    /// Environment steps per gradient update.
    pub train_freq: u64,
    pub double_dqn: bool,
    pub regularizer: RegularizerSpec,
    pub adam: AdamConfig,
    pub mean_centered: bool,
    pub hidden: Option<HiddenLayers>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            lambda: 0.0,
            batch_size: 32,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            target_sync: 1000,
            buffer_capacity: 100_000,
            total_steps: 20_000,
            warmup: 1000,
            train_freq: 4,
            double_dqn: true,
            regularizer: RegularizerSpec::Nuclear,
            adam: AdamConfig::default(),
            mean_centered: false,
            hidden: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.target_sync == 0 || self.train_freq == 0 {
            return bad("target_sync and train_freq must be positive");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity must hold at least one batch");
        }
        if self.adam.decay_every == 0 || !(self.adam.base_lr > 0.0) {
            return bad("adam learning rate and decay period must be positive");
        }
        Ok(())
    }

    pub fn network_spec(&self, observation_size: usize, actions: usize) -> NetworkSpec {
        let mut spec = NetworkSpec::dueling(observation_size, actions);
        if let Some(h) = &self.hidden {
            spec.trunk = h.trunk.clone();
            spec.head_hidden = h.head_hidden;
        }
        spec.mean_centered = self.mean_centered;
        spec
    }

    pub fn decay_steps(&self) -> u64 {
        self.epsilon_decay_steps.unwrap_or(self.total_steps / 5)
    }

    /// Linearly annealed exploration rate at environment step `step`.
    pub fn epsilon(&self, step: u64) -> f64 {
        let d = self.decay_steps();
        if step >= d {
            return self.epsilon_end;
        }
        let frac = step as f64 / d as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Index of the largest value; ties go to the lowest index and NaN never
/// wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// ε-greedy choice over the network's Q-values.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    obs: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, AgentError> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.n_actions()));
    }
    Ok(argmax(&net.q_values(obs)?))
}

fn stack_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Result<Matrix, AgentError> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * width);
    for r in rows {
        if r.len() != width {
            return Err(NnError::ShapeMismatch {
                expected: format!("{width} inputs"),
                got: r.len().to_string(),
            }
            .into());
        }
        data.extend_from_slice(r);
    }
    Ok(Matrix::from_vec(n, width, data))
}

pub fn states_matrix(batch: &[&Transition], width: usize) -> Result<Matrix, AgentError> {
    stack_rows(batch.iter().map(|t| &*t.state), width)
}

pub fn next_states_matrix(batch: &[&Transition], width: usize) -> Result<Matrix, AgentError> {
    stack_rows(batch.iter().map(|t| &*t.next_state), width)
}

/// Bootstrapped targets `r + γ·Q_target(s', a*)`, with `a*` the target's
/// own argmax or, for double DQN, the online argmax. Terminal transitions
/// use `r` alone.
pub fn td_targets(
    batch: &[&Transition],
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
    double: bool,
) -> Result<Vec<f64>, AgentError> {
    let x = next_states_matrix(batch, target.input_width())?;
    let q_target = target.forward(&x)?;
    let q_online = if double { Some(online.forward(&x)?) } else { None };
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.done {
                return t.reward;
            }
            let row = q_target.row(i);
            let next = match &q_online {
                Some(q) => row[argmax(q.row(i))],
                None => row[argmax(row)],
            };
            t.reward + gamma * next
        })
        .collect())
}

/// Loss value, its parts and the parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub td_loss: f64,
    /// `R(Q_B)`, zero when λ = 0.
    pub regularizer: f64,
    pub gradient: Vec<f64>,
    /// Gradient of the regularizer used a subgradient at a repeated or
    /// vanishing singular value.
    pub degenerate: bool,
}

/// `Σ (y_i − Q(s_i, a_i))² + λ·R(Q_B)` and its gradient. Targets are
/// constants; the penalty sees every entry of `Q_B`. With λ = 0 the SVD is
/// skipped.
pub fn loss_with_lrr(
    batch: &[&Transition],
    y: &[f64],
    online: &QNetwork,
    lambda: f64,
    spec: &RegularizerSpec,
) -> Result<LossOutput, AgentError> {
    if y.len() != batch.len() {
        return Err(NnError::ShapeMismatch {
            expected: format!("{} targets", batch.len()),
            got: y.len().to_string(),
        }
        .into());
    }
    let x = states_matrix(batch, online.input_width())?;
    let (q, tape) = online.forward_recorded(&x)?;
    let mut dq = Matrix::zeros(q.rows, q.cols);
    let mut td_loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        if t.action >= q.cols {
            return Err(AgentError::Config(format!("action {} outside catalog", t.action)));
        }
        let e = q.get(i, t.action) - y[i];
        td_loss += e * e;
        dq.set(i, t.action, 2.0 * e);
    }
    let mut regularizer = 0.0;
    let mut degenerate = false;
    if lambda > 0.0 {
        let svd = lowrank::svd(&q)?;
        regularizer = lowrank::reg_value(spec, &svd)?;
        let g = lowrank::reg_grad(spec, &q, &svd)?;
        degenerate = g.degenerate;
        dq.data
            .iter_mut()
            .zip(&g.gradient.data)
            .for_each(|(d, r)| *d += lambda * r);
    }
    let gradient = online.backward(&tape, &dq)?;
    Ok(LossOutput {
        loss: td_loss + lambda * regularizer,
        td_loss,
        regularizer,
        gradient,
        degenerate,
    })
}
