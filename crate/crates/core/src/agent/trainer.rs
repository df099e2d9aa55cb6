use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    loss_with_lrr, select_action, td_targets, AgentError, EnvFactory, Episode, FrameStack, ReplayBuffer,
    TrainerConfig, Transition,
};
use crate::metrics::{AggregateSummary, EpisodeLog, SummaryRecord};
use crate::nn::{adam_step, Checkpoint, OptimizerState, QNetwork};
use crate::par::{self, ExecMode};

// Independent ChaCha streams drawn from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_ACTIONS: u64 = 1;
const STREAM_REPLAY: u64 = 2;
const STREAM_EPISODES: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seeds for `n` consecutive episodes of a run.
pub fn episode_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = stream(seed, STREAM_EPISODES);
    (0..n).map(|_| rng.random()).collect()
}

/// Statistics of one finished training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCurve {
    pub episode: usize,
    /// Environment steps taken when the episode ended.
    pub env_step: u64,
    pub summary: SummaryRecord,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub curves: Vec<EpisodeCurve>,
}

/// Trains an online/target pair for `config.total_steps` environment
/// steps. The run is a pure function of `(factory, config, seed)`.
pub fn train<F: EnvFactory>(factory: &F, config: &TrainerConfig, seed: u64) -> Result<TrainOutput, AgentError>
where
    F::Env: Episode,
{
    config.validate()?;
    let mut episode_rng = stream(seed, STREAM_EPISODES);
    let mut env = factory.make(episode_rng.random())?;
    let spec = config.network_spec(env.observation_size(), env.n_actions());
    let mut online = QNetwork::new(spec, &mut stream(seed, STREAM_INIT));
    let mut target = online.clone();
    let mut opt = OptimizerState::new(online.n_params(), config.adam);
    let mut action_rng = stream(seed, STREAM_ACTIONS);
    let mut replay_rng = stream(seed, STREAM_REPLAY);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity.min(config.total_steps.max(1) as usize));

    let mut curves = Vec::new();
    let mut frames = FrameStack::new(env.observe());
    let mut state = frames.stacked();
    let mut updates = 0u64;
    let mut last_loss = f64::NAN;

    for step in 0..config.total_steps {
        let eps = config.epsilon(step);
        let action = select_action(&online, &state, eps, &mut action_rng)?;
        let (reward, done) = env.act(action)?;
        frames.push(env.observe());
        let next_state: Arc<[f64]> = frames.stacked();
        buffer.push(Transition {
            state: state.clone(),
            action,
            reward,
            next_state: next_state.clone(),
            done,
        });
        state = next_state;

        if step >= config.warmup && (step + 1) % config.train_freq == 0 {
            if let Some(batch) = buffer.sample(config.batch_size, &mut replay_rng) {
                let y = td_targets(&batch, &online, &target, config.gamma, config.double_dqn)?;
                let out = loss_with_lrr(&batch, &y, &online, config.lambda, &config.regularizer)?;
                adam_step(&mut online, &out.gradient, &mut opt)?;
                last_loss = out.loss;
                updates += 1;
            }
        }
        if (step + 1) % config.target_sync == 0 {
            target = online.clone();
        }
        if done {
            curves.push(EpisodeCurve {
                episode: curves.len(),
                env_step: step + 1,
                summary: env.summary(),
            });
            env = factory.make(episode_rng.random())?;
            frames = FrameStack::new(env.observe());
            state = frames.stacked();
        }
    }

    let meta = serde_json::json!({
        "seed": seed,
        "env_steps": config.total_steps,
        "episodes": curves.len(),
        "updates": updates,
        "last_loss": if last_loss.is_finite() { Some(last_loss) } else { None },
        "config": config,
        "rng_word_pos": {
            "actions": action_rng.get_word_pos().to_string(),
            "replay": replay_rng.get_word_pos().to_string(),
            "episodes": episode_rng.get_word_pos().to_string(),
        },
    });
    Ok(TrainOutput {
        checkpoint: Checkpoint {
            online,
            target: Some(target),
            optimizer: opt,
            meta,
        },
        curves,
    })
}

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Greedy (ε = 0) with respect to a network.
    Greedy(&'a QNetwork),
    /// Always catalog index 0, the null action.
    DoNothing,
}

/// Per-episode summaries, their aggregate and the step logs.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub summaries: Vec<SummaryRecord>,
    pub aggregate: AggregateSummary,
    pub logs: Vec<EpisodeLog>,
}

fn run_episode<E: Episode>(mut env: E, policy: Policy<'_>) -> Result<(SummaryRecord, Option<EpisodeLog>), AgentError> {
    let mut frames = FrameStack::new(env.observe());
    let mut done = false;
    while !done {
        let action = match policy {
            Policy::DoNothing => 0,
            Policy::Greedy(net) => super::argmax(&net.q_values(&frames.stacked())?),
        };
        done = env.act(action)?.1;
        if !done {
            frames.push(env.observe());
        }
    }
    Ok((env.summary(), env.log().cloned()))
}

/// Runs `episodes` independent episodes, in parallel when `mode` allows.
/// Episode `i` always sees the same chronics for a given `seed`.
pub fn evaluate<F: EnvFactory>(
    policy: Policy<'_>,
    factory: &F,
    episodes: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<Evaluation, AgentError>
where
    F::Env: Episode,
{
    if episodes == 0 {
        return Err(AgentError::Config("evaluation needs at least one episode".into()));
    }
    let seeds = episode_seeds(seed, episodes);
    let results = par::map(mode, &seeds, |&s| {
        let env = factory.make(s)?;
        run_episode(env, policy)
    });
    let mut summaries = Vec::with_capacity(episodes);
    let mut logs = Vec::new();
    for r in results {
        let (summary, log) = r?;
        summaries.push(summary);
        logs.extend(log);
    }
    Ok(Evaluation {
        aggregate: AggregateSummary::from_summaries(&summaries),
        summaries,
        logs,
    })
}
