use gridres::agent::{
    evaluate, select_action, train, AgentError, Episode, HiddenLayers, Policy, Scenario, TrainerConfig,
};
use gridres::env::{ChronicsParams, ContingencyEvent, EnvError};
use gridres::metrics::{episode_summary, SummaryRecord};
use gridres::nn::{AdamConfig, NetworkSpec, QNetwork};
use gridres::par::ExecMode;
use gridres::{EnvConfig, Grid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two states. In state 0 action 0 pays 0.1 and stays, action 1 pays
/// nothing and moves to state 1. In state 1 action 1 pays 1 and stays,
/// action 0 falls back to state 0. Always taking action 1 is optimal.
struct Chain {
    state: usize,
    t: usize,
    horizon: usize,
    reward: f64,
}

impl Chain {
    fn new() -> Self {
        Chain {
            state: 0,
            t: 0,
            horizon: 10,
            reward: 0.0,
        }
    }
}

impl Episode for Chain {
    fn observation_size(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn observe(&self) -> Vec<f64> {
        let mut v = vec![0.0; 2];
        v[self.state] = 1.0;
        v
    }

    fn act(&mut self, index: usize) -> Result<(f64, bool), AgentError> {
        let r = match (self.state, index) {
            (0, 0) => 0.1,
            (0, _) => {
                self.state = 1;
                0.0
            }
            (_, 1) => 1.0,
            _ => {
                self.state = 0;
                0.0
            }
        };
        self.t += 1;
        self.reward += r;
        Ok((r, self.t >= self.horizon))
    }

    fn summary(&self) -> SummaryRecord {
        SummaryRecord {
            steps_survived: self.t as f64,
            cost: 0.0,
            islands: 1.0,
            unsupplied_load: 0.0,
            broken_lines: 0.0,
            total_reward: self.reward,
        }
    }
}

fn chain_factory(_: u64) -> Result<Chain, EnvError> {
    Ok(Chain::new())
}

fn chain_config() -> TrainerConfig {
    TrainerConfig {
        gamma: 0.9,
        total_steps: 5000,
        warmup: 200,
        train_freq: 1,
        target_sync: 200,
        batch_size: 16,
        buffer_capacity: 5000,
        adam: AdamConfig {
            base_lr: 2e-3,
            ..AdamConfig::default()
        },
        hidden: Some(HiddenLayers {
            trunk: vec![16],
            head_hidden: 8,
        }),
        ..TrainerConfig::default()
    }
}

#[test]
fn learns_the_optimal_policy_on_a_two_state_chain() {
    let config = chain_config();
    let mut optimal = 0;
    for seed in 0..10 {
        let out = train(&chain_factory, &config, seed).unwrap();
        let ev = evaluate(Policy::Greedy(&out.checkpoint.online), &chain_factory, 1, seed, ExecMode::Sequential)
            .unwrap();
        // One step to move, then nine rewarded steps.
        if ev.summaries[0].total_reward == 9.0 {
            optimal += 1;
        }
    }
    assert!(optimal >= 9, "{optimal}/10 seeds learned the optimal policy");
}

#[test]
fn training_is_deterministic() {
    let config = TrainerConfig {
        total_steps: 600,
        ..chain_config()
    };
    let a = train(&chain_factory, &config, 42).unwrap();
    let b = train(&chain_factory, &config, 42).unwrap();
    assert_eq!(a.curves, b.curves);
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    let c = train(&chain_factory, &config, 43).unwrap();
    assert_ne!(a.checkpoint.online.params(), c.checkpoint.online.params());
}

#[test]
fn uniform_exploration_passes_chi_square() {
    let spec = NetworkSpec {
        input: 1,
        trunk: vec![],
        head_hidden: 1,
        actions: 8,
        mean_centered: false,
    };
    let net = QNetwork::zeros(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 80_000;
    let mut counts = [0usize; 8];
    for _ in 0..n {
        counts[select_action(&net, &[0.0], 1.0, &mut rng).unwrap()] += 1;
    }
    let expected = n as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.999 quantile of chi-square with 7 degrees of freedom.
    assert!(chi2 < 24.32, "chi2 = {chi2}, counts {counts:?}");
}

fn case5_scenario() -> Scenario {
    Scenario::synthetic(Grid::case5(), EnvConfig::default(), 30, ChronicsParams::default())
        .with_contingency(ContingencyEvent::new(vec![4, 5]))
}

#[test]
fn aggregate_equals_fold_over_logs() {
    let sc = case5_scenario();
    let ev = evaluate(Policy::DoNothing, &sc, 6, 3, ExecMode::Sequential).unwrap();
    assert_eq!(ev.logs.len(), 6);
    let recomputed: Vec<SummaryRecord> = ev.logs.iter().map(|l| episode_summary(l, 1.0)).collect();
    assert_eq!(recomputed, ev.summaries);
    for (k, (_, stats)) in ev.aggregate.rows().iter().enumerate() {
        let mean = recomputed.iter().map(|s| s.values()[k]).sum::<f64>() / 6.0;
        assert!((stats.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }
}

#[test]
fn parallel_and_sequential_evaluation_agree() {
    let sc = case5_scenario();
    let a = evaluate(Policy::DoNothing, &sc, 8, 11, ExecMode::Sequential).unwrap();
    let b = evaluate(Policy::DoNothing, &sc, 8, 11, ExecMode::Parallel).unwrap();
    assert_eq!(a.summaries, b.summaries);
    assert_eq!(a.logs, b.logs);
}

#[test]
fn environment_replays_identically() {
    use gridres::agent::EnvFactory;
    let sc = case5_scenario();
    let run = || {
        let mut env = sc.make(9).unwrap();
        let mut k = 0;
        while !env.act(k % 3).unwrap().1 {
            k += 1;
        }
        env.into_log()
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_evaluation_episodes_is_an_error() {
    assert!(evaluate(Policy::DoNothing, &case5_scenario(), 0, 0, ExecMode::Sequential).is_err());
}
