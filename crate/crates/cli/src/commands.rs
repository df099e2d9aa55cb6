use std::path::{Path, PathBuf};

use gridres::agent::{evaluate, train, EnvFactory, EpisodeCurve, Evaluation, Policy, Scenario};
use gridres::metrics::{write_summaries_csv, AggregateSummary, MetricStats, SummaryRecord};
use gridres::nn::Checkpoint;
use gridres::par::{self, ExecMode};
use gridres::{ActionSpaceKind, ObservationKind};

use crate::manifest::{now, RunManifest};
use crate::{plot, thread_cap, CliError, Command, Common, ExperimentConfig};

pub const CURVES_HEADER: [&str; 8] = [
    "episode",
    "env_step",
    "steps_survived",
    "cost",
    "islands",
    "unsupplied_load",
    "broken_lines",
    "total_reward",
];

pub const SWEEP_LAMBDA_HEADER: [&str; 7] =
    ["policy", "lambda", "runs", "mean_reward", "std_reward", "mean_steps", "std_steps"];

pub const SWEEP_LAMBDA_RUNS_HEADER: [&str; 10] = [
    "policy",
    "lambda",
    "seed",
    "mean_reward",
    "std_reward",
    "mean_steps",
    "std_steps",
    "mean_cost",
    "mean_unsupplied_load",
    "mean_broken_lines",
];

pub const SWEEP_SPACES_HEADER: [&str; 8] = [
    "algorithm",
    "observation",
    "action_space",
    "observation_size",
    "n_actions",
    "runs",
    "best_steps_survived",
    "best_reward",
];

/// Window of the moving average used for the best-smoothed statistics.
pub const SMOOTHING_WINDOW: usize = 100;

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(c) => cmd_train(&c).map(|_| ()),
        Command::Eval { common, checkpoint } => cmd_eval(&common, &checkpoint).map(|_| ()),
        Command::SweepLambda { common, lambdas, seeds } => cmd_sweep_lambda(&common, lambdas, seeds).map(|_| ()),
        Command::SweepSpaces { common, seeds } => cmd_sweep_spaces(&common, seeds).map(|_| ()),
        Command::Baseline(c) => cmd_baseline(&c).map(|_| ()),
        Command::Plot { curves, out } => cmd_plot(&curves, &out).map(|_| ()),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn prepare(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(steps) = common.steps {
        cfg.trainer.total_steps = steps;
    }
    if let Some(n) = common.episodes {
        cfg.eval_episodes = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", out.display())))
}

fn seed_list(common: &Common, cfg: &ExperimentConfig, count: Option<usize>) -> Result<Vec<u64>, CliError> {
    let seeds = match count {
        Some(n) => {
            let base = common.seed.unwrap_or(0);
            (0..n as u64).map(|i| base.wrapping_add(i)).collect()
        }
        None => match common.seed {
            Some(s) => vec![s],
            None => cfg.seeds.clone(),
        },
    };
    if seeds.is_empty() {
        return Err(CliError::Config("no seeds given".into()));
    }
    Ok(seeds)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn finish(w: csv::Writer<std::fs::File>, path: &Path) -> Result<(), CliError> {
    w.into_inner().map_err(|e| io_err(path, e.error()))?;
    Ok(())
}

pub fn write_curves(path: &Path, curves: &[EpisodeCurve]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(CURVES_HEADER).map_err(|e| io_err(path, e))?;
    for c in curves {
        let mut row = vec![c.episode.to_string(), c.env_step.to_string()];
        row.extend(c.summary.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

fn write_aggregate(path: &Path, agg: &AggregateSummary) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["metric", "mean", "std"]).map_err(|e| io_err(path, e))?;
    for (name, s) in agg.rows() {
        w.write_record([name.to_string(), s.mean.to_string(), s.std.to_string()])
            .map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

fn print_aggregate(title: &str, agg: &AggregateSummary) {
    println!("{title} ({} episodes)", agg.episodes);
    println!("{:<18}{:>14}{:>14}", "metric", "mean", "std");
    for (name, s) in agg.rows() {
        println!("{name:<18}{:>14.4}{:>14.4}", s.mean, s.std);
    }
}

/// Writes `{prefix}_summary.csv`, `{prefix}_episodes.csv` and one JSONL
/// log per episode under `logs/`.
fn write_evaluation(out: &Path, prefix: &str, ev: &Evaluation) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    let summary = format!("{prefix}_summary.csv");
    write_aggregate(&out.join(&summary), &ev.aggregate)?;
    files.push(summary);
    let episodes = format!("{prefix}_episodes.csv");
    write_summaries_csv(out.join(&episodes), &ev.summaries).map_err(|e| CliError::Runtime(e.to_string()))?;
    files.push(episodes);
    let logs = out.join("logs");
    std::fs::create_dir_all(&logs).map_err(|e| io_err(&logs, e))?;
    for (i, log) in ev.logs.iter().enumerate() {
        let name = format!("logs/{prefix}_episode_{i:04}.jsonl");
        log.write_jsonl(out.join(&name)).map_err(|e| CliError::Runtime(e.to_string()))?;
        files.push(name);
    }
    Ok(files)
}

fn scenario_for(cfg: &ExperimentConfig) -> Result<Scenario, CliError> {
    let sc = cfg.scenario()?;
    // Surfaces contingency and chronics problems before any work starts.
    sc.make(cfg.eval_seed).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(sc)
}

fn eval_mode() -> ExecMode {
    ExecMode::default_mode()
}

pub struct TrainResult {
    pub seed: u64,
    pub checkpoint: Checkpoint,
    pub curves: Vec<EpisodeCurve>,
}

pub fn cmd_train(common: &Common) -> Result<TrainResult, CliError> {
    let started = now();
    let mut cfg = prepare(common)?;
    let seed = common
        .seed
        .or_else(|| cfg.seeds.first().copied())
        .ok_or_else(|| CliError::Config("no seed given".into()))?;
    cfg.seeds = vec![seed];
    let sc = scenario_for(&cfg)?;
    create_out(&common.out)?;
    let out = train(&sc, &cfg.trainer, seed)?;
    write_curves(&common.out.join("curves.csv"), &out.curves)?;
    let ckpt = common.out.join("checkpoint.grqn");
    out.checkpoint.save(&ckpt).map_err(|e| io_err(&ckpt, e))?;
    let mut manifest = RunManifest::new("train", Some(cfg), vec![seed], started);
    manifest.artifacts = vec!["curves.csv".into(), "checkpoint.grqn".into()];
    manifest.write(&common.out)?;
    println!(
        "trained seed {seed}: {} episodes, {} parameters",
        out.curves.len(),
        out.checkpoint.online.n_params()
    );
    Ok(TrainResult {
        seed,
        checkpoint: out.checkpoint,
        curves: out.curves,
    })
}

fn run_evaluation(
    common: &Common,
    command: &str,
    prefix: &str,
    policy: Policy<'_>,
    inputs: serde_json::Value,
) -> Result<Evaluation, CliError> {
    let started = now();
    let mut cfg = prepare(common)?;
    if let Some(s) = common.seed {
        cfg.eval_seed = s;
    }
    let sc = scenario_for(&cfg)?;
    if let Policy::Greedy(net) = policy {
        let env = sc.make(cfg.eval_seed).map_err(|e| CliError::Config(e.to_string()))?;
        let (obs, actions) = (env.observation_size(), env.catalog().len());
        if net.input_width() != obs * gridres::nn::NetworkSpec::FRAMES || net.n_actions() != actions {
            return Err(CliError::Config(format!(
                "checkpoint expects {} inputs and {} actions; the configured environment has {} and {actions}",
                net.input_width(),
                net.n_actions(),
                obs * gridres::nn::NetworkSpec::FRAMES
            )));
        }
    }
    create_out(&common.out)?;
    let cap = thread_cap()?;
    let ev = par::with_threads(cap, || evaluate(policy, &sc, cfg.eval_episodes, cfg.eval_seed, eval_mode()))?;
    let files = write_evaluation(&common.out, prefix, &ev)?;
    print_aggregate(command, &ev.aggregate);
    let seeds = vec![cfg.eval_seed];
    let mut manifest = RunManifest::new(command, Some(cfg), seeds, started);
    manifest.inputs = inputs;
    manifest.artifacts = files;
    manifest.write(&common.out)?;
    Ok(ev)
}

pub fn cmd_eval(common: &Common, checkpoint: &Path) -> Result<Evaluation, CliError> {
    let ckpt = Checkpoint::load(checkpoint)
        .map_err(|e| CliError::Config(format!("cannot load checkpoint {}: {e}", checkpoint.display())))?;
    let inputs = serde_json::json!({ "checkpoint": checkpoint.display().to_string() });
    run_evaluation(common, "eval", "eval", Policy::Greedy(&ckpt.online), inputs)
}

pub fn cmd_baseline(common: &Common) -> Result<Evaluation, CliError> {
    run_evaluation(common, "baseline", "baseline", Policy::DoNothing, serde_json::Value::Null)
}

fn stats(values: &[f64]) -> MetricStats {
    MetricStats::from_values(values)
}

fn lambda_label(l: f64) -> String {
    format!("{l:e}")
}

/// Outcome of one trained and evaluated configuration in a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub lambda: f64,
    pub seed: u64,
    pub curves: Vec<EpisodeCurve>,
    pub eval: AggregateSummary,
    pub summaries: Vec<SummaryRecord>,
}

pub struct LambdaSweep {
    pub runs: Vec<SweepRun>,
    pub baseline: Evaluation,
}

pub fn cmd_sweep_lambda(
    common: &Common,
    lambdas: Option<Vec<f64>>,
    seed_count: Option<usize>,
) -> Result<LambdaSweep, CliError> {
    let started = now();
    let mut cfg = prepare(common)?;
    if let Some(l) = lambdas {
        cfg.lambdas = l;
    }
    if cfg.lambdas.is_empty() {
        return Err(CliError::Config("no lambda values given".into()));
    }
    let seeds = seed_list(common, &cfg, seed_count)?;
    cfg.seeds = seeds.clone();
    cfg.validate()?;
    let sc = scenario_for(&cfg)?;
    create_out(&common.out)?;
    let cap = thread_cap()?;

    let jobs: Vec<(f64, u64)> = cfg.lambdas.iter().flat_map(|&l| seeds.iter().map(move |&s| (l, s))).collect();
    let results = par::with_threads(cap, || {
        par::map(ExecMode::default_mode(), &jobs, |&(lambda, seed)| -> Result<SweepRun, CliError> {
            let mut tc = cfg.trainer.clone();
            tc.lambda = lambda;
            let out = train(&sc, &tc, seed)?;
            let ev = evaluate(
                Policy::Greedy(&out.checkpoint.online),
                &sc,
                cfg.eval_episodes,
                cfg.eval_seed,
                ExecMode::Sequential,
            )?;
            Ok(SweepRun {
                lambda,
                seed,
                curves: out.curves,
                eval: ev.aggregate,
                summaries: ev.summaries,
            })
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let baseline = evaluate(Policy::DoNothing, &sc, cfg.eval_episodes, cfg.eval_seed, ExecMode::Sequential)?;

    let mut artifacts = Vec::new();
    let runs_dir = common.out.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| io_err(&runs_dir, e))?;
    for r in &runs {
        let name = format!("runs/lambda_{}_seed_{}_curves.csv", lambda_label(r.lambda), r.seed);
        write_curves(&common.out.join(&name), &r.curves)?;
        artifacts.push(name);
    }

    let path = common.out.join("sweep_lambda.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(SWEEP_LAMBDA_HEADER).map_err(|e| io_err(&path, e))?;
    println!("{:<10}{:>12}{:>12}{:>12}  per-seed reward", "lambda", "reward", "std", "steps");
    for &l in &cfg.lambdas {
        let group: Vec<&SweepRun> = runs.iter().filter(|r| r.lambda == l).collect();
        let rewards: Vec<f64> = group.iter().map(|r| r.eval.total_reward.mean).collect();
        let steps: Vec<f64> = group.iter().map(|r| r.eval.steps_survived.mean).collect();
        let (rs, ss) = (stats(&rewards), stats(&steps));
        w.write_record([
            "dqn".to_string(),
            l.to_string(),
            group.len().to_string(),
            rs.mean.to_string(),
            rs.std.to_string(),
            ss.mean.to_string(),
            ss.std.to_string(),
        ])
        .map_err(|e| io_err(&path, e))?;
        let per: Vec<String> = rewards.iter().map(|r| format!("{r:.2}")).collect();
        println!("{:<10}{:>12.3}{:>12.3}{:>12.2}  [{}]", lambda_label(l), rs.mean, rs.std, ss.mean, per.join(", "));
    }
    let b = &baseline.aggregate;
    w.write_record([
        "do_nothing".to_string(),
        String::new(),
        "1".to_string(),
        b.total_reward.mean.to_string(),
        b.total_reward.std.to_string(),
        b.steps_survived.mean.to_string(),
        b.steps_survived.std.to_string(),
    ])
    .map_err(|e| io_err(&path, e))?;
    finish(w, &path)?;
    println!(
        "{:<10}{:>12.3}{:>12.3}{:>12.2}",
        "nothing", b.total_reward.mean, b.total_reward.std, b.steps_survived.mean
    );
    artifacts.push("sweep_lambda.csv".into());

    let path = common.out.join("sweep_lambda_runs.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(SWEEP_LAMBDA_RUNS_HEADER).map_err(|e| io_err(&path, e))?;
    for r in &runs {
        let e = &r.eval;
        w.write_record([
            "dqn".to_string(),
            r.lambda.to_string(),
            r.seed.to_string(),
            e.total_reward.mean.to_string(),
            e.total_reward.std.to_string(),
            e.steps_survived.mean.to_string(),
            e.steps_survived.std.to_string(),
            e.cost.mean.to_string(),
            e.unsupplied_load.mean.to_string(),
            e.broken_lines.mean.to_string(),
        ])
        .map_err(|e| io_err(&path, e))?;
    }
    finish(w, &path)?;
    artifacts.push("sweep_lambda_runs.csv".into());

    let mut manifest = RunManifest::new("sweep-lambda", Some(cfg), seeds, started);
    manifest.artifacts = artifacts;
    manifest.write(&common.out)?;
    Ok(LambdaSweep { runs, baseline })
}

/// Largest moving average of `values` over windows of
/// `min(SMOOTHING_WINDOW, len)` consecutive entries, NaN when empty.
pub fn best_smoothed(values: &[f64]) -> f64 {
    let w = SMOOTHING_WINDOW.min(values.len());
    if w == 0 {
        return f64::NAN;
    }
    values
        .windows(w)
        .map(|win| win.iter().sum::<f64>() / w as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One cell of the action/observation-space comparison.
#[derive(Debug, Clone)]
pub struct SpaceCell {
    pub observation: ObservationKind,
    pub action_space: ActionSpaceKind,
    pub observation_size: usize,
    pub n_actions: usize,
    /// Per-seed best smoothed steps survived.
    pub best_steps: Vec<f64>,
    pub best_reward: Vec<f64>,
}

pub struct SpaceSweep {
    pub cells: Vec<SpaceCell>,
    pub baseline: Evaluation,
}

pub fn cmd_sweep_spaces(common: &Common, seed_count: Option<usize>) -> Result<SpaceSweep, CliError> {
    let started = now();
    let mut cfg = prepare(common)?;
    let seeds = seed_list(common, &cfg, seed_count)?;
    cfg.seeds = seeds.clone();
    let base = scenario_for(&cfg)?;
    create_out(&common.out)?;
    let cap = thread_cap()?;

    let cells: Vec<(ObservationKind, ActionSpaceKind)> = ObservationKind::ALL
        .into_iter()
        .flat_map(|o| ActionSpaceKind::ALL.into_iter().map(move |a| (o, a)))
        .collect();
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let scenarios: Vec<Scenario> = cells
        .iter()
        .map(|&(o, a)| {
            let mut sc = base.clone();
            sc.env.observation_space = o;
            sc.env.action_space = a;
            sc
        })
        .collect();
    let results = par::with_threads(cap, || {
        par::map(ExecMode::default_mode(), &jobs, |&(c, seed)| -> Result<(usize, f64, f64), CliError> {
            let out = train(&scenarios[c], &cfg.trainer, seed)?;
            let steps: Vec<f64> = out.curves.iter().map(|e| e.summary.steps_survived).collect();
            let reward: Vec<f64> = out.curves.iter().map(|e| e.summary.total_reward).collect();
            Ok((c, best_smoothed(&steps), best_smoothed(&reward)))
        })
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let baseline = evaluate(Policy::DoNothing, &base, cfg.eval_episodes, cfg.eval_seed, ExecMode::Sequential)?;

    let mut out_cells = Vec::new();
    for (c, &(o, a)) in cells.iter().enumerate() {
        let env = scenarios[c].make(cfg.eval_seed).map_err(|e| CliError::Runtime(e.to_string()))?;
        let mine: Vec<&(usize, f64, f64)> = results.iter().filter(|r| r.0 == c).collect();
        out_cells.push(SpaceCell {
            observation: o,
            action_space: a,
            observation_size: env.observation_size(),
            n_actions: env.catalog().len(),
            best_steps: mine.iter().map(|r| r.1).collect(),
            best_reward: mine.iter().map(|r| r.2).collect(),
        });
    }

    let path = common.out.join("sweep_spaces.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(SWEEP_SPACES_HEADER).map_err(|e| io_err(&path, e))?;
    println!(
        "{:<12}{:<11}{:<15}{:>6}{:>8}{:>12}{:>12}",
        "algorithm", "obs", "actions", "O", "A", "steps", "reward"
    );
    for cell in &out_cells {
        let (s, r) = (stats(&cell.best_steps).mean, stats(&cell.best_reward).mean);
        w.write_record([
            "ddqn".to_string(),
            cell.observation.name().to_string(),
            cell.action_space.name().to_string(),
            cell.observation_size.to_string(),
            cell.n_actions.to_string(),
            cell.best_steps.len().to_string(),
            s.to_string(),
            r.to_string(),
        ])
        .map_err(|e| io_err(&path, e))?;
        println!(
            "{:<12}{:<11}{:<15}{:>6}{:>8}{:>12.2}{:>12.3}",
            "ddqn",
            cell.observation.name(),
            cell.action_space.name(),
            cell.observation_size,
            cell.n_actions,
            s,
            r
        );
    }
    let b = &baseline.aggregate;
    w.write_record([
        "do_nothing".to_string(),
        String::new(),
        String::new(),
        String::new(),
        "1".to_string(),
        "1".to_string(),
        b.steps_survived.mean.to_string(),
        b.total_reward.mean.to_string(),
    ])
    .map_err(|e| io_err(&path, e))?;
    finish(w, &path)?;
    println!(
        "{:<12}{:<11}{:<15}{:>6}{:>8}{:>12.2}{:>12.3}",
        "do_nothing", "", "", "", 1, b.steps_survived.mean, b.total_reward.mean
    );

    let mut manifest = RunManifest::new("sweep-spaces", Some(cfg), seeds, started);
    manifest.artifacts = vec!["sweep_spaces.csv".into()];
    manifest.write(&common.out)?;
    Ok(SpaceSweep {
        cells: out_cells,
        baseline,
    })
}

pub fn cmd_plot(curves: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let started = now();
    let rows = plot::read_curves(curves)?;
    let files = plot::plot_curves(&rows, out)?;
    let mut manifest = RunManifest::new("plot", None, Vec::new(), started);
    manifest.inputs = serde_json::json!({ "curves": curves.display().to_string() });
    manifest.artifacts = files
        .iter()
        .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    manifest.write(out)?;
    Ok(files)
}
