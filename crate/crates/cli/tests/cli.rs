use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gridres(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridres"))
        .args(args)
        .current_dir(cwd)
        .env("GRIDRES_THREADS", "1")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"{
  "grid": "case5",
  "horizon": 20,
  "eval_episodes": 2,
  "seeds": [3],
  "lambdas": [0.0, 0.001],
  "trainer": { "total_steps": 120, "warmup": 40, "batch_size": 8 }
}"#;

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gridres(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(gridres(&["launch"], dir.path()).status.code(), Some(1));
    assert_eq!(gridres(&["train"], dir.path()).status.code(), Some(1));
    let missing = gridres(&["baseline", "--config", "nope.json"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("nope.json"));
}

#[test]
fn invalid_thread_cap_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_gridres"))
        .args(["sweep-lambda", "--config"])
        .arg(&cfg)
        .env("GRIDRES_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("GRIDRES_THREADS"));
}

#[test]
fn missing_chronics_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"grid": "case5", "chronics": "absent.csv"}"#);
    let out = gridres(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("absent.csv"));
}

#[test]
fn plot_rejects_empty_curves() {
    let dir = tempfile::tempdir().unwrap();
    let curves = dir.path().join("curves.csv");
    std::fs::write(
        &curves,
        "episode,env_step,steps_survived,cost,islands,unsupplied_load,broken_lines,total_reward\n",
    )
    .unwrap();
    let out = gridres(&["plot", "--curves", curves.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no data"));
}

#[test]
fn train_eval_and_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    assert!(gridres(&["train", "--config", cfg, "--out", "run"], dir.path()).status.success());
    for f in ["curves.csv", "checkpoint.grqn", "manifest.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }

    let eval = gridres(
        &["eval", "--config", cfg, "--checkpoint", "run/checkpoint.grqn", "--episodes", "1", "--out", "ev"],
        dir.path(),
    );
    assert!(eval.status.success(), "{}", stderr(&eval));
    let summary = std::fs::read_to_string(dir.path().join("ev/eval_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.ends_with(",0")), "{summary}");
    assert!(dir.path().join("ev/logs/eval_episode_0000.jsonl").exists());

    let plot = gridres(&["plot", "--curves", "run/curves.csv", "--out", "fig"], dir.path());
    assert!(plot.status.success());
    assert_eq!(std::fs::read_dir(dir.path().join("fig")).unwrap().count(), 6);
}

#[test]
fn incompatible_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(gridres(&["train", "--config", cfg.to_str().unwrap(), "--out", "run"], dir.path()).status.success());
    let other = dir.path().join("case14.json");
    std::fs::write(&other, r#"{"grid": "case14", "horizon": 5, "eval_episodes": 1}"#).unwrap();
    let out = gridres(
        &["eval", "--config", other.to_str().unwrap(), "--checkpoint", "run/checkpoint.grqn"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("checkpoint"));
}

#[test]
fn lambda_sweep_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = gridres(
        &["sweep-lambda", "--config", cfg.to_str().unwrap(), "--seeds", "2", "--out", "sw"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let table = std::fs::read_to_string(dir.path().join("sw/sweep_lambda.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].starts_with("do_nothing"));
    let runs = std::fs::read_to_string(dir.path().join("sw/sweep_lambda_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 4);

    // The λ = 0 run for seed 0 matches a standalone training run.
    assert!(gridres(&["train", "--config", cfg.to_str().unwrap(), "--seed", "0", "--out", "solo"], dir.path())
        .status
        .success());
    let solo = std::fs::read(dir.path().join("solo/curves.csv")).unwrap();
    let swept = std::fs::read(dir.path().join("sw/runs/lambda_0e0_seed_0_curves.csv")).unwrap();
    assert_eq!(solo, swept);
}
