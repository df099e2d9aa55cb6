//! Resilient power-grid control with low-rank regularized deep Q-learning.
//!
//! The crate bundles a DC power-flow simulator that keeps running after the
//! network splits into islands, a Markov decision process on top of it,
//! resilience metrics, a small dense dueling Q-network, singular-value
//! regularizers and a replay-based DQN trainer.

pub mod agent;
pub mod env;
pub mod grid;
pub mod linalg;
pub mod lowrank;
pub mod metrics;
pub mod nn;
pub mod par;

pub use env::{Action, ActionSpaceKind, Chronics, ContingencyEvent, EnvConfig, Environment, ObservationKind};
pub use grid::Grid;
