//! Benchmark harness for the anchored stochastic value iteration solvers:
//! instance generators, a seeded multi-trial experiment runner with oracle
//! verification, CSV reporting, and scaling fits.

pub mod csvio;
pub mod experiment;
pub mod generators;
pub mod stats;

pub use experiment::{run_experiment, ExperimentConfig, MdpSource, SolverKind};
