//! Files, experiments and the command line around `mlcm-core`.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;
pub mod seeds;
pub mod summary;

pub use config::{preset, ExperimentConfig};
pub use experiment::{run_experiment, Record, RunOptions};
