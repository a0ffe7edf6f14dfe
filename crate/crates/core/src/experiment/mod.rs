//! Config-driven experiment runs: train, eval, sweep and bounds.

pub mod checkpoint;
pub mod config;
pub mod runner;

pub use checkpoint::Checkpoint;
pub use config::{resolve, ConfigTable, ExperimentConfig, SweepAxis};
pub use runner::{run_bounds, run_eval, run_sweep, run_train};
