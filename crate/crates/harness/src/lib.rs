//! Experiment runner for the robust DMA-NOMA beamforming library: TOML configs, Monte-Carlo
//! sweeps, comparison baselines and CSV output.

pub mod baselines;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{Baseline, ExperimentConfig, ExperimentKind};
pub use error::HarnessError;
pub use experiments::{run_experiment, ExperimentOutput, Outcome, Row};
