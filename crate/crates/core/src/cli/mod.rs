//! Batch front end: run configurations, telemetry, checkpoints and
//! extrapolation of sweeps over the bond dimension.
//!
//! A run directory holds `trajectory.jsonl` (one [`ConvergenceReport`] per
//! line, append-only), `result.json` ([`RunResult`]), `state.bin` and
//! `checkpoint.bin`.
//!
//! Exit codes: 0 converged, 1 not converged, 2 invalid configuration or
//! input, 3 solver failure, 4 I/O failure.
//!
//! [`ConvergenceReport`]: crate::optimizer::ConvergenceReport

mod checkpoint;
mod config;
mod extrapolate;
mod run;

use std::path::Path;

use thiserror::Error;

use crate::models::ModelError;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::{observable, Measurements, ModelConfig, Overrides, Prepared, RunConfig};
pub use extrapolate::{
    extrapolate, fit_linear, fit_power_law, load_result, load_results, Extrapolation, LinearFit,
    PowerLawFit, SweepPoint,
};
pub use run::{
    resume, run, run_prepared, ReferenceInfo, RunResult, RunStatus, CHECKPOINT, RESULT, STATE,
    TRAJECTORY,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solver: {0}")]
    Solver(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("need at least {needed} results with distinct bond dimensions, got {got}")]
    Insufficient { needed: usize, got: usize },
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Model(_) | CliError::Insufficient { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
