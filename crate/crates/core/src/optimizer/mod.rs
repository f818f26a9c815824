//! Fixed-point iteration for the variational ground state.
//!
//! One iteration builds the environment of the current state, solves the
//! effective eigenproblems for every center site and bond, and replaces the
//! isometries by the best ones compatible with the new centers. Three
//! drivers share this skeleton: the single-site iteration, the parallel cell
//! update (one environment, all eigenproblems independent) and the
//! sequential cell sweep (one environment per site).
//!
//! Error measures:
//! - `eps_prec`: largest `‖Ã_C − Ã_L C̃‖`, `‖Ã_C − C̃ Ã_R‖` over the cell.
//! - `grad_norm`: norm of the tangent-space gradient, evaluated through the
//!   null space of `A_L` so that it stays accurate near convergence.
//!
//! A run is converged once both fall below the target.

mod driver;
mod expand;
mod measures;
mod step;

#[cfg(test)]
mod tests;

pub use driver::{bias_state, vumps_run, Driver, ResumePoint, RunOutcome};
pub use expand::{expand_bond, guard_multiplets, Expansion, MULTIPLET_GAP};
pub use measures::{
    fixed_point_residuals, gradient, gradient_direct, truncation_error, two_site_variance,
    two_site_variance_local, FixedPointResiduals, Gradient,
};
pub use step::{
    vumps_multisite_parallel, vumps_multisite_sequential, vumps_step, StepInput, StepOutput,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::EnvError;
use crate::numerics::NumericsError;
use crate::umps::{FactorizeMode, UmpsError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OptimizerError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Umps(#[from] UmpsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("iteration {iteration}: {problem} eigensolver failed at index {index}: {source}")]
    Eigensolver {
        iteration: usize,
        problem: &'static str,
        index: usize,
        source: NumericsError,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, OptimizerError>;

/// How the environment tolerance follows the current precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvTolPolicy {
    /// `factor · eps_prec`, never below `1e-13`.
    Relative(f64),
    Fixed(f64),
}

/// Smallest environment tolerance the deflated GMRES can reliably reach.
pub const ENV_TOL_FLOOR: f64 = 1e-13;
/// Smallest eigensolver tolerance; relative to the operator norm.
pub const EIG_TOL_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Convergence target for both `eps_prec` and the gradient norm.
    pub target: f64,
    /// Eigensolver tolerance as a fraction of `eps_prec`.
    pub eig_factor: f64,
    pub env_policy: EnvTolPolicy,
    pub max_iterations: usize,
    /// Matrix-vector products allowed per effective eigenproblem.
    pub eig_max_matvecs: usize,
    pub factorize: FactorizeMode,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            target: 1e-10,
            eig_factor: 1e-2,
            env_policy: EnvTolPolicy::Relative(1e-2),
            max_iterations: 500,
            eig_max_matvecs: 4000,
            factorize: FactorizeMode::Auto,
        }
    }
}

impl Tolerances {
    pub fn with_target(target: f64) -> Self {
        Self {
            target,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target > 0.0 && self.target < 1.0) {
            return Err(OptimizerError::InvalidInput(format!(
                "target {} outside (0, 1)",
                self.target
            )));
        }
        if !(self.eig_factor > 0.0 && self.eig_factor <= 1.0) {
            return Err(OptimizerError::InvalidInput(format!(
                "eigensolver factor {} outside (0, 1]",
                self.eig_factor
            )));
        }
        let env = match self.env_policy {
            EnvTolPolicy::Relative(f) => f > 0.0 && f <= 1.0,
            EnvTolPolicy::Fixed(t) => t > 0.0 && t < 1.0,
        };
        if !env {
            return Err(OptimizerError::InvalidInput("environment tolerance out of range".into()));
        }
        if self.max_iterations == 0 || self.eig_max_matvecs == 0 {
            return Err(OptimizerError::InvalidInput("iteration limits must be positive".into()));
        }
        Ok(())
    }

    pub fn eig_tol(&self, eps_prec: f64) -> f64 {
        (eps_prec * self.eig_factor).max(EIG_TOL_FLOOR)
    }

    /// Never looser than `eps_prec` itself.
    pub fn env_tol(&self, eps_prec: f64) -> f64 {
        match self.env_policy {
            EnvTolPolicy::Relative(f) => (eps_prec * f).min(eps_prec).max(ENV_TOL_FLOOR),
            EnvTolPolicy::Fixed(t) => t.min(eps_prec).max(ENV_TOL_FLOOR),
        }
    }
}

/// Telemetry of one iteration. Energies and gradients describe the input
/// state; `eps_*` and the Schmidt values describe the output state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub eps_prec: f64,
    pub eps_left: Vec<f64>,
    pub eps_right: Vec<f64>,
    /// Lowest eigenvalues of the shifted site maps.
    pub e_ac: Vec<f64>,
    /// Lowest eigenvalues of the shifted bond maps.
    pub e_c: Vec<f64>,
    pub schmidt: Vec<f64>,
    pub bond_dim: usize,
    /// Seconds since the run started.
    pub wall_time: f64,
    pub geometric_sums: usize,
    pub matvecs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// When a bond-schedule step fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Gradient norm of the last iteration at or below the threshold.
    Gradient(f64),
    /// At the start of the given iteration.
    Iteration(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondStep {
    pub trigger: Trigger,
    pub target: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BondSchedule {
    pub steps: Vec<BondStep>,
}

impl BondSchedule {
    pub fn new(steps: Vec<BondStep>) -> Result<Self> {
        let s = Self { steps };
        s.validate()?;
        Ok(s)
    }

    /// Targets must increase strictly.
    pub fn validate(&self) -> Result<()> {
        for w in self.steps.windows(2) {
            if w[1].target <= w[0].target {
                return Err(OptimizerError::InvalidInput(format!(
                    "bond schedule targets {} then {} are not increasing",
                    w[0].target, w[1].target
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Single-site cells only.
    SingleSite,
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub tol: Tolerances,
    pub schedule: BondSchedule,
    pub algorithm: Algorithm,
    /// Shrink expansions that would split a near-degenerate multiplet.
    pub multiplet_guard: bool,
    /// Iterations without a 1% gradient improvement before a warning.
    pub stagnation_window: usize,
    /// Compute the two-site truncation error at bond 0 every iteration.
    pub record_truncation: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            schedule: BondSchedule::default(),
            algorithm: Algorithm::SingleSite,
            multiplet_guard: false,
            stagnation_window: 50,
            record_truncation: false,
        }
    }
}
