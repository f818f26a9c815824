use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environments::{build_env, Backend};
use crate::models::{Param, Provenance};
use crate::optimizer::{
    gradient, truncation_error, two_site_variance, Driver, ResumePoint, RunOutcome,
};
use crate::umps::{expval_local, random_umps, schmidt_data, write_state, UniformMps};

use super::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use super::{CliError, Overrides, Prepared, Result, RunConfig};

pub const TRAJECTORY: &str = "trajectory.jsonl";
pub const RESULT: &str = "result.json";
pub const STATE: &str = "state.bin";
pub const CHECKPOINT: &str = "checkpoint.bin";

/// Tolerance of the final environment and two-site eigenproblem.
const MEASURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    NotConverged,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Converged => 0,
            RunStatus::NotConverged => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub value: f64,
    pub provenance: Provenance,
    pub source: String,
}

/// Final measurements of a run, written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: String,
    pub params: BTreeMap<String, Param>,
    pub backend: Backend,
    pub cell: usize,
    pub bond_dim: usize,
    pub converged: bool,
    /// Energy per site.
    pub energy: f64,
    pub grad_norm: f64,
    pub eps_prec: f64,
    /// Largest discarded two-site weight over the bonds of the cell.
    pub truncation_error: f64,
    /// Largest doubly projected two-site variance `‖B₂‖²` over the bonds.
    pub two_site_variance: f64,
    pub iterations: usize,
    /// Seconds, including time before any resume.
    pub wall_time: f64,
    /// Schmidt values per bond of the cell, descending.
    pub schmidt: Vec<Vec<f64>>,
    pub entropy: Vec<f64>,
    /// Expectation value per site of the cell.
    pub observables: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceInfo>,
    /// `energy − reference`; present only with a reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn solver(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

/// Validates, creates the output directory and runs from a random state.
pub fn run(config: &RunConfig) -> Result<(RunResult, RunStatus)> {
    let prepared = config.prepare()?;
    let dir = config.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    run_prepared(&prepared, &dir)
}

/// Runs an already validated configuration into `dir`.
pub fn run_prepared(p: &Prepared, dir: &Path) -> Result<(RunResult, RunStatus)> {
    let d = p.spec.phys_dim();
    let state = random_umps(d, p.config.bond_dim, p.cell, p.config.seed).map_err(solver)?;
    let path = dir.join(TRAJECTORY);
    let log = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    execute(p, dir, state, ResumePoint::default(), log, 0)
}

/// Continues the run stored in `checkpoint`. The outputs go next to the
/// checkpoint; `trajectory.jsonl` is cut back to the snapshot.
pub fn resume(checkpoint: &Path, overrides: &Overrides) -> Result<(RunResult, RunStatus)> {
    let ck = read_checkpoint(checkpoint)?;
    let dir = match checkpoint.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut config = ck.config;
    overrides.apply(&mut config);
    config.output = dir.clone();
    let prepared = config.prepare()?;
    let path = dir.join(TRAJECTORY);
    let log = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(false)
        .open(&path)
        .map_err(|e| CliError::io(&path, e))?;
    log.set_len(ck.trajectory_bytes)
        .map_err(|e| CliError::io(&path, e))?;
    execute(&prepared, &dir, ck.state, ck.point, log, ck.trajectory_bytes)
}

fn execute(
    p: &Prepared,
    dir: &Path,
    state: UniformMps,
    point: ResumePoint,
    mut log: File,
    mut log_bytes: u64,
) -> Result<(RunResult, RunStatus)> {
    use std::io::Seek;
    let log_path = dir.join(TRAJECTORY);
    log.seek(std::io::SeekFrom::Start(log_bytes))
        .map_err(|e| CliError::io(&log_path, e))?;
    let ck_path = dir.join(CHECKPOINT);
    let every = p.config.checkpoint_interval;
    let cadence = p.config.measure.schmidt_every;
    let limit = p.options.tol.max_iterations;
    let mut failure: Option<CliError> = None;

    let driver = Driver::resume(&p.ham, state, p.options.clone(), point).map_err(solver)?;
    let outcome = driver
        .run(&mut |drv, report| {
            let mut line = report.clone();
            if cadence == 0 || report.iteration % cadence != 0 {
                line.schmidt.clear();
            }
            let mut text = serde_json::to_string(&line).expect("report serializes");
            text.push('\n');
            if let Err(e) = log.write_all(text.as_bytes()).and_then(|_| log.flush()) {
                failure = Some(CliError::io(&log_path, e));
                return false;
            }
            log_bytes += text.len() as u64;
            let point = drv.resume_point();
            let due = (every > 0 && point.iteration % every == 0)
                || drv.converged()
                || point.iteration >= limit;
            if due {
                let ck = Checkpoint {
                    config: p.config.clone(),
                    point,
                    trajectory_bytes: log_bytes,
                    state: drv.state().clone(),
                };
                if let Err(e) = write_checkpoint(&ck_path, &ck) {
                    failure = Some(e);
                    return false;
                }
            }
            true
        })
        .map_err(solver)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let result = measure(p, &outcome)?;
    let state_path = dir.join(STATE);
    write_state(&state_path, &outcome.state).map_err(|e| CliError::io(&state_path, e))?;
    let result_path = dir.join(RESULT);
    let json = serde_json::to_string_pretty(&result).expect("result serializes");
    std::fs::write(&result_path, json).map_err(|e| CliError::io(&result_path, e))?;
    let status = if outcome.converged {
        RunStatus::Converged
    } else {
        RunStatus::NotConverged
    };
    Ok((result, status))
}

fn measure(p: &Prepared, outcome: &RunOutcome) -> Result<RunResult> {
    let state = &outcome.state;
    let n = state.cell_size();
    let env = build_env(&p.ham, state, MEASURE_TOL, None).map_err(solver)?;
    let grad = gradient(state, &env).map_err(solver)?;
    let eps_prec = state
        .center_errors()
        .into_iter()
        .map(|(l, r)| l.max(r))
        .fold(0.0, f64::max);
    let mut trunc: f64 = 0.0;
    let mut variance: f64 = 0.0;
    let mut schmidt = Vec::with_capacity(n);
    let mut entropy = Vec::with_capacity(n);
    for bond in 0..n {
        trunc = trunc.max(truncation_error(state, &env, bond, MEASURE_TOL).map_err(solver)?);
        variance = variance.max(two_site_variance(state, &env, bond).map_err(solver)?);
        let data = schmidt_data(state, bond).map_err(solver)?;
        schmidt.push(data.values);
        entropy.push(data.entropy);
    }
    let mut observables = BTreeMap::new();
    for (name, op) in &p.observables {
        let values = (0..n)
            .map(|k| expval_local(state, op, k).map(|z| z.re))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(solver)?;
        observables.insert(name.clone(), values);
    }
    let reference = p.spec.exact_energy().ok().map(|r| ReferenceInfo {
        value: r.value,
        provenance: r.provenance,
        source: r.source,
    });
    let delta_e = reference.as_ref().map(|r| env.energy - r.value);
    let last = outcome.trajectory.last();
    Ok(RunResult {
        model: p.config.model.name.clone(),
        params: p.config.model.params.clone(),
        backend: p.ham.backend(),
        cell: n,
        bond_dim: state.bond_dim(),
        converged: outcome.converged,
        energy: env.energy,
        grad_norm: grad.norm,
        eps_prec,
        truncation_error: trunc,
        two_site_variance: variance,
        iterations: outcome.resume.iteration,
        wall_time: last.map_or(outcome.resume.elapsed, |r| r.wall_time.max(outcome.resume.elapsed)),
        schmidt,
        entropy,
        observables,
        reference,
        delta_e,
        warnings: outcome.warnings.clone(),
    })
}
