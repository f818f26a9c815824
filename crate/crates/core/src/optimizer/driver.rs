use std::time::Instant;

use ndarray_linalg::{Eigh, UPLO};
use serde::{Deserialize, Serialize};

use crate::environments::{build_env, Hamiltonian, WarmStart};
use crate::numerics::{dagger, Mat, C64};
use crate::umps::{canonicalize, MpsTensor, UniformMps};

use super::expand::expand_bond;
use super::measures::truncation_error;
use super::step::{parallel_update, sequential_update, StepInput};
use super::{Algorithm, ConvergenceReport, OptimizerError, Result, RunOptions, Trigger};

/// Driver position needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumePoint {
    /// Iterations completed.
    pub iteration: usize,
    pub eps_prec: f64,
    pub schedule_pos: usize,
    /// Seconds spent before the resume.
    pub elapsed: f64,
    /// Gradient norm of the last completed iteration.
    pub last_grad: f64,
    /// The last iteration converged with schedule steps left; the next
    /// step expands regardless of its trigger.
    #[serde(default)]
    pub expand_next: bool,
    #[serde(skip)]
    pub warm: Option<WarmStart>,
}

impl Default for ResumePoint {
    fn default() -> Self {
        Self {
            iteration: 0,
            eps_prec: 1.0,
            schedule_pos: 0,
            elapsed: 0.0,
            last_grad: f64::INFINITY,
            expand_next: false,
            warm: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// The converged state, or the lowest-gradient state at the final bond
    /// dimension when the iteration limit was hit.
    pub state: UniformMps,
    pub trajectory: Vec<ConvergenceReport>,
    pub converged: bool,
    /// Stopped by the observer before convergence.
    pub interrupted: bool,
    pub warnings: Vec<String>,
    pub resume: ResumePoint,
}

/// Iterates the fixed-point map with bond schedule, stagnation guard and
/// telemetry.
pub struct Driver<'h> {
    ham: &'h Hamiltonian,
    opts: RunOptions,
    state: UniformMps,
    point: ResumePoint,
    trajectory: Vec<ConvergenceReport>,
    started: Instant,
    best: Option<(f64, UniformMps)>,
    warnings: Vec<String>,
    converged: bool,
    last_stagnation: usize,
}

impl<'h> Driver<'h> {
    pub fn new(ham: &'h Hamiltonian, state: UniformMps, opts: RunOptions) -> Result<Self> {
        Self::resume(ham, state, opts, ResumePoint::default())
    }

    pub fn resume(
        ham: &'h Hamiltonian,
        state: UniformMps,
        opts: RunOptions,
        point: ResumePoint,
    ) -> Result<Self> {
        opts.tol.validate()?;
        opts.schedule.validate()?;
        if opts.algorithm == Algorithm::SingleSite && state.cell_size() != 1 {
            return Err(OptimizerError::InvalidInput(format!(
                "single-site algorithm on a {}-site cell",
                state.cell_size()
            )));
        }
        if ham.phys_dim() != state.phys_dim() {
            return Err(OptimizerError::InvalidInput(format!(
                "Hamiltonian acts on d = {}, state has d = {}",
                ham.phys_dim(),
                state.phys_dim()
            )));
        }
        Ok(Self {
            ham,
            opts,
            state,
            last_stagnation: point.iteration,
            point,
            trajectory: Vec::new(),
            started: Instant::now(),
            best: None,
            warnings: Vec::new(),
            converged: false,
        })
    }

    pub fn state(&self) -> &UniformMps {
        &self.state
    }

    pub fn trajectory(&self) -> &[ConvergenceReport] {
        &self.trajectory
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn resume_point(&self) -> ResumePoint {
        ResumePoint {
            elapsed: self.elapsed(),
            ..self.point.clone()
        }
    }

    fn elapsed(&self) -> f64 {
        self.point.elapsed + self.started.elapsed().as_secs_f64()
    }

    fn warn(&mut self, report: &mut ConvergenceReport, msg: String) {
        report.warnings.push(msg.clone());
        self.warnings.push(msg);
    }

    fn schedule_fires(&self) -> bool {
        let Some(step) = self.opts.schedule.steps.get(self.point.schedule_pos) else {
            return false;
        };
        self.point.expand_next
            || match step.trigger {
                Trigger::Gradient(t) => self.point.last_grad <= t,
                Trigger::Iteration(i) => self.point.iteration >= i,
            }
    }

    /// Performs one iteration and returns its report.
    pub fn step(&mut self) -> Result<ConvergenceReport> {
        let input = StepInput {
            ham: self.ham,
            tol: &self.opts.tol,
            eps_prec: self.point.eps_prec,
            iteration: self.point.iteration,
        };
        let env_tol = self.opts.tol.env_tol(self.point.eps_prec);
        let mut env = build_env(self.ham, &self.state, env_tol, self.point.warm.as_ref())?;
        let mut notes = Vec::new();
        let mut sums = 0;

        // Bond dimension adjustment before the update.
        while self.schedule_fires() {
            let target = self.opts.schedule.steps[self.point.schedule_pos].target;
            let dim = self.state.bond_dim();
            if dim >= target {
                self.point.schedule_pos += 1;
                continue;
            }
            let rank = (self.state.phys_dim() - 1) * dim;
            let exp = expand_bond(
                &self.state,
                &env,
                (target - dim).min(rank),
                self.opts.multiplet_guard,
            )?;
            if exp.clipped {
                notes.push(format!(
                    "bond expansion towards {target} clipped to +{} at D = {dim}",
                    exp.added
                ));
            }
            if exp.added == 0 {
                self.point.schedule_pos += 1;
                break;
            }
            sums += env.geometric_sums;
            let warm = env.warm.embed(dim + exp.added);
            self.state = exp.state;
            self.best = None;
            env = build_env(self.ham, &self.state, env_tol, Some(&warm))?;
            if self.state.bond_dim() >= target {
                self.point.schedule_pos += 1;
            }
            break;
        }
        self.point.expand_next = false;

        let truncation = if self.opts.record_truncation {
            Some(truncation_error(&self.state, &env, 0, self.opts.tol.eig_tol(self.point.eps_prec))?)
        } else {
            None
        };
        let out = match self.opts.algorithm {
            Algorithm::Sequential => sequential_update(&self.state, env, &input)?,
            Algorithm::SingleSite | Algorithm::Parallel => parallel_update(&self.state, env, &input)?,
        };
        let mut report = out.report;
        report.geometric_sums += sums;
        report.truncation_error = truncation;
        report.wall_time = self.elapsed();
        for n in notes {
            self.warn(&mut report, n);
        }

        if self.best.as_ref().map_or(true, |(g, _)| report.grad_norm < *g) {
            self.best = Some((report.grad_norm, self.state.clone()));
        }
        self.state = out.state;
        self.point.warm = Some(out.warm);
        self.point.eps_prec = report.eps_prec;
        self.point.last_grad = report.grad_norm;
        self.point.iteration += 1;

        let target = self.opts.tol.target;
        if report.eps_prec <= target && report.grad_norm <= target {
            if self.point.schedule_pos < self.opts.schedule.steps.len() {
                self.point.expand_next = true;
            } else {
                self.converged = true;
            }
        }
        self.check_stagnation(&mut report);
        self.trajectory.push(report.clone());
        Ok(report)
    }

    fn check_stagnation(&mut self, report: &mut ConvergenceReport) {
        let w = self.opts.stagnation_window;
        let len = self.trajectory.len() + 1;
        if w == 0 || len <= w || self.point.iteration < self.last_stagnation + w {
            return;
        }
        let grads = self
            .trajectory
            .iter()
            .map(|r| r.grad_norm)
            .chain(std::iter::once(report.grad_norm))
            .collect::<Vec<_>>();
        let before = grads[..len - w].iter().cloned().fold(f64::INFINITY, f64::min);
        let recent = grads[len - w..].iter().cloned().fold(f64::INFINITY, f64::min);
        if recent > 0.99 * before {
            self.last_stagnation = self.point.iteration;
            let msg = format!(
                "gradient norm stagnated at {recent:.3e} over the last {w} iterations"
            );
            self.warn(report, msg);
        }
    }

    /// Iterates until convergence, the iteration limit, or until `observer`
    /// returns `false`.
    pub fn run(
        mut self,
        observer: &mut dyn FnMut(&Driver, &ConvergenceReport) -> bool,
    ) -> Result<RunOutcome> {
        let mut interrupted = false;
        while !self.converged && self.point.iteration < self.opts.tol.max_iterations {
            let report = self.step()?;
            if !observer(&self, &report) {
                interrupted = !self.converged;
                break;
            }
        }
        let resume = self.resume_point();
        let state = if self.converged || interrupted {
            self.state
        } else {
            match self.best {
                Some((g, s)) if g < self.point.last_grad && s.bond_dim() == self.state.bond_dim() => s,
                _ => self.state,
            }
        };
        Ok(RunOutcome {
            state,
            trajectory: self.trajectory,
            converged: self.converged,
            interrupted,
            warnings: self.warnings,
            resume,
        })
    }
}

/// Runs the configured algorithm to convergence without telemetry.
pub fn vumps_run(ham: &Hamiltonian, state: UniformMps, opts: RunOptions) -> Result<RunOutcome> {
    Driver::new(ham, state, opts)?.run(&mut |_, _| true)
}

/// Applies `exp(−strength · field)` to every site of the state and
/// restores the canonical form. `field` must be Hermitian.
pub fn bias_state(state: &UniformMps, field: &Mat, strength: f64) -> Result<UniformMps> {
    let d = state.phys_dim();
    if field.dim() != (d, d) {
        return Err(OptimizerError::InvalidInput(format!(
            "bias field is {:?}, expected {d}x{d}",
            field.dim()
        )));
    }
    let sym = (field + &dagger(field)).mapv(|z| z * 0.5);
    let (w, u) = sym
        .eigh(UPLO::Lower)
        .map_err(|_| OptimizerError::InvalidInput("bias field eigendecomposition failed".into()))?;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        let f = C64::new((-strength * w[j]).exp(), 0.0);
        col.mapv_inplace(|z| z * f);
    }
    let gate = scaled.dot(&dagger(&u));
    let tensors: Vec<MpsTensor> = state
        .al
        .iter()
        .map(|a| {
            let mats = (0..d)
                .map(|s| {
                    let mut m = Mat::zeros(a.mats[0].dim());
                    for t in 0..d {
                        m.scaled_add(gate[[s, t]], &a.mats[t]);
                    }
                    m
                })
                .collect();
            MpsTensor::new(mats)
        })
        .collect();
    Ok(canonicalize(&tensors)?)
}
