use rayon::prelude::*;

use crate::environments::{build_env, Environment, Hamiltonian, WarmStart};
use crate::numerics::{
    eigsh_extremal, mat_to_vec, svd, vec_to_mat, EigOptions, EigPair, LinearMap, Mat, Vector,
};
use crate::umps::{min_ac_factorize, MpsTensor, UniformMps};

use super::measures::gradient;
use super::{ConvergenceReport, OptimizerError, Result, Tolerances};

/// Everything an iteration needs besides the state.
#[derive(Clone, Copy)]
pub struct StepInput<'a> {
    pub ham: &'a Hamiltonian,
    pub tol: &'a Tolerances,
    /// Precision reached by the previous iteration; 1 before the first.
    pub eps_prec: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: UniformMps,
    pub report: ConvergenceReport,
    /// Cell-sum solutions of the last environment built.
    pub warm: WarmStart,
}

struct Solved<T> {
    value: T,
    eigenvalue: f64,
    matvecs: usize,
}

/// Rotates `v` so that its overlap with `reference` is real and positive.
fn align_phase(v: &mut Vector, reference: &Vector) {
    let overlap: crate::numerics::C64 =
        reference.iter().zip(v.iter()).map(|(r, x)| r.conj() * x).sum();
    if overlap.norm() > 0.0 {
        let phase = overlap.conj() / overlap.norm();
        v.mapv_inplace(|z| z * phase);
    }
}

fn ground_state(
    map: &dyn LinearMap,
    guess: &Vector,
    tol: f64,
    max_matvecs: usize,
) -> std::result::Result<EigPair, crate::numerics::NumericsError> {
    let opts = EigOptions {
        max_matvecs,
        ..EigOptions::default()
    };
    let mut pair = eigsh_extremal(map, guess, tol, &opts)?;
    align_phase(&mut pair.vector, guess);
    Ok(pair)
}

fn solve_site(
    env: &Environment,
    state: &UniformMps,
    k: usize,
    input: &StepInput,
) -> Result<Solved<MpsTensor>> {
    let guess = state.ac[k].to_vector();
    let pair = ground_state(
        &env.hac_map(k),
        &guess,
        input.tol.eig_tol(input.eps_prec),
        input.tol.eig_max_matvecs,
    )
    .map_err(|source| OptimizerError::Eigensolver {
        iteration: input.iteration,
        problem: "site",
        index: k,
        source,
    })?;
    let (d, dim) = (state.phys_dim(), state.bond_dim());
    Ok(Solved {
        value: MpsTensor::from_vector(&pair.vector, d, dim, dim),
        eigenvalue: pair.value,
        matvecs: pair.matvecs,
    })
}

fn solve_bond(
    env: &Environment,
    state: &UniformMps,
    k: usize,
    input: &StepInput,
) -> Result<Solved<Mat>> {
    let guess = mat_to_vec(&state.c[k]);
    let pair = ground_state(
        &env.hc_map(k),
        &guess,
        input.tol.eig_tol(input.eps_prec),
        input.tol.eig_max_matvecs,
    )
    .map_err(|source| OptimizerError::Eigensolver {
        iteration: input.iteration,
        problem: "bond",
        index: k,
        source,
    })?;
    let dim = state.bond_dim();
    Ok(Solved {
        value: vec_to_mat(&pair.vector, dim, dim),
        eigenvalue: pair.value,
        matvecs: pair.matvecs,
    })
}

fn schmidt_values(c: &Mat) -> Result<Vec<f64>> {
    Ok(svd(c)?.s.to_vec())
}

fn empty_report(input: &StepInput, n: usize, dim: usize) -> ConvergenceReport {
    ConvergenceReport {
        iteration: input.iteration,
        energy: 0.0,
        grad_norm: 0.0,
        eps_prec: 0.0,
        eps_left: vec![0.0; n],
        eps_right: vec![0.0; n],
        e_ac: vec![0.0; n],
        e_c: vec![0.0; n],
        schmidt: Vec::new(),
        bond_dim: dim,
        wall_time: 0.0,
        geometric_sums: 0,
        matvecs: 0,
        truncation_error: None,
        warnings: Vec::new(),
    }
}

enum Task {
    Site(Solved<MpsTensor>),
    Bond(Solved<Mat>),
}

/// One cell update from a single environment: all `2N` eigenproblems are
/// solved independently, then all isometries are rebuilt at once.
pub(crate) fn parallel_update(
    state: &UniformMps,
    env: Environment,
    input: &StepInput,
) -> Result<StepOutput> {
    let n = state.cell_size();
    let grad = gradient(state, &env)?;
    let solved: Vec<Task> = (0..2 * n)
        .into_par_iter()
        .map(|i| {
            if i < n {
                solve_site(&env, state, i, input).map(Task::Site)
            } else {
                solve_bond(&env, state, i - n, input).map(Task::Bond)
            }
        })
        .collect::<Result<_>>()?;
    let mut report = empty_report(input, n, state.bond_dim());
    let mut ac = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for (i, task) in solved.into_iter().enumerate() {
        match task {
            Task::Site(s) => {
                report.e_ac[i] = s.eigenvalue;
                report.matvecs += s.matvecs;
                ac.push(s.value);
            }
            Task::Bond(s) => {
                report.e_c[i - n] = s.eigenvalue;
                report.matvecs += s.matvecs;
                c.push(s.value);
            }
        }
    }
    let factors = (0..n)
        .into_par_iter()
        .map(|k| min_ac_factorize(&ac[k], &c[(k + n - 1) % n], &c[k], input.tol.factorize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut al = Vec::with_capacity(n);
    let mut ar = Vec::with_capacity(n);
    for (k, f) in factors.into_iter().enumerate() {
        report.eps_left[k] = f.eps_left;
        report.eps_right[k] = f.eps_right;
        al.push(f.al);
        ar.push(f.ar);
    }
    report.energy = env.energy;
    report.grad_norm = grad.norm;
    report.geometric_sums = env.geometric_sums;
    report.eps_prec = report
        .eps_left
        .iter()
        .chain(&report.eps_right)
        .fold(0.0, |a, &b| a.max(b));
    report.schmidt = schmidt_values(&c[0])?;
    Ok(StepOutput {
        state: UniformMps::new(al, ar, c, ac)?,
        report,
        warm: env.warm,
    })
}

/// One sweep through the cell, rebuilding the environment before every
/// site so that each update sees all previous ones. `env` must belong to
/// `state`.
pub(crate) fn sequential_update(
    state: &UniformMps,
    env: Environment,
    input: &StepInput,
) -> Result<StepOutput> {
    let n = state.cell_size();
    let mut report = empty_report(input, n, state.bond_dim());
    let mut cur = state.clone();
    let mut env = env;
    let mut grad_sq = 0.0;
    report.energy = env.energy;
    for site in 0..n {
        if site > 0 {
            let tol = input.tol.env_tol(input.eps_prec);
            env = build_env(input.ham, &cur, tol, Some(&env.warm))?;
        }
        report.geometric_sums += env.geometric_sums;
        grad_sq += gradient(&cur, &env)?.norms[site].powi(2);
        let prev = (site + n - 1) % n;
        let ac = solve_site(&env, &cur, site, input)?;
        let c_right = solve_bond(&env, &cur, site, input)?;
        let c_left = if prev == site {
            None
        } else {
            Some(solve_bond(&env, &cur, prev, input)?)
        };
        let cl = c_left.as_ref().map_or(&c_right.value, |s| &s.value);
        let f = min_ac_factorize(&ac.value, cl, &c_right.value, input.tol.factorize)?;
        report.e_ac[site] = ac.eigenvalue;
        report.e_c[site] = c_right.eigenvalue;
        report.matvecs += ac.matvecs + c_right.matvecs;
        report.eps_left[site] = f.eps_left;
        report.eps_right[site] = f.eps_right;

        let mut al = cur.al.clone();
        let mut ar = cur.ar.clone();
        let mut c = cur.c.clone();
        let mut acs = cur.ac.clone();
        al[site] = f.al;
        ar[site] = f.ar;
        if let Some(s) = c_left {
            report.matvecs += s.matvecs;
            c[prev] = s.value;
        }
        c[site] = c_right.value;
        acs[site] = ac.value;
        cur = UniformMps::new(al, ar, c, acs)?;
    }
    report.grad_norm = grad_sq.sqrt();
    report.eps_prec = report
        .eps_left
        .iter()
        .chain(&report.eps_right)
        .fold(0.0, |a, &b| a.max(b));
    report.schmidt = schmidt_values(&cur.c[0])?;
    Ok(StepOutput {
        state: cur,
        report,
        warm: env.warm,
    })
}

fn build_for(state: &UniformMps, input: &StepInput, warm: Option<&WarmStart>) -> Result<Environment> {
    input.tol.validate()?;
    let tol = input.tol.env_tol(input.eps_prec);
    Ok(build_env(input.ham, state, tol, warm)?)
}

/// Single-site iteration; the cell must hold one site.
pub fn vumps_step(
    state: &UniformMps,
    input: &StepInput,
    warm: Option<&WarmStart>,
) -> Result<StepOutput> {
    if state.cell_size() != 1 {
        return Err(OptimizerError::InvalidInput(format!(
            "single-site iteration on a {}-site cell",
            state.cell_size()
        )));
    }
    parallel_update(state, build_for(state, input, warm)?, input)
}

/// One parallel cell update.
pub fn vumps_multisite_parallel(
    state: &UniformMps,
    input: &StepInput,
    warm: Option<&WarmStart>,
) -> Result<StepOutput> {
    parallel_update(state, build_for(state, input, warm)?, input)
}

/// One sequential sweep through the cell.
pub fn vumps_multisite_sequential(
    state: &UniformMps,
    input: &StepInput,
    warm: Option<&WarmStart>,
) -> Result<StepOutput> {
    sequential_update(state, build_for(state, input, warm)?, input)
}
