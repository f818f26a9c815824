use super::*;
use crate::environments::{build_env, Hamiltonian};
use crate::models::{build_tfi, build_xxz, build_xxz_rotated, pauli, tfi_energy, xxz_half_energy};
use crate::numerics::{frobenius, identity, Mat, C64};
use crate::umps::{expval_local, random_umps, schmidt_data, MpsTensor, UniformMps};

fn tfi(h: f64) -> Hamiltonian {
    Hamiltonian::Nn(build_tfi(h).unwrap().0)
}

fn tfi_mpo(h: f64) -> Hamiltonian {
    Hamiltonian::Mpo(build_tfi(h).unwrap().1)
}

fn opts(target: f64, max_iterations: usize) -> RunOptions {
    RunOptions {
        tol: Tolerances {
            max_iterations,
            ..Tolerances::with_target(target)
        },
        ..RunOptions::default()
    }
}

fn energy(ham: &Hamiltonian, state: &UniformMps) -> f64 {
    build_env(ham, state, 1e-13, None).unwrap().energy
}

#[test]
fn tfi_converges_to_the_quadrature_energy() {
    let ham = tfi(0.48);
    let state = random_umps(2, 12, 1, 3).unwrap();
    let out = vumps_run(&ham, state, opts(1e-10, 200)).unwrap();
    assert!(out.converged, "{:?}", out.trajectory.last());
    let e = energy(&ham, &out.state);
    assert!((e - tfi_energy(0.48).value).abs() < 1e-8, "{e}");
    let last = out.trajectory.last().unwrap();
    assert!(last.grad_norm <= 1e-10 && last.eps_prec <= 1e-10);
}

/// Product state with every site in `|v⟩`.
fn product_state(v: [f64; 2]) -> UniformMps {
    let mats = v.iter().map(|&x| Mat::from_elem((1, 1), C64::new(x, 0.0))).collect();
    crate::umps::canonicalize(&[MpsTensor::new(mats)]).unwrap()
}

#[test]
fn classical_ising_converges_immediately() {
    let ham = tfi(0.0);
    let s = 0.5f64.sqrt();
    let out = vumps_run(&ham, product_state([0.8, 0.6]), opts(1e-12, 10)).unwrap();
    assert!(out.converged);
    assert!(out.trajectory.len() <= 3);
    assert!((energy(&ham, &out.state) + 1.0).abs() < 1e-12);
    // The exact ground state is a fixed point: zero gradient on the first report.
    let fixed = product_state([s, s]);
    let g = gradient(&fixed, &build_env(&ham, &fixed, 1e-13, None).unwrap()).unwrap();
    assert!(g.norm < 1e-12);
}

#[test]
fn mean_field_tfi_matches_the_product_state_optimum() {
    // D = 1: e(θ) = −cos²(2θ)... minimised at sin 2θ = h/2 for h < 2,
    // giving e = −1 − h²/4.
    let h = 0.48;
    let ham = tfi(h);
    let out = vumps_run(&ham, product_state([0.9, 0.3]), opts(1e-11, 200)).unwrap();
    assert!(out.converged);
    assert!((energy(&ham, &out.state) + 1.0 + h * h / 4.0).abs() < 1e-10);
}

#[test]
fn fixed_point_is_idempotent() {
    let ham = tfi(0.7);
    let out = vumps_run(&ham, random_umps(2, 6, 1, 9).unwrap(), opts(1e-10, 300)).unwrap();
    assert!(out.converged);
    let tol = Tolerances::with_target(1e-10);
    let input = StepInput {
        ham: &ham,
        tol: &tol,
        eps_prec: 1e-10,
        iteration: 0,
    };
    let again = vumps_step(&out.state, &input, None).unwrap();
    assert!(again.report.grad_norm < 1e-9);
    assert!(crate::umps::fidelity(&out.state.al, &again.state.al).unwrap() > 1.0 - 1e-12);
}

#[test]
fn gradient_routes_agree() {
    for (ham, seed) in [(tfi(0.9), 1), (tfi_mpo(0.3), 2)] {
        let state = random_umps(2, 5, 1, seed).unwrap();
        let env = build_env(&ham, &state, 1e-13, None).unwrap();
        let null = gradient(&state, &env).unwrap();
        let direct = gradient_direct(&state, &env).unwrap();
        assert!((null.norm - direct).abs() < 1e-8 * null.norm.max(1.0));
    }
}

#[test]
fn gradient_norm_is_the_pythagorean_difference() {
    // With A'_C = H_AC(A_L C), C' = H_C(C) and B = A'_C − A_L C':
    // ‖B‖² = ‖A'_C‖² − ‖C'‖², as A_L C' is the projection of A'_C.
    let ham = tfi(0.6);
    let state = random_umps(2, 6, 1, 4).unwrap();
    let env = build_env(&ham, &state, 1e-13, None).unwrap();
    let ac = state.al[0].mul_right(&state.c[0]);
    let ac_p = env.apply_hac(0, &ac).unwrap();
    let c_p = env.apply_hc(0, &state.c[0]).unwrap();
    let b = gradient(&state, &env).unwrap().norm;
    let lhs = ac_p.norm().powi(2) - frobenius(&c_p).powi(2);
    assert!((b * b - lhs).abs() < 1e-10 * ac_p.norm().powi(2).max(1.0));
}

#[test]
fn sequential_single_site_cell_is_the_plain_iteration() {
    let ham = tfi(0.8);
    let state = random_umps(2, 6, 1, 11).unwrap();
    let tol = Tolerances::default();
    let input = StepInput {
        ham: &ham,
        tol: &tol,
        eps_prec: 1e-3,
        iteration: 0,
    };
    let a = vumps_step(&state, &input, None).unwrap();
    let b = vumps_multisite_sequential(&state, &input, None).unwrap();
    let c = vumps_multisite_parallel(&state, &input, None).unwrap();
    for other in [&b, &c] {
        assert!((a.report.grad_norm - other.report.grad_norm).abs() < 1e-12);
        assert!(frobenius(&(&a.state.c[0] - &other.state.c[0])) < 1e-10);
    }
}

#[test]
fn single_site_step_rejects_cells() {
    let ham = tfi(0.8);
    let tol = Tolerances::default();
    let input = StepInput {
        ham: &ham,
        tol: &tol,
        eps_prec: 1.0,
        iteration: 0,
    };
    let state = random_umps(2, 4, 2, 1).unwrap();
    assert!(matches!(vumps_step(&state, &input, None), Err(OptimizerError::InvalidInput(_))));
    assert!(Driver::new(&ham, state, RunOptions::default()).is_err());
}

#[test]
fn two_site_variance_is_local_for_nearest_neighbours() {
    let term = build_xxz(1, 1.0).unwrap();
    let ham = Hamiltonian::Nn(term.clone());
    for (dim, n, seed) in [(4, 1, 5), (5, 2, 6)] {
        let state = random_umps(2, dim, n, seed).unwrap();
        let env = build_env(&ham, &state, 1e-13, None).unwrap();
        for bond in 0..n {
            let full = two_site_variance(&state, &env, bond).unwrap();
            let local = two_site_variance_local(&state, &term, bond).unwrap();
            assert!((full - local).abs() < 1e-10 * full.max(1.0), "{full} vs {local}");
        }
    }
}

#[test]
fn exact_product_ground_state_has_no_error() {
    let ham = tfi(0.0);
    let state = product_state([1.0, 1.0]);
    let env = build_env(&ham, &state, 1e-13, None).unwrap();
    assert!(two_site_variance(&state, &env, 0).unwrap() < 1e-24);
    assert!(truncation_error(&state, &env, 0, 1e-14).unwrap() < 1e-24);
    let res = fixed_point_residuals(&state, &env).unwrap();
    assert!(res.max() < 1e-12);
}

#[test]
fn tolerance_policies() {
    let t = Tolerances::default();
    assert_eq!(t.eig_tol(1.0), 1e-2);
    assert_eq!(t.eig_tol(1e-20), EIG_TOL_FLOOR);
    assert_eq!(t.env_tol(1e-3), 1e-5);
    assert_eq!(t.env_tol(1e-20), ENV_TOL_FLOOR);
    let fixed = Tolerances {
        env_policy: EnvTolPolicy::Fixed(1e-6),
        ..t.clone()
    };
    assert_eq!(fixed.env_tol(1e-2), 1e-6);
    assert_eq!(fixed.env_tol(1e-8), 1e-8);
    for bad in [
        Tolerances::with_target(0.0),
        Tolerances { eig_factor: 2.0, ..t.clone() },
        Tolerances { max_iterations: 0, ..t.clone() },
        Tolerances { env_policy: EnvTolPolicy::Relative(-1.0), ..t.clone() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn schedule_targets_must_increase() {
    let step = |target| BondStep {
        trigger: Trigger::Iteration(0),
        target,
    };
    assert!(BondSchedule::new(vec![step(8), step(16)]).is_ok());
    assert!(BondSchedule::new(vec![step(8), step(8)]).is_err());
    assert!(BondSchedule::new(vec![step(16), step(8)]).is_err());
}

#[test]
fn multiplet_guard_never_splits_near_degenerate_values() {
    let v = [1.0, 0.5, 0.5, 0.2, 0.2 * (1.0 + 1e-5), 0.1, 0.0, 0.0];
    assert_eq!(guard_multiplets(&v, 2), 1);
    assert_eq!(guard_multiplets(&v, 3), 3);
    assert_eq!(guard_multiplets(&v, 4), 3);
    assert_eq!(guard_multiplets(&v, 5), 5);
    assert_eq!(guard_multiplets(&v, 7), 7);
    assert_eq!(guard_multiplets(&v, 8), 8);
}

#[test]
fn expansion_keeps_the_state_and_the_gauge() {
    let ham = tfi(0.8);
    for n in [1, 2] {
        let state = random_umps(2, 4, n, 21).unwrap();
        let env = build_env(&ham, &state, 1e-13, None).unwrap();
        let exp = expand_bond(&state, &env, 3, false).unwrap();
        assert_eq!(exp.added, 3);
        assert_eq!(exp.state.bond_dim(), 7);
        assert!(exp.state.gauge_residuals().max() < 1e-12);
        let e0 = env.energy;
        let e1 = energy(&ham, &exp.state);
        assert!((e0 - e1).abs() < 1e-12, "{e0} vs {e1}");
        // Rank bound (d − 1) D clips the request.
        let big = expand_bond(&state, &env, 100, false).unwrap();
        assert!(big.clipped);
        assert_eq!(big.state.bond_dim(), 8);
    }
}

#[test]
fn bond_schedule_grows_the_state() {
    let ham = tfi(0.9);
    let mut o = opts(1e-9, 200);
    o.schedule = BondSchedule::new(vec![
        BondStep {
            trigger: Trigger::Gradient(1e-6),
            target: 6,
        },
        BondStep {
            trigger: Trigger::Iteration(0),
            target: 10,
        },
    ])
    .unwrap();
    let out = vumps_run(&ham, random_umps(2, 3, 1, 2).unwrap(), o).unwrap();
    assert!(out.converged);
    assert_eq!(out.state.bond_dim(), 10);
    let dims: Vec<usize> = out.trajectory.iter().map(|r| r.bond_dim).collect();
    assert!(dims.windows(2).all(|w| w[0] <= w[1]));
    assert!(dims.contains(&6));
}

#[test]
fn stagnation_is_reported() {
    // The unrotated antiferromagnet has no uniform single-site fixed point,
    // so the gradient keeps fluctuating at O(0.1).
    let ham = Hamiltonian::Nn(build_xxz(1, 1.0).unwrap());
    let mut o = opts(1e-10, 60);
    o.stagnation_window = 10;
    let out = vumps_run(&ham, random_umps(2, 4, 1, 8).unwrap(), o).unwrap();
    assert!(!out.converged);
    assert!(out.warnings.iter().any(|w| w.contains("stagnated")), "{:?}", out.warnings);
}

#[test]
fn observer_can_interrupt_and_resume_is_deterministic() {
    let ham = tfi(0.6);
    let start = random_umps(2, 6, 1, 13).unwrap();
    let full = vumps_run(&ham, start.clone(), opts(1e-9, 100)).unwrap();
    assert!(full.converged);
    let mut calls = 0;
    let first = Driver::new(&ham, start, opts(1e-9, 100))
        .unwrap()
        .run(&mut |_, _| {
            calls += 1;
            calls < 4
        })
        .unwrap();
    assert!(first.interrupted);
    assert_eq!(first.resume.iteration, 4);
    let rest = Driver::resume(&ham, first.state, opts(1e-9, 100), first.resume)
        .unwrap()
        .run(&mut |_, _| true)
        .unwrap();
    assert!(rest.converged);
    let (a, b) = (energy(&ham, &full.state), energy(&ham, &rest.state));
    assert!((a - b).abs() < 1e-10);
    assert_eq!(
        full.trajectory.len(),
        4 + rest.trajectory.len(),
        "resumed run took a different path"
    );
}

#[test]
fn bias_breaks_the_symmetry() {
    let (x, _, _) = pauli();
    let state = random_umps(2, 4, 1, 3).unwrap();
    let biased = bias_state(&state, &x.mapv(|v| -v), 5.0).unwrap();
    let mx = expval_local(&biased, &x, 0).unwrap().re;
    assert!(mx > expval_local(&state, &x, 0).unwrap().re);
    assert!(biased.gauge_residuals().max() < 1e-12);
    assert!(bias_state(&state, &identity(3), 1.0).is_err());
}

#[test]
fn heisenberg_energy_improves_with_bond_dimension() {
    // Single-site cells need the sublattice-rotated form.
    let ham = Hamiltonian::Nn(build_xxz_rotated(1, 1.0).unwrap());
    let exact = xxz_half_energy(1.0).unwrap().value;
    let mut last = f64::INFINITY;
    for dim in [4, 8] {
        let out = vumps_run(&ham, random_umps(2, dim, 1, 1).unwrap(), opts(1e-8, 300)).unwrap();
        let e = energy(&ham, &out.state);
        assert!(e > exact - 1e-10, "variational bound violated: {e}");
        assert!(e - exact < last);
        last = e - exact;
        let schmidt = schmidt_data(&out.state, 0).unwrap();
        assert_eq!(schmidt.values.len(), dim);
    }
}
