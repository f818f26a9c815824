use proptest::prelude::*;

use vumps::cli::fit_power_law;
use vumps::numerics::{dagger, qr_positive, Mat, C64};
use vumps::optimizer::{guard_multiplets, EnvTolPolicy, Tolerances, ENV_TOL_FLOOR, MULTIPLET_GAP};
use vumps::umps::{
    canonicalize, decode_state, encode_state, expval_local, fidelity, random_tensors, random_umps,
    schmidt_data, MpsTensor,
};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 32,
        ..ProptestConfig::default()
    }
}

/// `Σ_st op_st Tr(X^s† X^t)` for a normalized center tensor `X`.
fn center_expectation(x: &MpsTensor, op: &Mat) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (s, a) in x.mats.iter().enumerate() {
        for (t, b) in x.mats.iter().enumerate() {
            acc += op[[s, t]] * a.iter().zip(b.iter()).map(|(u, v)| u.conj() * v).sum::<C64>();
        }
    }
    acc.re
}

fn hermitian(d: usize, seed: u64) -> Mat {
    let m = random_tensors(1, d, 1, seed).remove(0).mats.remove(0);
    (&m + &dagger(&m)).mapv(|z| z * 0.5)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn canonical_form_holds_for_random_cells(
        d in 2usize..=4, dim in 1usize..=12, n in 1usize..=3, seed in any::<u64>()
    ) {
        let raw = random_tensors(d, dim, n, seed);
        let s = canonicalize(&raw).unwrap();
        prop_assert!(s.gauge_residuals().max() < 1e-12);
        prop_assert!(1.0 - fidelity(&s.al, &raw).unwrap() < 1e-10);
        prop_assert!(1.0 - fidelity(&s.ar, &s.al).unwrap() < 1e-10);
    }

    #[test]
    fn moving_the_center_leaves_local_expectations_unchanged(
        d in 2usize..=3, dim in 1usize..=8, n in 1usize..=3, seed in any::<u64>()
    ) {
        let s = random_umps(d, dim, n, seed).unwrap();
        let op = hermitian(d, seed ^ 0x5555);
        for k in 0..n {
            let reference = expval_local(&s, &op, k).unwrap().re;
            let left = s.al[k].mul_right(&s.c[k]);
            let right = s.ar[k].mul_left(s.c_left(k));
            prop_assert!((center_expectation(&left, &op) - reference).abs() < 1e-10);
            prop_assert!((center_expectation(&right, &op) - reference).abs() < 1e-10);
        }
    }

    #[test]
    fn schmidt_values_are_gauge_invariant(
        d in 2usize..=3, dim in 1usize..=8, seed in any::<u64>()
    ) {
        let raw = random_tensors(d, dim, 1, seed);
        let g = random_tensors(1, dim, 1, seed.wrapping_add(1)).remove(0).mats.remove(0);
        let u = qr_positive(&g).unwrap().q;
        let rotated: Vec<MpsTensor> = raw
            .iter()
            .map(|t| MpsTensor::new(t.mats.iter().map(|m| dagger(&u).dot(m).dot(&u)).collect()))
            .collect();
        let a = schmidt_data(&canonicalize(&raw).unwrap(), 0).unwrap();
        let b = schmidt_data(&canonicalize(&rotated).unwrap(), 0).unwrap();
        prop_assert_eq!(a.values.len(), b.values.len());
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((a.entropy - b.entropy).abs() < 1e-10);
    }

    #[test]
    fn state_container_round_trips_exactly(
        d in 1usize..=4, dim in 1usize..=6, n in 1usize..=3, seed in any::<u64>()
    ) {
        let s = random_umps(d.max(2), dim, n, seed).unwrap();
        let bytes = encode_state(&s);
        let (back, used) = decode_state(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, s);
    }

    #[test]
    fn environment_tolerance_is_bounded(
        eps in 1e-16f64..1.0, factor in 1e-6f64..=1.0, fixed in 1e-15f64..0.9
    ) {
        for policy in [EnvTolPolicy::Relative(factor), EnvTolPolicy::Fixed(fixed)] {
            let tol = Tolerances { env_policy: policy, ..Tolerances::default() };
            let t = tol.env_tol(eps);
            prop_assert!(t >= ENV_TOL_FLOOR);
            prop_assert!(t <= eps.max(ENV_TOL_FLOOR));
        }
    }

    #[test]
    fn guard_never_splits_a_multiplet(
        raw in prop::collection::vec(1e-3f64..1.0, 1..40), want in 0usize..50, dup in 0usize..40
    ) {
        let mut values = raw;
        // Plant an exact pair so that multiplets actually occur.
        if dup + 1 < values.len() {
            values[dup + 1] = values[dup];
        }
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = guard_multiplets(&values, want);
        prop_assert!(k <= want.min(values.len()));
        if k > 0 && k < values.len() {
            prop_assert!((values[k - 1] - values[k]) / values[k - 1] >= MULTIPLET_GAP);
        }
    }

    #[test]
    fn power_law_fit_recovers_exact_data(
        e in -2.0f64..2.0, a in 0.5f64..5.0, negative in any::<bool>(), b in 0.5f64..4.0
    ) {
        let a = if negative { -a } else { a };
        let x: Vec<f64> = [8.0, 12.0, 16.0, 24.0, 32.0].iter().map(|d: &f64| 1.0 / d).collect();
        let y: Vec<f64> = x.iter().map(|v| e + a * v.powf(b)).collect();
        let fit = fit_power_law(&x, &y);
        prop_assert!((fit.exponent - b).abs() < 1e-4, "{} vs {}", fit.exponent, b);
        prop_assert!((fit.intercept - e).abs() < 1e-8);
        prop_assert!(fit.exponent > 0.0 && fit.exponent <= 8.0);
    }
}
