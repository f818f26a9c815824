use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{MpsTensor, Result, TransferOperator, UmpsError, UniformMps};
use crate::numerics::{
    eig_dominant, frobenius, identity, mat_to_vec, qr_positive, svd, vec_to_mat, EigOptions, Mat,
    MatrixMap, NumericsError, Side, C64,
};

/// Relative gap below which the dominant transfer eigenvalue counts as degenerate.
const INJECTIVITY_GAP: f64 = 1e-10;

/// Unit-cell tensors with independent complex Gaussian entries.
pub fn random_tensors(d: usize, dim: usize, n: usize, seed: u64) -> Vec<MpsTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            MpsTensor::new(
                (0..d)
                    .map(|_| {
                        Array2::from_shape_fn((dim, dim), |_| {
                            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
                        })
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Random canonical state, deterministic in `seed`.
pub fn random_umps(d: usize, dim: usize, n: usize, seed: u64) -> Result<UniformMps> {
    canonicalize(&random_tensors(d, dim, n, seed))
}

fn non_injective(e: NumericsError) -> UmpsError {
    match e {
        NumericsError::RankDeficient { sigma } => UmpsError::NonInjective { magnitude: sigma },
        other => UmpsError::Numerics(other),
    }
}

fn check_gap(value: C64, subleading: Option<C64>) -> Result<()> {
    if let Some(sub) = subleading {
        if sub.norm() > (1.0 - INJECTIVITY_GAP) * value.norm() {
            return Err(UmpsError::NonInjective {
                magnitude: sub.norm() / value.norm(),
            });
        }
    }
    Ok(())
}

/// Left-orthonormalizes a unit cell: `L(k-1) A(k) ∝ A_L(k) L(k)` with every
/// `L(k)` upper triangular, positive on the diagonal and of unit norm.
/// Alternates positive QR sweeps with a dominant-eigenvector refinement of
/// `L` on the mixed transfer operator.
fn left_gauge(tensors: &[MpsTensor]) -> Result<(Vec<MpsTensor>, Vec<Mat>)> {
    let n = tensors.len();
    let d = tensors[0].phys();
    let dim = tensors[0].left_dim();
    let mut l = identity(dim).mapv(|z| z / (dim as f64).sqrt());
    let mut al = tensors.to_vec();
    let mut ls = vec![l.clone(); n];
    let mut best = f64::INFINITY;
    // A fixed random admixture keeps the Krylov start off any invariant
    // subspace, so a degenerate dominant eigenvalue is always seen.
    let probe = random_tensors(1, dim, 1, 0x5eed).remove(0).mats.remove(0);
    let probe = probe.mapv(|z| z * (1e-2 / frobenius(&probe)));
    let opts = EigOptions {
        krylov_dim: 30,
        keep: 6,
        max_matvecs: 3000,
    };
    for it in 0..300 {
        let mut cur = l.clone();
        for k in 0..n {
            let m = tensors[k].mul_left(&cur).left_matrix();
            let qr = qr_positive(&m).map_err(non_injective)?;
            al[k] = MpsTensor::from_left_matrix(&qr.q, d);
            let nr = frobenius(&qr.r);
            cur = qr.r.mapv(|z| z / nr);
            ls[k] = cur.clone();
        }
        let delta = frobenius(&(&cur - &l));
        l = cur;
        if it > 0 && (delta < 1e-14 || (delta < 1e-12 && delta > 0.5 * best)) {
            return Ok((al, ls));
        }
        best = best.min(delta);
        if dim == 1 && it > 0 {
            return Ok((al, ls));
        }
        let al_ref = &al;
        let mixed = MatrixMap::new(dim, dim, move |x: &Mat| {
            al_ref
                .iter()
                .zip(tensors.iter())
                .fold(x.clone(), |acc, (b, k)| super::transfer_left(&acc, b, k))
        });
        let eig = eig_dominant(&mixed, &mat_to_vec(&(&l + &probe)), (delta * 0.1).max(1e-14), &opts)?;
        check_gap(eig.value, eig.subleading)?;
        let x = vec_to_mat(&eig.vector, dim, dim);
        let r = qr_positive(&x).map_err(non_injective)?.r;
        let nr = frobenius(&r);
        l = r.mapv(|z| z / nr);
    }
    Err(UmpsError::Numerics(NumericsError::NotConverged {
        iterations: 300,
        residual: best,
        history: vec![],
    }))
}

fn transpose_slices(t: &MpsTensor) -> MpsTensor {
    MpsTensor::new(t.mats.iter().map(|m| m.t().to_owned()).collect())
}

/// Brings arbitrary unit-cell tensors into mixed canonical form with diagonal,
/// normalized bond matrices holding the Schmidt values in descending order.
pub fn canonicalize(tensors: &[MpsTensor]) -> Result<UniformMps> {
    let n = tensors.len();
    if n == 0 {
        return Err(UmpsError::DimensionMismatch("empty unit cell".into()));
    }
    let dim = tensors[0].left_dim();
    let d = tensors[0].phys();
    for t in tensors {
        if t.left_dim() != dim || t.right_dim() != dim || t.phys() != d {
            return Err(UmpsError::DimensionMismatch(
                "canonicalize expects a uniform square bond dimension".into(),
            ));
        }
    }
    let (mut al, lmat) = left_gauge(tensors)?;
    // Right gauge = left gauge of the mirrored chain.
    let mirrored: Vec<MpsTensor> = tensors.iter().rev().map(transpose_slices).collect();
    let (bl, lb) = left_gauge(&mirrored)?;
    let mut ar: Vec<MpsTensor> = (0..n).map(|k| transpose_slices(&bl[n - 1 - k])).collect();
    let mut rmat = vec![Array2::zeros((dim, dim)); n];
    for (kp, m) in lb.iter().enumerate() {
        rmat[(2 * n - 2 - kp) % n] = m.t().to_owned();
    }
    let mut c = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for k in 0..n {
        let ck = lmat[k].dot(&rmat[k]);
        let dec = svd(&ck)?;
        let norm = dec.s.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.push(Array2::from_diag(&dec.s.mapv(|x| C64::new(x / norm, 0.0))));
        us.push(dec.u);
        vs.push(dec.v);
    }
    for k in 0..n {
        let prev = (k + n - 1) % n;
        let ul = crate::numerics::dagger(&us[prev]);
        let vl = crate::numerics::dagger(&vs[prev]);
        al[k] = al[k].mul_left(&ul).mul_right(&us[k]);
        ar[k] = ar[k].mul_left(&vl).mul_right(&vs[k]);
    }
    let ac = (0..n).map(|k| al[k].mul_right(&c[k])).collect();
    UniformMps::new(al, ar, c, ac)
}

/// Dominant fixed points per bond: `R(k)` of the cell transfer of `A_L`
/// (right action), `L(k)` of the cell transfer of `A_R` (left action). Both
/// are normalized to unit trace.
#[derive(Debug, Clone)]
pub struct FixedPoints {
    pub l: Vec<Mat>,
    pub r: Vec<Mat>,
    /// Magnitude of the dominant cell transfer eigenvalue.
    pub lambda: f64,
}

fn unit_trace(m: &Mat) -> Mat {
    let tr: C64 = (0..m.nrows()).map(|i| m[[i, i]]).sum();
    m.mapv(|z| z / tr)
}

pub fn transfer_fixed_points(state: &UniformMps) -> Result<FixedPoints> {
    let n = state.cell_size();
    let dim = state.bond_dim();
    let opts = EigOptions::default();
    let right = TransferOperator::new(&state.al, &state.al, Side::Right);
    let er = eig_dominant(&right, &mat_to_vec(&state.right_density(n - 1)), 1e-14, &opts)?;
    check_gap(er.value, er.subleading)?;
    let left = TransferOperator::new(&state.ar, &state.ar, Side::Left);
    let el = eig_dominant(&left, &mat_to_vec(&state.left_density(n - 1)), 1e-14, &opts)?;
    check_gap(el.value, el.subleading)?;
    let mut r = vec![Array2::zeros((dim, dim)); n];
    r[n - 1] = unit_trace(&vec_to_mat(&er.vector, dim, dim));
    for k in (1..n).rev() {
        r[k - 1] = unit_trace(&super::transfer_right(&r[k], &state.al[k], &state.al[k]));
    }
    let mut l = vec![Array2::zeros((dim, dim)); n];
    l[n - 1] = unit_trace(&vec_to_mat(&el.vector, dim, dim));
    for k in 0..n - 1 {
        let prev = if k == 0 { n - 1 } else { k - 1 };
        l[k] = unit_trace(&super::transfer_left(&l[prev], &state.ar[k], &state.ar[k]));
    }
    Ok(FixedPoints {
        l,
        r,
        lambda: 0.5 * (er.value.norm() + el.value.norm()),
    })
}

/// Overlap per unit cell between the states generated by two cells of
/// tensors: `|λ_ab| / sqrt(|λ_aa| |λ_bb|)` from dominant eigenvalues of the
/// (mixed) transfer operators. Equals 1 exactly when the states coincide.
pub fn fidelity(a: &[MpsTensor], b: &[MpsTensor]) -> Result<f64> {
    let opts = EigOptions::default();
    let dominant = |x: &[MpsTensor], y: &[MpsTensor]| -> Result<f64> {
        let t = TransferOperator::new(x, y, Side::Left);
        let (r, c) = t.dims();
        let guess = Array2::from_elem((r, c), C64::new(1.0, 0.0))
            + identity(r.max(c)).slice(ndarray::s![..r, ..c]);
        Ok(eig_dominant(&t, &mat_to_vec(&guess), 1e-13, &opts)?.value.norm())
    };
    Ok(dominant(a, b)? / (dominant(a, a)? * dominant(b, b)?).sqrt())
}
