//! Nearest-neighbour backend and the two-site contractions shared with the
//! long-range backend.

use crate::numerics::{dagger, frobenius, identity, Mat, Side, C64, ONE, ZERO};
use crate::umps::{MpsTensor, TwoSiteTensor, UniformMps};

use super::cell::{left_order, remove_identity, right_order, CellSum, Deflation};
use super::{densities, Blocks, EnvError, Environment, RawEnv, Result, WarmStart};

/// Two-site operator `h[(s1 s2), (t1 t2)] = ⟨s1 s2|h|t1 t2⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteTerm {
    pub d: usize,
    pub h: Mat,
}

impl TwoSiteTerm {
    pub fn new(h: Mat, d: usize) -> Result<Self> {
        if h.dim() != (d * d, d * d) {
            return Err(EnvError::DimensionMismatch(format!(
                "two-site term {:?} for d = {d}",
                h.dim()
            )));
        }
        let defect = frobenius(&(&h - &dagger(&h)));
        if defect > 1e-12 * frobenius(&h).max(1.0) {
            return Err(EnvError::NotHermitian(defect));
        }
        Ok(Self { d, h })
    }

    /// `a ⊗ b`.
    pub fn product(a: &Mat, b: &Mat) -> Mat {
        let d = a.nrows();
        let mut out = Mat::zeros((d * d, d * d));
        for s1 in 0..d {
            for s2 in 0..d {
                for t1 in 0..d {
                    for t2 in 0..d {
                        out[[s1 * d + s2, t1 * d + t2]] = a[[s1, t1]] * b[[s2, t2]];
                    }
                }
            }
        }
        out
    }

    /// Symmetric split of a single-site term: `½(h1 ⊗ 𝟙 + 𝟙 ⊗ h1)`.
    pub fn split_site_term(h1: &Mat) -> Mat {
        let one = identity(h1.nrows());
        (Self::product(h1, &one) + Self::product(&one, h1)).mapv(|z| z * 0.5)
    }
}

fn entry(h: &Mat, d: usize, s1: usize, s2: usize, t1: usize, t2: usize) -> C64 {
    h[[s1 * d + s2, t1 * d + t2]]
}

/// `out^s = Σ h[(u s),(u' t)] a^u† a^{u'} x^t`: the bond to the left of `x`.
pub(crate) fn left_bridge(a: &MpsTensor, h: &Mat, x: &[Mat]) -> Vec<Mat> {
    let d = a.phys();
    let p: Vec<Vec<Mat>> = (0..d)
        .map(|u| x.iter().map(|xt| a.mats[u].dot(xt)).collect())
        .collect();
    let dims = (a.right_dim(), x[0].ncols());
    let mut out = vec![Mat::zeros(dims); d];
    for (s, o) in out.iter_mut().enumerate() {
        for u in 0..d {
            let mut q = Mat::zeros(p[0][0].dim());
            let mut any = false;
            for (up, row) in p.iter().enumerate() {
                for (t, m) in row.iter().enumerate() {
                    let w = entry(h, d, u, s, up, t);
                    if w != ZERO {
                        q.scaled_add(w, m);
                        any = true;
                    }
                }
            }
            if any {
                *o += &dagger(&a.mats[u]).dot(&q);
            }
        }
    }
    out
}

/// `out^s = Σ h[(s v),(t v')] x^t b^{v'} b^v†`: the bond to the right of `x`.
pub(crate) fn right_bridge(b: &MpsTensor, h: &Mat, x: &[Mat]) -> Vec<Mat> {
    let d = b.phys();
    let p: Vec<Vec<Mat>> = x
        .iter()
        .map(|xt| b.mats.iter().map(|bv| xt.dot(bv)).collect())
        .collect();
    let dims = (x[0].nrows(), b.left_dim());
    let mut out = vec![Mat::zeros(dims); d];
    for (s, o) in out.iter_mut().enumerate() {
        for v in 0..d {
            let mut q = Mat::zeros(p[0][0].dim());
            let mut any = false;
            for (t, row) in p.iter().enumerate() {
                for (vp, m) in row.iter().enumerate() {
                    let w = entry(h, d, s, v, t, vp);
                    if w != ZERO {
                        q.scaled_add(w, m);
                        any = true;
                    }
                }
            }
            if any {
                *o += &q.dot(&dagger(&b.mats[v]));
            }
        }
    }
    out
}

/// `Σ h[(s1 s2),(t1 t2)] a^{s1}† a^{t1} c b^{t2} b^{s2}†`.
pub(crate) fn center_bridge(a: &MpsTensor, b: &MpsTensor, h: &Mat, c: &Mat) -> Mat {
    let d = a.phys();
    let ac: Vec<Mat> = a.mats.iter().map(|m| m.dot(c)).collect();
    let p: Vec<Vec<Mat>> = ac
        .iter()
        .map(|m| b.mats.iter().map(|bt| m.dot(bt)).collect())
        .collect();
    let mut out = Mat::zeros((a.right_dim(), b.left_dim()));
    for s1 in 0..d {
        for s2 in 0..d {
            let mut q = Mat::zeros(p[0][0].dim());
            let mut any = false;
            for (t1, row) in p.iter().enumerate() {
                for (t2, m) in row.iter().enumerate() {
                    let w = entry(h, d, s1, s2, t1, t2);
                    if w != ZERO {
                        q.scaled_add(w, m);
                        any = true;
                    }
                }
            }
            if any {
                out += &dagger(&a.mats[s1]).dot(&q).dot(&dagger(&b.mats[s2]));
            }
        }
    }
    out
}

/// `Σ h[(s1 s2),(t1 t2)] (a1^{s1} a2^{s2})† x a1^{t1} a2^{t2}`.
pub(crate) fn two_site_left(x: &Mat, a1: &MpsTensor, a2: &MpsTensor, h: &Mat) -> Mat {
    let d = a1.phys();
    let ket: Vec<Vec<Mat>> = a1
        .mats
        .iter()
        .map(|m| {
            let xm = x.dot(m);
            a2.mats.iter().map(|n| xm.dot(n)).collect()
        })
        .collect();
    let mut out = Mat::zeros((a2.right_dim(), a2.right_dim()));
    for s1 in 0..d {
        for s2 in 0..d {
            let mut q = Mat::zeros(ket[0][0].dim());
            let mut any = false;
            for (t1, row) in ket.iter().enumerate() {
                for (t2, m) in row.iter().enumerate() {
                    let w = entry(h, d, s1, s2, t1, t2);
                    if w != ZERO {
                        q.scaled_add(w, m);
                        any = true;
                    }
                }
            }
            if any {
                let bra = a1.mats[s1].dot(&a2.mats[s2]);
                out += &dagger(&bra).dot(&q);
            }
        }
    }
    out
}

/// `Σ h[(s1 s2),(t1 t2)] b1^{t1} b2^{t2} y (b1^{s1} b2^{s2})†`.
pub(crate) fn two_site_right(y: &Mat, b1: &MpsTensor, b2: &MpsTensor, h: &Mat) -> Mat {
    let d = b1.phys();
    let bra: Vec<Vec<Mat>> = b1
        .mats
        .iter()
        .map(|m| b2.mats.iter().map(|n| m.dot(n)).collect())
        .collect();
    let ket_y: Vec<Vec<Mat>> = bra
        .iter()
        .map(|row| row.iter().map(|m| m.dot(y)).collect())
        .collect();
    let mut out = Mat::zeros((b1.left_dim(), b1.left_dim()));
    for s1 in 0..d {
        for s2 in 0..d {
            let mut q = Mat::zeros(ket_y[0][0].dim());
            let mut any = false;
            for (t1, row) in ket_y.iter().enumerate() {
                for (t2, m) in row.iter().enumerate() {
                    let w = entry(h, d, s1, s2, t1, t2);
                    if w != ZERO {
                        q.scaled_add(w, m);
                        any = true;
                    }
                }
            }
            if any {
                out += &q.dot(&dagger(&bra[s1][s2]));
            }
        }
    }
    out
}

/// `out^{st} = Σ h[(st),(s't')] x^{s't'}`.
pub(crate) fn local_two_site(h: &Mat, x: &TwoSiteTensor) -> Vec<Mat> {
    let dd = x.mats.len();
    (0..dd)
        .map(|i| {
            let mut acc = Mat::zeros(x.mats[0].dim());
            for (j, m) in x.mats.iter().enumerate() {
                let w = h[[i, j]];
                if w != ZERO {
                    acc.scaled_add(w, m);
                }
            }
            acc
        })
        .collect()
}

/// Slices `x^{·t}` for fixed second index.
pub(crate) fn column(x: &TwoSiteTensor, t: usize) -> Vec<Mat> {
    (0..x.d).map(|s| x.slice(s, t).clone()).collect()
}

/// Slices `x^{s·}` for fixed first index.
pub(crate) fn row(x: &TwoSiteTensor, s: usize) -> Vec<Mat> {
    (0..x.d).map(|t| x.slice(s, t).clone()).collect()
}

/// Adds the left and right bridge terms of a two-site term on a two-site window.
pub(crate) fn add_two_site_bridges(
    out: &mut [Mat],
    h: &Mat,
    left: &MpsTensor,
    right: &MpsTensor,
    x: &TwoSiteTensor,
) {
    let d = x.d;
    for t in 0..d {
        for (s, m) in left_bridge(left, h, &column(x, t)).into_iter().enumerate() {
            out[s * d + t] += &m;
        }
    }
    for s in 0..d {
        for (t, m) in right_bridge(right, h, &row(x, s)).into_iter().enumerate() {
            out[s * d + t] += &m;
        }
    }
}

pub(crate) fn local_left_terms(h: &Mat, state: &UniformMps) -> Vec<Mat> {
    let n = state.cell_size();
    let one = identity(state.bond_dim());
    (0..n)
        .map(|k| two_site_left(&one, &state.al[(k + n - 1) % n], &state.al[k], h))
        .collect()
}

pub(crate) fn local_right_terms(h: &Mat, state: &UniformMps) -> Vec<Mat> {
    let n = state.cell_size();
    let one = identity(state.bond_dim());
    (0..n)
        .map(|k| two_site_right(&one, &state.ar[(k + 1) % n], &state.ar[(k + 2) % n], h))
        .collect()
}

/// Deflated left and right block sums for inhomogeneities completed on each bond.
pub(crate) struct BlockSums {
    pub left: Vec<Mat>,
    pub right: Vec<Mat>,
    pub removed_left: C64,
    pub removed_right: C64,
    pub solves: usize,
    pub warm: WarmStart,
}

pub(crate) fn block_sums(
    state: &UniformMps,
    y_left: &[Mat],
    y_right: &[Mat],
    tol: f64,
    warm: Option<&WarmStart>,
    warm_index: usize,
) -> Result<BlockSums> {
    let n = state.cell_size();
    let (l, r) = densities(state);
    let one = identity(state.bond_dim());
    let al = &state.al;
    let ar = &state.ar;
    let step_l = |k: usize, x: &Mat| crate::umps::transfer_left(x, &al[k], &al[k]);
    let step_r = |k: usize, x: &Mat| crate::umps::transfer_right(x, &ar[(k + 1) % n], &ar[(k + 1) % n]);
    let (lo, ro) = (left_order(n), right_order(n));
    let left_sum = CellSum {
        order: &lo,
        step: &step_l,
        side: Side::Left,
    };
    let right_sum = CellSum {
        order: &ro,
        step: &step_r,
        side: Side::Right,
    };
    let sl = left_sum.solve(
        y_left,
        ONE,
        Some(Deflation {
            fp_left: &one,
            fp_right: &r[n - 1],
        }),
        tol,
        warm.and_then(|w| w.left_guess(warm_index)),
    )?;
    let sr = right_sum.solve(
        y_right,
        ONE,
        Some(Deflation {
            fp_left: &l[0],
            fp_right: &one,
        }),
        tol,
        warm.and_then(|w| w.right_guess(warm_index)),
    )?;
    let left: Vec<Mat> = (0..n)
        .map(|k| remove_identity(&sl.blocks[k], &r[k], Side::Left))
        .collect();
    let right: Vec<Mat> = (0..n)
        .map(|k| remove_identity(&sr.blocks[k], &l[k], Side::Right))
        .collect();
    Ok(BlockSums {
        warm: WarmStart {
            left: vec![left[n - 1].clone()],
            right: vec![right[0].clone()],
        },
        left,
        right,
        removed_left: sl.removed,
        removed_right: sr.removed,
        solves: sl.solves + sr.solves,
    })
}

/// Nearest-neighbour environment. The fixed points are taken from the bond
/// matrices of `state`; `tol` bounds the residual of the deflated sums.
pub fn build_env_nn(
    h: &TwoSiteTerm,
    state: &UniformMps,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<Environment> {
    let n = state.cell_size();
    let (l, r) = densities(state);
    let h_left = local_left_terms(&h.h, state);
    let h_right = local_right_terms(&h.h, state);
    let energy = (0..n)
        .map(|k| crate::numerics::pair(&h_left[k], &r[k]).re)
        .sum::<f64>()
        / n as f64;
    let energy_right = (0..n)
        .map(|k| crate::numerics::pair(&l[k], &h_right[k]).re)
        .sum::<f64>()
        / n as f64;
    let one = identity(state.bond_dim());
    let shift = |m: &Mat, e: f64| m - &one.mapv(|z| z * e);
    let yl: Vec<Mat> = h_left.iter().map(|m| shift(m, energy)).collect();
    let yr: Vec<Mat> = h_right.iter().map(|m| shift(m, energy)).collect();
    let sums = block_sums(state, &yl, &yr, tol, warm, 0)?;
    let dd = h.d * h.d;
    let htilde = &h.h - &identity(dd).mapv(|z| z * energy);
    let raw = RawEnv {
        blocks: Blocks::Nn {
            h: htilde,
            h_left,
            h_right,
            left: sums.left,
            right: sums.right,
        },
        energy,
        energy_right,
        geometric_sums: sums.solves,
        warm: sums.warm,
    };
    Ok(Environment::finish(raw, state, tol))
}

fn nn_blocks(env: &Environment) -> (&Mat, &[Mat], &[Mat]) {
    match &env.blocks {
        Blocks::Nn { h, left, right, .. } => (h, left, right),
        _ => unreachable!("nearest-neighbour apply on another backend"),
    }
}

pub(super) fn apply_hac(env: &Environment, site: usize, x: &MpsTensor) -> MpsTensor {
    let (h, left, right) = nn_blocks(env);
    let k = site as isize;
    let hl = &left[env.bond(k - 1)];
    let hr = &right[site];
    let lb = left_bridge(env.al(k - 1), h, &x.mats);
    let rb = right_bridge(env.ar(k + 1), h, &x.mats);
    MpsTensor::new(
        x.mats
            .iter()
            .zip(lb.iter().zip(rb.iter()))
            .map(|(m, (a, b))| hl.dot(m) + m.dot(hr) + a + b)
            .collect(),
    )
}

pub(super) fn apply_hc(env: &Environment, bond: usize, c: &Mat) -> Mat {
    let (h, left, right) = nn_blocks(env);
    let k = bond as isize;
    left[bond].dot(c) + c.dot(&right[bond]) + center_bridge(env.al(k), env.ar(k + 1), h, c)
}

pub(super) fn apply_h2c(env: &Environment, bond: usize, x: &TwoSiteTensor) -> TwoSiteTensor {
    let (h, left, right) = nn_blocks(env);
    let k = bond as isize;
    let hl = &left[env.bond(k - 1)];
    let hr = &right[env.bond(k + 1)];
    let mut out = local_two_site(h, x);
    for (o, m) in out.iter_mut().zip(x.mats.iter()) {
        *o += &(hl.dot(m) + m.dot(hr));
    }
    add_two_site_bridges(&mut out, h, env.al(k - 1), env.ar(k + 2), x);
    TwoSiteTensor { d: x.d, mats: out }
}
