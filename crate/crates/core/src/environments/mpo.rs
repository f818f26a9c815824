//! MPO backend with quasi fixed points.
//!
//! `W^{ab}` carries the left virtual index `a` and the right index `b` and is
//! lower triangular. Channel `d_W − 1` is the identity string to the left of
//! every term, channel `0` the identity string after a completed term, so
//! `L_{d_W−1} = 𝟙` and `R_0 = 𝟙`.

use serde::{Deserialize, Serialize};

use crate::numerics::{identity, Mat, Side, C64, ONE, ZERO};
use crate::umps::{transfer_left, transfer_left_op, transfer_right, transfer_right_op};
use crate::umps::{MpsTensor, TwoSiteTensor, UniformMps};

use super::cell::{left_order, remove_identity, right_order, CellSum, Deflation};
use super::{densities, Blocks, EnvError, Environment, RawEnv, Result, WarmStart};

/// Tolerance for the structural checks at load time.
const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mpo {
    pub d: usize,
    pub dw: usize,
    /// `blocks[a][b]`; `None` marks a zero block.
    pub blocks: Vec<Vec<Option<Mat>>>,
    diag: Vec<C64>,
}

fn is_zero(m: &Mat) -> bool {
    m.iter().all(|z| z.norm() == 0.0)
}

impl Mpo {
    /// Validates Schur form: zero above the diagonal, diagonal blocks
    /// `λ_a 𝟙` with `λ_0 = λ_{d_W−1} = 1` and `|λ_a| < 1` or `λ_a = 1` otherwise.
    pub fn new(d: usize, blocks: Vec<Vec<Option<Mat>>>) -> Result<Self> {
        let dw = blocks.len();
        if dw == 0 || blocks.iter().any(|r| r.len() != dw) {
            return Err(EnvError::InvalidMpo("block array must be d_W × d_W".into()));
        }
        let mut blocks = blocks;
        for (a, row) in blocks.iter_mut().enumerate() {
            for (b, blk) in row.iter_mut().enumerate() {
                if let Some(m) = blk {
                    if m.dim() != (d, d) {
                        return Err(EnvError::InvalidMpo(format!("block ({a},{b}) is not {d}x{d}")));
                    }
                    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(EnvError::InvalidMpo(format!("block ({a},{b}) is not finite")));
                    }
                    if is_zero(m) {
                        *blk = None;
                    } else if b > a {
                        return Err(EnvError::InvalidMpo(format!(
                            "block ({a},{b}) above the diagonal"
                        )));
                    }
                }
            }
        }
        let mut diag = Vec::with_capacity(dw);
        for (a, row) in blocks.iter().enumerate() {
            let lambda = match &row[a] {
                None => ZERO,
                Some(m) => {
                    let l = m[[0, 0]];
                    let off = (m - &identity(d).mapv(|z| z * l))
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0, f64::max);
                    if off > STRUCTURE_TOL {
                        return Err(EnvError::InvalidMpo(format!(
                            "diagonal block {a} is not proportional to the identity"
                        )));
                    }
                    l
                }
            };
            let unit = (lambda - ONE).norm() <= STRUCTURE_TOL;
            if lambda.norm() > 1.0 + STRUCTURE_TOL {
                return Err(EnvError::InvalidMpo(format!(
                    "diagonal weight |λ_{a}| = {} exceeds one",
                    lambda.norm()
                )));
            }
            if !unit && lambda.norm() >= 1.0 - STRUCTURE_TOL {
                return Err(EnvError::InvalidMpo(format!(
                    "diagonal weight λ_{a} = {lambda} has unit modulus but is not one"
                )));
            }
            if (a == 0 || a == dw - 1) && !unit {
                return Err(EnvError::InvalidMpo(format!(
                    "first and last diagonal blocks must be the identity (block {a})"
                )));
            }
            diag.push(if unit { ONE } else { lambda });
        }
        Ok(Self {
            d,
            dw,
            blocks,
            diag,
        })
    }

    pub fn block(&self, a: usize, b: usize) -> Option<&Mat> {
        self.blocks[a][b].as_ref()
    }

    /// Diagonal weight `λ_a`.
    pub fn diagonal(&self, a: usize) -> C64 {
        self.diag[a]
    }

    /// Local operator of an open chain of `n` sites: boundary channel `d_W − 1`
    /// on the left, `0` on the right. Dense, for small checks only.
    pub fn dense_open_chain(&self, n: usize) -> Mat {
        let d = self.d;
        // states[a] = operator on the sites so far, ending in channel a.
        let mut states: Vec<Option<Mat>> = vec![None; self.dw];
        states[self.dw - 1] = Some(identity(1));
        for _ in 0..n {
            let mut next: Vec<Option<Mat>> = vec![None; self.dw];
            for (a, st) in states.iter().enumerate() {
                let Some(op) = st else { continue };
                for b in 0..self.dw {
                    if let Some(w) = self.block(a, b) {
                        let k = kron(op, w);
                        next[b] = Some(match next[b].take() {
                            Some(acc) => acc + k,
                            None => k,
                        });
                    }
                }
            }
            states = next;
        }
        states[0].clone().unwrap_or_else(|| Mat::zeros((d.pow(n as u32), d.pow(n as u32))))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut blocks = Vec::new();
        for a in 0..self.dw {
            for b in 0..self.dw {
                if let Some(m) = self.block(a, b) {
                    blocks.push(MpoBlock {
                        row: a,
                        col: b,
                        op: to_pairs(m),
                    });
                }
            }
        }
        serde_json::to_value(MpoFile {
            d: self.d,
            d_w: self.dw,
            blocks,
        })
        .expect("MPO serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MpoFile =
            serde_json::from_str(text).map_err(|e| EnvError::InvalidMpo(e.to_string()))?;
        let mut blocks = vec![vec![None; file.d_w]; file.d_w];
        for blk in file.blocks {
            if blk.row >= file.d_w || blk.col >= file.d_w {
                return Err(EnvError::InvalidMpo(format!(
                    "block index ({}, {}) out of range",
                    blk.row, blk.col
                )));
            }
            blocks[blk.row][blk.col] = Some(from_pairs(&blk.op, file.d)?);
        }
        Mpo::new(file.d, blocks)
    }
}

/// Kronecker product `a ⊗ b`.
pub(crate) fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Mat::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

/// On-disk MPO: `d`, `d_w` and the nonzero blocks as rows of `[re, im]` pairs.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpoFile {
    pub d: usize,
    pub d_w: usize,
    pub blocks: Vec<MpoBlock>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpoBlock {
    pub row: usize,
    pub col: usize,
    pub op: Vec<Vec<[f64; 2]>>,
}

pub(crate) fn to_pairs(m: &Mat) -> Vec<Vec<[f64; 2]>> {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

pub(crate) fn from_pairs(rows: &[Vec<[f64; 2]>], d: usize) -> Result<Mat> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(EnvError::InvalidMpo(format!("block is not {d}x{d}")));
    }
    Ok(Mat::from_shape_fn((d, d), |(i, j)| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

pub fn build_env_mpo(
    mpo: &Mpo,
    state: &UniformMps,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<Environment> {
    let n = state.cell_size();
    let dim = state.bond_dim();
    let dw = mpo.dw;
    let one = identity(dim);
    let (l, r) = densities(state);
    let exact_tol = tol.min(1e-13);
    let (al, ar) = (&state.al, &state.ar);
    let step_l = |k: usize, x: &Mat| transfer_left(x, &al[k], &al[k]);
    let step_r = |k: usize, x: &Mat| transfer_right(x, &ar[(k + 1) % n], &ar[(k + 1) % n]);
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
    let mut solves = 0;
    let mut warm_out = WarmStart::default();
    let mut energy = 0.0;
    let mut energy_right = 0.0;

    // left[k][a]
    let mut left = vec![vec![Mat::zeros((dim, dim)); dw]; n];
    for blocks in left.iter_mut() {
        blocks[dw - 1] = one.clone();
    }
    let mut guess = 0;
    for a in (0..dw.saturating_sub(1)).rev() {
        let y: Vec<Mat> = (0..n)
            .map(|k| {
                let prev = (k + n - 1) % n;
                let mut acc = Mat::zeros((dim, dim));
                for b in a + 1..dw {
                    if let Some(w) = mpo.block(b, a) {
                        acc += &transfer_left_op(&left[prev][b], &al[k], &al[k], w);
                    }
                }
                acc
            })
            .collect();
        let lambda = mpo.diagonal(a);
        let unit = lambda == ONE;
        let deflation = unit.then_some(Deflation {
            fp_left: &one,
            fp_right: &r[n - 1],
        });
        let t = if unit { tol } else { exact_tol };
        let sol = left_sum.solve(&y, lambda, deflation, t, warm.and_then(|w| w.left_guess(guess)))?;
        if lambda != ZERO {
            guess += 1;
            warm_out.left.push(sol.blocks[n - 1].clone());
        }
        solves += sol.solves;
        for k in 0..n {
            left[k][a] = if unit {
                remove_identity(&sol.blocks[k], &r[k], Side::Left)
            } else {
                sol.blocks[k].clone()
            };
        }
        if a == 0 {
            energy = sol.removed.re / n as f64;
        }
    }

    // right[k][a]
    let mut right = vec![vec![Mat::zeros((dim, dim)); dw]; n];
    for blocks in right.iter_mut() {
        blocks[0] = one.clone();
    }
    let mut guess = 0;
    for a in 1..dw {
        let y: Vec<Mat> = (0..n)
            .map(|k| {
                let next = (k + 1) % n;
                let mut acc = Mat::zeros((dim, dim));
                for b in 0..a {
                    if let Some(w) = mpo.block(a, b) {
                        acc += &transfer_right_op(&right[next][b], &ar[next], &ar[next], w);
                    }
                }
                acc
            })
            .collect();
        let lambda = mpo.diagonal(a);
        let unit = lambda == ONE;
        let deflation = unit.then_some(Deflation {
            fp_left: &l[0],
            fp_right: &one,
        });
        let t = if unit { tol } else { exact_tol };
        let sol = right_sum.solve(&y, lambda, deflation, t, warm.and_then(|w| w.right_guess(guess)))?;
        if lambda != ZERO {
            guess += 1;
            warm_out.right.push(sol.blocks[0].clone());
        }
        solves += sol.solves;
        for k in 0..n {
            right[k][a] = if unit {
                remove_identity(&sol.blocks[k], &l[k], Side::Right)
            } else {
                sol.blocks[k].clone()
            };
        }
        if a == dw - 1 {
            energy_right = sol.removed.re / n as f64;
        }
    }
    let raw = RawEnv {
        blocks: Blocks::Mpo {
            mpo: mpo.clone(),
            left,
            right,
        },
        energy,
        energy_right,
        geometric_sums: solves,
        warm: warm_out,
    };
    Ok(Environment::finish(raw, state, tol))
}

fn view(env: &Environment) -> (&Mpo, &[Vec<Mat>], &[Vec<Mat>]) {
    match &env.blocks {
        Blocks::Mpo { mpo, left, right } => (mpo, left, right),
        _ => unreachable!("MPO apply on another backend"),
    }
}

/// `Σ_a Σ_t W^{ab}_{st} X_a^t` for fixed `b`, where `xs[a][t]` holds the slices.
fn contract_channel(mpo: &Mpo, b: usize, xs: &[Vec<Mat>], lo: usize) -> Option<Vec<Mat>> {
    let d = mpo.d;
    let mut out: Option<Vec<Mat>> = None;
    for (a, xa) in xs.iter().enumerate().skip(lo) {
        let Some(w) = mpo.block(a, b) else { continue };
        let acc = out.get_or_insert_with(|| vec![Mat::zeros(xa[0].dim()); d]);
        for (s, o) in acc.iter_mut().enumerate() {
            for (t, m) in xa.iter().enumerate() {
                if w[[s, t]] != ZERO {
                    o.scaled_add(w[[s, t]], m);
                }
            }
        }
    }
    out
}

pub(super) fn apply_hac(env: &Environment, site: usize, x: &MpsTensor) -> MpsTensor {
    let (mpo, left, right) = view(env);
    let dw = mpo.dw;
    let lb = env.bond(site as isize - 1);
    let lx: Vec<Vec<Mat>> = (0..dw)
        .map(|a| {
            if a == dw - 1 {
                x.mats.clone()
            } else {
                x.mats.iter().map(|m| left[lb][a].dot(m)).collect()
            }
        })
        .collect();
    let mut out = vec![Mat::zeros(x.mats[0].dim()); mpo.d];
    for b in 0..dw {
        if let Some(m) = contract_channel(mpo, b, &lx, b) {
            for (o, v) in out.iter_mut().zip(m.iter()) {
                if b == 0 {
                    *o += v;
                } else {
                    *o += &v.dot(&right[site][b]);
                }
            }
        }
    }
    MpsTensor::new(out)
}

pub(super) fn apply_hc(env: &Environment, bond: usize, c: &Mat) -> Mat {
    let (mpo, left, right) = view(env);
    let mut out = Mat::zeros(c.dim());
    for a in 0..mpo.dw {
        out += &left[bond][a].dot(c).dot(&right[bond][a]);
    }
    out
}

pub(super) fn apply_h2c(env: &Environment, bond: usize, x: &TwoSiteTensor) -> TwoSiteTensor {
    let (mpo, left, right) = view(env);
    let (d, dw) = (mpo.d, mpo.dw);
    let lb = env.bond(bond as isize - 1);
    let rb = env.bond(bond as isize + 1);
    let shape = x.mats[0].dim();
    // First site: y[b][(s, t')] = Σ_a Σ_s' W^{ab}_{ss'} L_a x^{s't'}.
    let mut y: Vec<Option<Vec<Mat>>> = vec![None; dw];
    for (b, yb) in y.iter_mut().enumerate() {
        for a in b..dw {
            let Some(w) = mpo.block(a, b) else { continue };
            let acc = yb.get_or_insert_with(|| vec![Mat::zeros(shape); d * d]);
            for s in 0..d {
                for sp in 0..d {
                    if w[[s, sp]] == ZERO {
                        continue;
                    }
                    for t in 0..d {
                        let m = if a == dw - 1 {
                            x.slice(sp, t).clone()
                        } else {
                            left[lb][a].dot(x.slice(sp, t))
                        };
                        acc[s * d + t].scaled_add(w[[s, sp]], &m);
                    }
                }
            }
        }
    }
    let mut out = vec![Mat::zeros(shape); d * d];
    for c in 0..dw {
        let mut z: Option<Vec<Mat>> = None;
        for (b, yb) in y.iter().enumerate().skip(c) {
            let (Some(w), Some(yb)) = (mpo.block(b, c), yb) else { continue };
            let acc = z.get_or_insert_with(|| vec![Mat::zeros(shape); d * d]);
            for s in 0..d {
                for t in 0..d {
                    for tp in 0..d {
                        if w[[t, tp]] != ZERO {
                            acc[s * d + t].scaled_add(w[[t, tp]], &yb[s * d + tp]);
                        }
                    }
                }
            }
        }
        if let Some(z) = z {
            for (o, m) in out.iter_mut().zip(z.iter()) {
                if c == 0 {
                    *o += m;
                } else {
                    *o += &m.dot(&right[rb][c]);
                }
            }
        }
    }
    TwoSiteTensor { d, mats: out }
}
