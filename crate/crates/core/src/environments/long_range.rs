//! Sum-of-exponentials backend: `H = Σ_{i<j} Σ_k c_k λ_k^{j−i−1} o_i o_j`
//! per channel, plus an optional local two-site and single-site term.

use crate::numerics::{dagger, frobenius, identity, Mat, Side, C64};
use crate::umps::{transfer_left, transfer_left_op, transfer_right, transfer_right_op};
use crate::umps::{MpsTensor, TwoSiteTensor, UniformMps};

use super::cell::{left_order, right_order, CellSum};
use super::nn::{
    add_two_site_bridges, block_sums, center_bridge, left_bridge, local_left_terms,
    local_right_terms, local_two_site, right_bridge, TwoSiteTerm,
};
use super::{Blocks, EnvError, Environment, FitMeta, RawEnv, Result, WarmStart};

/// One operator `o` coupled to itself with profile `f(n) = Σ_k c_k λ_k^{n−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub op: Mat,
    pub weights: Vec<C64>,
    pub rates: Vec<C64>,
}

impl Channel {
    pub fn profile(&self, n: usize) -> C64 {
        self.weights
            .iter()
            .zip(self.rates.iter())
            .map(|(c, l)| c * l.powu(n as u32 - 1))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongRangeCoupling {
    pub channels: Vec<Channel>,
    pub two_site: Option<Mat>,
    pub one_site: Option<Mat>,
    pub fit: Option<FitMeta>,
}

impl LongRangeCoupling {
    pub fn new(
        channels: Vec<Channel>,
        two_site: Option<Mat>,
        one_site: Option<Mat>,
        fit: Option<FitMeta>,
    ) -> Result<Self> {
        let d = channels
            .first()
            .map(|c| c.op.nrows())
            .or_else(|| one_site.as_ref().map(|m| m.nrows()))
            .or_else(|| two_site.as_ref().map(|m| (m.nrows() as f64).sqrt().round() as usize))
            .ok_or_else(|| EnvError::InvalidCoupling("no terms".into()))?;
        for ch in &channels {
            if ch.op.dim() != (d, d) {
                return Err(EnvError::InvalidCoupling("operators of different size".into()));
            }
            let defect = frobenius(&(&ch.op - &dagger(&ch.op)));
            if defect > 1e-12 {
                return Err(EnvError::NotHermitian(defect));
            }
            if ch.weights.len() != ch.rates.len() {
                return Err(EnvError::InvalidCoupling("weights and rates differ in length".into()));
            }
            if let Some(l) = ch.rates.iter().find(|l| l.norm() >= 1.0) {
                return Err(EnvError::InvalidCoupling(format!("|λ| = {} ≥ 1", l.norm())));
            }
        }
        if let Some(h) = &two_site {
            TwoSiteTerm::new(h.clone(), d)?;
        }
        if let Some(h) = &one_site {
            if h.dim() != (d, d) {
                return Err(EnvError::InvalidCoupling("single-site term of wrong size".into()));
            }
            let defect = frobenius(&(h - &dagger(h)));
            if defect > 1e-12 {
                return Err(EnvError::NotHermitian(defect));
            }
        }
        Ok(Self {
            channels,
            two_site,
            one_site,
            fit,
        })
    }

    pub fn phys_dim(&self) -> usize {
        self.channels
            .first()
            .map(|c| c.op.nrows())
            .or_else(|| self.one_site.as_ref().map(|m| m.nrows()))
            .unwrap_or_else(|| {
                let n = self.two_site.as_ref().map_or(1, |m| m.nrows());
                (n as f64).sqrt().round() as usize
            })
    }

    /// Two-site and single-site terms merged into one two-site operator.
    pub fn local_term(&self) -> Option<Mat> {
        match (&self.two_site, &self.one_site) {
            (None, None) => None,
            (Some(h), None) => Some(h.clone()),
            (None, Some(h1)) => Some(TwoSiteTerm::split_site_term(h1)),
            (Some(h), Some(h1)) => Some(h + &TwoSiteTerm::split_site_term(h1)),
        }
    }
}

/// `(o x)^s = Σ_t o_st x^t`.
fn dress(op: &Mat, x: &[Mat]) -> Vec<Mat> {
    (0..op.nrows())
        .map(|s| {
            let mut acc = Mat::zeros(x[0].dim());
            for (t, m) in x.iter().enumerate() {
                if op[[s, t]] != C64::new(0.0, 0.0) {
                    acc.scaled_add(op[[s, t]], m);
                }
            }
            acc
        })
        .collect()
}

pub fn build_env_lr(
    coupling: &LongRangeCoupling,
    state: &UniformMps,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<Environment> {
    let n = state.cell_size();
    let dim = state.bond_dim();
    let one = identity(dim);
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
    let mut guess = 0;
    let mut ol = Vec::new();
    let mut or = Vec::new();
    for ch in &coupling.channels {
        let yl: Vec<Mat> = (0..n).map(|k| transfer_left_op(&one, &al[k], &al[k], &ch.op)).collect();
        let yr: Vec<Mat> = (0..n)
            .map(|k| transfer_right_op(&one, &ar[(k + 1) % n], &ar[(k + 1) % n], &ch.op))
            .collect();
        let mut ch_l = Vec::new();
        let mut ch_r = Vec::new();
        for &rate in &ch.rates {
            let g = warm.and_then(|w| w.left_guess(guess));
            let sl = left_sum.solve(&yl, rate, None, exact_tol, g)?;
            let g = warm.and_then(|w| w.right_guess(guess));
            let sr = right_sum.solve(&yr, rate, None, exact_tol, g)?;
            guess += 1;
            solves += sl.solves + sr.solves;
            warm_out.left.push(sl.blocks[n - 1].clone());
            warm_out.right.push(sr.blocks[0].clone());
            ch_l.push(sl.blocks);
            ch_r.push(sr.blocks);
        }
        ol.push(ch_l);
        or.push(ch_r);
    }
    let aggregate = |blocks: &Vec<Vec<Mat>>, ch: &Channel| -> Vec<Mat> {
        (0..n)
            .map(|k| {
                let mut acc = Mat::zeros((dim, dim));
                for (w, b) in ch.weights.iter().zip(blocks.iter()) {
                    acc.scaled_add(*w, &b[k]);
                }
                acc
            })
            .collect()
    };
    let ol_sum: Vec<Vec<Mat>> = ol
        .iter()
        .zip(coupling.channels.iter())
        .map(|(b, ch)| aggregate(b, ch))
        .collect();
    let or_sum: Vec<Vec<Mat>> = or
        .iter()
        .zip(coupling.channels.iter())
        .map(|(b, ch)| aggregate(b, ch))
        .collect();
    let local = coupling.local_term();
    let mut yl = vec![Mat::zeros((dim, dim)); n];
    let mut yr = vec![Mat::zeros((dim, dim)); n];
    for (c, ch) in coupling.channels.iter().enumerate() {
        for k in 0..n {
            yl[k] += &transfer_left_op(&ol_sum[c][(k + n - 1) % n], &al[k], &al[k], &ch.op);
            let next = (k + 1) % n;
            yr[k] += &transfer_right_op(&or_sum[c][next], &ar[next], &ar[next], &ch.op);
        }
    }
    if let Some(h) = &local {
        for (y, m) in yl.iter_mut().zip(local_left_terms(h, state)) {
            *y += &m;
        }
        for (y, m) in yr.iter_mut().zip(local_right_terms(h, state)) {
            *y += &m;
        }
    }
    let sums = block_sums(state, &yl, &yr, tol, warm, guess)?;
    solves += sums.solves;
    warm_out.left.extend(sums.warm.left);
    warm_out.right.extend(sums.warm.right);
    let raw = RawEnv {
        blocks: Blocks::LongRange {
            coupling: coupling.clone(),
            local,
            ol,
            or,
            ol_sum,
            or_sum,
            left: sums.left,
            right: sums.right,
        },
        energy: sums.removed_left.re / n as f64,
        energy_right: sums.removed_right.re / n as f64,
        geometric_sums: solves,
        warm: warm_out,
    };
    Ok(Environment::finish(raw, state, tol))
}

struct LrView<'a> {
    coupling: &'a LongRangeCoupling,
    local: &'a Option<Mat>,
    ol: &'a [Vec<Vec<Mat>>],
    or: &'a [Vec<Vec<Mat>>],
    ol_sum: &'a [Vec<Mat>],
    or_sum: &'a [Vec<Mat>],
    left: &'a [Mat],
    right: &'a [Mat],
}

fn view(env: &Environment) -> LrView<'_> {
    match &env.blocks {
        Blocks::LongRange {
            coupling,
            local,
            ol,
            or,
            ol_sum,
            or_sum,
            left,
            right,
        } => LrView {
            coupling,
            local,
            ol,
            or,
            ol_sum,
            or_sum,
            left,
            right,
        },
        _ => unreachable!("long-range apply on another backend"),
    }
}

pub(super) fn apply_hac(env: &Environment, site: usize, x: &MpsTensor) -> MpsTensor {
    let v = view(env);
    let k = site as isize;
    let lb = env.bond(k - 1);
    let mut out: Vec<Mat> = x
        .mats
        .iter()
        .map(|m| v.left[lb].dot(m) + m.dot(&v.right[site]))
        .collect();
    for (c, ch) in v.coupling.channels.iter().enumerate() {
        let ox = dress(&ch.op, &x.mats);
        for (o, m) in out.iter_mut().zip(ox.iter()) {
            *o += &v.ol_sum[c][lb].dot(m);
            *o += &m.dot(&v.or_sum[c][site]);
        }
        for (e, (w, l)) in ch.weights.iter().zip(ch.rates.iter()).enumerate() {
            let f = w * l;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            let left = v.ol[c][e][lb].mapv(|z| z * f);
            for (o, m) in out.iter_mut().zip(x.mats.iter()) {
                *o += &left.dot(m).dot(&v.or[c][e][site]);
            }
        }
    }
    if let Some(h) = v.local {
        let l = left_bridge(env.al(k - 1), h, &x.mats);
        let r = right_bridge(env.ar(k + 1), h, &x.mats);
        for (o, (a, b)) in out.iter_mut().zip(l.iter().zip(r.iter())) {
            *o += a;
            *o += b;
        }
    }
    MpsTensor::new(out)
}

pub(super) fn apply_hc(env: &Environment, bond: usize, c: &Mat) -> Mat {
    let v = view(env);
    let k = bond as isize;
    let mut out = v.left[bond].dot(c) + c.dot(&v.right[bond]);
    for (ci, ch) in v.coupling.channels.iter().enumerate() {
        for (e, w) in ch.weights.iter().enumerate() {
            out += &v.ol[ci][e][bond].mapv(|z| z * w).dot(c).dot(&v.or[ci][e][bond]);
        }
    }
    if let Some(h) = v.local {
        out += &center_bridge(env.al(k), env.ar(k + 1), h, c);
    }
    out
}

pub(super) fn apply_h2c(env: &Environment, bond: usize, x: &TwoSiteTensor) -> TwoSiteTensor {
    let v = view(env);
    let d = x.d;
    let k = bond as isize;
    let lb = env.bond(k - 1);
    let rb = env.bond(k + 1);
    let mut out: Vec<Mat> = x
        .mats
        .iter()
        .map(|m| v.left[lb].dot(m) + m.dot(&v.right[rb]))
        .collect();
    for (c, ch) in v.coupling.channels.iter().enumerate() {
        let o = &ch.op;
        // Dressed copies: first site, second site, both.
        let mut o1 = vec![Mat::zeros(x.mats[0].dim()); d * d];
        let mut o2 = vec![Mat::zeros(x.mats[0].dim()); d * d];
        for s in 0..d {
            for t in 0..d {
                for u in 0..d {
                    if o[[s, u]] != C64::new(0.0, 0.0) {
                        o1[s * d + t].scaled_add(o[[s, u]], x.slice(u, t));
                    }
                    if o[[t, u]] != C64::new(0.0, 0.0) {
                        o2[s * d + t].scaled_add(o[[t, u]], x.slice(s, u));
                    }
                }
            }
        }
        let o12 = {
            let t = TwoSiteTensor { d, mats: o1.clone() };
            let mut acc = vec![Mat::zeros(x.mats[0].dim()); d * d];
            for s in 0..d {
                for tt in 0..d {
                    for u in 0..d {
                        if o[[tt, u]] != C64::new(0.0, 0.0) {
                            acc[s * d + tt].scaled_add(o[[tt, u]], t.slice(s, u));
                        }
                    }
                }
            }
            acc
        };
        let total: C64 = ch.weights.iter().sum();
        let mut l_rate = Mat::zeros((env.bond_dim(), env.bond_dim()));
        let mut r_rate = Mat::zeros((env.bond_dim(), env.bond_dim()));
        for (e, (w, l)) in ch.weights.iter().zip(ch.rates.iter()).enumerate() {
            l_rate.scaled_add(w * l, &v.ol[c][e][lb]);
            r_rate.scaled_add(w * l, &v.or[c][e][rb]);
        }
        for i in 0..d * d {
            out[i] += &v.ol_sum[c][lb].dot(&o1[i]);
            out[i] += &l_rate.dot(&o2[i]);
            out[i] += &o1[i].dot(&r_rate);
            out[i] += &o2[i].dot(&v.or_sum[c][rb]);
            out[i].scaled_add(total, &o12[i]);
        }
        for (e, (w, l)) in ch.weights.iter().zip(ch.rates.iter()).enumerate() {
            let f = w * l * l;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            let left = v.ol[c][e][lb].mapv(|z| z * f);
            for (o, m) in out.iter_mut().zip(x.mats.iter()) {
                *o += &left.dot(m).dot(&v.or[c][e][rb]);
            }
        }
    }
    if let Some(h) = v.local {
        for (o, m) in out.iter_mut().zip(local_two_site(h, x)) {
            *o += &m;
        }
        add_two_site_bridges(&mut out, h, env.al(k - 1), env.ar(k + 2), x);
    }
    TwoSiteTensor { d, mats: out }
}
