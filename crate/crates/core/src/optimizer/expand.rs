use ndarray::s;

use crate::environments::Environment;
use crate::numerics::{dagger, svd, Mat};
use crate::umps::{two_site_center, MpsTensor, UniformMps};

use super::measures::{doubly_projected, null_projectors};
use super::{OptimizerError, Result};

/// Relative singular-value gap below which two values count as one multiplet.
pub const MULTIPLET_GAP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Expansion {
    pub state: UniformMps,
    /// Bond dimension actually added.
    pub added: usize,
    /// The request exceeded the null-space rank `(d−1)D` or the guard shrank it.
    pub clipped: bool,
    /// Singular values of the doubly projected tensor per bond.
    pub projected_spectra: Vec<Vec<f64>>,
}

/// Largest `k ≤ want` such that `values[k−1]` and `values[k]` are not
/// within [`MULTIPLET_GAP`] of each other. Exact zeros never form a multiplet.
pub fn guard_multiplets(values: &[f64], want: usize) -> usize {
    let mut k = want.min(values.len());
    while k > 0 && k < values.len() {
        let (a, b) = (values[k - 1], values[k]);
        if a <= 1e-14 || (a - b) / a >= MULTIPLET_GAP {
            break;
        }
        k -= 1;
    }
    k
}

fn pad(m: &Mat, rows: usize, cols: usize) -> Mat {
    let mut out = Mat::zeros((rows, cols));
    out.slice_mut(s![..m.nrows(), ..m.ncols()]).assign(m);
    out
}

/// Enlarges every bond by `delta` along the dominant directions of the
/// doubly projected `H_A2C A_2C`. The represented state is unchanged: the
/// bond matrices are zero-padded and the new isometry columns (rows) are
/// orthogonal to the old ones.
pub fn expand_bond(
    state: &UniformMps,
    env: &Environment,
    delta: usize,
    guard: bool,
) -> Result<Expansion> {
    if delta == 0 {
        return Err(OptimizerError::InvalidInput("bond expansion by zero".into()));
    }
    let (n, d, dim) = (state.cell_size(), state.phys_dim(), state.bond_dim());
    let rank = (d - 1) * dim;
    let mut added = delta.min(rank);
    let mut clipped = added < delta;

    let mut directions = Vec::with_capacity(n);
    let mut spectra = Vec::with_capacity(n);
    for k in 0..n {
        let image = env.apply_h2c(k, &two_site_center(state, k))?;
        let dec = svd(&doubly_projected(state, k, &image)?)?;
        spectra.push(dec.s.to_vec());
        directions.push(dec);
    }
    if guard {
        for values in &spectra {
            let g = guard_multiplets(values, added);
            if g < added {
                added = g;
                clipped = true;
            }
        }
        if added == 0 {
            return Ok(Expansion {
                state: state.clone(),
                added: 0,
                clipped: true,
                projected_spectra: spectra,
            });
        }
    }

    let big = dim + added;
    let mut al = Vec::with_capacity(n);
    let mut ar = vec![MpsTensor::zeros(d, big, big); n];
    for k in 0..n {
        let (nl, nr) = null_projectors(state, k)?;
        let u = directions[k].u.slice(s![.., ..added]).to_owned();
        let vd = dagger(&directions[k].v.slice(s![.., ..added]).to_owned());
        let new_cols = nl.dot(&u);
        let new_rows = vd.dot(&dagger(&nr));
        let mats_l = (0..d)
            .map(|sidx| {
                let mut m = pad(&state.al[k].mats[sidx], big, big);
                m.slice_mut(s![..dim, dim..])
                    .assign(&new_cols.slice(s![sidx * dim..(sidx + 1) * dim, ..]));
                m
            })
            .collect();
        al.push(MpsTensor::new(mats_l));
        let next = (k + 1) % n;
        let mats_r = (0..d)
            .map(|sidx| {
                let mut m = pad(&state.ar[next].mats[sidx], big, big);
                m.slice_mut(s![dim.., ..dim])
                    .assign(&new_rows.slice(s![.., sidx * dim..(sidx + 1) * dim]));
                m
            })
            .collect();
        ar[next] = MpsTensor::new(mats_r);
    }
    let c = state.c.iter().map(|m| pad(m, big, big)).collect();
    let ac = state
        .ac
        .iter()
        .map(|t| MpsTensor::new(t.mats.iter().map(|m| pad(m, big, big)).collect()))
        .collect();
    Ok(Expansion {
        state: UniformMps::new(al, ar, c, ac)?,
        added,
        clipped,
        projected_spectra: spectra,
    })
}
