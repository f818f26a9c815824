use crate::environments::{
    fit_exponentials, Channel, EnvError, LongRangeCoupling, Mpo, TwoSiteTerm,
};
use crate::numerics::{dagger, identity, svd, Mat, C64};

use super::operators::{fermion_ops, pauli, spin_matrices};
use super::{ModelError, Result};

fn scaled(m: &Mat, x: f64) -> Mat {
    m.mapv(|z| z * x)
}

/// `H = −Σ X_j X_{j+1} − h Σ Z_j` with Pauli matrices. The field is split
/// symmetrically over the two sites of each bond.
pub fn build_tfi(h: f64) -> Result<(TwoSiteTerm, Mpo)> {
    let (x, _, z) = pauli();
    let term = scaled(&TwoSiteTerm::product(&x, &x), -1.0)
        + scaled(&TwoSiteTerm::split_site_term(&z), -h);
    let (mpo, _) = build_lr_tfi(1.0, h, 0.0)?;
    Ok((TwoSiteTerm::new(term, 2)?, mpo))
}

/// `h = X⊗X + Y⊗Y + Δ Z⊗Z` with spin-`S` generators, `two_s = 2S`.
pub fn build_xxz(two_s: usize, delta: f64) -> Result<TwoSiteTerm> {
    xxz_term(two_s, 1.0, delta)
}

/// The XXZ bond after rotating every second spin by π about `z`:
/// `−X⊗X − Y⊗Y + Δ Z⊗Z`. Same spectrum on bipartite chains, and the
/// antiferromagnetic order becomes uniform.
pub fn build_xxz_rotated(two_s: usize, delta: f64) -> Result<TwoSiteTerm> {
    xxz_term(two_s, -1.0, delta)
}

fn xxz_term(two_s: usize, planar: f64, delta: f64) -> Result<TwoSiteTerm> {
    if two_s == 0 {
        return Err(ModelError::InvalidParameter("spin must be positive".into()));
    }
    let (x, y, z) = spin_matrices(two_s);
    let h = scaled(
        &(TwoSiteTerm::product(&x, &x) + TwoSiteTerm::product(&y, &y)),
        planar,
    ) + scaled(&TwoSiteTerm::product(&z, &z), delta);
    Ok(TwoSiteTerm::new(h, two_s + 1)?)
}

/// Hubbard chain `−t Σ (c†_j c_{j+1} + h.c.) + U Σ (n_↑ − ½)(n_↓ − ½)` as an
/// MPO with `d_W = 6`. Channels 1–4 carry a fermion between neighbours; the
/// parity string of the left site makes the Jordan-Wigner signs exact.
pub fn build_hubbard(t: f64, u: f64) -> Result<Mpo> {
    let f = fermion_ops();
    let one = identity(4);
    let half = scaled(&one, 0.5);
    let onsite = scaled(&(&f.n_up - &half).dot(&(&f.n_dn - &half)), u);
    let cd_up = dagger(&f.c_up);
    let cd_dn = dagger(&f.c_dn);
    // c†_j c_{j+1} = (c†_j P_j) ⊗ c_{j+1};  c†_{j+1} c_j = (P_j c_j) ⊗ c†_{j+1}.
    let starts = [
        cd_up.dot(&f.parity),
        cd_dn.dot(&f.parity),
        f.parity.dot(&f.c_up),
        f.parity.dot(&f.c_dn),
    ];
    let finishes = [f.c_up.clone(), f.c_dn.clone(), cd_up, cd_dn];
    let dw = 6;
    let mut blocks = vec![vec![None; dw]; dw];
    blocks[0][0] = Some(one.clone());
    blocks[dw - 1][dw - 1] = Some(one);
    blocks[dw - 1][0] = Some(onsite);
    for ch in 0..4 {
        blocks[dw - 1][ch + 1] = Some(scaled(&starts[ch], -t));
        blocks[ch + 1][0] = Some(finishes[ch].clone());
    }
    Ok(Mpo::new(4, blocks)?)
}

/// Fit of `f(n) = n^{−2}` used by the Haldane-Shastry chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub max_terms: usize,
    pub window: usize,
    pub target: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            max_terms: 20,
            window: 1000,
            target: 1e-6,
        }
    }
}

/// `H = Σ_j Σ_{n>0} n^{−2} S_j·S_{j+n}` with spin-½ generators; one channel
/// per generator, all sharing one exponential fit.
pub fn build_haldane_shastry(fit: FitSettings) -> Result<LongRangeCoupling> {
    let samples: Vec<f64> = (1..=fit.window).map(|n| 1.0 / (n as f64).powi(2)).collect();
    let exp = fit_exponentials(&samples, fit.max_terms, fit.target)?;
    let (x, y, z) = spin_matrices(1);
    let channels = [x, y, z]
        .into_iter()
        .map(|op| Channel {
            op,
            weights: exp.weights.clone(),
            rates: exp.rates.clone(),
        })
        .collect();
    Ok(LongRangeCoupling::new(channels, None, None, Some(exp.meta(fit.window)))?)
}

/// `H = −J Σ_j Σ_{n>0} λ^{n−1} X_j X_{j+n} − h Σ Z_j` with Pauli matrices as
/// the three-channel MPO and as a single exact exponential.
pub fn build_lr_tfi(j: f64, h: f64, lambda: f64) -> Result<(Mpo, LongRangeCoupling)> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(ModelError::InvalidParameter(format!(
            "decay λ = {lambda} outside [0, 1)"
        )));
    }
    let (x, _, z) = pauli();
    let one = identity(2);
    let blocks = vec![
        vec![Some(one.clone()), None, None],
        vec![Some(scaled(&x, -j)), Some(scaled(&one, lambda)), None],
        vec![Some(scaled(&z, -h)), Some(x.clone()), Some(one)],
    ];
    let mpo = Mpo::new(2, blocks)?;
    let coupling = LongRangeCoupling::new(
        vec![Channel {
            op: x,
            weights: vec![C64::new(-j, 0.0)],
            rates: vec![C64::new(lambda, 0.0)],
        }],
        None,
        Some(scaled(&z, -h)),
        None,
    )?;
    Ok((mpo, coupling))
}

/// Exact MPO of a nearest-neighbour term from the operator Schmidt
/// decomposition `h = Σ_k A_k ⊗ B_k`; `d_W = 2 + rank`.
pub fn two_site_to_mpo(term: &TwoSiteTerm) -> Result<Mpo> {
    let d = term.d;
    // Rows (s1 t1), columns (s2 t2) of h[(s1 s2),(t1 t2)].
    let mut reshaped = Mat::zeros((d * d, d * d));
    for s1 in 0..d {
        for s2 in 0..d {
            for t1 in 0..d {
                for t2 in 0..d {
                    reshaped[[s1 * d + t1, s2 * d + t2]] = term.h[[s1 * d + s2, t1 * d + t2]];
                }
            }
        }
    }
    let dec = svd(&reshaped)?;
    let cutoff = 1e-14 * dec.s[0].max(1e-300);
    let rank = dec.s.iter().filter(|&&s| s > cutoff).count();
    let dw = rank + 2;
    let mut blocks = vec![vec![None; dw]; dw];
    blocks[0][0] = Some(identity(d));
    blocks[dw - 1][dw - 1] = Some(identity(d));
    for k in 0..rank {
        let a = Mat::from_shape_fn((d, d), |(s, t)| dec.u[[s * d + t, k]] * dec.s[k]);
        let b = Mat::from_shape_fn((d, d), |(s, t)| dec.v[[s * d + t, k]].conj());
        blocks[dw - 1][k + 1] = Some(a);
        blocks[k + 1][0] = Some(b);
    }
    Ok(Mpo::new(d, blocks)?)
}

/// MPO of a sum-of-exponentials coupling: one channel per exponential,
/// carrying `o` with diagonal weight `λ_k`.
pub fn lr_to_mpo(coupling: &LongRangeCoupling) -> Result<Mpo> {
    let d = coupling.phys_dim();
    let local_mpo = match &coupling.two_site {
        Some(h) => Some(two_site_to_mpo(&TwoSiteTerm::new(h.clone(), d)?)?),
        None => None,
    };
    let exps: usize = coupling.channels.iter().map(|c| c.rates.len()).sum();
    let local_rank = local_mpo.as_ref().map_or(0, |m| m.dw - 2);
    let dw = exps + local_rank + 2;
    let mut blocks = vec![vec![None; dw]; dw];
    blocks[0][0] = Some(identity(d));
    blocks[dw - 1][dw - 1] = Some(identity(d));
    blocks[dw - 1][0] = coupling.one_site.clone();
    let mut idx = 1;
    for ch in &coupling.channels {
        for (c, l) in ch.weights.iter().zip(&ch.rates) {
            blocks[dw - 1][idx] = Some(ch.op.clone());
            blocks[idx][idx] = Some(identity(d).mapv(|z| z * l));
            blocks[idx][0] = Some(ch.op.mapv(|z| z * c));
            idx += 1;
        }
    }
    if let Some(m) = local_mpo {
        for k in 1..=local_rank {
            blocks[dw - 1][idx] = m.block(m.dw - 1, k).cloned();
            blocks[idx][0] = m.block(k, 0).cloned();
            idx += 1;
        }
    }
    Mpo::new(d, blocks).map_err(ModelError::from)
}

impl From<EnvError> for ModelError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::FitFailure {
                best_residual,
                terms,
            } => ModelError::FitFailure {
                best_residual,
                terms,
            },
            other => ModelError::Env(other),
        }
    }
}

