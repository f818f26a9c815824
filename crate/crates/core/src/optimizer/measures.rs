use crate::environments::{Environment, TwoSiteTerm};
use crate::numerics::{
    dagger, eigsh_extremal, frobenius, null_complement, svd, EigOptions, Mat, ZERO,
};
use crate::umps::{two_site_center, MpsTensor, TwoSiteTensor, UniformMps};

use super::{OptimizerError, Result};

/// Gradient in the left gauge, one tensor per site.
#[derive(Debug, Clone)]
pub struct Gradient {
    /// `B^s = A_C′^s − A_L^s C′`
    pub tensors: Vec<MpsTensor>,
    /// Per-site norms through the null space of `A_L`.
    pub norms: Vec<f64>,
    /// Norm of the concatenation over the cell.
    pub norm: f64,
}

fn check_env(state: &UniformMps, env: &Environment) -> Result<()> {
    if env.cell_size() != state.cell_size()
        || env.bond_dim() != state.bond_dim()
        || env.phys_dim() != state.phys_dim()
    {
        return Err(OptimizerError::InvalidInput(
            "environment was built for a different state shape".into(),
        ));
    }
    Ok(())
}

/// The center tensor is taken as `A_L C`, so the direct and null-space
/// routes describe the same tangent vector even when the stored `A_C` is
/// only consistent to the current precision.
pub fn gradient(state: &UniformMps, env: &Environment) -> Result<Gradient> {
    check_env(state, env)?;
    let mut tensors = Vec::with_capacity(state.cell_size());
    let mut norms = Vec::with_capacity(state.cell_size());
    for k in 0..state.cell_size() {
        let ac = state.al[k].mul_right(&state.c[k]);
        let acp = env.apply_hac(k, &ac)?;
        let cp = env.apply_hc(k, &state.c[k])?;
        let nl = null_complement(&state.al[k].left_matrix())?;
        norms.push(frobenius(&dagger(&nl).dot(&acp.left_matrix())));
        tensors.push(acp.sub(&state.al[k].mul_right(&cp)));
    }
    let norm = norms.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(Gradient {
        tensors,
        norms,
        norm,
    })
}

/// `‖A_C′ − A_L C′‖` over the cell without the null-space projection.
pub fn gradient_direct(state: &UniformMps, env: &Environment) -> Result<f64> {
    Ok(gradient(state, env)?
        .tensors
        .iter()
        .map(|b| b.norm().powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Residuals of the fixed-point equations, `3N` numbers for an `N`-site cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResiduals {
    /// `‖H_AC A_C − E_AC A_C‖` per site, `E_AC` the Rayleigh quotient.
    pub r_ac: Vec<f64>,
    /// `‖H_C C − E_C C‖` per bond.
    pub r_c: Vec<f64>,
    /// `max(‖A_C − A_L C‖, ‖A_C − C A_R‖)` per site.
    pub r_gauge: Vec<f64>,
}

impl FixedPointResiduals {
    pub fn max(&self) -> f64 {
        self.r_ac
            .iter()
            .chain(&self.r_c)
            .chain(&self.r_gauge)
            .fold(0.0, |a, &b| a.max(b))
    }
}

pub fn fixed_point_residuals(state: &UniformMps, env: &Environment) -> Result<FixedPointResiduals> {
    check_env(state, env)?;
    let n = state.cell_size();
    let mut r_ac = Vec::with_capacity(n);
    let mut r_c = Vec::with_capacity(n);
    for k in 0..n {
        let ac = &state.ac[k];
        let hac = env.apply_hac(k, ac)?;
        let e = ac.inner(&hac) / ac.inner(ac);
        r_ac.push(hac.sub(&ac.scale(e)).norm());
        let c = &state.c[k];
        let hc = env.apply_hc(k, c)?;
        let e = crate::numerics::inner(c, &hc) / crate::numerics::inner(c, c);
        r_c.push(frobenius(&(hc - c.mapv(|z| z * e))));
    }
    let r_gauge = state
        .center_errors()
        .into_iter()
        .map(|(l, r)| l.max(r))
        .collect();
    Ok(FixedPointResiduals { r_ac, r_c, r_gauge })
}

/// Isometric complements `N_L` (`dD × (d−1)D`, columns) of `A_L(k)` and
/// `N_R†` (`dD × (d−1)D`, columns) of `A_R(k+1)`.
pub(crate) fn null_projectors(state: &UniformMps, bond: usize) -> Result<(Mat, Mat)> {
    let n = state.cell_size();
    let k = bond % n;
    let nl = null_complement(&state.al[k].left_matrix())?;
    let nr = null_complement(&dagger(&state.ar[(k + 1) % n].right_matrix()))?;
    Ok((nl, nr))
}

/// `Σ (N_L^s)† X^{st} (N_R^t)†` as a `(d−1)D × (d−1)D` matrix.
pub(crate) fn doubly_projected(state: &UniformMps, bond: usize, x: &TwoSiteTensor) -> Result<Mat> {
    let (nl, nr) = null_projectors(state, bond)?;
    Ok(dagger(&nl).dot(&x.matrix()).dot(&nr))
}

/// Squared norm of the doubly projected one-step image `H_A2C A_2C`.
pub fn two_site_variance(state: &UniformMps, env: &Environment, bond: usize) -> Result<f64> {
    check_env(state, env)?;
    let a2 = two_site_center(state, bond);
    let image = env.apply_h2c(bond % state.cell_size(), &a2)?;
    Ok(frobenius(&doubly_projected(state, bond, &image)?).powi(2))
}

/// Nearest-neighbour form: only the local term acting on the two-site
/// center survives the projection.
pub fn two_site_variance_local(state: &UniformMps, h: &TwoSiteTerm, bond: usize) -> Result<f64> {
    let a2 = two_site_center(state, bond);
    let dd = h.d * h.d;
    let (dl, dr) = a2.mats[0].dim();
    let mats = (0..dd)
        .map(|st| {
            let mut out = Mat::zeros((dl, dr));
            for (uv, m) in a2.mats.iter().enumerate() {
                let w = h.h[[st, uv]];
                if w != ZERO {
                    out.scaled_add(w, m);
                }
            }
            out
        })
        .collect();
    let image = TwoSiteTensor { d: h.d, mats };
    Ok(frobenius(&doubly_projected(state, bond, &image)?).powi(2))
}

/// Discarded weight `Σ_{i≥D} S_i²` of the normalized two-site ground state
/// on `bond` when truncated back to the current bond dimension.
pub fn truncation_error(
    state: &UniformMps,
    env: &Environment,
    bond: usize,
    tol: f64,
) -> Result<f64> {
    check_env(state, env)?;
    let k = bond % state.cell_size();
    let guess = two_site_center(state, k);
    let map = env.h2c_map(k);
    let opts = EigOptions {
        max_matvecs: 20_000,
        ..EigOptions::default()
    };
    let pair = eigsh_extremal(&map, &guess.to_vector(), tol, &opts).map_err(|source| {
        OptimizerError::Eigensolver {
            iteration: 0,
            problem: "two-site",
            index: k,
            source,
        }
    })?;
    let dim = state.bond_dim();
    let ground = TwoSiteTensor::from_vector(&pair.vector, state.phys_dim(), dim, dim);
    let s = svd(&ground.matrix())?.s;
    let total: f64 = s.iter().map(|x| x * x).sum();
    let discarded: f64 = s.iter().skip(dim).map(|x| x * x).sum();
    Ok(discarded / total)
}
