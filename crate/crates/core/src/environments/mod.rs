//! Effective Hamiltonians `H_AC`, `H_C` and `H_A2C` for nearest-neighbour,
//! sum-of-exponentials and MPO Hamiltonians.
//!
//! Bond `k` sits to the right of site `k`. A left block on bond `k` collects
//! every term supported on sites `≤ k`, a right block every term on sites
//! `> k`. Blocks are fixed only modulo the identity: the divergent energy is
//! removed so that `(H_L|R) = (L|H_R) = 0`, with `R = C C†`, `L = C† C`.
//!
//! The effective maps subtract their own expectation value in the state the
//! environment was built from. `E_AC = E_C = 0` therefore holds in that state,
//! and the gradient `A_C' − A_L C'` is the same for every backend.

mod cell;
mod fit;
mod long_range;
mod mpo;
mod nn;

pub use fit::{fit_exponentials, ExponentialFit, FitMeta};
pub use long_range::{build_env_lr, Channel, LongRangeCoupling};
pub use mpo::{build_env_mpo, Mpo};
pub use nn::{build_env_nn, TwoSiteTerm};

use thiserror::Error;

use crate::numerics::{
    frobenius, hermiticity_defect, LinearMap, Mat, NumericsError, Vector, C64,
};
use crate::umps::{two_site_center, MpsTensor, TwoSiteTensor, UniformMps};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid long-range coupling: {0}")]
    InvalidCoupling(String),
    #[error("invalid MPO: {0}")]
    InvalidMpo(String),
    #[error("operator is not Hermitian: defect {0:e}")]
    NotHermitian(f64),
    #[error("exponential fit failed: best residual {best_residual:e} with {terms} terms")]
    FitFailure { best_residual: f64, terms: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, EnvError>;

/// Hamiltonian descriptor, one variant per backend.
#[derive(Debug, Clone, PartialEq)]
pub enum Hamiltonian {
    Nn(TwoSiteTerm),
    LongRange(LongRangeCoupling),
    Mpo(Mpo),
}

impl Hamiltonian {
    pub fn phys_dim(&self) -> usize {
        match self {
            Hamiltonian::Nn(h) => h.d,
            Hamiltonian::LongRange(c) => c.phys_dim(),
            Hamiltonian::Mpo(w) => w.d,
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            Hamiltonian::Nn(_) => Backend::Nn,
            Hamiltonian::LongRange(_) => Backend::LongRange,
            Hamiltonian::Mpo(_) => Backend::Mpo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Nn,
    #[serde(rename = "lr")]
    LongRange,
    Mpo,
}

/// Backend payload. Every per-bond vector is indexed by bond.
#[derive(Debug, Clone)]
pub enum Blocks {
    Nn {
        /// `h − e·𝟙`.
        h: Mat,
        /// Two-site term completed on bond `k` from the left (sites `k−1, k`).
        h_left: Vec<Mat>,
        /// Two-site term on sites `k+1, k+2`, seen from bond `k`.
        h_right: Vec<Mat>,
        left: Vec<Mat>,
        right: Vec<Mat>,
    },
    LongRange {
        coupling: LongRangeCoupling,
        /// Local two-site term including folded single-site fields.
        local: Option<Mat>,
        /// `O_L^[k]` per channel, exponential and bond.
        ol: Vec<Vec<Vec<Mat>>>,
        or: Vec<Vec<Vec<Mat>>>,
        /// `Σ_k c_k O_L^[k]` per channel and bond.
        ol_sum: Vec<Vec<Mat>>,
        or_sum: Vec<Vec<Mat>>,
        left: Vec<Mat>,
        right: Vec<Mat>,
    },
    Mpo {
        mpo: Mpo,
        /// `L^[W]_a` per bond and channel.
        left: Vec<Vec<Mat>>,
        right: Vec<Vec<Mat>>,
    },
}

/// Solutions of the cell sums, reusable as initial guesses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub left: Vec<Mat>,
    pub right: Vec<Mat>,
}

impl WarmStart {
    /// Zero-pads every block to `dim × dim`, the embedding used after bond expansion.
    pub fn embed(&self, dim: usize) -> Self {
        let pad = |m: &Mat| {
            let mut out = Mat::zeros((dim, dim));
            let (r, c) = (m.nrows().min(dim), m.ncols().min(dim));
            out.slice_mut(ndarray::s![..r, ..c])
                .assign(&m.slice(ndarray::s![..r, ..c]));
            out
        };
        Self {
            left: self.left.iter().map(pad).collect(),
            right: self.right.iter().map(pad).collect(),
        }
    }

    pub(crate) fn left_guess(&self, i: usize) -> Option<&Mat> {
        self.left.get(i)
    }

    pub(crate) fn right_guess(&self, i: usize) -> Option<&Mat> {
        self.right.get(i)
    }
}

/// Effective-Hamiltonian data for one state snapshot. Immutable after build.
#[derive(Debug, Clone)]
pub struct Environment {
    pub blocks: Blocks,
    /// Energy density from the left blocks.
    pub energy: f64,
    /// Energy density from the right blocks.
    pub energy_right: f64,
    /// Tolerance of the deflated sums.
    pub tol: f64,
    /// Linear solves performed for this environment.
    pub geometric_sums: usize,
    pub warm: WarmStart,
    al: Vec<MpsTensor>,
    ar: Vec<MpsTensor>,
    shift_ac: Vec<f64>,
    shift_c: Vec<f64>,
    shift_2c: Vec<f64>,
}

/// Builds the environment for any backend.
pub fn build_env(
    ham: &Hamiltonian,
    state: &UniformMps,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<Environment> {
    if ham.phys_dim() != state.phys_dim() {
        return Err(EnvError::DimensionMismatch(format!(
            "Hamiltonian acts on d = {}, state has d = {}",
            ham.phys_dim(),
            state.phys_dim()
        )));
    }
    match ham {
        Hamiltonian::Nn(h) => build_env_nn(h, state, tol, warm),
        Hamiltonian::LongRange(c) => build_env_lr(c, state, tol, warm),
        Hamiltonian::Mpo(w) => build_env_mpo(w, state, tol, warm),
    }
}

pub(crate) struct RawEnv {
    pub blocks: Blocks,
    pub energy: f64,
    pub energy_right: f64,
    pub geometric_sums: usize,
    pub warm: WarmStart,
}

impl Environment {
    pub(crate) fn finish(raw: RawEnv, state: &UniformMps, tol: f64) -> Self {
        let n = state.cell_size();
        let mut env = Environment {
            blocks: raw.blocks,
            energy: raw.energy,
            energy_right: raw.energy_right,
            tol,
            geometric_sums: raw.geometric_sums,
            warm: raw.warm,
            al: state.al.clone(),
            ar: state.ar.clone(),
            shift_ac: vec![0.0; n],
            shift_c: vec![0.0; n],
            shift_2c: vec![0.0; n],
        };
        for k in 0..n {
            let ac = &state.ac[k];
            env.shift_ac[k] = ac.inner(&env.raw_hac(k, ac)).re / ac.norm().powi(2);
            let c = &state.c[k];
            env.shift_c[k] = crate::numerics::inner(c, &env.raw_hc(k, c)).re / frobenius(c).powi(2);
            let a2 = two_site_center(state, k);
            let out = env.raw_h2c(k, &a2);
            let num: C64 = a2
                .mats
                .iter()
                .zip(out.mats.iter())
                .map(|(a, b)| crate::numerics::inner(a, b))
                .sum();
            env.shift_2c[k] = num.re / a2.norm().powi(2);
        }
        env
    }

    pub fn cell_size(&self) -> usize {
        self.al.len()
    }

    pub fn phys_dim(&self) -> usize {
        self.al[0].phys()
    }

    pub fn bond_dim(&self) -> usize {
        self.al[0].left_dim()
    }

    pub fn backend(&self) -> Backend {
        match self.blocks {
            Blocks::Nn { .. } => Backend::Nn,
            Blocks::LongRange { .. } => Backend::LongRange,
            Blocks::Mpo { .. } => Backend::Mpo,
        }
    }

    /// Expectation values subtracted from `H_AC(k)`, `H_C(k)` and `H_A2C(k)`.
    pub fn shifts(&self, k: usize) -> (f64, f64, f64) {
        let k = k % self.cell_size();
        (self.shift_ac[k], self.shift_c[k], self.shift_2c[k])
    }

    pub(crate) fn al(&self, k: isize) -> &MpsTensor {
        let n = self.cell_size() as isize;
        &self.al[k.rem_euclid(n) as usize]
    }

    pub(crate) fn ar(&self, k: isize) -> &MpsTensor {
        let n = self.cell_size() as isize;
        &self.ar[k.rem_euclid(n) as usize]
    }

    pub(crate) fn bond(&self, k: isize) -> usize {
        k.rem_euclid(self.cell_size() as isize) as usize
    }

    fn check_tensor(&self, x: &MpsTensor) -> Result<()> {
        let dim = self.bond_dim();
        if x.phys() != self.phys_dim() || x.left_dim() != dim || x.right_dim() != dim {
            return Err(EnvError::DimensionMismatch(format!(
                "tensor {}x{}x{} against environment d = {}, D = {dim}",
                x.left_dim(),
                x.phys(),
                x.right_dim(),
                self.phys_dim()
            )));
        }
        Ok(())
    }

    fn raw_hac(&self, site: usize, x: &MpsTensor) -> MpsTensor {
        match &self.blocks {
            Blocks::Nn { .. } => nn::apply_hac(self, site, x),
            Blocks::LongRange { .. } => long_range::apply_hac(self, site, x),
            Blocks::Mpo { .. } => mpo::apply_hac(self, site, x),
        }
    }

    fn raw_hc(&self, bond: usize, c: &Mat) -> Mat {
        match &self.blocks {
            Blocks::Nn { .. } => nn::apply_hc(self, bond, c),
            Blocks::LongRange { .. } => long_range::apply_hc(self, bond, c),
            Blocks::Mpo { .. } => mpo::apply_hc(self, bond, c),
        }
    }

    fn raw_h2c(&self, bond: usize, x: &TwoSiteTensor) -> TwoSiteTensor {
        match &self.blocks {
            Blocks::Nn { .. } => nn::apply_h2c(self, bond, x),
            Blocks::LongRange { .. } => long_range::apply_h2c(self, bond, x),
            Blocks::Mpo { .. } => mpo::apply_h2c(self, bond, x),
        }
    }

    /// `H_AC(site)` applied to a center-site tensor.
    pub fn apply_hac(&self, site: usize, x: &MpsTensor) -> Result<MpsTensor> {
        self.check_tensor(x)?;
        let site = site % self.cell_size();
        let out = self.raw_hac(site, x);
        Ok(out.sub(&x.scale(C64::new(self.shift_ac[site], 0.0))))
    }

    /// `H_C(bond)` applied to a bond matrix.
    pub fn apply_hc(&self, bond: usize, c: &Mat) -> Result<Mat> {
        let dim = self.bond_dim();
        if c.dim() != (dim, dim) {
            return Err(EnvError::DimensionMismatch(format!(
                "bond matrix {:?} against D = {dim}",
                c.dim()
            )));
        }
        let bond = bond % self.cell_size();
        Ok(self.raw_hc(bond, c) - &c.mapv(|z| z * self.shift_c[bond]))
    }

    /// `H_A2C` on the two sites around `bond`.
    pub fn apply_h2c(&self, bond: usize, x: &TwoSiteTensor) -> Result<TwoSiteTensor> {
        let (d, dim) = (self.phys_dim(), self.bond_dim());
        if x.d != d || x.mats.len() != d * d || x.mats.iter().any(|m| m.dim() != (dim, dim)) {
            return Err(EnvError::DimensionMismatch(
                "two-site tensor does not match the environment".into(),
            ));
        }
        let bond = bond % self.cell_size();
        let out = self.raw_h2c(bond, x);
        let shift = self.shift_2c[bond];
        Ok(TwoSiteTensor {
            d,
            mats: out
                .mats
                .iter()
                .zip(x.mats.iter())
                .map(|(o, a)| o - &a.mapv(|z| z * shift))
                .collect(),
        })
    }

    pub fn hac_map(&self, site: usize) -> EffectiveMap<'_> {
        EffectiveMap {
            env: self,
            index: site % self.cell_size(),
            kind: MapKind::Site,
        }
    }

    pub fn hc_map(&self, bond: usize) -> EffectiveMap<'_> {
        EffectiveMap {
            env: self,
            index: bond % self.cell_size(),
            kind: MapKind::Bond,
        }
    }

    pub fn h2c_map(&self, bond: usize) -> EffectiveMap<'_> {
        EffectiveMap {
            env: self,
            index: bond % self.cell_size(),
            kind: MapKind::TwoSite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MapKind {
    Site,
    Bond,
    TwoSite,
}

/// An effective Hamiltonian as a [`LinearMap`] on flattened tensors.
pub struct EffectiveMap<'a> {
    env: &'a Environment,
    index: usize,
    kind: MapKind,
}

impl LinearMap for EffectiveMap<'_> {
    fn dim_in(&self) -> usize {
        let (d, dim) = (self.env.phys_dim(), self.env.bond_dim());
        match self.kind {
            MapKind::Site => d * dim * dim,
            MapKind::Bond => dim * dim,
            MapKind::TwoSite => d * d * dim * dim,
        }
    }

    fn dim_out(&self) -> usize {
        self.dim_in()
    }

    fn apply(&self, x: &Vector) -> Vector {
        let (d, dim) = (self.env.phys_dim(), self.env.bond_dim());
        match self.kind {
            MapKind::Site => {
                let t = MpsTensor::from_vector(x, d, dim, dim);
                self.env.apply_hac(self.index, &t).unwrap().to_vector()
            }
            MapKind::Bond => {
                let c = crate::numerics::vec_to_mat(x, dim, dim);
                crate::numerics::mat_to_vec(&self.env.apply_hc(self.index, &c).unwrap())
            }
            MapKind::TwoSite => {
                let t = TwoSiteTensor::from_vector(x, d, dim, dim);
                self.env.apply_h2c(self.index, &t).unwrap().to_vector()
            }
        }
    }
}

/// Largest Hermiticity defect of the three effective maps of a cell.
pub fn max_hermiticity_defect(env: &Environment, seed: u64) -> f64 {
    (0..env.cell_size())
        .flat_map(|k| {
            [
                hermiticity_defect(&env.hac_map(k), seed + 3 * k as u64),
                hermiticity_defect(&env.hc_map(k), seed + 3 * k as u64 + 1),
                hermiticity_defect(&env.h2c_map(k), seed + 3 * k as u64 + 2),
            ]
        })
        .fold(0.0, f64::max)
}

/// Unit-trace bond densities `L(k) = C†C` and `R(k) = C C†`.
pub(crate) fn densities(state: &UniformMps) -> (Vec<Mat>, Vec<Mat>) {
    let n = state.cell_size();
    let l = (0..n).map(|k| cell::unit_trace(&state.left_density(k))).collect();
    let r = (0..n).map(|k| cell::unit_trace(&state.right_density(k))).collect();
    (l, r)
}
