//! Uniform matrix product states in mixed canonical form.
//!
//! A unit cell of `N` sites holds, for every site `k`, a left-isometric
//! tensor `A_L(k)`, a right-isometric tensor `A_R(k)`, the center tensor
//! `A_C(k)`, and the bond matrix `C(k)` sitting on the bond to the right of
//! site `k`. Consistency means `A_C(k) = A_L(k) C(k) = C(k-1) A_R(k)`.
//!
//! Environments follow one convention throughout the crate: a left
//! environment `X` has bra indices on its rows and ket indices on its columns
//! and is transported by `X -> sum_s A^s† X A^s`; a right environment `Y` is
//! transported by `Y -> sum_s A^s Y A^s†`; they pair through `Tr(X Y)`.

mod canonical;
mod factorize;
mod io;
mod observe;
mod tensor;

pub use canonical::{
    canonicalize, fidelity, random_tensors, random_umps, transfer_fixed_points, FixedPoints,
};
pub use factorize::{min_ac_factorize, FactorizeMode, Factorization};
pub use io::{decode_state, encode_state, read_state, write_state, STATE_MAGIC, STATE_VERSION};
pub use observe::{expval_local, schmidt_data, two_site_center, SchmidtData, TwoSiteTensor};
pub use tensor::{
    transfer_left, transfer_left_op, transfer_right, transfer_right_op, MpsTensor, TransferOperator,
};

use thiserror::Error;

use crate::numerics::{dagger, frobenius, identity, Mat, NumericsError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum UmpsError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("state is not injective (subleading transfer eigenvalue {magnitude})")]
    NonInjective { magnitude: f64 },
    #[error("center tensor vanishes; cannot extract isometries")]
    DegenerateCenter,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed state data: {0}")]
    Format(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, UmpsError>;

/// Mixed-canonical uniform MPS over an `N`-site unit cell with uniform bond
/// dimension. Values are immutable snapshots; updates build new states.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformMps {
    pub al: Vec<MpsTensor>,
    pub ar: Vec<MpsTensor>,
    pub c: Vec<Mat>,
    pub ac: Vec<MpsTensor>,
}

/// Largest violations of the gauge conditions over the unit cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeResiduals {
    /// `‖Σ A_L† A_L − 1‖`
    pub left_isometry: f64,
    /// `‖Σ A_R A_R† − 1‖`
    pub right_isometry: f64,
    /// `‖A_C − A_L C‖`
    pub center_left: f64,
    /// `‖A_C − C A_R‖`
    pub center_right: f64,
    /// `|‖C‖ − 1|`
    pub bond_norm: f64,
}

impl GaugeResiduals {
    pub fn max(&self) -> f64 {
        [
            self.left_isometry,
            self.right_isometry,
            self.center_left,
            self.center_right,
            self.bond_norm,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl UniformMps {
    pub fn new(al: Vec<MpsTensor>, ar: Vec<MpsTensor>, c: Vec<Mat>, ac: Vec<MpsTensor>) -> Result<Self> {
        let n = al.len();
        if n == 0 || ar.len() != n || c.len() != n || ac.len() != n {
            return Err(UmpsError::DimensionMismatch("unit cell lengths differ".into()));
        }
        let d = al[0].phys();
        let dim = al[0].left_dim();
        for k in 0..n {
            for t in [&al[k], &ar[k], &ac[k]] {
                if t.phys() != d || t.left_dim() != dim || t.right_dim() != dim {
                    return Err(UmpsError::DimensionMismatch(format!(
                        "site {k}: tensor {}x{}x{}, expected {dim}x{d}x{dim}",
                        t.left_dim(),
                        t.phys(),
                        t.right_dim()
                    )));
                }
            }
            if c[k].dim() != (dim, dim) {
                return Err(UmpsError::DimensionMismatch(format!("bond {k}")));
            }
        }
        Ok(Self { al, ar, c, ac })
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

    /// Site index reduced into the unit cell.
    pub fn site(&self, k: isize) -> usize {
        k.rem_euclid(self.cell_size() as isize) as usize
    }

    /// Bond matrix to the left of site `k`.
    pub fn c_left(&self, k: usize) -> &Mat {
        &self.c[self.site(k as isize - 1)]
    }

    /// Left reduced density matrix `C† C` at bond `k`.
    pub fn left_density(&self, k: usize) -> Mat {
        dagger(&self.c[k]).dot(&self.c[k])
    }

    /// Right reduced density matrix `C C†` at bond `k`.
    pub fn right_density(&self, k: usize) -> Mat {
        self.c[k].dot(&dagger(&self.c[k]))
    }

    /// Per-site `(‖A_C − A_L C‖, ‖A_C − C A_R‖)`.
    pub fn center_errors(&self) -> Vec<(f64, f64)> {
        (0..self.cell_size())
            .map(|k| {
                let left = self.ac[k].sub(&self.al[k].mul_right(&self.c[k])).norm();
                let right = self.ac[k].sub(&self.ar[k].mul_left(self.c_left(k))).norm();
                (left, right)
            })
            .collect()
    }

    pub fn gauge_residuals(&self) -> GaugeResiduals {
        let dim = self.bond_dim();
        let one = identity(dim);
        let mut g = GaugeResiduals {
            left_isometry: 0.0,
            right_isometry: 0.0,
            center_left: 0.0,
            center_right: 0.0,
            bond_norm: 0.0,
        };
        for (k, (el, er)) in self.center_errors().into_iter().enumerate() {
            g.left_isometry = g
                .left_isometry
                .max(frobenius(&(transfer_left(&one, &self.al[k], &self.al[k]) - &one)));
            g.right_isometry = g
                .right_isometry
                .max(frobenius(&(transfer_right(&one, &self.ar[k], &self.ar[k]) - &one)));
            g.center_left = g.center_left.max(el);
            g.center_right = g.center_right.max(er);
            g.bond_norm = g.bond_norm.max((frobenius(&self.c[k]) - 1.0).abs());
        }
        g
    }
}
