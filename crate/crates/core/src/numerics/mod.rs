//! Dense decompositions and matrix-free Krylov solvers.
//!
//! Matrices are `ndarray` arrays of `Complex64` in row-major layout. Vectors
//! handed to Krylov routines are flattened matrices in the same layout.
//! All tolerances are relative to the norm of the relevant input.

mod dense;
mod geometric;
mod krylov;

pub use dense::{
    dagger, ensure_finite, frobenius, identity, inner, null_complement, pair, polar_decompose,
    qr_positive, svd, Polar, Qr, Svd,
};
pub use geometric::{geometric_sum, Side};
pub use krylov::{
    eig_dominant, eigsh_extremal, hermiticity_defect, solve_linear, DominantEig, EigOptions, EigPair, LinearMap,
    MatrixMap, SolveOptions, SumState,
};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type Mat = Array2<C64>;
pub type Vector = Array1<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("decomposition of a {rows}x{cols} matrix failed")]
    DecompositionFailure { rows: usize, cols: usize },
    #[error("non-finite entry in a {rows}x{cols} matrix")]
    NonFinite { rows: usize, cols: usize },
    #[error("matrix is rank deficient: smallest singular value {sigma:e}")]
    RankDeficient { sigma: f64 },
    #[error("no convergence after {iterations} iterations, residual {residual:e}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("transfer operator is not injective: subleading eigenvalue magnitude {magnitude}")]
    NonInjective { magnitude: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Row-major flattening of a matrix.
pub fn mat_to_vec(m: &Mat) -> Vector {
    Array1::from_iter(m.iter().cloned())
}

/// Inverse of [`mat_to_vec`].
pub fn vec_to_mat(v: &Vector, rows: usize, cols: usize) -> Mat {
    Array2::from_shape_vec((rows, cols), v.to_vec()).expect("length matches shape")
}
