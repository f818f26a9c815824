//! Variational ground-state search for one-dimensional quantum lattice
//! Hamiltonians directly in the thermodynamic limit.
//!
//! The state is a uniform matrix product state kept in mixed canonical form.
//! Each iteration solves two small effective eigenvalue problems per unit-cell
//! site and rebuilds the isometric tensors from their solutions.
//!
//! Modules, bottom-up:
//! - [`numerics`]: dense decompositions and Krylov solvers.
//! - [`umps`]: state representation, gauges, transfer operators, observables.
//! - [`environments`]: effective Hamiltonians for nearest-neighbour,
//!   sum-of-exponentials and MPO Hamiltonians.
//! - [`optimizer`]: the drivers, error measures and bond expansion.
//! - [`models`]: the model catalogue and reference energies.
//! - [`cli`]: run configuration, telemetry, checkpoints and extrapolation.

extern crate blas_src;

pub mod cli;
pub mod environments;
pub mod models;
pub mod numerics;
pub mod optimizer;
pub mod umps;

pub use numerics::{Mat, Vector, C64};
