use ndarray::Array2;

use crate::numerics::{Mat, C64, ONE, ZERO};

fn real(n: usize, f: impl Fn(usize, usize) -> f64) -> Mat {
    Array2::from_shape_fn((n, n), |(i, j)| C64::new(f(i, j), 0.0))
}

/// Pauli `X`, `Y`, `Z`.
pub fn pauli() -> (Mat, Mat, Mat) {
    let x = Array2::from_shape_vec((2, 2), vec![ZERO, ONE, ONE, ZERO]).unwrap();
    let i = C64::new(0.0, 1.0);
    let y = Array2::from_shape_vec((2, 2), vec![ZERO, -i, i, ZERO]).unwrap();
    let z = Array2::from_shape_vec((2, 2), vec![ONE, ZERO, ZERO, -ONE]).unwrap();
    (x, y, z)
}

/// Spin-`S` generators `(S^x, S^y, S^z)` for `two_s = 2S`, basis ordered by
/// `m = S, S−1, …, −S`.
pub fn spin_matrices(two_s: usize) -> (Mat, Mat, Mat) {
    let d = two_s + 1;
    let s = two_s as f64 / 2.0;
    let m = |i: usize| s - i as f64;
    // S^+ |m⟩ = sqrt(S(S+1) − m(m+1)) |m+1⟩, and |m+1⟩ sits at index i−1.
    let plus = real(d, |r, c| {
        if c == r + 1 {
            (s * (s + 1.0) - m(c) * (m(c) + 1.0)).sqrt()
        } else {
            0.0
        }
    });
    let minus = plus.t().to_owned();
    let x = (&plus + &minus).mapv(|z| z * 0.5);
    let y = (&plus - &minus).mapv(|z| z * C64::new(0.0, -0.5));
    let z = real(d, |r, c| if r == c { m(r) } else { 0.0 });
    (x, y, z)
}

/// Site operators of spinful fermions in the basis `{0, ↑, ↓, ↑↓}` with the
/// Jordan-Wigner order `↑` before `↓`.
pub struct FermionOps {
    /// Annihilators including the on-site string: `c_↓ = (−1)^{n_↑} a_↓`.
    pub c_up: Mat,
    pub c_dn: Mat,
    /// Parity `(−1)^{n_↑ + n_↓}`.
    pub parity: Mat,
    pub n_up: Mat,
    pub n_dn: Mat,
}

pub fn fermion_ops() -> FermionOps {
    let mut c_up = Mat::zeros((4, 4));
    c_up[[0, 1]] = ONE;
    c_up[[2, 3]] = ONE;
    let mut c_dn = Mat::zeros((4, 4));
    c_dn[[0, 2]] = ONE;
    c_dn[[1, 3]] = -ONE;
    let parity = real(4, |r, c| {
        if r != c {
            0.0
        } else if r == 1 || r == 2 {
            -1.0
        } else {
            1.0
        }
    });
    let n_up = real(4, |r, c| if r == c && (r == 1 || r == 3) { 1.0 } else { 0.0 });
    let n_dn = real(4, |r, c| if r == c && (r == 2 || r == 3) { 1.0 } else { 0.0 });
    FermionOps {
        c_up,
        c_dn,
        parity,
        n_up,
        n_dn,
    }
}
