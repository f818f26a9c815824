use super::krylov::{eig_dominant, solve_linear, EigOptions, MatrixMap, SolveOptions, SumState};
use super::{frobenius, mat_to_vec, pair, Mat, NumericsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Deflated geometric sum of a transfer operator with dominant eigenvalue 1.
///
/// Left: solves `y (1 − T + |fp_right)(fp_left|) = x − (x|fp_right)(fp_left|`.
/// Right: solves `(1 − T + |fp_right)(fp_left|) y = x − |fp_right)(fp_left|x)`.
/// `transfer` applies `T` from the given side and `(fp_left|fp_right) = 1`.
/// The solution has no component along the dominant pair.
pub fn geometric_sum(
    x: &Mat,
    transfer: &(dyn Fn(&Mat) -> Mat + Sync),
    side: Side,
    fp_left: &Mat,
    fp_right: &Mat,
    tol: f64,
    guess: Option<&Mat>,
) -> Result<SumState> {
    let (rows, cols) = x.dim();
    let projected = match side {
        Side::Left => x - &fp_left.mapv(|z| z * pair(x, fp_right)),
        Side::Right => x - &fp_right.mapv(|z| z * pair(fp_left, x)),
    };
    let op = MatrixMap::new(rows, cols, |y: &Mat| match side {
        Side::Left => y - &transfer(y) + fp_left.mapv(|z| z * pair(y, fp_right)),
        Side::Right => y - &transfer(y) + fp_right.mapv(|z| z * pair(fp_left, y)),
    });
    let guess = guess.filter(|g| g.dim() == x.dim()).map(mat_to_vec);
    // The right-hand side can be tiny compared to x; tolerance is relative to x.
    let pn = frobenius(&projected);
    let rel = if pn > 0.0 {
        (tol * frobenius(x) / pn).min(1.0)
    } else {
        tol
    };
    match solve_linear(&op, &mat_to_vec(&projected), guess.as_ref(), rel, &SolveOptions::default())
    {
        Ok(mut s) => {
            s.residual *= pn / frobenius(x).max(f64::MIN_POSITIVE);
            Ok(s)
        }
        Err(err @ NumericsError::NotConverged { .. }) => {
            let t = MatrixMap::new(rows, cols, |y: &Mat| transfer(y));
            let start = mat_to_vec(match side {
                Side::Left => fp_left,
                Side::Right => fp_right,
            });
            if let Ok(d) = eig_dominant(&t, &start, 1e-12, &EigOptions::default()) {
                if let Some(sub) = d.subleading {
                    if (sub.norm() - 1.0).abs() < 1e-10 {
                        return Err(NumericsError::NonInjective {
                            magnitude: sub.norm(),
                        });
                    }
                }
            }
            Err(err)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{identity, C64};
    use ndarray::Array2;

    #[test]
    fn trivial_bond_dimension_gives_zero() {
        let one = identity(1);
        let x = Array2::from_elem((1, 1), C64::new(0.7, -0.2));
        let t = |y: &Mat| y.clone();
        let s = geometric_sum(&x, &t, Side::Left, &one, &one, 1e-12, None).unwrap();
        assert!(s.solution[0].norm() < 1e-14);
    }

    #[test]
    fn pure_dominant_component_vanishes() {
        // Contractive map with fixed point 1 on both sides.
        let n = 3;
        let fp = identity(n).mapv(|z| z / n as f64);
        let t = |y: &Mat| {
            let tr: C64 = (0..n).map(|i| y[[i, i]]).sum();
            identity(n).mapv(|z| z * tr / n as f64) + (y - identity(n).mapv(|z| z * tr / n as f64)).mapv(|z| z * 0.5)
        };
        let x = identity(n);
        let s = geometric_sum(&x, &t, Side::Left, &x, &fp, 1e-12, None).unwrap();
        assert!(s.solution.iter().all(|z| z.norm() < 1e-13));
    }
}
