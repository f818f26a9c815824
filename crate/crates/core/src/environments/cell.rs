//! Cyclic block recursions over a unit cell.
//!
//! Every environment block obeys `X[k] = ρ·step_k(X[prev(k)]) + y[k]` around
//! the cell. The sum is seeded at the last bond of the visiting order by one
//! linear solve with the cell transfer, then propagated to the other bonds.

use crate::numerics::{
    geometric_sum, mat_to_vec, pair, solve_linear, vec_to_mat, Mat, MatrixMap, Side, SolveOptions,
    C64, ZERO,
};

use super::Result;

/// One cyclic recursion. `order` lists the bonds in visiting order; `step(k, x)`
/// carries a block from the bond before `k` onto bond `k`.
pub(crate) struct CellSum<'a> {
    pub order: &'a [usize],
    pub step: &'a (dyn Fn(usize, &Mat) -> Mat + Sync),
    pub side: Side,
}

/// Dominant pair of the plain cell transfer on the seeding bond, normalized to
/// `(fp_left|fp_right) = 1`. Present only for rate-one channels.
pub(crate) struct Deflation<'a> {
    pub fp_left: &'a Mat,
    pub fp_right: &'a Mat,
}

pub(crate) struct CellSolution {
    pub blocks: Vec<Mat>,
    /// `(z|fp)` of the seeding inhomogeneity: the divergent weight per cell.
    pub removed: C64,
    pub solves: usize,
}

impl CellSum<'_> {
    fn cell_transfer(&self, rate: C64, x: &Mat) -> Mat {
        self.order
            .iter()
            .fold(x.clone(), |acc, &k| (self.step)(k, &acc).mapv(|z| z * rate))
    }

    /// Solves the recursion for inhomogeneities `y` indexed by bond.
    pub fn solve(
        &self,
        y: &[Mat],
        rate: C64,
        deflation: Option<Deflation>,
        tol: f64,
        guess: Option<&Mat>,
    ) -> Result<CellSolution> {
        let n = self.order.len();
        let dims = y[self.order[0]].dim();
        let mut z = Mat::zeros(dims);
        if rate != ZERO {
            for &k in self.order {
                z = (self.step)(k, &z).mapv(|v| v * rate) + &y[k];
            }
        } else {
            z = y[self.order[n - 1]].clone();
        }
        let mut removed = ZERO;
        let mut solves = 0;
        let seed = if rate == ZERO {
            z
        } else if let Some(def) = deflation {
            removed = match self.side {
                Side::Left => pair(&z, def.fp_right),
                Side::Right => pair(def.fp_left, &z),
            };
            let transfer = |x: &Mat| self.cell_transfer(rate, x);
            let s = geometric_sum(&z, &transfer, self.side, def.fp_left, def.fp_right, tol, guess)?;
            solves += 1;
            vec_to_mat(&s.solution, dims.0, dims.1)
        } else {
            let op = MatrixMap::new(dims.0, dims.1, |x: &Mat| x - &self.cell_transfer(rate, x));
            let guess = guess.filter(|g| g.dim() == dims).map(mat_to_vec);
            let s = solve_linear(&op, &mat_to_vec(&z), guess.as_ref(), tol, &SolveOptions::default())?;
            solves += 1;
            vec_to_mat(&s.solution, dims.0, dims.1)
        };
        let mut blocks = vec![Mat::zeros(dims); y.len()];
        let last = self.order[n - 1];
        let mut prev = seed.clone();
        for &k in &self.order[..n - 1] {
            let next = if rate == ZERO {
                y[k].clone()
            } else {
                (self.step)(k, &prev).mapv(|v| v * rate) + &y[k]
            };
            blocks[k] = next.clone();
            prev = next;
        }
        blocks[last] = seed;
        Ok(CellSolution {
            blocks,
            removed,
            solves,
        })
    }
}

/// Bond orders: left blocks run `0..N`, right blocks run `N-1..=0`.
pub(crate) fn left_order(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub(crate) fn right_order(n: usize) -> Vec<usize> {
    (0..n).rev().collect()
}

/// Removes the component along the identity so that `(x|fp) = 0`; `fp` has unit trace.
pub(crate) fn remove_identity(x: &Mat, fp: &Mat, side: Side) -> Mat {
    let w = match side {
        Side::Left => pair(x, fp),
        Side::Right => pair(fp, x),
    };
    let mut out = x.clone();
    for i in 0..out.nrows() {
        out[[i, i]] -= w;
    }
    out
}

pub(crate) fn unit_trace(m: &Mat) -> Mat {
    let tr: C64 = (0..m.nrows()).map(|i| m[[i, i]]).sum();
    m.mapv(|z| z / tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius, identity, ONE};
    use crate::umps::{random_umps, transfer_left, transfer_right};

    #[test]
    fn cell_recursion_holds_on_every_bond() {
        let s = random_umps(2, 4, 3, 17).unwrap();
        let y: Vec<Mat> = crate::umps::random_tensors(1, 4, 3, 5)
            .into_iter()
            .map(|t| t.mats[0].clone())
            .collect();
        let rate = C64::new(0.6, 0.2);
        let al = s.al.clone();
        let step = move |k: usize, x: &Mat| transfer_left(x, &al[k], &al[k]);
        let order = left_order(3);
        let cs = CellSum {
            order: &order,
            step: &step,
            side: Side::Left,
        };
        let sol = cs.solve(&y, rate, None, 1e-13, None).unwrap();
        for k in 0..3 {
            let prev = (k + 2) % 3;
            let want = transfer_left(&sol.blocks[prev], &s.al[k], &s.al[k]).mapv(|z| z * rate) + &y[k];
            assert!(frobenius(&(want - &sol.blocks[k])) < 1e-11);
        }
    }

    #[test]
    fn deflated_right_recursion_holds_modulo_identity() {
        let s = random_umps(2, 4, 2, 3).unwrap();
        let y: Vec<Mat> = crate::umps::random_tensors(1, 4, 2, 8)
            .into_iter()
            .map(|t| t.mats[0].clone())
            .collect();
        let ar = s.ar.clone();
        let step = move |k: usize, x: &Mat| transfer_right(x, &ar[(k + 1) % 2], &ar[(k + 1) % 2]);
        let order = right_order(2);
        let cs = CellSum {
            order: &order,
            step: &step,
            side: Side::Right,
        };
        let l0 = unit_trace(&s.left_density(0));
        let one = identity(4);
        let sol = cs
            .solve(
                &y,
                ONE,
                Some(Deflation {
                    fp_left: &l0,
                    fp_right: &one,
                }),
                1e-13,
                None,
            )
            .unwrap();
        assert!(pair(&l0, &sol.blocks[0]).norm() < 1e-12);
        // Bond 1 is reached from bond 0 (site 0 = site 2); bond 0 from bond 1.
        let b1 = transfer_right(&sol.blocks[0], &s.ar[0], &s.ar[0]) + &y[1];
        assert!(frobenius(&(b1 - &sol.blocks[1])) < 1e-11);
        let b0 = transfer_right(&sol.blocks[1], &s.ar[1], &s.ar[1]) + &y[0];
        let diff = b0 - &sol.blocks[0];
        let shift = diff[[0, 0]];
        assert!(frobenius(&(diff - identity(4).mapv(|z| z * shift))) < 1e-10);
        assert!((shift - sol.removed).norm() < 1e-10);
    }
}
