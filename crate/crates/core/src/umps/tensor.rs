use ndarray::{s, Array2};

use crate::numerics::{dagger, LinearMap, Mat, Side, Vector, C64, ZERO};
use crate::numerics::{mat_to_vec, vec_to_mat};

/// Three-index MPS tensor stored as `d` matrices `A^s` of size `D_l × D_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsTensor {
    pub mats: Vec<Mat>,
}

impl MpsTensor {
    pub fn new(mats: Vec<Mat>) -> Self {
        assert!(!mats.is_empty(), "physical dimension must be positive");
        let dim = mats[0].dim();
        assert!(mats.iter().all(|m| m.dim() == dim), "inconsistent slices");
        Self { mats }
    }

    pub fn zeros(d: usize, left: usize, right: usize) -> Self {
        Self::new(vec![Array2::zeros((left, right)); d])
    }

    pub fn phys(&self) -> usize {
        self.mats.len()
    }

    pub fn left_dim(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn right_dim(&self) -> usize {
        self.mats[0].ncols()
    }

    /// `(d·D_l) × D_r` matricization with row index `s·D_l + α`.
    pub fn left_matrix(&self) -> Mat {
        let (dl, dr) = (self.left_dim(), self.right_dim());
        let mut out = Array2::zeros((self.phys() * dl, dr));
        for (s, m) in self.mats.iter().enumerate() {
            out.slice_mut(s![s * dl..(s + 1) * dl, ..]).assign(m);
        }
        out
    }

    pub fn from_left_matrix(m: &Mat, d: usize) -> Self {
        let dl = m.nrows() / d;
        Self::new(
            (0..d)
                .map(|s| m.slice(s![s * dl..(s + 1) * dl, ..]).to_owned())
                .collect(),
        )
    }

    /// `D_l × (d·D_r)` matricization with column index `s·D_r + β`.
    pub fn right_matrix(&self) -> Mat {
        let (dl, dr) = (self.left_dim(), self.right_dim());
        let mut out = Array2::zeros((dl, self.phys() * dr));
        for (s, m) in self.mats.iter().enumerate() {
            out.slice_mut(s![.., s * dr..(s + 1) * dr]).assign(m);
        }
        out
    }

    pub fn from_right_matrix(m: &Mat, d: usize) -> Self {
        let dr = m.ncols() / d;
        Self::new(
            (0..d)
                .map(|s| m.slice(s![.., s * dr..(s + 1) * dr]).to_owned())
                .collect(),
        )
    }

    /// Slices concatenated in physical-index order.
    pub fn to_vector(&self) -> Vector {
        self.mats.iter().flat_map(|m| m.iter().cloned()).collect()
    }

    pub fn from_vector(v: &Vector, d: usize, left: usize, right: usize) -> Self {
        let block = left * right;
        Self::new(
            (0..d)
                .map(|s| {
                    let part = v.slice(s![s * block..(s + 1) * block]).to_owned();
                    vec_to_mat(&part, left, right)
                })
                .collect(),
        )
    }

    /// `A^s C` for every `s`.
    pub fn mul_right(&self, c: &Mat) -> Self {
        Self::new(self.mats.iter().map(|m| m.dot(c)).collect())
    }

    /// `C A^s` for every `s`.
    pub fn mul_left(&self, c: &Mat) -> Self {
        Self::new(self.mats.iter().map(|m| c.dot(m)).collect())
    }

    pub fn norm(&self) -> f64 {
        self.mats
            .iter()
            .flat_map(|m| m.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ_s Tr(self^s† other^s)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.mats
            .iter()
            .zip(other.mats.iter())
            .map(|(a, b)| crate::numerics::inner(a, b))
            .sum()
    }

    pub fn scale(&self, x: C64) -> Self {
        Self::new(self.mats.iter().map(|m| m.mapv(|z| z * x)).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.mats.iter().zip(other.mats.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.mats.iter().zip(other.mats.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn conj_transpose_slices(&self) -> Vec<Mat> {
        self.mats.iter().map(dagger).collect()
    }
}

/// `Σ_s bra^s† x ket^s`.
pub fn transfer_left(x: &Mat, bra: &MpsTensor, ket: &MpsTensor) -> Mat {
    let mut out = Array2::zeros((bra.right_dim(), ket.right_dim()));
    for (b, k) in bra.mats.iter().zip(ket.mats.iter()) {
        out += &dagger(b).dot(&x.dot(k));
    }
    out
}

/// `Σ_st op_st bra^s† x ket^t`.
pub fn transfer_left_op(x: &Mat, bra: &MpsTensor, ket: &MpsTensor, op: &Mat) -> Mat {
    let d = ket.phys();
    let xk: Vec<Mat> = ket.mats.iter().map(|k| x.dot(k)).collect();
    let mut out = Array2::zeros((bra.right_dim(), ket.right_dim()));
    for s in 0..d {
        let mut acc: Mat = Array2::zeros(xk[0].dim());
        let mut any = false;
        for (t, y) in xk.iter().enumerate() {
            let o = op[[s, t]];
            if o != ZERO {
                acc.scaled_add(o, y);
                any = true;
            }
        }
        if any {
            out += &dagger(&bra.mats[s]).dot(&acc);
        }
    }
    out
}

/// `Σ_s ket^s y bra^s†`.
pub fn transfer_right(y: &Mat, bra: &MpsTensor, ket: &MpsTensor) -> Mat {
    let mut out = Array2::zeros((ket.left_dim(), bra.left_dim()));
    for (b, k) in bra.mats.iter().zip(ket.mats.iter()) {
        out += &k.dot(y).dot(&dagger(b));
    }
    out
}

/// `Σ_st op_st ket^t y bra^s†`.
pub fn transfer_right_op(y: &Mat, bra: &MpsTensor, ket: &MpsTensor, op: &Mat) -> Mat {
    let d = ket.phys();
    let yb: Vec<Mat> = bra.mats.iter().map(|b| y.dot(&dagger(b))).collect();
    let mut out = Array2::zeros((ket.left_dim(), bra.left_dim()));
    for t in 0..d {
        let mut acc: Mat = Array2::zeros(yb[0].dim());
        let mut any = false;
        for (s, z) in yb.iter().enumerate() {
            let o = op[[s, t]];
            if o != ZERO {
                acc.scaled_add(o, z);
                any = true;
            }
        }
        if any {
            out += &ket.mats[t].dot(&acc);
        }
    }
    out
}

/// Transfer operator over a sequence of sites, optionally dressed with a
/// single-site operator on every site. The left action runs through the
/// sequence in order, the right action in reverse.
pub struct TransferOperator<'a> {
    pub bra: &'a [MpsTensor],
    pub ket: &'a [MpsTensor],
    pub op: Option<&'a Mat>,
    pub side: Side,
}

impl<'a> TransferOperator<'a> {
    pub fn new(bra: &'a [MpsTensor], ket: &'a [MpsTensor], side: Side) -> Self {
        Self {
            bra,
            ket,
            op: None,
            side,
        }
    }

    pub fn with_op(mut self, op: &'a Mat) -> Self {
        self.op = Some(op);
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        match self.side {
            Side::Left => (self.bra[0].left_dim(), self.ket[0].left_dim()),
            Side::Right => {
                let last = self.ket.len() - 1;
                (self.ket[last].right_dim(), self.bra[last].right_dim())
            }
        }
    }

    pub fn act(&self, x: &Mat) -> Mat {
        let step_left = |x: &Mat, b: &MpsTensor, k: &MpsTensor| match self.op {
            Some(o) => transfer_left_op(x, b, k, o),
            None => transfer_left(x, b, k),
        };
        let step_right = |y: &Mat, b: &MpsTensor, k: &MpsTensor| match self.op {
            Some(o) => transfer_right_op(y, b, k, o),
            None => transfer_right(y, b, k),
        };
        match self.side {
            Side::Left => self
                .bra
                .iter()
                .zip(self.ket.iter())
                .fold(x.clone(), |acc, (b, k)| step_left(&acc, b, k)),
            Side::Right => self
                .bra
                .iter()
                .zip(self.ket.iter())
                .rev()
                .fold(x.clone(), |acc, (b, k)| step_right(&acc, b, k)),
        }
    }
}

impl LinearMap for TransferOperator<'_> {
    fn dim_in(&self) -> usize {
        let (r, c) = self.dims();
        r * c
    }
    fn dim_out(&self) -> usize {
        self.dim_in()
    }
    fn apply(&self, x: &Vector) -> Vector {
        let (r, c) = self.dims();
        mat_to_vec(&self.act(&vec_to_mat(x, r, c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius, pair};
    use crate::umps::random_tensors;

    #[test]
    fn matricizations_round_trip() {
        let a = &random_tensors(3, 4, 1, 5)[0];
        assert_eq!(MpsTensor::from_left_matrix(&a.left_matrix(), 3), *a);
        assert_eq!(MpsTensor::from_right_matrix(&a.right_matrix(), 3), *a);
        let v = a.to_vector();
        assert_eq!(MpsTensor::from_vector(&v, 3, 4, 4), *a);
    }

    #[test]
    fn left_and_right_actions_are_adjoint_under_pairing() {
        let t = random_tensors(2, 3, 2, 9);
        let x = random_tensors(1, 3, 1, 1)[0].mats[0].clone();
        let y = random_tensors(1, 3, 1, 2)[0].mats[0].clone();
        let left = TransferOperator::new(&t, &t, Side::Left);
        let right = TransferOperator::new(&t, &t, Side::Right);
        let a = pair(&left.act(&x), &y);
        let b = pair(&x, &right.act(&y));
        assert!((a - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn identity_dressing_matches_plain_transfer() {
        let t = random_tensors(3, 2, 1, 4);
        let x = random_tensors(1, 2, 1, 3)[0].mats[0].clone();
        let one = crate::numerics::identity(3);
        let plain = transfer_left(&x, &t[0], &t[0]);
        let dressed = transfer_left_op(&x, &t[0], &t[0], &one);
        assert!(frobenius(&(plain - dressed)) < 1e-13);
        let plain = transfer_right(&x, &t[0], &t[0]);
        let dressed = transfer_right_op(&x, &t[0], &t[0], &one);
        assert!(frobenius(&(plain - dressed)) < 1e-13);
    }
}
