use super::{MpsTensor, Result, UmpsError, UniformMps};
use crate::numerics::{svd, Mat, C64, ZERO};

/// Expectation value of a single-site operator on site `k`.
pub fn expval_local(state: &UniformMps, op: &Mat, k: usize) -> Result<C64> {
    let ac = &state.ac[k % state.cell_size()];
    let d = ac.phys();
    if op.dim() != (d, d) {
        return Err(UmpsError::DimensionMismatch(format!(
            "operator {:?} on physical dimension {d}",
            op.dim()
        )));
    }
    let mut acc = ZERO;
    for s in 0..d {
        for t in 0..d {
            if op[[s, t]] != ZERO {
                acc += op[[s, t]] * crate::numerics::inner(&ac.mats[s], &ac.mats[t]);
            }
        }
    }
    Ok(acc / ac.norm().powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtData {
    /// Strictly positive singular values of `C`, descending.
    pub values: Vec<f64>,
    /// `−Σ p ln p` with `p = value²`.
    pub entropy: f64,
}

pub fn schmidt_data(state: &UniformMps, bond: usize) -> Result<SchmidtData> {
    let s = svd(&state.c[bond % state.cell_size()])?.s;
    let values: Vec<f64> = s.iter().cloned().filter(|&x| x > 0.0).collect();
    let entropy = values
        .iter()
        .map(|x| {
            let p = x * x;
            -p * p.ln()
        })
        .sum();
    Ok(SchmidtData { values, entropy })
}

/// Two-site center tensor with slices indexed by `s·d + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteTensor {
    pub d: usize,
    pub mats: Vec<Mat>,
}

impl TwoSiteTensor {
    pub fn slice(&self, s: usize, t: usize) -> &Mat {
        &self.mats[s * self.d + t]
    }

    pub fn norm(&self) -> f64 {
        MpsTensor::new(self.mats.clone()).norm()
    }

    /// `(d·D_l) × (d·D_r)` matrix with row `s·D_l + α` and column `t·D_r + β`.
    pub fn matrix(&self) -> Mat {
        let (dl, dr) = self.mats[0].dim();
        let mut out = Mat::zeros((self.d * dl, self.d * dr));
        for s in 0..self.d {
            for t in 0..self.d {
                out.slice_mut(ndarray::s![s * dl..(s + 1) * dl, t * dr..(t + 1) * dr])
                    .assign(self.slice(s, t));
            }
        }
        out
    }

    pub fn from_matrix(m: &Mat, d: usize) -> Self {
        let (dl, dr) = (m.nrows() / d, m.ncols() / d);
        let mut mats = Vec::with_capacity(d * d);
        for s in 0..d {
            for t in 0..d {
                mats.push(
                    m.slice(ndarray::s![s * dl..(s + 1) * dl, t * dr..(t + 1) * dr])
                        .to_owned(),
                );
            }
        }
        Self { d, mats }
    }

    pub fn to_vector(&self) -> crate::numerics::Vector {
        MpsTensor::new(self.mats.clone()).to_vector()
    }

    pub fn from_vector(v: &crate::numerics::Vector, d: usize, dl: usize, dr: usize) -> Self {
        Self {
            d,
            mats: MpsTensor::from_vector(v, d * d, dl, dr).mats,
        }
    }
}

/// `A_2C^{st} = A_L(k)^s C(k) A_R(k+1)^t` on the bond to the right of site `k`.
pub fn two_site_center(state: &UniformMps, bond: usize) -> TwoSiteTensor {
    let n = state.cell_size();
    let k = bond % n;
    let left = state.al[k].mul_right(&state.c[k]);
    let right = &state.ar[(k + 1) % n];
    let d = state.phys_dim();
    let mut mats = Vec::with_capacity(d * d);
    for s in 0..d {
        for t in 0..d {
            mats.push(left.mats[s].dot(&right.mats[t]));
        }
    }
    TwoSiteTensor { d, mats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{identity, C64};
    use crate::umps::random_umps;
    use ndarray::Array2;

    #[test]
    fn identity_expectation_is_one() {
        let s = random_umps(3, 5, 2, 1).unwrap();
        for k in 0..2 {
            let v = expval_local(&s, &identity(3), k).unwrap();
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-13);
        }
        assert!(expval_local(&s, &identity(2), 0).is_err());
    }

    #[test]
    fn hermitian_expectations_are_real() {
        let s = random_umps(2, 6, 1, 4).unwrap();
        let mut y = Array2::zeros((2, 2));
        y[[0, 1]] = C64::new(0.0, -1.0);
        y[[1, 0]] = C64::new(0.0, 1.0);
        assert!(expval_local(&s, &y, 0).unwrap().im.abs() < 1e-12);
    }

    #[test]
    fn product_state_magnetization() {
        let one = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let zero = Array2::zeros((1, 1));
        let t = MpsTensor::new(vec![one, zero]);
        let s = crate::umps::canonicalize(&[t]).unwrap();
        let mut z = Array2::zeros((2, 2));
        z[[0, 0]] = C64::new(0.5, 0.0);
        z[[1, 1]] = C64::new(-0.5, 0.0);
        assert!((expval_local(&s, &z, 0).unwrap().re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn schmidt_values_and_entropy() {
        let s = random_umps(2, 1, 1, 2).unwrap();
        let sd = schmidt_data(&s, 0).unwrap();
        assert_eq!(sd.values.len(), 1);
        assert!(sd.entropy.abs() < 1e-14);
        let mut s = random_umps(2, 2, 1, 3).unwrap();
        s.c[0] = identity(2).mapv(|z| z / 2f64.sqrt());
        let sd = schmidt_data(&s, 0).unwrap();
        assert!((sd.entropy - 2f64.ln()).abs() < 1e-14);
        let s = random_umps(2, 8, 1, 5).unwrap();
        let sd = schmidt_data(&s, 0).unwrap();
        let total: f64 = sd.values.iter().map(|x| x * x).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(sd.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn two_site_routes_agree() {
        let s = random_umps(2, 4, 2, 6).unwrap();
        for bond in 0..2 {
            let a = two_site_center(&s, bond);
            assert!((a.norm() - 1.0).abs() < 1e-12);
            let next = (bond + 1) % 2;
            for si in 0..2 {
                for t in 0..2 {
                    let via_ac = s.ac[bond].mats[si].dot(&s.ar[next].mats[t]);
                    let via_next = s.al[bond].mats[si].dot(&s.ac[next].mats[t]);
                    assert!(crate::numerics::frobenius(&(&via_ac - a.slice(si, t))) < 1e-12);
                    assert!(crate::numerics::frobenius(&(&via_next - a.slice(si, t))) < 1e-12);
                }
            }
            let round = TwoSiteTensor::from_matrix(&a.matrix(), 2);
            assert_eq!(round, a);
        }
    }

    #[test]
    fn product_two_site_center_is_outer_product() {
        let s = random_umps(2, 1, 1, 9).unwrap();
        let a = two_site_center(&s, 0);
        let v: Vec<C64> = s.ac[0].mats.iter().map(|m| m[[0, 0]]).collect();
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.slice(i, j)[[0, 0]] - v[i] * v[j]).norm() < 1e-14);
            }
        }
    }
}
