use super::{MpsTensor, Result, UmpsError};
use crate::numerics::{dagger, polar_decompose, svd, Mat};

/// How isometries are extracted from `(A_C, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorizeMode {
    /// Polar factor of `A_C C†`: the exact minimizer of `‖A_C − A_L C‖`.
    Svd,
    /// Product of the separate polar factors of `A_C` and `C`.
    Polar,
    /// `Svd` while `σ_min(C)² > 1e3 ε_mach`, else `Polar`.
    Auto,
}

#[derive(Debug, Clone)]
pub struct Factorization {
    pub al: MpsTensor,
    pub ar: MpsTensor,
    /// `‖A_C − A_L C_right‖`
    pub eps_left: f64,
    /// `‖A_C − C_left A_R‖`
    pub eps_right: f64,
}

fn svd_route_allowed(c: &Mat) -> Result<bool> {
    let s = svd(c)?.s;
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(smin * smin > 1e3 * f64::EPSILON)
}

/// Best left- and right-isometric tensors with `A_C ≈ A_L C_right` and
/// `A_C ≈ C_left A_R`, together with the attained errors.
pub fn min_ac_factorize(
    ac: &MpsTensor,
    c_left: &Mat,
    c_right: &Mat,
    mode: FactorizeMode,
) -> Result<Factorization> {
    if ac.norm() < 1e-300 || !ac.norm().is_finite() {
        return Err(UmpsError::DegenerateCenter);
    }
    let d = ac.phys();
    let left_svd = match mode {
        FactorizeMode::Svd => true,
        FactorizeMode::Polar => false,
        FactorizeMode::Auto => svd_route_allowed(c_right)?,
    };
    let right_svd = match mode {
        FactorizeMode::Svd => true,
        FactorizeMode::Polar => false,
        FactorizeMode::Auto => svd_route_allowed(c_left)?,
    };
    let acl = ac.left_matrix();
    let al = if left_svd {
        polar_decompose(&acl.dot(&dagger(c_right)), true)?.w
    } else {
        let wa = polar_decompose(&acl, true)?.w;
        let wc = polar_decompose(c_right, true)?.w;
        wa.dot(&dagger(&wc))
    };
    let acr = ac.right_matrix();
    let ar = if right_svd {
        polar_decompose(&dagger(c_left).dot(&acr), false)?.w
    } else {
        let wa = polar_decompose(&acr, false)?.w;
        let wc = polar_decompose(c_left, false)?.w;
        dagger(&wc).dot(&wa)
    };
    let al = MpsTensor::from_left_matrix(&al, d);
    let ar = MpsTensor::from_right_matrix(&ar, d);
    let eps_left = ac.sub(&al.mul_right(c_right)).norm();
    let eps_right = ac.sub(&ar.mul_left(c_left)).norm();
    Ok(Factorization {
        al,
        ar,
        eps_left,
        eps_right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius, identity};
    use crate::umps::{random_tensors, random_umps, transfer_left, transfer_right};

    #[test]
    fn consistent_input_is_reproduced() {
        let s = random_umps(2, 6, 1, 3).unwrap();
        for mode in [FactorizeMode::Svd, FactorizeMode::Polar, FactorizeMode::Auto] {
            let f = min_ac_factorize(&s.ac[0], &s.c[0], &s.c[0], mode).unwrap();
            assert!(f.eps_left < 1e-13 && f.eps_right < 1e-13, "{mode:?}");
            assert!(f.al.sub(&s.al[0]).norm() < 1e-12);
            assert!(f.ar.sub(&s.ar[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_center_is_an_error() {
        let ac = MpsTensor::zeros(2, 3, 3);
        let c = identity(3);
        assert_eq!(
            min_ac_factorize(&ac, &c, &c, FactorizeMode::Svd).unwrap_err(),
            UmpsError::DegenerateCenter
        );
    }

    #[test]
    fn svd_route_is_optimal() {
        let ac = random_tensors(2, 6, 1, 21).remove(0);
        let ac = ac.scale((1.0 / ac.norm()).into());
        let c = random_tensors(1, 6, 1, 22).remove(0).mats.remove(0);
        let c = c.mapv(|z| z / frobenius(&c));
        let a = min_ac_factorize(&ac, &c, &c, FactorizeMode::Svd).unwrap();
        let b = min_ac_factorize(&ac, &c, &c, FactorizeMode::Polar).unwrap();
        assert!(crate::numerics::svd(&c).unwrap().s[5] > 1e-4);
        assert!(a.eps_left <= b.eps_left + 1e-14);
        assert!(a.eps_right <= b.eps_right + 1e-14);
        // Near a consistent pair both errors are of the order of the perturbation;
        // the exact isometries attain 1e-5, so the optimal route cannot exceed it.
        let s = random_umps(2, 6, 1, 23).unwrap();
        let noise = random_tensors(2, 6, 1, 24).remove(0);
        let ac = s.ac[0].add(&noise.scale((1e-5 / noise.norm()).into()));
        let a = min_ac_factorize(&ac, &s.c[0], &s.c[0], FactorizeMode::Svd).unwrap();
        let b = min_ac_factorize(&ac, &s.c[0], &s.c[0], FactorizeMode::Polar).unwrap();
        assert!(a.eps_left <= 1e-5 + 1e-14 && a.eps_right <= 1e-5 + 1e-14);
        assert!(a.eps_left <= b.eps_left + 1e-14 && a.eps_right <= b.eps_right + 1e-14);
        assert!(b.eps_left < 3e-5 && b.eps_right < 3e-5);
        let one = identity(6);
        for f in [&a, &b] {
            assert!(frobenius(&(transfer_left(&one, &f.al, &f.al) - &one)) < 1e-12);
            assert!(frobenius(&(transfer_right(&one, &f.ar, &f.ar) - &one)) < 1e-12);
        }
    }
}
