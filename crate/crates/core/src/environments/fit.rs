//! Sums of exponentials `f(n) ≈ Σ_k c_k λ_k^{n−1}` by the matrix-pencil method.

use ndarray::s;
use ndarray_linalg::Eig;
use serde::{Deserialize, Serialize};

use crate::numerics::{dagger, svd, Mat, C64};

use super::{EnvError, Result};

/// Provenance of a fitted profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub terms: usize,
    pub max_residual: f64,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialFit {
    pub weights: Vec<C64>,
    pub rates: Vec<C64>,
    /// `max_n |f(n) − Σ_k c_k λ_k^{n−1}|` over the window, imaginary parts included.
    pub max_residual: f64,
}

impl ExponentialFit {
    pub fn eval(&self, n: usize) -> C64 {
        self.weights
            .iter()
            .zip(self.rates.iter())
            .map(|(c, l)| c * l.powu(n as u32 - 1))
            .sum()
    }

    pub fn meta(&self, window: usize) -> FitMeta {
        FitMeta {
            terms: self.rates.len(),
            max_residual: self.max_residual,
            window,
        }
    }
}

fn failure(best: f64, terms: usize) -> EnvError {
    EnvError::FitFailure {
        best_residual: best,
        terms,
    }
}

/// Least-squares solution of `a x = b` through the pseudo-inverse, with
/// singular values below `1e-14 s_max` discarded.
fn lstsq(a: &Mat, b: &Mat) -> Result<Mat> {
    let dec = svd(a)?;
    let cutoff = 1e-14 * dec.s[0];
    let mut ub = dagger(&dec.u).dot(b);
    for (i, mut row) in ub.rows_mut().into_iter().enumerate() {
        let inv = if dec.s[i] > cutoff { 1.0 / dec.s[i] } else { 0.0 };
        row.mapv_inplace(|z| z * inv);
    }
    Ok(dec.v.dot(&ub))
}

/// Fits `f[n−1] = f(n)` for `n = 1..=f.len()` with at most `max_terms`
/// exponentials. The number of terms grows from one until the maximum
/// residual drops to `target`; the first such fit is returned.
pub fn fit_exponentials(f: &[f64], max_terms: usize, target: f64) -> Result<ExponentialFit> {
    let m = f.len();
    if max_terms == 0 || m < 2 * max_terms + 1 {
        return Err(EnvError::InvalidCoupling(format!(
            "{m} samples cannot determine {max_terms} exponentials"
        )));
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(EnvError::InvalidCoupling("non-finite samples".into()));
    }
    // Complex arithmetic throughout: the real LAPACK drivers of some OpenBLAS
    // builds return wrong decompositions for Hankel matrices of this size.
    let pencil = m / 2;
    let hankel = Mat::from_shape_fn((m - pencil, pencil + 1), |(i, j)| C64::new(f[i + j], 0.0));
    let right = svd(&hankel).map_err(|_| failure(f64::INFINITY, 0))?.v;
    let samples = Mat::from_shape_fn((m, 1), |(n, _)| C64::new(f[n], 0.0));
    let mut best = (f64::INFINITY, 0);
    for k in 1..=max_terms.min(right.ncols()) {
        let v1 = right.slice(s![..pencil, ..k]).to_owned();
        let v2 = right.slice(s![1.., ..k]).to_owned();
        let Ok(pencil_matrix) = lstsq(&v1, &v2) else { continue };
        let Ok((rates, _)) = pencil_matrix.eig() else { continue };
        if rates.iter().any(|l| l.norm() >= 1.0 || !l.re.is_finite()) {
            continue;
        }
        let vander = Mat::from_shape_fn((m, k), |(n, j)| rates[j].powu(n as u32));
        let Ok(weights) = lstsq(&vander, &samples) else { continue };
        let recon = vander.dot(&weights);
        let residual = recon
            .iter()
            .zip(samples.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if residual < best.0 {
            best = (residual, k);
        }
        if residual <= target {
            return Ok(ExponentialFit {
                weights: weights.column(0).to_vec(),
                rates: rates.to_vec(),
                max_residual: residual,
            });
        }
    }
    Err(failure(best.0, best.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_exponential_is_exact() {
        let f: Vec<f64> = (1..=40).map(|n| 0.5f64.powi(n - 1)).collect();
        let fit = fit_exponentials(&f, 1, 1e-14).unwrap();
        assert!((fit.rates[0] - C64::new(0.5, 0.0)).norm() < 1e-13);
        assert!((fit.weights[0] - C64::new(1.0, 0.0)).norm() < 1e-13);
        assert!(fit.max_residual < 1e-14);
    }

    #[test]
    fn two_exponentials_are_recovered() {
        let (a, b) = (1.3, -0.4);
        let f: Vec<f64> = (1..=80)
            .map(|n| a * 0.3f64.powi(n - 1) + b * 0.7f64.powi(n - 1))
            .collect();
        let fit = fit_exponentials(&f, 2, 1e-12).unwrap();
        let mut pairs: Vec<(f64, f64)> = fit
            .rates
            .iter()
            .zip(fit.weights.iter())
            .map(|(l, c)| {
                assert!(l.im.abs() < 1e-10 && c.im.abs() < 1e-10);
                (l.re, c.re)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        assert!((pairs[0].0 - 0.3).abs() < 1e-10 && (pairs[0].1 - a).abs() < 1e-10);
        assert!((pairs[1].0 - 0.7).abs() < 1e-10 && (pairs[1].1 - b).abs() < 1e-10);
    }

    #[test]
    fn residual_bound_holds_and_rates_are_inside_the_disk() {
        let f: Vec<f64> = (1..=200).map(|n| 1.0 / (n as f64).powi(3)).collect();
        let fit = fit_exponentials(&f, 8, 1e-5).unwrap();
        assert!(fit.rates.iter().all(|l| l.norm() < 1.0));
        let worst = (1..=200)
            .map(|n| (fit.eval(n) - C64::new(f[n - 1], 0.0)).norm())
            .fold(0.0, f64::max);
        assert!(worst <= fit.max_residual * (1.0 + 1e-12));
        assert!(fit.max_residual <= 1e-5);
    }

    #[test]
    fn inverse_square_profile_reaches_the_target() {
        let f: Vec<f64> = (1..=1000).map(|n| 1.0 / (n as f64).powi(2)).collect();
        let fit = fit_exponentials(&f, 20, 1e-6).unwrap();
        assert!(fit.max_residual < 1e-6);
        assert!(fit.rates.len() <= 20);
    }

    #[test]
    fn unreachable_target_reports_best_residual() {
        let f: Vec<f64> = (1..=100).map(|n| 1.0 / n as f64).collect();
        match fit_exponentials(&f, 1, 1e-12) {
            Err(EnvError::FitFailure { best_residual, terms }) => {
                assert_eq!(terms, 1);
                assert!(best_residual > 1e-12 && best_residual.is_finite());
            }
            other => panic!("{other:?}"),
        }
    }
}
