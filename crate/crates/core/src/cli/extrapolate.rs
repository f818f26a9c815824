//! Extrapolation of the energy over a sweep of bond dimensions.
//!
//! - Linear in the truncation error: `e(ε) = e_T + a ε`.
//! - Power law in the inverse bond dimension: `e(x) = e_D + a x^b`,
//!   `x = 1/D`, `b ∈ (0, 8]`. For fixed `b` the model is linear in
//!   `(e_D, a)`, so the fit minimizes the projected residual over `b` alone.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CliError, Result, RunResult};

const B_MAX: f64 = 8.0;
const MIN_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard errors; absent with no residual degrees of freedom.
    pub intercept_err: Option<f64>,
    pub slope_err: Option<f64>,
    pub rss: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub intercept: f64,
    pub amplitude: f64,
    pub exponent: f64,
    /// Standard errors of `(intercept, amplitude, exponent)` from the
    /// Jacobian at the optimum; absent with fewer than four points.
    pub errors: Option<[f64; 3]>,
    pub rss: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub bond_dim: usize,
    pub truncation_error: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub points: Vec<SweepPoint>,
    /// Linear fit in the truncation error; absent when all truncation
    /// errors coincide.
    pub linear: Option<LinearFit>,
    pub power_law: PowerLawFit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    /// `|e − reference|` of the largest bond dimension, the linear and
    /// the power-law estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_e: Option<[Option<f64>; 3]>,
}

/// Least-squares line through `(x, y)`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let rss: f64 = res.iter().map(|r| r * r).sum();
    let dof = x.len().saturating_sub(2);
    let (ie, se) = if dof > 0 {
        let s2 = rss / dof as f64;
        let sum_x2: f64 = x.iter().map(|v| v * v).sum();
        (Some((s2 * sum_x2 / (n * sxx)).sqrt()), Some((s2 / sxx).sqrt()))
    } else {
        (None, None)
    };
    Some(LinearFit {
        intercept,
        slope,
        intercept_err: ie,
        slope_err: se,
        rss,
        max_residual: res.iter().fold(0.0, |m, r| m.max(r.abs())),
    })
}

/// Best `(intercept, amplitude, rss)` for a fixed exponent.
fn project(x: &[f64], y: &[f64], b: f64) -> (f64, f64, f64) {
    let xb: Vec<f64> = x.iter().map(|v| v.powf(b)).collect();
    match fit_linear(&xb, y) {
        Some(f) => (f.intercept, f.slope, f.rss),
        None => (f64::NAN, f64::NAN, f64::INFINITY),
    }
}

fn inverse3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c(j, i) / det;
        }
    }
    Some(out)
}

/// Fits `y = e + a x^b` with `b ∈ (0, 8]`. The exponent search starts
/// from a grid through `b = 1` and refines the best bracket by golden
/// section on the projected residual.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> PowerLawFit {
    let rss = |b: f64| project(x, y, b).2;
    let step = 0.05;
    let grid: Vec<f64> = (1..=(B_MAX / step).round() as usize).map(|i| i as f64 * step).collect();
    let mut best = (1.0, rss(1.0));
    for &b in &grid {
        let r = rss(b);
        if r < best.1 {
            best = (b, r);
        }
    }
    let (mut lo, mut hi) = ((best.0 - step).max(1e-6), (best.0 + step).min(B_MAX));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (rss(c), rss(d));
    for _ in 0..200 {
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = rss(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = rss(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    let b = [(mid, rss(mid)), best]
        .into_iter()
        .fold((mid, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc })
        .0;
    let (e, a, rss_b) = project(x, y, b);
    let res: Vec<f64> = x.iter().zip(y).map(|(v, w)| w - e - a * v.powf(b)).collect();
    let dof = x.len().saturating_sub(3);
    let errors = (dof > 0)
        .then(|| {
            let mut jtj = [[0.0; 3]; 3];
            for &v in x {
                let xb = v.powf(b);
                let row = [1.0, xb, a * xb * v.ln()];
                for i in 0..3 {
                    for j in 0..3 {
                        jtj[i][j] += row[i] * row[j];
                    }
                }
            }
            let s2 = rss_b / dof as f64;
            inverse3(jtj).map(|inv| [0, 1, 2].map(|i| (s2 * inv[i][i]).abs().sqrt()))
        })
        .flatten();
    PowerLawFit {
        intercept: e,
        amplitude: a,
        exponent: b,
        errors,
        rss: rss_b,
        max_residual: res.iter().fold(0.0, |m, r| m.max(r.abs())),
    }
}

/// Fits a sweep. Among results with equal bond dimension the one with the
/// smallest gradient norm is used.
pub fn extrapolate(results: &[RunResult]) -> Result<Extrapolation> {
    let mut by_dim: BTreeMap<usize, &RunResult> = BTreeMap::new();
    for r in results {
        by_dim
            .entry(r.bond_dim)
            .and_modify(|cur| {
                if r.grad_norm < cur.grad_norm {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    if by_dim.len() < MIN_POINTS {
        return Err(CliError::Insufficient {
            needed: MIN_POINTS,
            got: by_dim.len(),
        });
    }
    let points: Vec<SweepPoint> = by_dim
        .values()
        .map(|r| SweepPoint {
            bond_dim: r.bond_dim,
            truncation_error: r.truncation_error,
            energy: r.energy,
        })
        .collect();
    let eps: Vec<f64> = points.iter().map(|p| p.truncation_error).collect();
    let inv_d: Vec<f64> = points.iter().map(|p| 1.0 / p.bond_dim as f64).collect();
    let energies: Vec<f64> = points.iter().map(|p| p.energy).collect();
    let linear = fit_linear(&eps, &energies);
    let power_law = fit_power_law(&inv_d, &energies);
    let reference = by_dim.values().find_map(|r| r.reference.as_ref().map(|x| x.value));
    let delta_e = reference.map(|r| {
        [
            Some((energies[energies.len() - 1] - r).abs()),
            linear.as_ref().map(|f| (f.intercept - r).abs()),
            Some((power_law.intercept - r).abs()),
        ]
    });
    Ok(Extrapolation {
        points,
        linear,
        power_law,
        reference,
        delta_e,
    })
}

/// Reads every `result.json` matched by `pattern`.
pub fn load_results(pattern: &str) -> Result<Vec<RunResult>> {
    let paths = glob::glob(pattern).map_err(|e| CliError::Config(format!("pattern: {e}")))?;
    let mut out = Vec::new();
    for entry in paths {
        let path = entry.map_err(|e| CliError::io(e.path(), e.error()))?;
        out.push(load_result(&path)?);
    }
    Ok(out)
}

pub fn load_result(path: &Path) -> Result<RunResult> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_recovers_an_exact_line() {
        let x = [0.0, 1e-6, 3e-6, 7e-6];
        let y: Vec<f64> = x.iter().map(|v| -0.25 + 40.0 * v).collect();
        let f = fit_linear(&x, &y).unwrap();
        assert!((f.intercept + 0.25).abs() < 1e-14);
        assert!((f.slope - 40.0).abs() < 1e-8);
        assert!(f.intercept_err.unwrap() < 1e-14);
        assert!(fit_linear(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_none());
    }

    #[test]
    fn linear_fit_standard_errors_match_the_textbook_formula() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.1, 1.9, 3.2, 3.9];
        let f = fit_linear(&x, &y).unwrap();
        // Sxx = 5, Sxy = 4.85, residuals (0.03, -0.14, 0.19, -0.08).
        assert!((f.slope - 0.97).abs() < 1e-12);
        assert!((f.intercept - 0.1).abs() < 1e-12);
        assert!((f.rss - 0.063).abs() < 1e-12);
        let s2: f64 = 0.063 / 2.0;
        assert!((f.slope_err.unwrap() - (s2 / 5.0).sqrt()).abs() < 1e-12);
        assert!((f.intercept_err.unwrap() - (s2 * 30.0 / 20.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn power_law_recovers_exact_parameters() {
        for &(e, a, b) in &[(-0.443, 0.8, 2.0), (1.0, -3.0, 0.7), (-1.4, 5.0, 5.3)] {
            let x: Vec<f64> = [8.0, 12.0, 16.0, 24.0, 32.0].iter().map(|d| 1.0 / d).collect();
            let y: Vec<f64> = x.iter().map(|v: &f64| e + a * v.powf(b)).collect();
            let f = fit_power_law(&x, &y);
            assert!((f.exponent - b).abs() < 1e-5, "{b} vs {}", f.exponent);
            assert!((f.intercept - e).abs() < 1e-8);
            assert!(f.rss < 1e-20);
            assert!(f.errors.is_some());
        }
    }

    #[test]
    fn exponent_stays_in_bounds() {
        let x = [0.5, 0.25, 0.125];
        let y = [0.0, 1.0, 0.0];
        let f = fit_power_law(&x, &y);
        assert!(f.exponent > 0.0 && f.exponent <= B_MAX);
        assert!(f.errors.is_none());
    }

    #[test]
    fn inverse3_inverts() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 2.0]];
        let inv = inverse3(m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(inverse3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_none());
    }
}
