use ndarray::{s, Array1, Array2, Axis};
use ndarray_linalg::{JobSvd, QR, SVDDC, SVD};

use super::{Mat, NumericsError, Result, C64, ONE, ZERO};

/// `M = u · diag(s) · v†` with `s` non-increasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Array1<f64>,
    pub v: Mat,
}

/// Polar factors: `M = w · p` (left) or `M = p · w` (right).
#[derive(Debug, Clone)]
pub struct Polar {
    pub w: Mat,
    pub p: Mat,
}

/// `M = q · r` with `r` upper triangular and a real positive diagonal.
#[derive(Debug, Clone)]
pub struct Qr {
    pub q: Mat,
    pub r: Mat,
}

pub fn identity(n: usize) -> Mat {
    Array2::from_diag_elem(n, ONE)
}

pub fn dagger(m: &Mat) -> Mat {
    m.t().mapv(|z| z.conj())
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hilbert-Schmidt inner product `Tr(a† b)`.
pub fn inner(a: &Mat, b: &Mat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Bilinear pairing `(x|y) = Tr(x y)` between left and right environments.
pub fn pair(x: &Mat, y: &Mat) -> C64 {
    let mut acc = ZERO;
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            acc += x[[i, j]] * y[[j, i]];
        }
    }
    acc
}

pub fn ensure_finite(m: &Mat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// Thin singular value decomposition.
pub fn svd(m: &Mat) -> Result<Svd> {
    ensure_finite(m)?;
    let (rows, cols) = m.dim();
    let fail = NumericsError::DecompositionFailure { rows, cols };
    if rows == 0 || cols == 0 {
        return Err(fail);
    }
    let k = rows.min(cols);
    // gesdd is fast but occasionally fails; gesvd is the fallback.
    let (u, s, vt) = match m.svddc(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => (u, s, vt),
        _ => match m.svd(true, true) {
            Ok((Some(u), s, Some(vt))) => (
                u.slice(s![.., ..k]).to_owned(),
                s,
                vt.slice(s![..k, ..]).to_owned(),
            ),
            _ => return Err(fail),
        },
    };
    if s.iter().any(|x| !x.is_finite()) {
        return Err(fail);
    }
    Ok(Svd {
        u,
        s,
        v: dagger(&vt),
    })
}

/// Polar decomposition through the SVD. `left` requires rows ≥ cols, `right`
/// requires rows ≤ cols; the isometry has the shape of `m`.
pub fn polar_decompose(m: &Mat, left: bool) -> Result<Polar> {
    let (rows, cols) = m.dim();
    if (left && rows < cols) || (!left && rows > cols) {
        return Err(NumericsError::DimensionMismatch(format!(
            "polar ({}) of a {rows}x{cols} matrix",
            if left { "left" } else { "right" }
        )));
    }
    let Svd { u, s, v } = svd(m)?;
    let w = u.dot(&dagger(&v));
    let p = if left {
        scale_cols(&v, &s).dot(&dagger(&v))
    } else {
        scale_cols(&u, &s).dot(&dagger(&u))
    };
    Ok(Polar {
        w,
        p: hermitize(&p),
    })
}

/// QR decomposition with a positive real diagonal in `r`, which makes it unique.
pub fn qr_positive(m: &Mat) -> Result<Qr> {
    ensure_finite(m)?;
    let (rows, cols) = m.dim();
    if rows < cols {
        return Err(NumericsError::DimensionMismatch(format!(
            "qr of a wide {rows}x{cols} matrix"
        )));
    }
    let (mut q, mut r) = m
        .qr()
        .map_err(|_| NumericsError::DecompositionFailure { rows, cols })?;
    let norm = frobenius(m);
    let sigma_min = svd(&r)?.s.iter().cloned().fold(f64::INFINITY, f64::min);
    if norm == 0.0 || sigma_min <= 1e-14 * norm {
        return Err(NumericsError::RankDeficient { sigma: sigma_min });
    }
    for i in 0..cols {
        let d = r[[i, i]];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        q.column_mut(i).mapv_inplace(|z| z * phase);
        r.row_mut(i).mapv_inplace(|z| z * phase.conj());
        r[[i, i]] = C64::new(r[[i, i]].re.abs(), 0.0);
        for j in 0..i {
            r[[i, j]] = ZERO;
        }
    }
    Ok(Qr { q, r })
}

/// Orthonormal basis of the orthogonal complement of the column space of an
/// isometry `m` (rows ≥ cols). Returns a `rows × (rows - cols)` isometry.
pub fn null_complement(m: &Mat) -> Result<Mat> {
    let (rows, cols) = m.dim();
    let (u, _, _) = m
        .svd(true, false)
        .map_err(|_| NumericsError::DecompositionFailure { rows, cols })?;
    let u = u.ok_or(NumericsError::DecompositionFailure { rows, cols })?;
    Ok(u.slice(s![.., cols.min(rows)..]).to_owned())
}

pub(crate) fn scale_cols(m: &Mat, s: &Array1<f64>) -> Mat {
    let mut out = m.clone();
    for (mut col, &x) in out.axis_iter_mut(Axis(1)).zip(s.iter()) {
        col.mapv_inplace(|z| z * x);
    }
    out
}

pub(crate) fn hermitize(m: &Mat) -> Mat {
    (m + &dagger(m)).mapv(|z| z * 0.5)
}
