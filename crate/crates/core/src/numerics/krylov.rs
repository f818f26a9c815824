use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, QR, UPLO};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{mat_to_vec, vec_to_mat, Mat, NumericsError, Result, Vector, C64, ZERO};

/// A linear map on flattened complex vectors. Implementations must be
/// deterministic and re-entrant.
pub trait LinearMap: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
}

impl LinearMap for Mat {
    fn dim_in(&self) -> usize {
        self.ncols()
    }
    fn dim_out(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.dot(x)
    }
}

/// Adapts a closure on `rows × cols` matrices to a [`LinearMap`].
pub struct MatrixMap<F> {
    pub rows: usize,
    pub cols: usize,
    pub f: F,
}

impl<F> MatrixMap<F>
where
    F: Fn(&Mat) -> Mat + Sync,
{
    pub fn new(rows: usize, cols: usize, f: F) -> Self {
        Self { rows, cols, f }
    }
}

impl<F> LinearMap for MatrixMap<F>
where
    F: Fn(&Mat) -> Mat + Sync,
{
    fn dim_in(&self) -> usize {
        self.rows * self.cols
    }
    fn dim_out(&self) -> usize {
        self.rows * self.cols
    }
    fn apply(&self, x: &Vector) -> Vector {
        mat_to_vec(&(self.f)(&vec_to_mat(x, self.rows, self.cols)))
    }
}

#[derive(Debug, Clone)]
pub struct EigOptions {
    /// Largest subspace before a thick restart.
    pub krylov_dim: usize,
    /// Ritz vectors retained at a restart.
    pub keep: usize,
    pub max_matvecs: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            krylov_dim: 32,
            keep: 6,
            max_matvecs: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigPair {
    pub value: f64,
    pub vector: Vector,
    /// Absolute residual `‖op v − λ v‖`.
    pub residual: f64,
    pub matvecs: usize,
}

#[derive(Debug, Clone)]
pub struct DominantEig {
    pub value: C64,
    pub vector: Vector,
    /// Next Ritz value by magnitude, when the subspace holds more than one.
    pub subleading: Option<C64>,
    pub residual: f64,
    pub matvecs: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub restart: usize,
    pub max_matvecs: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            restart: 30,
            max_matvecs: 6000,
        }
    }
}

/// Result of an iterative linear solve.
#[derive(Debug, Clone)]
pub struct SumState {
    pub solution: Vector,
    /// Residual relative to the right-hand side norm.
    pub residual: f64,
    /// Krylov steps taken.
    pub iterations: usize,
}

pub(crate) fn dotc(a: &Vector, b: &Vector) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &Vector) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn orthogonalize(v: &mut Vector, basis: &[Vector]) {
    for _ in 0..2 {
        for b in basis {
            let c = dotc(b, v);
            v.scaled_add(-c, b);
        }
    }
}

fn combine(basis: &[Vector], coeffs: impl Iterator<Item = C64>) -> Vector {
    let mut out = Array1::zeros(basis[0].len());
    for (b, c) in basis.iter().zip(coeffs) {
        out.scaled_add(c, b);
    }
    out
}

fn check_dims(op: &dyn LinearMap, len: usize) -> Result<()> {
    if op.dim_in() != op.dim_out() || op.dim_in() != len {
        return Err(NumericsError::DimensionMismatch(format!(
            "operator {}x{} applied to length {len}",
            op.dim_out(),
            op.dim_in()
        )));
    }
    Ok(())
}

fn normalized_guess(guess: &Vector) -> Result<Vector> {
    let n = norm(guess);
    if n == 0.0 || !n.is_finite() {
        return Err(NumericsError::DimensionMismatch(
            "starting vector is zero or non-finite".into(),
        ));
    }
    Ok(guess.mapv(|z| z / n))
}

fn random_vector(n: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(n, |_| {
        C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    })
}

/// Deviation of `⟨x, op y⟩` from `⟨op x, y⟩` for random `x`, `y`, relative
/// to `‖op‖` or to 1 for operators of smaller norm.
pub fn hermiticity_defect(op: &dyn LinearMap, seed: u64) -> f64 {
    let n = op.dim_in();
    let x = random_vector(n, seed);
    let y = random_vector(n, seed.wrapping_add(1));
    let (ax, ay) = (op.apply(&x), op.apply(&y));
    let scale = (norm(&ax) * norm(&y) + norm(&x) * norm(&ay)).max(norm(&x) * norm(&y));
    (dotc(&x, &ay) - dotc(&ax, &y)).norm() / scale
}

/// Algebraically smallest eigenpair of a Hermitian map by thick-restart
/// Lanczos with full reorthogonalization. Converged when
/// `‖op v − λ v‖ ≤ tol · ‖op‖_est`, the estimate being the largest Ritz value
/// magnitude seen.
pub fn eigsh_extremal(
    op: &dyn LinearMap,
    guess: &Vector,
    tol: f64,
    opts: &EigOptions,
) -> Result<EigPair> {
    let n = guess.len();
    check_dims(op, n)?;
    debug_assert!(hermiticity_defect(op, 17) < 1e-8, "operator is not Hermitian");
    let m = opts.krylov_dim.max(2).min(n);
    let mut basis = vec![normalized_guess(guess)?];
    let mut images = vec![op.apply(&basis[0])];
    let mut matvecs = 1;
    let mut norm_est = 0.0f64;
    let mut best = f64::INFINITY;
    loop {
        while basis.len() < m {
            let last = images.last().unwrap();
            let mut r = last.clone();
            orthogonalize(&mut r, &basis);
            let beta = norm(&r);
            if beta <= 1e-14 * norm(last).max(1e-300) {
                break;
            }
            r.mapv_inplace(|z| z / beta);
            images.push(op.apply(&r));
            basis.push(r);
            matvecs += 1;
        }
        let k = basis.len();
        let mut h = Array2::<C64>::zeros((k, k));
        for i in 0..k {
            for j in i..k {
                let v = dotc(&basis[i], &images[j]);
                h[[i, j]] = v;
                h[[j, i]] = v.conj();
            }
            h[[i, i]] = C64::new(h[[i, i]].re, 0.0);
        }
        let (theta, y) = h
            .eigh(UPLO::Upper)
            .map_err(|_| NumericsError::DecompositionFailure { rows: k, cols: k })?;
        norm_est = norm_est.max(theta[0].abs()).max(theta[k - 1].abs());
        let c0 = y.column(0);
        let v = combine(&basis, c0.iter().cloned());
        let mut r = combine(&images, c0.iter().cloned());
        r.scaled_add(C64::new(-theta[0], 0.0), &v);
        let res = norm(&r);
        best = best.min(res);
        let exhausted = k == n;
        if res <= tol * norm_est.max(f64::MIN_POSITIVE) || exhausted || res == 0.0 {
            return Ok(EigPair {
                value: theta[0],
                vector: v,
                residual: res,
                matvecs,
            });
        }
        if matvecs >= opts.max_matvecs {
            return Err(NumericsError::NotConverged {
                iterations: matvecs,
                residual: best,
                history: vec![res],
            });
        }
        let keep = opts.keep.max(1).min(k - 1);
        let mut new_basis = Vec::with_capacity(m);
        let mut new_images = Vec::with_capacity(m);
        for c in 0..keep {
            new_basis.push(combine(&basis, y.column(c).iter().cloned()));
            new_images.push(combine(&images, y.column(c).iter().cloned()));
        }
        orthogonalize(&mut r, &new_basis);
        let beta = norm(&r);
        if beta == 0.0 {
            return Ok(EigPair {
                value: theta[0],
                vector: v,
                residual: res,
                matvecs,
            });
        }
        r.mapv_inplace(|z| z / beta);
        new_images.push(op.apply(&r));
        new_basis.push(r);
        matvecs += 1;
        basis = new_basis;
        images = new_images;
    }
}

/// Dominant (largest magnitude) eigenpair of a general map by a thick-restart
/// Arnoldi-type subspace iteration. Converged when `‖op v − λ v‖ ≤ tol · |λ|`.
pub fn eig_dominant(
    op: &dyn LinearMap,
    guess: &Vector,
    tol: f64,
    opts: &EigOptions,
) -> Result<DominantEig> {
    let n = guess.len();
    check_dims(op, n)?;
    let m = opts.krylov_dim.max(2).min(n);
    let mut basis = vec![normalized_guess(guess)?];
    let mut images = vec![op.apply(&basis[0])];
    let mut matvecs = 1;
    let mut best = f64::INFINITY;
    loop {
        while basis.len() < m {
            let last = images.last().unwrap();
            let mut r = last.clone();
            orthogonalize(&mut r, &basis);
            let beta = norm(&r);
            if beta <= 1e-14 * norm(last).max(1e-300) {
                break;
            }
            r.mapv_inplace(|z| z / beta);
            images.push(op.apply(&r));
            basis.push(r);
            matvecs += 1;
        }
        let k = basis.len();
        let mut g = Array2::<C64>::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                g[[i, j]] = dotc(&basis[i], &images[j]);
            }
        }
        let (vals, vecs) = g
            .eig()
            .map_err(|_| NumericsError::DecompositionFailure { rows: k, cols: k })?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| vals[b].norm().partial_cmp(&vals[a].norm()).unwrap());
        let theta = vals[order[0]];
        let coeff = vecs.column(order[0]).to_owned();
        let cn = norm(&coeff);
        let coeff = coeff.mapv(|z| z / cn);
        let v = combine(&basis, coeff.iter().cloned());
        let mut r = combine(&images, coeff.iter().cloned());
        r.scaled_add(-theta, &v);
        let res = norm(&r);
        best = best.min(res);
        let exhausted = k == n;
        if res <= tol * theta.norm().max(f64::MIN_POSITIVE) || exhausted || res == 0.0 {
            return Ok(DominantEig {
                value: theta,
                vector: v,
                subleading: (k > 1).then(|| vals[order[1]]),
                residual: res,
                matvecs,
            });
        }
        if matvecs >= opts.max_matvecs {
            return Err(NumericsError::NotConverged {
                iterations: matvecs,
                residual: best,
                history: vec![res],
            });
        }
        let keep = opts.keep.max(1).min(k - 1);
        let mut z = Array2::<C64>::zeros((k, keep));
        for (c, &idx) in order.iter().take(keep).enumerate() {
            z.column_mut(c).assign(&vecs.column(idx));
        }
        let (q, _) = z
            .qr()
            .map_err(|_| NumericsError::DecompositionFailure { rows: k, cols: keep })?;
        let mut new_basis = Vec::with_capacity(m);
        let mut new_images = Vec::with_capacity(m);
        for c in 0..q.ncols() {
            new_basis.push(combine(&basis, q.column(c).iter().cloned()));
            new_images.push(combine(&images, q.column(c).iter().cloned()));
        }
        orthogonalize(&mut r, &new_basis);
        let beta = norm(&r);
        if beta <= 1e-14 * res {
            basis = new_basis;
            images = new_images;
            let fresh = random_vector(n, matvecs as u64);
            let mut fresh = fresh;
            orthogonalize(&mut fresh, &basis);
            let fb = norm(&fresh);
            fresh.mapv_inplace(|z| z / fb);
            images.push(op.apply(&fresh));
            basis.push(fresh);
        } else {
            r.mapv_inplace(|z| z / beta);
            new_images.push(op.apply(&r));
            new_basis.push(r);
            basis = new_basis;
            images = new_images;
        }
        matvecs += 1;
    }
}

fn givens(a: C64, b: C64) -> (f64, C64, C64) {
    if a.norm() == 0.0 {
        return (0.0, C64::new(1.0, 0.0), b);
    }
    let t = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let phase = a / a.norm();
    (a.norm() / t, phase * b.conj() / t, phase * t)
}

/// Restarted GMRES. Converged when `‖op x − b‖ ≤ tol · ‖b‖`.
pub fn solve_linear(
    op: &dyn LinearMap,
    b: &Vector,
    guess: Option<&Vector>,
    tol: f64,
    opts: &SolveOptions,
) -> Result<SumState> {
    let n = b.len();
    check_dims(op, n)?;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(SumState {
            solution: Array1::zeros(n),
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut x = match guess {
        Some(g) if g.len() == n && g.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
            g.clone()
        }
        _ => Array1::zeros(n),
    };
    let m = opts.restart.max(1).min(n);
    let mut matvecs = 0;
    let mut steps = 0;
    let mut history = Vec::new();
    loop {
        let mut r = b - &op.apply(&x);
        matvecs += 1;
        let beta = norm(&r);
        history.push(beta / bnorm);
        if beta <= tol * bnorm {
            return Ok(SumState {
                solution: x,
                residual: beta / bnorm,
                iterations: steps,
            });
        }
        if matvecs >= opts.max_matvecs || stagnated(&history) {
            let tail = history.iter().rev().take(5).rev().cloned().collect();
            return Err(NumericsError::NotConverged {
                iterations: steps,
                residual: beta / bnorm,
                history: tail,
            });
        }
        r.mapv_inplace(|z| z / beta);
        let mut basis = vec![r];
        let mut h = Array2::<C64>::zeros((m + 1, m));
        let mut cs = vec![0.0; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut used = 0;
        for j in 0..m {
            let mut w = op.apply(&basis[j]);
            matvecs += 1;
            steps += 1;
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dotc(v, &w);
                    h[[i, j]] += c;
                    w.scaled_add(-c, v);
                }
            }
            let hn = norm(&w);
            h[[j + 1, j]] = C64::new(hn, 0.0);
            for i in 0..j {
                let (x0, x1) = (h[[i, j]], h[[i + 1, j]]);
                h[[i, j]] = x0 * cs[i] + sn[i] * x1;
                h[[i + 1, j]] = -sn[i].conj() * x0 + x1 * cs[i];
            }
            let (c, s, rr) = givens(h[[j, j]], h[[j + 1, j]]);
            cs[j] = c;
            sn[j] = s;
            h[[j, j]] = rr;
            h[[j + 1, j]] = ZERO;
            g[j + 1] = -s.conj() * g[j];
            g[j] *= c;
            used = j + 1;
            if g[j + 1].norm() <= tol * bnorm * 0.5 || hn <= 1e-300 {
                break;
            }
            w.mapv_inplace(|z| z / hn);
            basis.push(w);
        }
        let mut y = vec![ZERO; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= h[[i, k]] * y[k];
            }
            y[i] = acc / h[[i, i]];
        }
        for (v, c) in basis.iter().zip(y.iter()) {
            x.scaled_add(*c, v);
        }
    }
}

fn stagnated(history: &[f64]) -> bool {
    let k = history.len();
    k > 20 && history[k - 1] > 0.999 * history[k - 11]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dagger, identity};
    use ndarray_linalg::Solve;

    fn random_mat(n: usize, seed: u64) -> Mat {
        let v = random_vector(n * n, seed);
        vec_to_mat(&v, n, n)
    }

    #[test]
    fn smallest_of_diagonal() {
        let mut op = Array2::<C64>::zeros((3, 3));
        op[[0, 0]] = C64::new(-1.0, 0.0);
        op[[2, 2]] = C64::new(2.0, 0.0);
        let guess = Array1::from_elem(3, C64::new(1.0 / 3f64.sqrt(), 0.0));
        let p = eigsh_extremal(&op, &guess, 1e-12, &EigOptions::default()).unwrap();
        assert!((p.value + 1.0).abs() < 1e-14);
        assert!((p.vector[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_identity() {
        let guess = random_vector(5, 3);
        let p = eigsh_extremal(&identity(5), &guess, 1e-12, &EigOptions::default()).unwrap();
        assert!((p.value - 1.0).abs() < 1e-14);
        assert!((norm(&p.vector) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn smallest_matches_dense_oracle() {
        let a = random_mat(32, 9);
        let h = (&a + &dagger(&a)).mapv(|z| z * 0.5);
        let (w, _) = h.eigh(UPLO::Lower).unwrap();
        let opts = EigOptions {
            krylov_dim: 12,
            keep: 3,
            max_matvecs: 5000,
        };
        let p = eigsh_extremal(&h, &random_vector(32, 1), 1e-12, &opts).unwrap();
        assert!((p.value - w[0]).abs() < 1e-10);
        let rq = dotc(&p.vector, &h.dot(&p.vector)).re;
        assert!((rq - p.value).abs() < 1e-10);
    }

    #[test]
    fn zero_guess_is_rejected() {
        let z = Array1::zeros(3);
        assert!(eigsh_extremal(&identity(3), &z, 1e-10, &EigOptions::default()).is_err());
    }

    #[test]
    fn matrix_map_is_linear() {
        let a = random_mat(4, 2);
        let map = MatrixMap::new(4, 4, |x: &Mat| a.dot(x) + x.dot(&a));
        let (x, y) = (random_vector(16, 4), random_vector(16, 5));
        let (al, be) = (C64::new(0.3, -1.2), C64::new(-2.0, 0.7));
        let lhs = map.apply(&(x.mapv(|z| z * al) + y.mapv(|z| z * be)));
        let rhs = map.apply(&x).mapv(|z| z * al) + map.apply(&y).mapv(|z| z * be);
        assert!(norm(&(&lhs - &rhs)) <= 1e-12 * norm(&rhs));
    }

    #[test]
    fn gmres_identity_and_diagonal() {
        let b = random_vector(6, 7);
        let s = solve_linear(&identity(6), &b, None, 1e-12, &SolveOptions::default()).unwrap();
        assert!(norm(&(&s.solution - &b)) < 1e-12);
        assert_eq!(s.iterations, 1);
        let mut d = Array2::<C64>::zeros((3, 3));
        for (i, v) in [1.0, 2.0, 4.0].iter().enumerate() {
            d[[i, i]] = C64::new(*v, 0.0);
        }
        let b = Array1::from_vec(vec![1.0, 2.0, 4.0]).mapv(|x| C64::new(x, 0.0));
        let s = solve_linear(&d, &b, None, 1e-13, &SolveOptions::default()).unwrap();
        for z in s.solution.iter() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn gmres_matches_dense_solve() {
        let a = random_mat(50, 12).mapv(|z| z * 0.05) + identity(50).mapv(|z| z * 2.0);
        let b = random_vector(50, 13);
        let s = solve_linear(&a, &b, None, 1e-13, &SolveOptions::default()).unwrap();
        let x = a.solve(&b).unwrap();
        assert!(norm(&(&s.solution - &x)) < 1e-8 * norm(&x));
        assert!(s.residual <= 1e-13);
    }

    #[test]
    fn dominant_matches_dense_eig() {
        let a = random_mat(40, 21);
        let (vals, _) = a.eig().unwrap();
        let top = vals.iter().cloned().max_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap());
        let d = eig_dominant(&a, &random_vector(40, 2), 1e-12, &EigOptions::default()).unwrap();
        assert!((d.value - top.unwrap()).norm() < 1e-9 * d.value.norm());
    }
}
