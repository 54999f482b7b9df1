//! Small dense linear-algebra kernel: column-major matrices, Householder QR,
//! one-sided Jacobi SVD, symmetric Jacobi eigensolver, and a subspace-iteration
//! routine for the leading singular triplets.

use alloc::vec;
use alloc::vec::Vec;
use libm::{fabs, hypot, sqrt};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators keep the loop vectorizable.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, &v| if fabs(v) > m { fabs(v) } else { m })
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| fabs(*v)).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Dense column-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i + i * n] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(rows * cols, data.len(), "Mat::from_col_major"));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Mat::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i + i * n] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.rows]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + j * self.rows] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, xj) in x.iter().enumerate() {
            if *xj != 0.0 {
                axpy(*xj, self.col(j), y);
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = dot(self.col(j), x);
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let (src, dst) = (other.col(j), out.col_mut(j));
            for (k, &b) in src.iter().enumerate() {
                if b != 0.0 {
                    axpy(b, self.col(k), dst);
                }
            }
        }
        out
    }

    /// `Aᵀ B`
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        Mat::from_fn(self.cols, other.cols, |i, j| dot(self.col(i), other.col(j)))
    }

    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }

    /// Copy of the sub-block `rows r0..r0+nr`, `cols c0..c0+nc`.
    pub fn block(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Mat {
        Mat::from_fn(nr, nc, |i, j| self.get(r0 + i, c0 + j))
    }
}

/// Householder QR of an `m × n` matrix with `m ≥ n`.
pub struct Qr {
    /// Explicit thin orthogonal factor, `m × n`.
    pub q: Mat,
    /// Upper-triangular factor, `n × n`.
    pub r: Mat,
    /// Number of non-trivial reflectors applied; `det(Q) = (−1)^reflections` when square.
    pub reflections: usize,
}

pub fn householder_qr(a: &Mat) -> Qr {
    let (m, n) = (a.rows(), a.cols());
    assert!(m >= n, "householder_qr requires rows >= cols");
    let mut w = a.clone();
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    for k in 0..n {
        let x = &w.col(k)[k..];
        let alpha = norm2(x);
        let mut v: Vec<f64> = x.to_vec();
        if alpha == 0.0 {
            reflectors.push((v, 0.0));
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2 = dot(&v, &v);
        let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
        for j in k..n {
            let col = &mut w.col_mut(j)[k..];
            let s = beta * dot(&v, col);
            axpy(-s, &v, col);
        }
        reflectors.push((v, beta));
    }
    let reflections = reflectors.iter().filter(|(_, b)| *b != 0.0).count();
    let mut r = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            r.set(i, j, w.get(i, j));
        }
    }
    let mut q = Mat::zeros(m, n);
    for j in 0..n {
        q.set(j, j, 1.0);
    }
    for k in (0..n).rev() {
        let (v, beta) = &reflectors[k];
        if *beta == 0.0 {
            continue;
        }
        for j in k..n {
            let col = &mut q.col_mut(j)[k..];
            let s = beta * dot(v, col);
            axpy(-s, v, col);
        }
    }
    Qr { q, r, reflections }
}

/// Orthonormalize the columns of `a` in place (thin QR, Q kept).
pub fn orthonormalize(a: &mut Mat) {
    let qr = householder_qr(a);
    *a = qr.q;
}

/// Singular value decomposition `A = U diag(s) Vᵀ` with `s` sorted descending.
/// `u` is `rows × k`, `v` is `cols × k` with `k = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD. Accurate to working precision; cost grows as
/// `O(min(m,n)² · max(m,n))` per sweep, so it is used for small matrices and
/// as the fallback path.
pub fn jacobi_svd(a: &Mat) -> Result<Svd> {
    if a.rows() < a.cols() {
        let t = jacobi_svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let (m, n) = (a.rows(), a.cols());
    let mut u = a.clone();
    let mut v = Mat::identity(n);
    let eps = 1e-15;
    let floor = 1e-30 * dot(a.as_slice(), a.as_slice());
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        converged = true;
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(u.col(p), u.col(p));
                let beta = dot(u.col(q), u.col(q));
                let gamma = dot(u.col(p), u.col(q));
                if fabs(gamma) <= floor || fabs(gamma) <= eps * sqrt(alpha * beta) {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (fabs(zeta) + sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                rotate_cols(&mut u, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        return Err(Error::Numerical {
            what: "jacobi_svd",
            iterations: sweeps,
            residual: f64::NAN,
        });
    }
    let mut sv: Vec<(f64, usize)> = (0..n).map(|j| (norm2(u.col(j)), j)).collect();
    sv.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut uo = Mat::zeros(m, n);
    let mut vo = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &(sigma, j)) in sv.iter().enumerate() {
        s.push(sigma);
        vo.col_mut(k).copy_from_slice(v.col(j));
        if sigma > 0.0 {
            let dst = uo.col_mut(k);
            for (d, x) in dst.iter_mut().zip(u.col(j)) {
                *d = x / sigma;
            }
        }
    }
    Ok(Svd { u: uo, s, v: vo })
}

fn rotate_cols(a: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    let rows = a.rows();
    let (lo, hi) = a.data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Singular values only.
pub fn singular_values(a: &Mat) -> Result<Vec<f64>> {
    Ok(jacobi_svd(a)?.s)
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi.
/// Returns eigenvalues (descending) and eigenvectors as columns.
pub fn symmetric_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen requires a square matrix");
    let mut w = a.clone();
    let mut v = Mat::identity(n);
    for sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += w.get(p, q) * w.get(p, q);
            }
        }
        if off <= 1e-30 * (1.0 + w.frobenius() * w.frobenius()) {
            let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (w.get(i, i), i)).collect();
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));
            let mut vecs = Mat::zeros(n, n);
            for (k, &(_, i)) in pairs.iter().enumerate() {
                vecs.col_mut(k).copy_from_slice(v.col(i));
            }
            return Ok((pairs.iter().map(|p| p.0).collect(), vecs));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (w.get(q, q) - w.get(p, p)) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (fabs(theta) + sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                // w <- Jᵀ w J applied as column then row rotation.
                rotate_cols(&mut w, p, q, c, s);
                for j in 0..n {
                    let (x, y) = (w.get(p, j), w.get(q, j));
                    w.set(p, j, c * x - s * y);
                    w.set(q, j, s * x + c * y);
                }
                rotate_cols(&mut v, p, q, c, s);
            }
        }
        let _ = sweep;
    }
    Err(Error::Numerical {
        what: "symmetric_eigen",
        iterations: JACOBI_MAX_SWEEPS,
        residual: f64::NAN,
    })
}

/// Leading singular triplets from subspace iteration.
#[derive(Clone, Debug)]
pub struct Triplets {
    pub s: Vec<f64>,
    /// Left vectors as columns.
    pub u: Mat,
    /// Right vectors as columns.
    pub v: Mat,
}

pub const SUBSPACE_TOL: f64 = 1e-10;
pub const SUBSPACE_MAX_ITER: usize = 5000;
/// Matrices with a side at or below this size go straight to Jacobi.
const DIRECT_SVD_MAX_SIDE: usize = 24;
/// Largest side for which the full SVD fallback is allowed.
const FALLBACK_SVD_MAX_SIDE: usize = 1024;

/// Returns all leading triplets with `σ_j ≥ (1 − rel_tol)·σ₁`, at most `max_count`.
pub fn leading_triplets(a: &Mat, rel_tol: f64, max_count: usize) -> Result<Triplets> {
    let k = a.rows().min(a.cols());
    let max_count = max_count.max(1).min(k);
    if k <= DIRECT_SVD_MAX_SIDE {
        return Ok(truncate_svd(jacobi_svd(a)?, rel_tol, max_count));
    }
    let mut block = (max_count + 2).min(4).max(2).min(k);
    loop {
        match subspace_iteration(a, block) {
            Ok(t) => {
                let cut = count_within(&t.s, rel_tol).min(max_count);
                // Need one spare vector beyond the face to be sure it closes.
                if cut < block || block == k || cut == max_count {
                    return Ok(trim(t, cut));
                }
                block = (2 * block).min(k);
            }
            Err(e) => {
                if a.rows().max(a.cols()) <= FALLBACK_SVD_MAX_SIDE {
                    return Ok(truncate_svd(jacobi_svd(a)?, rel_tol, max_count));
                }
                return Err(e);
            }
        }
    }
}

fn count_within(s: &[f64], rel_tol: f64) -> usize {
    if s.is_empty() || s[0] <= 0.0 {
        return s.len().min(1);
    }
    let thr = (1.0 - rel_tol) * s[0];
    s.iter().take_while(|&&x| x >= thr).count().max(1)
}

fn truncate_svd(svd: Svd, rel_tol: f64, max_count: usize) -> Triplets {
    let cut = count_within(&svd.s, rel_tol).min(max_count);
    trim(
        Triplets {
            s: svd.s,
            u: svd.u,
            v: svd.v,
        },
        cut,
    )
}

fn trim(t: Triplets, cut: usize) -> Triplets {
    let u = Mat::from_fn(t.u.rows(), cut, |i, j| t.u.get(i, j));
    let v = Mat::from_fn(t.v.rows(), cut, |i, j| t.v.get(i, j));
    Triplets {
        s: t.s[..cut].to_vec(),
        u,
        v,
    }
}

/// Deterministic pseudo-random start so that repeated calls agree exactly.
fn start_block(n: usize, b: usize) -> Mat {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    Mat::from_fn(n, b, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
}

fn subspace_iteration(a: &Mat, b: usize) -> Result<Triplets> {
    let (m, n) = (a.rows(), a.cols());
    let at = a.transpose();
    let mut v = start_block(n, b);
    orthonormalize(&mut v);
    let scale_a = a.frobenius();
    if scale_a == 0.0 {
        let mut u0 = Mat::zeros(m, 1);
        u0.set(0, 0, 1.0);
        let mut v0 = Mat::zeros(n, 1);
        v0.set(0, 0, 1.0);
        return Ok(Triplets {
            s: vec![0.0],
            u: u0,
            v: v0,
        });
    }
    let mut last_res = f64::INFINITY;
    for iter in 0..SUBSPACE_MAX_ITER {
        let mut u = a.matmul(&v);
        orthonormalize(&mut u);
        v = at.matmul(&u);
        orthonormalize(&mut v);
        if iter % 2 == 1 || iter + 1 == SUBSPACE_MAX_ITER {
            // Rayleigh–Ritz on the current pair of subspaces.
            let av = a.matmul(&v);
            let small = u.t_matmul(&av);
            let svd = jacobi_svd(&small)?;
            let uu = u.matmul(&svd.u);
            let vv = v.matmul(&svd.v);
            // Residual of the leading triplet, relative to σ₁.
            let sigma1 = svd.s[0];
            let mut res: f64 = 0.0;
            let mut r = vec![0.0; m];
            let mut rt = vec![0.0; n];
            let check = count_within(&svd.s, 1e-3).min(b);
            for j in 0..check {
                a.matvec(vv.col(j), &mut r);
                axpy(-svd.s[j], uu.col(j), &mut r);
                at.matvec(uu.col(j), &mut rt);
                axpy(-svd.s[j], vv.col(j), &mut rt);
                res = res.max(hypot(norm2(&r), norm2(&rt)));
            }
            last_res = res / sigma1.max(f64::MIN_POSITIVE);
            if last_res <= SUBSPACE_TOL {
                return Ok(Triplets {
                    s: svd.s,
                    u: uu,
                    v: vv,
                });
            }
            v = vv;
        }
    }
    Err(Error::Numerical {
        what: "subspace_iteration",
        iterations: SUBSPACE_MAX_ITER,
        residual: last_res,
    })
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric PSD matrix.
pub fn power_norm_sym(a: &Mat, iters: usize) -> f64 {
    let n = a.rows();
    if n == 0 {
        return 0.0;
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect();
    let mut y = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        scale(1.0 / nx, &mut x);
        a.matvec(&x, &mut y);
        est = norm2(&y);
        core::mem::swap(&mut x, &mut y);
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        Mat::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn qr_reconstructs_and_is_orthogonal() {
        let a = pseudo(7, 5, 3);
        let qr = householder_qr(&a);
        let back = qr.q.matmul(&qr.r);
        for i in 0..7 {
            for j in 0..5 {
                assert!((back.get(i, j) - a.get(i, j)).abs() < 1e-12);
            }
        }
        let qtq = qr.q.t_matmul(&qr.q);
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((qtq.get(i, j) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_svd_diag() {
        let s = jacobi_svd(&Mat::diag(&[1.0, 3.0])).unwrap();
        assert!((s.s[0] - 3.0).abs() < 1e-14);
        assert!((s.s[1] - 1.0).abs() < 1e-14);
        assert!((s.u.get(1, 0).abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_svd_reconstructs_wide() {
        let a = pseudo(4, 9, 11);
        let svd = jacobi_svd(&a).unwrap();
        let us = Mat::from_fn(4, 4, |i, j| svd.u.get(i, j) * svd.s[j]);
        let back = us.matmul(&svd.v.transpose());
        for i in 0..4 {
            for j in 0..9 {
                assert!((back.get(i, j) - a.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subspace_matches_jacobi() {
        let a = pseudo(60, 45, 5);
        let t = leading_triplets(&a, 0.0, 1).unwrap();
        let full = jacobi_svd(&a).unwrap();
        assert!((t.s[0] - full.s[0]).abs() < 1e-9 * full.s[0]);
        let align = dot(t.u.col(0), full.u.col(0)).abs();
        assert!((align - 1.0).abs() < 1e-8);
    }

    #[test]
    fn symmetric_eigen_2x2() {
        let a = Mat::from_col_major(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        assert!((vecs.get(0, 0).abs() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }
}
