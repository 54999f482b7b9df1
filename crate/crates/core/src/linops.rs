//! Matrix-free linear operators with forward and adjoint application.
//!
//! Matrices are identified with their column-major flattening, and the inner
//! product on matrix spaces is the Frobenius inner product.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::dct::{Dct2dPlan, DctPlan};
use crate::dense::{householder_qr, Mat};
use crate::error::{Error, Result};
use crate::rng::{gaussian, RngSeed};

/// A rectangular block `rows row_start..row_start+row_len`, `cols col_start..col_start+col_len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub row_start: usize,
    pub row_len: usize,
    pub col_start: usize,
    pub col_len: usize,
}

impl Block {
    pub fn new(row_start: usize, row_len: usize, col_start: usize, col_len: usize) -> Self {
        Block {
            row_start,
            row_len,
            col_start,
            col_len,
        }
    }

    pub fn len(&self) -> usize {
        self.row_len * self.col_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fits(&self, rows: usize, cols: usize) -> bool {
        self.row_start + self.row_len <= rows && self.col_start + self.col_len <= cols
    }

    pub fn overlaps(&self, other: &Block) -> bool {
        self.row_start < other.row_start + other.row_len
            && other.row_start < self.row_start + self.row_len
            && self.col_start < other.col_start + other.col_len
            && other.col_start < self.col_start + self.col_len
    }

    /// Copy this block out of a column-major `rows`-tall matrix.
    pub fn extract(&self, rows: usize, x: &[f64]) -> Mat {
        Mat::from_fn(self.row_len, self.col_len, |i, j| {
            x[(self.row_start + i) + (self.col_start + j) * rows]
        })
    }

    /// Add `alpha · block` into a column-major `rows`-tall matrix.
    pub fn embed_add(&self, rows: usize, alpha: f64, block: &[f64], out: &mut [f64]) {
        for j in 0..self.col_len {
            for i in 0..self.row_len {
                out[(self.row_start + i) + (self.col_start + j) * rows] += alpha * block[i + j * self.row_len];
            }
        }
    }
}

/// A linear map `ℝ^cols → ℝ^rows`.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearOperator {
    Identity(usize),
    /// Explicit dense matrix (Gaussian measurement maps and general matrices).
    Dense(Mat),
    /// Orthogonal matrix of determinant +1.
    Rotation(Mat),
    /// Orthonormal 1-D DCT-II.
    Dct(DctPlan),
    /// Orthonormal separable 2-D DCT-II on a column-major image.
    Dct2d(Dct2dPlan),
    /// `X ↦ L X R` on column-major matrices.
    Conjugation { left: Mat, right: Mat },
    /// `outer ∘ inner`.
    Composition(Box<LinearOperator>, Box<LinearOperator>),
    Adjoint(Box<LinearOperator>),
    /// `R_p`: extract a block of a `rows × cols` matrix.
    BlockExtract { rows: usize, cols: usize, block: Block },
    /// `R_p^*`: zero-padded embedding of a block into a `rows × cols` matrix.
    BlockEmbed { rows: usize, cols: usize, block: Block },
}

impl LinearOperator {
    pub fn dct(n: usize) -> Self {
        LinearOperator::Dct(DctPlan::new(n))
    }

    pub fn dct2d(rows: usize, cols: usize) -> Self {
        LinearOperator::Dct2d(Dct2dPlan::new(rows, cols))
    }

    pub fn compose(outer: LinearOperator, inner: LinearOperator) -> Result<Self> {
        if outer.cols() != inner.rows() {
            return Err(Error::dim(outer.cols(), inner.rows(), "LinearOperator::compose"));
        }
        Ok(LinearOperator::Composition(Box::new(outer), Box::new(inner)))
    }

    pub fn adjoint(self) -> Self {
        match self {
            LinearOperator::Adjoint(inner) => *inner,
            LinearOperator::Identity(n) => LinearOperator::Identity(n),
            LinearOperator::BlockExtract { rows, cols, block } => {
                LinearOperator::BlockEmbed { rows, cols, block }
            }
            LinearOperator::BlockEmbed { rows, cols, block } => {
                LinearOperator::BlockExtract { rows, cols, block }
            }
            other => LinearOperator::Adjoint(Box::new(other)),
        }
    }

    /// Output dimension.
    pub fn rows(&self) -> usize {
        match self {
            LinearOperator::Identity(n) => *n,
            LinearOperator::Dense(m) | LinearOperator::Rotation(m) => m.rows(),
            LinearOperator::Dct(p) => p.len(),
            LinearOperator::Dct2d(p) => p.shape().0 * p.shape().1,
            LinearOperator::Conjugation { left, right } => left.rows() * right.cols(),
            LinearOperator::Composition(outer, _) => outer.rows(),
            LinearOperator::Adjoint(op) => op.cols(),
            LinearOperator::BlockExtract { block, .. } => block.len(),
            LinearOperator::BlockEmbed { rows, cols, .. } => rows * cols,
        }
    }

    /// Input dimension.
    pub fn cols(&self) -> usize {
        match self {
            LinearOperator::Identity(n) => *n,
            LinearOperator::Dense(m) | LinearOperator::Rotation(m) => m.cols(),
            LinearOperator::Dct(p) => p.len(),
            LinearOperator::Dct2d(p) => p.shape().0 * p.shape().1,
            LinearOperator::Conjugation { left, right } => left.cols() * right.rows(),
            LinearOperator::Composition(_, inner) => inner.cols(),
            LinearOperator::Adjoint(op) => op.rows(),
            LinearOperator::BlockExtract { rows, cols, .. } => rows * cols,
            LinearOperator::BlockEmbed { block, .. } => block.len(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, LinearOperator::Identity(_))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.rows()];
        self.apply_into(x, &mut y)?;
        Ok(y)
    }

    pub fn adjoint_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.cols()];
        self.adjoint_apply_into(y, &mut x)?;
        Ok(x)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.cols() {
            return Err(Error::dim(self.cols(), x.len(), "LinearOperator::apply"));
        }
        if y.len() != self.rows() {
            return Err(Error::dim(self.rows(), y.len(), "LinearOperator::apply output"));
        }
        match self {
            LinearOperator::Identity(_) => y.copy_from_slice(x),
            LinearOperator::Dense(m) | LinearOperator::Rotation(m) => m.matvec(x, y),
            LinearOperator::Dct(p) => p.forward(x, y),
            LinearOperator::Dct2d(p) => p.forward(x, y),
            LinearOperator::Conjugation { left, right } => {
                let xm = Mat::from_col_major(left.cols(), right.rows(), x.to_vec())?;
                let out = left.matmul(&xm).matmul(right);
                y.copy_from_slice(out.as_slice());
            }
            LinearOperator::Composition(outer, inner) => {
                let mid = inner.apply(x)?;
                outer.apply_into(&mid, y)?;
            }
            LinearOperator::Adjoint(op) => op.adjoint_apply_into(x, y)?,
            LinearOperator::BlockExtract { rows, block, .. } => {
                let b = block.extract(*rows, x);
                y.copy_from_slice(b.as_slice());
            }
            LinearOperator::BlockEmbed { rows, block, .. } => {
                y.iter_mut().for_each(|v| *v = 0.0);
                block.embed_add(*rows, 1.0, x, y);
            }
        }
        Ok(())
    }

    pub fn adjoint_apply_into(&self, y: &[f64], x: &mut [f64]) -> Result<()> {
        if y.len() != self.rows() {
            return Err(Error::dim(self.rows(), y.len(), "LinearOperator::adjoint_apply"));
        }
        if x.len() != self.cols() {
            return Err(Error::dim(self.cols(), x.len(), "LinearOperator::adjoint_apply output"));
        }
        match self {
            LinearOperator::Identity(_) => x.copy_from_slice(y),
            LinearOperator::Dense(m) | LinearOperator::Rotation(m) => m.matvec_t(y, x),
            LinearOperator::Dct(p) => p.inverse(y, x),
            LinearOperator::Dct2d(p) => p.inverse(y, x),
            LinearOperator::Conjugation { left, right } => {
                let ym = Mat::from_col_major(left.rows(), right.cols(), y.to_vec())?;
                // Lᵀ Y Rᵀ
                let out = left.t_matmul(&ym).matmul(&right.transpose());
                x.copy_from_slice(out.as_slice());
            }
            LinearOperator::Composition(outer, inner) => {
                let mid = outer.adjoint_apply(y)?;
                inner.adjoint_apply_into(&mid, x)?;
            }
            LinearOperator::Adjoint(op) => op.apply_into(y, x)?,
            LinearOperator::BlockExtract { rows, block, .. } => {
                x.iter_mut().for_each(|v| *v = 0.0);
                block.embed_add(*rows, 1.0, y, x);
            }
            LinearOperator::BlockEmbed { rows, block, .. } => {
                let b = block.extract(*rows, y);
                x.copy_from_slice(b.as_slice());
            }
        }
        Ok(())
    }

    /// `A x` for a column-major matrix whose columns are inputs. Used to build
    /// dense representations in tests and diagnostics.
    pub fn to_dense(&self) -> Result<Mat> {
        let n = self.cols();
        let mut out = Mat::zeros(self.rows(), n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, out.col_mut(j))?;
            e[j] = 0.0;
        }
        Ok(out)
    }
}

/// Dense `m × n` operator with i.i.d. standard Gaussian entries.
pub fn sample_gaussian_operator(m: usize, n: usize, seed: RngSeed) -> Result<LinearOperator> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("Gaussian operator needs m, n >= 1"));
    }
    let mut rng = seed.rng();
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        data.push(gaussian(&mut rng));
    }
    Ok(LinearOperator::Dense(Mat::from_col_major(m, n, data)?))
}

/// Haar-distributed element of SO(n) as an explicit matrix.
///
/// QR-factorize a Gaussian matrix, fix the column signs by `sign(R_ii)`, then
/// flip the last column if the determinant is −1.
pub fn sample_rotation_matrix(n: usize, seed: RngSeed) -> Result<Mat> {
    if n == 0 {
        return Err(Error::invalid("rotation dimension must be >= 1"));
    }
    let mut rng = seed.rng();
    let g = Mat::from_fn(n, n, |_, _| gaussian(&mut rng));
    let qr = householder_qr(&g);
    let mut q = qr.q;
    let mut negatives = 0usize;
    for j in 0..n {
        let d = qr.r.get(j, j);
        if d < 0.0 {
            negatives += 1;
            q.col_mut(j).iter_mut().for_each(|v| *v = -*v);
        }
    }
    // Each active Householder reflector contributes a factor −1 to det(Q).
    if (qr.reflections + negatives) % 2 == 1 {
        q.col_mut(n - 1).iter_mut().for_each(|v| *v = -*v);
    }
    Ok(q)
}

pub fn sample_rotation(n: usize, seed: RngSeed) -> Result<LinearOperator> {
    Ok(LinearOperator::Rotation(sample_rotation_matrix(n, seed)?))
}

/// Determinant via LU with partial pivoting (diagnostics and tests).
pub fn determinant(a: &Mat) -> f64 {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if libm::fabs(m.get(i, k)) > libm::fabs(m.get(p, k)) {
                p = i;
            }
        }
        let pivot = m.get(p, k);
        if pivot == 0.0 {
            return 0.0;
        }
        if p != k {
            det = -det;
            for j in 0..n {
                let (a1, a2) = (m.get(k, j), m.get(p, j));
                m.set(k, j, a2);
                m.set(p, j, a1);
            }
        }
        det *= pivot;
        for i in k + 1..n {
            let f = m.get(i, k) / pivot;
            if f != 0.0 {
                for j in k..n {
                    let v = m.get(i, j) - f * m.get(k, j);
                    m.set(i, j, v);
                }
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::dot;

    #[test]
    fn identity_passes_through() {
        let op = LinearOperator::Identity(3);
        assert_eq!(op.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn gaussian_is_deterministic() {
        let s = RngSeed::new(1, 2);
        let a = sample_gaussian_operator(2, 2, s).unwrap();
        let b = sample_gaussian_operator(2, 2, s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_n1_is_one() {
        let q = sample_rotation_matrix(1, RngSeed::new(3, 0)).unwrap();
        assert_eq!(q.get(0, 0), 1.0);
    }

    #[test]
    fn rotation_is_special_orthogonal() {
        for n in [2usize, 3, 4, 7, 16] {
            for s in 0..8 {
                let q = sample_rotation_matrix(n, RngSeed::new(5, s)).unwrap();
                let qtq = q.t_matmul(&q);
                for i in 0..n {
                    for j in 0..n {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((qtq.get(i, j) - e).abs() < 1e-10);
                    }
                }
                assert!((determinant(&q) - 1.0).abs() < 1e-8, "n={n} det={}", determinant(&q));
            }
        }
    }

    #[test]
    fn block_embed_then_extract() {
        let block = Block::new(1, 2, 0, 2);
        let embed = LinearOperator::BlockEmbed { rows: 4, cols: 3, block };
        let extract = embed.clone().adjoint();
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = extract.apply(&embed.apply(&x).unwrap()).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn conjugation_adjoint() {
        let l = Mat::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.0);
        let r = Mat::from_fn(4, 2, |i, j| (i * j) as f64 + 0.5);
        let op = LinearOperator::Conjugation { left: l, right: r };
        let x: Vec<f64> = (0..op.cols()).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y: Vec<f64> = (0..op.rows()).map(|i| (i as f64).sin()).collect();
        let lhs = dot(&op.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &op.adjoint_apply(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
