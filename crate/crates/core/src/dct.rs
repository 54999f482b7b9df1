//! Orthonormal DCT-II and its inverse (DCT-III).
//!
//! `y_k = c_k √(2/n) Σ_j x_j cos(π(2j+1)k / 2n)` with `c_0 = 1/√2`, `c_k = 1`.
//! Lengths below [`FAST_MIN_LEN`] (or not a power of two) use a cached cosine
//! table; longer power-of-two lengths use Lee's recursive factorization.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};
use libm::{cos, sqrt};

pub const FAST_MIN_LEN: usize = 512;

/// Precomputed DCT plan for one length.
#[derive(Clone, Debug, PartialEq)]
pub struct DctPlan {
    n: usize,
    /// Row-major orthonormal DCT matrix (direct path only).
    table: Vec<f64>,
}

impl DctPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "DCT length must be positive");
        let table = if use_fast(n) {
            Vec::new()
        } else {
            let mut t = vec![0.0; n * n];
            let s = sqrt(2.0 / n as f64);
            for k in 0..n {
                let ck = if k == 0 { FRAC_1_SQRT_2 } else { 1.0 };
                for j in 0..n {
                    t[k * n + j] = ck * s * cos(PI * (2 * j + 1) as f64 * k as f64 / (2 * n) as f64);
                }
            }
            t
        };
        DctPlan { n, table }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        if self.table.is_empty() {
            y.copy_from_slice(x);
            lee_forward(y);
            let s = sqrt(2.0 / self.n as f64);
            y[0] *= s * FRAC_1_SQRT_2;
            for v in y[1..].iter_mut() {
                *v *= s;
            }
        } else {
            let n = self.n;
            for (k, yk) in y.iter_mut().enumerate() {
                *yk = crate::dense::dot(&self.table[k * n..(k + 1) * n], x);
            }
        }
    }

    pub fn inverse(&self, y: &[f64], x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        if self.table.is_empty() {
            let s = sqrt(2.0 / self.n as f64);
            x.copy_from_slice(y);
            // lee_inverse evaluates X_0/2 + Σ_{k≥1} X_k cos(..).
            x[0] *= s * FRAC_1_SQRT_2 * 2.0;
            for v in x[1..].iter_mut() {
                *v *= s;
            }
            lee_inverse(x);
        } else {
            let n = self.n;
            x.iter_mut().for_each(|v| *v = 0.0);
            for (k, yk) in y.iter().enumerate() {
                crate::dense::axpy(*yk, &self.table[k * n..(k + 1) * n], x);
            }
        }
    }
}

fn use_fast(n: usize) -> bool {
    n >= FAST_MIN_LEN && n.is_power_of_two()
}

/// Unnormalized DCT-II in place: `X_k = Σ_j x_j cos(π(2j+1)k/2n)`.
fn lee_forward(v: &mut [f64]) {
    let n = v.len();
    if n == 1 {
        return;
    }
    let half = n / 2;
    let mut alpha = vec![0.0; half];
    let mut beta = vec![0.0; half];
    for i in 0..half {
        let (x, y) = (v[i], v[n - 1 - i]);
        alpha[i] = x + y;
        beta[i] = (x - y) / (cos((i as f64 + 0.5) * PI / n as f64) * 2.0);
    }
    lee_forward(&mut alpha);
    lee_forward(&mut beta);
    for i in 0..half - 1 {
        v[2 * i] = alpha[i];
        v[2 * i + 1] = beta[i] + beta[i + 1];
    }
    v[n - 2] = alpha[half - 1];
    v[n - 1] = beta[half - 1];
}

/// Unnormalized DCT-III in place: `x_j = X_0/2 + Σ_{k≥1} X_k cos(π(2j+1)k/2n)`.
fn lee_inverse(v: &mut [f64]) {
    v[0] /= 2.0;
    lee_inverse_rec(v);
}

fn lee_inverse_rec(v: &mut [f64]) {
    let n = v.len();
    if n == 1 {
        return;
    }
    let half = n / 2;
    let mut alpha = vec![0.0; half];
    let mut beta = vec![0.0; half];
    alpha[0] = v[0];
    beta[0] = v[1];
    for i in 1..half {
        alpha[i] = v[2 * i];
        beta[i] = v[2 * i - 1] + v[2 * i + 1];
    }
    lee_inverse_rec(&mut alpha);
    lee_inverse_rec(&mut beta);
    for i in 0..half {
        let x = alpha[i];
        let y = beta[i] / (cos((i as f64 + 0.5) * PI / n as f64) * 2.0);
        v[i] = x + y;
        v[n - 1 - i] = x - y;
    }
}

/// Orthonormal DCT-II of `x`.
pub fn dct_apply(x: &[f64]) -> Vec<f64> {
    let plan = DctPlan::new(x.len());
    let mut y = vec![0.0; x.len()];
    plan.forward(x, &mut y);
    y
}

/// Adjoint (= inverse) of [`dct_apply`].
pub fn dct_adjoint(y: &[f64]) -> Vec<f64> {
    let plan = DctPlan::new(y.len());
    let mut x = vec![0.0; y.len()];
    plan.inverse(y, &mut x);
    x
}

/// Separable 2-D DCT on a column-major `rows × cols` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Dct2dPlan {
    rows: DctPlan,
    cols: DctPlan,
}

impl Dct2dPlan {
    pub fn new(rows: usize, cols: usize) -> Self {
        Dct2dPlan {
            rows: DctPlan::new(rows),
            cols: DctPlan::new(cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        self.separable(x, y, true);
    }

    pub fn inverse(&self, x: &[f64], y: &mut [f64]) {
        self.separable(x, y, false);
    }

    fn separable(&self, x: &[f64], y: &mut [f64], fwd: bool) {
        let (r, c) = self.shape();
        assert_eq!(x.len(), r * c);
        assert_eq!(y.len(), r * c);
        // Along each row (length c) first, then along each column (length r).
        let mut row_in = vec![0.0; c];
        let mut row_out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                row_in[j] = x[i + j * r];
            }
            if fwd {
                self.cols.forward(&row_in, &mut row_out);
            } else {
                self.cols.inverse(&row_in, &mut row_out);
            }
            for j in 0..c {
                y[i + j * r] = row_out[j];
            }
        }
        let mut col_out = vec![0.0; r];
        for j in 0..c {
            let col = &y[j * r..(j + 1) * r];
            if fwd {
                self.rows.forward(col, &mut col_out);
            } else {
                self.rows.inverse(col, &mut col_out);
            }
            y[j * r..(j + 1) * r].copy_from_slice(&col_out);
        }
    }
}
