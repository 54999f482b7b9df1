//! Quantitative diagnostics: statistical-dimension bounds for sparse descent
//! cones, the predicted phase transition, error bounds, and small oracles.

use alloc::vec::Vec;
use core::f64::consts::PI;
use libm::{erfc, exp, pow, sqrt};

use crate::atoms::AtomicSet;
use crate::dense::{norm2, sub};
use crate::error::{Error, Result};

const GOLDEN_TOL: f64 = 1e-10;

fn normal_density(t: f64) -> f64 {
    exp(-0.5 * t * t) / sqrt(2.0 * PI)
}

fn normal_upper_tail(t: f64) -> f64 {
    0.5 * erfc(t / core::f64::consts::SQRT_2)
}

/// `s(1+τ²) + (n−s)·2((1+τ²)Φ̄(τ) − τφ(τ))`
pub fn sparse_bound_objective(s: usize, n: usize, tau: f64) -> f64 {
    let t2 = 1.0 + tau * tau;
    s as f64 * t2 + (n - s) as f64 * 2.0 * (t2 * normal_upper_tail(tau) - tau * normal_density(tau))
}

/// Upper bound on the statistical dimension of the ℓ₁ descent cone at an
/// `s`-sparse point of `ℝⁿ`.
pub fn sparse_descent_dim_bound(s: usize, n: usize) -> Result<f64> {
    if s == 0 {
        return Err(Error::invalid("sparsity must be at least 1; use descent_dim_bound_allow_zero"));
    }
    if s > n {
        return Err(Error::invalid("sparsity exceeds dimension"));
    }
    let f = |t: f64| sparse_bound_objective(s, n, t);
    let (mut a, mut b) = (0.0f64, 40.0f64);
    let ratio = (sqrt(5.0) - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    Ok(f(0.5 * (a + b)).min(f(0.0)))
}

/// As [`sparse_descent_dim_bound`], but `s = 0` yields `n` (the descent cone is all of `ℝⁿ`).
pub fn descent_dim_bound_allow_zero(s: usize, n: usize) -> Result<f64> {
    if s == 0 {
        Ok(n as f64)
    } else {
        sparse_descent_dim_bound(s, n)
    }
}

/// `(Σᵢ √δ̂(sᵢ, nᵢ))²`
pub fn phase_curve_m_general(parts: &[(usize, usize)]) -> Result<f64> {
    let mut total = 0.0;
    for &(s, n) in parts {
        total += sqrt(sparse_descent_dim_bound(s, n)?);
    }
    Ok(total * total)
}

/// `(k·√δ̂(s, n))²` for `k` identical components.
pub fn phase_curve_m(k: usize, s: usize, n: usize) -> Result<f64> {
    let d = sparse_descent_dim_bound(s, n)?;
    Ok((k * k) as f64 * d)
}

pub const DEFAULT_BOUND_CONSTANT: f64 = 2.0;

/// `4α / [√(m−1) − c·Σ√δ − t]₊`, `+∞` when the bracket is not positive.
pub fn error_bound_rhs(alpha: f64, m: usize, sum_sqrt_delta: f64, t: f64, c: f64) -> f64 {
    if m < 2 {
        return f64::INFINITY;
    }
    let bracket = sqrt((m - 1) as f64) - c * sum_sqrt_delta - t;
    if bracket <= 0.0 {
        f64::INFINITY
    } else {
        4.0 * alpha / bracket
    }
}

/// `maxᵢ ‖xᵢ* − xᵢ♮‖₂`
pub fn maxerr(recovered: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if recovered.len() != truth.len() {
        return Err(Error::dim(truth.len(), recovered.len(), "maxerr component count"));
    }
    let mut worst: f64 = 0.0;
    for (x, y) in recovered.iter().zip(truth) {
        if x.len() != y.len() {
            return Err(Error::dim(y.len(), x.len(), "maxerr component length"));
        }
        worst = worst.max(norm2(&sub(x, y)));
    }
    Ok(worst)
}

pub const SUCCESS_THRESHOLD: f64 = 1e-2;

/// 21 geometric steps from `1e-6` to `1e-1`.
pub fn default_step_grid() -> Vec<f64> {
    (0..21).map(|i| pow(10.0, -6.0 + 5.0 * i as f64 / 20.0)).collect()
}

/// One-sided check that `d` is a descent direction of `γ_A` at `x`.
pub fn descent_membership(set: &AtomicSet, x: &[f64], d: &[f64], steps: &[f64]) -> Result<bool> {
    if x.len() != d.len() {
        return Err(Error::dim(x.len(), d.len(), "descent direction"));
    }
    let base = set.gauge(x)?;
    for &a in steps {
        let moved: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + a * di).collect();
        if set.gauge(&moved)? <= base + 1e-10 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// `max{‖u‖, ‖v‖} ≤ ‖u + v‖/√β + 1e-10`
pub fn incoherence_norm_check(u: &[f64], v: &[f64], beta: f64) -> bool {
    let sum: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
    norm2(u).max(norm2(v)) <= norm2(&sum) / sqrt(beta) + 1e-10
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_support_gives_n() {
        for n in [1usize, 7, 50] {
            assert!((sparse_descent_dim_bound(n, n).unwrap() - n as f64).abs() < 1e-8);
        }
        assert!(sparse_descent_dim_bound(0, 5).is_err());
        assert_eq!(descent_dim_bound_allow_zero(0, 5).unwrap(), 5.0);
    }

    #[test]
    fn curve_composition() {
        let d = sparse_descent_dim_bound(5, 100).unwrap();
        assert!((phase_curve_m(1, 5, 100).unwrap() - d).abs() < 1e-12);
        assert!((phase_curve_m(2, 5, 100).unwrap() - 4.0 * d).abs() < 1e-9);
        assert!((phase_curve_m_general(&[(5, 100), (5, 100)]).unwrap() - 4.0 * d).abs() < 1e-9);
    }

    #[test]
    fn error_bound_examples() {
        assert!((error_bound_rhs(1.0, 401, 5.0, 0.0, 2.0) - 0.4).abs() < 1e-12);
        assert_eq!(error_bound_rhs(1.0, 10, 5.0, 0.0, 2.0), f64::INFINITY);
        assert_eq!(error_bound_rhs(0.0, 401, 5.0, 0.0, 2.0), 0.0);
    }

    #[test]
    fn maxerr_examples() {
        let a = alloc::vec![alloc::vec![1.0, 0.0], alloc::vec![0.0, 0.0]];
        assert_eq!(maxerr(&a, &a).unwrap(), 0.0);
        let b = alloc::vec![alloc::vec![1.1, 0.0], alloc::vec![0.0, 0.3]];
        assert!((maxerr(&b, &a).unwrap() - 0.3).abs() < 1e-12);
        assert!(maxerr(&a[..1], &a).is_err());
    }

    #[test]
    fn membership_examples() {
        let c = AtomicSet::CrossPolytope(2);
        let g = default_step_grid();
        assert_eq!(g.len(), 21);
        assert!((g[0] - 1e-6).abs() < 1e-18 && (g[20] - 1e-1).abs() < 1e-15);
        assert!(descent_membership(&c, &[1.0, 0.0], &[-1.0, 0.0], &g).unwrap());
        assert!(!descent_membership(&c, &[1.0, 0.0], &[0.0, 1.0], &g).unwrap());
        assert!(descent_membership(&c, &[1.0, 0.0], &[-1.0, 1.0], &g).unwrap());
    }

    #[test]
    fn orthogonal_pair_passes() {
        assert!(incoherence_norm_check(&[3.0, 0.0], &[0.0, 4.0], 1.0));
    }
}
