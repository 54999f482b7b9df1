//! Nonnegative least squares `min ½‖C c − t‖²` s.t. `c ≥ 0`.
//!
//! Both solvers work on the normal equations `H = CᵀC`, `f = Cᵀt`, so the
//! columns themselves can be dropped once the Gram matrix is formed.

use alloc::vec;
use alloc::vec::Vec;
use libm::{fabs, sqrt};

use crate::dense::{dot, Mat};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NnlsConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Lawson–Hanson below this many columns, projected gradient above.
    pub active_set_limit: usize,
}

impl Default for NnlsConfig {
    fn default() -> Self {
        NnlsConfig {
            tol: 1e-10,
            max_iter: 10_000,
            active_set_limit: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NnlsResult {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// `‖min(c, ∇)‖∞` at the returned point.
    pub kkt: f64,
    pub converged: bool,
}

/// `CᵀC` and `Cᵀt` for a column matrix `C`.
pub fn normal_equations(columns: &Mat, target: &[f64]) -> Result<(Mat, Vec<f64>)> {
    if columns.rows() != target.len() {
        return Err(Error::dim(columns.rows(), target.len(), "nnls target"));
    }
    let p = columns.cols();
    let mut h = Mat::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v = dot(columns.col(i), columns.col(j));
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    let f = (0..p).map(|j| dot(columns.col(j), target)).collect();
    Ok((h, f))
}

pub fn nnls(columns: &Mat, target: &[f64], cfg: &NnlsConfig) -> Result<NnlsResult> {
    if columns.cols() == 0 {
        return Err(Error::invalid("nnls needs at least one column"));
    }
    let (h, f) = normal_equations(columns, target)?;
    nnls_gram(&h, &f, cfg)
}

/// Dispatches on problem size.
pub fn nnls_gram(h: &Mat, f: &[f64], cfg: &NnlsConfig) -> Result<NnlsResult> {
    if h.rows() != h.cols() || h.rows() != f.len() {
        return Err(Error::dim(f.len(), h.rows(), "nnls gram"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("nnls tolerance must be positive"));
    }
    if f.is_empty() {
        return Err(Error::invalid("nnls needs at least one column"));
    }
    if h.as_slice().iter().chain(f).any(|v| !v.is_finite()) {
        return Err(Error::invalid("nnls input is not finite"));
    }
    if f.len() <= cfg.active_set_limit {
        lawson_hanson(h, f, cfg)
    } else {
        projected_gradient(h, f, cfg)
    }
}

fn gradient(h: &Mat, f: &[f64], c: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; f.len()];
    h.matvec(c, &mut g);
    for (gi, fi) in g.iter_mut().zip(f) {
        *gi -= fi;
    }
    g
}

/// Complementarity residual `‖min(c, Hc − f)‖∞`.
pub fn kkt_violation(h: &Mat, f: &[f64], c: &[f64]) -> f64 {
    gradient(h, f, c)
        .iter()
        .zip(c)
        .map(|(g, ci)| fabs(ci.min(*g)))
        .fold(0.0, f64::max)
}

fn kkt_scale(f: &[f64]) -> f64 {
    f.iter().fold(1.0f64, |a, v| a.max(fabs(*v)))
}

/// Solves `H_PP s = f_P` by Cholesky; `None` when `H_PP` is numerically singular.
fn solve_passive(h: &Mat, f: &[f64], passive: &[usize]) -> Option<Vec<f64>> {
    let p = passive.len();
    let mut l = vec![0.0; p * p];
    let diag_scale = passive.iter().map(|&i| h.get(i, i)).fold(0.0f64, f64::max);
    for j in 0..p {
        let mut d = h.get(passive[j], passive[j]);
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > 1e-13 * diag_scale.max(f64::MIN_POSITIVE)) {
            return None;
        }
        let d = sqrt(d);
        l[j * p + j] = d;
        for i in j + 1..p {
            let mut v = h.get(passive[i], passive[j]);
            for k in 0..j {
                v -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = v / d;
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut v = f[passive[i]];
        for k in 0..i {
            v -= l[i * p + k] * y[k];
        }
        y[i] = v / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut v = y[i];
        for k in i + 1..p {
            v -= l[k * p + i] * y[k];
        }
        y[i] = v / l[i * p + i];
    }
    Some(y)
}

/// Active-set method of Lawson and Hanson.
pub fn lawson_hanson(h: &Mat, f: &[f64], cfg: &NnlsConfig) -> Result<NnlsResult> {
    let n = f.len();
    let thr = cfg.tol * kkt_scale(f);
    let mut c = vec![0.0; n];
    let mut passive: Vec<usize> = Vec::new();
    let mut excluded = vec![false; n];
    let mut iterations = 0;
    'outer: while iterations < cfg.max_iter {
        let g = gradient(h, f, &c);
        let mut best = None;
        let mut best_w = thr;
        for j in 0..n {
            if !excluded[j] && !passive.contains(&j) && -g[j] > best_w {
                best_w = -g[j];
                best = Some(j);
            }
        }
        let Some(t) = best else { break };
        passive.push(t);
        loop {
            iterations += 1;
            let Some(s) = solve_passive(h, f, &passive) else {
                passive.pop();
                excluded[t] = true;
                continue 'outer;
            };
            if s.iter().all(|&v| v > 0.0) {
                for (k, &j) in passive.iter().enumerate() {
                    c[j] = s[k];
                }
                break;
            }
            let mut step = 1.0f64;
            for (k, &j) in passive.iter().enumerate() {
                if s[k] <= 0.0 {
                    step = step.min(c[j] / (c[j] - s[k]));
                }
            }
            for (k, &j) in passive.iter().enumerate() {
                c[j] += step * (s[k] - c[j]);
            }
            let before = passive.len();
            let floor = 1e-15 * c.iter().fold(1.0f64, |a, v| a.max(*v));
            let mut dropped = Vec::new();
            passive.retain(|&j| {
                let keep = c[j] > floor;
                if !keep {
                    dropped.push(j);
                }
                keep
            });
            for &j in &dropped {
                c[j] = 0.0;
            }
            if dropped == [t] && step <= 0.0 {
                // The entering column cannot move; bar it until the passive set changes.
                excluded[t] = true;
                continue 'outer;
            }
            if !dropped.is_empty() {
                excluded.iter_mut().for_each(|e| *e = false);
            }
            if passive.is_empty() || iterations >= cfg.max_iter {
                break;
            }
            if passive.len() == before {
                // Step was limited by a coefficient that stayed positive through rounding.
                break;
            }
        }
    }
    finish(h, f, c, iterations, thr)
}

fn finish(h: &Mat, f: &[f64], c: Vec<f64>, iterations: usize, thr: f64) -> Result<NnlsResult> {
    let kkt = kkt_violation(h, f, &c);
    if !kkt.is_finite() {
        return Err(Error::Numerical {
            what: "nnls",
            iterations,
            residual: kkt,
        });
    }
    Ok(NnlsResult {
        coefficients: c,
        iterations,
        kkt,
        converged: kkt <= thr,
    })
}

fn objective(h: &Mat, f: &[f64], c: &[f64]) -> f64 {
    let mut hc = vec![0.0; c.len()];
    h.matvec(c, &mut hc);
    0.5 * dot(c, &hc) - dot(f, c)
}

/// Projected gradient with Barzilai–Borwein steps and a nonmonotone safeguard.
pub fn projected_gradient(h: &Mat, f: &[f64], cfg: &NnlsConfig) -> Result<NnlsResult> {
    const MEMORY: usize = 10;
    let n = f.len();
    let thr = cfg.tol * kkt_scale(f);
    let lip = crate::dense::power_norm_sym(h, 50).max(f64::MIN_POSITIVE) * 1.01;
    let mut c = vec![0.0; n];
    let mut g = gradient(h, f, &c);
    let mut obj = objective(h, f, &c);
    let mut recent = vec![obj];
    let mut step = 1.0 / lip;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let kkt = g.iter().zip(&c).map(|(gi, ci)| fabs(ci.min(*gi))).fold(0.0, f64::max);
        if kkt <= thr {
            break;
        }
        iterations += 1;
        let reference = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (c_new, obj_new) = loop {
            let cand: Vec<f64> = c.iter().zip(&g).map(|(ci, gi)| (ci - step * gi).max(0.0)).collect();
            let o = objective(h, f, &cand);
            let decrease: f64 = cand.iter().zip(&c).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
            if o <= reference + 1e-4 * decrease.min(0.0) || step <= 1.0 / lip {
                break (cand, o);
            }
            step = (step * 0.5).max(1.0 / lip);
        };
        let g_new = gradient(h, f, &c_new);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = c_new[i] - c[i];
            ss += s * s;
            sy += s * (g_new[i] - g[i]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-3 / lip, 1e6 / lip) } else { 1.0 / lip };
        c = c_new;
        g = g_new;
        obj = obj_new;
        recent.push(obj);
        if recent.len() > MEMORY {
            recent.remove(0);
        }
    }
    finish(h, f, c, iterations, thr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(m: usize, data: &[f64]) -> Mat {
        Mat::from_col_major(m, data.len() / m, data.to_vec()).unwrap()
    }

    #[test]
    fn clips_negative_component() {
        let c = cols(2, &[1.0, 0.0, 0.0, 1.0]);
        let r = nnls(&c, &[1.0, -1.0], &NnlsConfig::default()).unwrap();
        assert!((r.coefficients[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.coefficients[1], 0.0);
        assert!(r.converged);
    }

    #[test]
    fn single_column() {
        let r = nnls(&cols(2, &[1.0, 1.0]), &[1.0, 1.0], &NnlsConfig::default()).unwrap();
        assert!((r.coefficients[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_columns_are_tolerated() {
        let r = nnls(&cols(2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]), &[2.0, 3.0], &NnlsConfig::default()).unwrap();
        assert!((r.coefficients[0] + r.coefficients[1] - 2.0).abs() < 1e-10);
        assert!((r.coefficients[2] - 3.0).abs() < 1e-10);
        assert!(r.converged);
    }

    #[test]
    fn gradient_variant_agrees() {
        let data: Vec<f64> = (0..40).map(|i| libm::cos(i as f64 * 1.3) + 0.2).collect();
        let c = cols(8, &data);
        let t: Vec<f64> = (0..8).map(|i| libm::sin(i as f64)).collect();
        let (h, f) = normal_equations(&c, &t).unwrap();
        let a = lawson_hanson(&h, &f, &NnlsConfig::default()).unwrap();
        let b = projected_gradient(&h, &f, &NnlsConfig::default()).unwrap();
        assert!(a.converged && b.converged, "{} {}", a.kkt, b.kkt);
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - y).abs() < 1e-7);
        }
    }
}
