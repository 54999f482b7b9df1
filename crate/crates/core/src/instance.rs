//! Random demixing instances: rotated sparse components seen through a Gaussian map.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::index::sample;

use crate::atoms::{equilibrate_weights, AtomicSet};
use crate::dense::{norm1, norm2};
use crate::error::{Error, Result};
use crate::linops::{sample_gaussian_operator, sample_rotation};
use crate::rng::{gaussian, gaussian_vec, RngSeed};
use crate::solver::{Component, DemixProblem};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceSpec {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub alpha: f64,
    pub seed: RngSeed,
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.s > self.n {
            return Err(Error::invalid("sparsity must satisfy 1 <= s <= n"));
        }
        if self.m == 0 || self.k == 0 {
            return Err(Error::invalid("m and k must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be finite and nonnegative"));
        }
        Ok(())
    }
}

pub struct Instance {
    pub problem: DemixProblem,
    pub truth: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
}

/// `s`-sparse vector with uniform support and Gaussian values, scaled to `‖x‖₁ = s`.
pub fn sparse_vector(n: usize, s: usize, seed: RngSeed) -> Vec<f64> {
    let mut rng = seed.rng();
    let mut x = vec![0.0; n];
    for i in sample(&mut rng, n, s) {
        x[i] = gaussian(&mut rng);
    }
    let l1 = norm1(&x);
    if l1 > 0.0 {
        x.iter_mut().for_each(|v| *v *= s as f64 / l1);
    }
    x
}

/// Uniform point on the sphere of radius `alpha` in `ℝ^m`.
pub fn sphere_noise(m: usize, alpha: f64, seed: RngSeed) -> Vec<f64> {
    if alpha == 0.0 {
        return vec![0.0; m];
    }
    let mut rng = seed.rng();
    loop {
        let g = gaussian_vec(&mut rng, m);
        let nrm = norm2(&g);
        if nrm > 0.0 {
            return g.into_iter().map(|v| v * alpha / nrm).collect();
        }
    }
}

pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let InstanceSpec { n, m, k, s, alpha, seed } = *spec;
    let operator = sample_gaussian_operator(m, n, seed.child(&[0]))?;
    let mut sets = Vec::with_capacity(k);
    let mut truth = Vec::with_capacity(k);
    for i in 0..k as u64 {
        let base = sparse_vector(n, s, seed.child(&[1, i]));
        let q = sample_rotation(n, seed.child(&[2, i]))?;
        truth.push(q.apply(&base)?);
        sets.push(AtomicSet::transformed(q, AtomicSet::CrossPolytope(n))?);
    }
    let weights = equilibrate_weights(&sets, &truth)?;
    let mut total = vec![0.0; n];
    for x in &truth {
        crate::dense::axpy(1.0, x, &mut total);
    }
    let mut b = operator.apply(&total)?;
    let noise = sphere_noise(m, alpha, seed.child(&[3]));
    crate::dense::axpy(1.0, &noise, &mut b);
    let components = sets
        .into_iter()
        .zip(weights)
        .map(|(set, weight)| Component { weight, set })
        .collect();
    Ok(Instance {
        problem: DemixProblem::new(operator, b, alpha, components)?,
        truth,
        noise,
    })
}
