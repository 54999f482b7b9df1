//! Level-set decompression: Newton on `v(τ) = α²/2` over the τ-scaled weighted
//! sum of atomic sets, with a dual conditional-gradient inner solve.
//!
//! `v(τ) = min { ½‖b − Mx‖² : x ∈ τ·Σᵢ λᵢ conv(Aᵢ ∪ {0}) }`

use alloc::vec;
use alloc::vec::Vec;
use libm::sqrt;

use crate::atoms::{Atom, AtomicSet};
use crate::dense::{axpy, dot, householder_qr, jacobi_svd, norm2, Mat};
use crate::error::{Error, Result};
use crate::linops::LinearOperator;
use crate::spectral::project_gauge_ball;

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub set: AtomicSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemixProblem {
    operator: LinearOperator,
    observation: Vec<f64>,
    alpha: f64,
    components: Vec<Component>,
}

impl DemixProblem {
    pub fn new(operator: LinearOperator, observation: Vec<f64>, alpha: f64, components: Vec<Component>) -> Result<Self> {
        if observation.len() != operator.rows() {
            return Err(Error::dim(operator.rows(), observation.len(), "observation"));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("noise bound must be finite and nonnegative"));
        }
        if components.is_empty() {
            return Err(Error::invalid("at least one component is required"));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::invalid("component weights must be positive"));
            }
            if c.set.dim() != operator.cols() {
                return Err(Error::dim(operator.cols(), c.set.dim(), "component ambient dimension"));
            }
            if matches!(c.set, AtomicSet::Sum(_)) {
                return Err(Error::invalid("list Sum members as separate components"));
            }
        }
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation is not finite"));
        }
        Ok(DemixProblem {
            operator,
            observation,
            alpha,
            components,
        })
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.operator
    }

    pub fn observation(&self) -> &[f64] {
        &self.observation
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Number of measurements.
    pub fn m(&self) -> usize {
        self.operator.rows()
    }

    /// Signal dimension.
    pub fn n(&self) -> usize {
        self.operator.cols()
    }

    /// `M · a` for an atom of component `i` (unweighted).
    pub fn measured_atom(&self, i: usize, atom: &Atom) -> Result<Vec<f64>> {
        self.operator.apply(&self.components[i].set.atom_vector(atom)?)
    }
}

/// One exposed atom and its value `⟨a, Mᵀr⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExposedAtom {
    pub atom: Atom,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcgResult {
    pub residual: Vec<f64>,
    /// Per component; `None` when the component exposes only the origin.
    pub exposed: Vec<Option<ExposedAtom>>,
    /// `τ·M Σ λᵢ aᵢ` at the final residual.
    pub p: Vec<f64>,
    /// `support_{M𝒜}(r) = Σ λᵢ ⟨aᵢ, Mᵀ r⟩`.
    pub slope: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Most recent iterate residual whose norm is above machine scale.
    pub last_nontrivial_residual: Vec<f64>,
}

/// Per-iteration record passed to observers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcgStep {
    pub iteration: usize,
    /// `½‖r‖²` at the point where the gap was evaluated.
    pub objective: f64,
    pub gap: f64,
    pub step: f64,
}

struct Exposure {
    atoms: Vec<Option<ExposedAtom>>,
    columns: Vec<Option<Vec<f64>>>,
    slope: f64,
}

fn expose_measured(problem: &DemixProblem, r: &[f64]) -> Result<Exposure> {
    let z = problem.operator.adjoint_apply(r)?;
    let mut ex = Exposure {
        atoms: Vec::with_capacity(problem.components.len()),
        columns: Vec::with_capacity(problem.components.len()),
        slope: 0.0,
    };
    for (i, c) in problem.components.iter().enumerate() {
        match c.set.expose(&z, 0.0, 1) {
            Ok(mut face) if face.support_value > 0.0 && !face.atoms.is_empty() => {
                let atom = face.atoms.swap_remove(0);
                let value = face.values[0];
                ex.slope += c.weight * value;
                ex.columns.push(Some(problem.measured_atom(i, &atom)?));
                ex.atoms.push(Some(ExposedAtom { atom, value }));
            }
            Ok(_) | Err(Error::ZeroExposingVector) => {
                ex.columns.push(None);
                ex.atoms.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ex)
}

impl Exposure {
    fn scaled_point(&self, problem: &DemixProblem, tau: f64) -> Vec<f64> {
        let mut p = vec![0.0; problem.m()];
        if tau > 0.0 {
            for (c, col) in problem.components.iter().zip(&self.columns) {
                if let Some(col) = col {
                    axpy(tau * c.weight, col, &mut p);
                }
            }
        }
        p
    }
}

fn machine_scale(b: &[f64]) -> f64 {
    1e-13 * norm2(b).max(1.0)
}

fn check_finite(v: &[f64], iterations: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            what: "dcg",
            iterations,
            residual: f64::NAN,
        })
    }
}

/// Dual conditional gradient on the measured set, from `r = b`, `q = 0`.
pub fn dcg(problem: &DemixProblem, tau: f64, eps: f64, max_inner: usize) -> Result<DcgResult> {
    dcg_observed(problem, tau, eps, max_inner, None, &mut |_| {})
}

/// [`dcg`] with an optional start `q` (must lie in the τ-scaled measured set)
/// and a per-iteration observer.
pub fn dcg_observed(
    problem: &DemixProblem,
    tau: f64,
    eps: f64,
    max_inner: usize,
    start: Option<&[f64]>,
    observer: &mut dyn FnMut(&DcgStep),
) -> Result<DcgResult> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau must be finite and nonnegative"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if max_inner == 0 {
        return Err(Error::invalid("max_inner must be >= 1"));
    }
    let b = &problem.observation;
    let mut q = match start {
        Some(q) if q.len() == b.len() => q.to_vec(),
        Some(q) => return Err(Error::dim(b.len(), q.len(), "dcg start")),
        None => vec![0.0; b.len()],
    };
    let mut r: Vec<f64> = b.iter().zip(&q).map(|(bi, qi)| bi - qi).collect();
    let floor = machine_scale(b);
    let mut last_nontrivial = r.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let ex = expose_measured(problem, &r)?;
        let p = ex.scaled_point(problem, tau);
        let dr: Vec<f64> = p.iter().zip(&q).map(|(pi, qi)| pi - qi).collect();
        let rho = dot(&r, &dr);
        let objective = 0.5 * dot(&r, &r);
        let done = rho < eps;
        if done || iterations >= max_inner {
            observer(&DcgStep {
                iteration: iterations,
                objective,
                gap: rho,
                step: 0.0,
            });
            return Ok(DcgResult {
                lower_bound: objective - rho,
                gap: rho,
                slope: ex.slope,
                exposed: ex.atoms,
                p,
                residual: r,
                iterations,
                converged: done,
                last_nontrivial_residual: last_nontrivial,
            });
        }
        let theta = (rho / dot(&dr, &dr)).min(1.0);
        observer(&DcgStep {
            iteration: iterations,
            objective,
            gap: rho,
            step: theta,
        });
        axpy(-theta, &dr, &mut r);
        axpy(theta, &dr, &mut q);
        check_finite(&r, iterations)?;
        if norm2(&r) > floor {
            last_nontrivial.copy_from_slice(&r);
        }
    }
}

/// `τ + (ℓ − α²/2)/slope`; `None` when the slope is not positive.
pub fn newton_update(tau: f64, lower_bound: f64, alpha: f64, slope: f64) -> Option<f64> {
    if !(slope > 0.0) || !slope.is_finite() {
        return None;
    }
    Some(tau + (lower_bound - 0.5 * alpha * alpha) / slope)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerMode {
    /// The conditional-gradient iteration exactly as stated, cold-started per τ.
    Plain,
    /// Conditional-gradient steps interleaved with re-optimization over the
    /// pool of atoms seen so far; the pool and its weights persist across τ.
    Corrective,
    /// Accelerated projected gradient on the component signals, using exact
    /// projection onto each scaled gauge ball. Requires every set to have an
    /// orthogonal spectrum; the iterate persists across τ.
    Projected,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolishConfig {
    /// Accelerated projected-gradient iterations per polish.
    pub max_iter: usize,
    /// Stop when the pool-restricted gap drops below `gap_fraction · ε`.
    pub gap_fraction: f64,
    /// Zero-weight atoms are evicted once the pool exceeds this size.
    pub pool_limit: usize,
}

impl Default for PolishConfig {
    fn default() -> Self {
        PolishConfig {
            max_iter: 200,
            gap_fraction: 0.1,
            pool_limit: 2000,
        }
    }
}

/// Relative face tolerance used when exposing recovery faces.
/// The residual counts as orthogonal to every measured atom (an infeasibility
/// certificate) once `slope ≤ ORTHOGONAL_SLOPE·‖r‖·Σλᵢ·‖M‖`.
pub const ORTHOGONAL_SLOPE: f64 = 1e-8;

pub const DEFAULT_EPSILON_FACTOR: f64 = 1e-6;

pub const RECOVERY_FACE_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSetConfig {
    /// Absolute inner tolerance; `None` means `epsilon_factor·‖b‖²`.
    pub epsilon: Option<f64>,
    pub epsilon_factor: f64,
    /// Use `ρ < ε·max(1, ½‖b‖²)` for the inner stop.
    pub relative_gap: bool,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Applied when gathering faces for recovery.
    pub face_tol: f64,
    /// Per-component cap on face atoms for recovery.
    pub max_atoms: usize,
    /// Plain mode only: seed each inner solve with the previous point.
    pub warm_start: bool,
    pub inner: InnerMode,
    pub polish: PolishConfig,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        LevelSetConfig {
            epsilon: None,
            epsilon_factor: DEFAULT_EPSILON_FACTOR,
            relative_gap: false,
            max_outer: 40,
            max_inner: 20_000,
            face_tol: RECOVERY_FACE_TOL,
            max_atoms: crate::atoms::MAX_ATOMS_CAP,
            warm_start: false,
            inner: InnerMode::Corrective,
            polish: PolishConfig::default(),
        }
    }
}

impl LevelSetConfig {
    pub fn epsilon_for(&self, b: &[f64]) -> f64 {
        let e = self.epsilon.unwrap_or(self.epsilon_factor * dot(b, b));
        e.max(f64::MIN_POSITIVE)
    }

    fn inner_tolerance(&self, b: &[f64]) -> f64 {
        let e = self.epsilon_for(b);
        if self.relative_gap {
            e * (0.5 * dot(b, b)).max(1.0)
        } else {
            e
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(Error::invalid("epsilon must be positive"));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::invalid("iteration budgets must be positive"));
        }
        if !(0.0..1.0).contains(&self.face_tol) || self.max_atoms == 0 {
            return Err(Error::invalid("face_tol must be in [0, 1) and max_atoms >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    Infeasible,
    NotConverged,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub tau: f64,
    pub lower_bound: f64,
    pub residual_norm: f64,
    pub gap: f64,
    pub inner_iters: usize,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "outer_iter,tau,lower_bound,residual_norm,gap,inner_iters";
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetResult {
    pub status: SolveStatus,
    pub tau: f64,
    pub residual: Vec<f64>,
    /// Residual used to expose recovery faces (differs from `residual` only at an exact fit).
    pub exposing_residual: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub last: DcgResult,
    pub epsilon: f64,
    /// Final component signals when the inner mode keeps a primal iterate.
    pub primal: Option<Vec<Vec<f64>>>,
}

/// Newton iteration on `τ` until `‖r‖ ≤ √(α² + ε)`.
pub fn level_set_solve(problem: &DemixProblem, config: &LevelSetConfig) -> Result<LevelSetResult> {
    config.validate()?;
    let b = problem.observation();
    let eps = config.epsilon_for(b);
    let inner_eps = config.inner_tolerance(b);
    let alpha = problem.alpha();
    let target = sqrt(alpha * alpha + eps);
    let floor = machine_scale(b);
    let mut pool = Pool::new(problem.components.len());
    let mut primal = match config.inner {
        InnerMode::Projected => Some(Primal::new(problem)?),
        _ => None,
    };
    let weight_sum: f64 = problem.components.iter().map(|c| c.weight).sum();
    let mut measured_scale: Option<f64> = None;
    let mut tau = 0.0;
    let mut previous: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    for outer in 0..config.max_outer {
        let res = match config.inner {
            InnerMode::Plain => {
                let start = match (&previous, config.warm_start) {
                    (Some((t0, q0)), true) if *t0 > 0.0 => {
                        let s = (tau / t0).min(1.0);
                        Some(q0.iter().map(|v| v * s).collect::<Vec<_>>())
                    }
                    _ => None,
                };
                dcg_observed(problem, tau, inner_eps, config.max_inner, start.as_deref(), &mut |_| {})?
            }
            InnerMode::Corrective => corrective_dcg(problem, tau, inner_eps, target, config, &mut pool)?,
            InnerMode::Projected => match primal.as_mut() {
                Some(state) => projected_dcg(problem, tau, inner_eps, target, config, state)?,
                None => unreachable!("primal state is created for projected mode"),
            },
        };
        let rnorm = norm2(&res.residual);
        trace.push(TraceRow {
            outer_iter: outer,
            tau,
            lower_bound: res.lower_bound,
            residual_norm: rnorm,
            gap: res.gap,
            inner_iters: res.iterations,
        });
        let exposing = if rnorm > floor {
            res.residual.clone()
        } else {
            res.last_nontrivial_residual.clone()
        };
        let primal_now = match &primal {
            Some(p) => Some(p.signals.clone()),
            None if config.inner == InnerMode::Corrective => Some(pool.signals(problem)?),
            None => None,
        };
        let finish = |status, res: DcgResult, trace, exposing, tau| LevelSetResult {
            primal: primal_now,
            status,
            tau,
            residual: res.residual.clone(),
            exposing_residual: exposing,
            trace,
            last: res,
            epsilon: eps,
        };
        if rnorm <= target {
            return Ok(finish(SolveStatus::Converged, res, trace, exposing, tau));
        }
        let Some(next) = newton_update(tau, res.lower_bound, alpha, res.slope) else {
            return Ok(finish(SolveStatus::Infeasible, res, trace, exposing, tau));
        };
        if res.converged && rnorm > floor {
            let scale = match measured_scale {
                Some(v) => v,
                None => *measured_scale.insert(weight_sum * sqrt(operator_norm_sq(&problem.operator, problem.n())?)),
            };
            if res.slope <= ORTHOGONAL_SLOPE * rnorm * scale {
                return Ok(finish(SolveStatus::Infeasible, res, trace, exposing, tau));
            }
        }
        if !next.is_finite() {
            return Err(Error::Numerical {
                what: "newton_update",
                iterations: outer,
                residual: rnorm,
            });
        }
        if next <= tau {
            let status = if res.converged {
                SolveStatus::Infeasible
            } else {
                SolveStatus::NotConverged
            };
            return Ok(finish(status, res, trace, exposing, tau));
        }
        if config.inner == InnerMode::Plain {
            let q: Vec<f64> = b.iter().zip(&res.residual).map(|(bi, ri)| bi - ri).collect();
            previous = Some((tau, q));
        }
        tau = next;
        if outer + 1 == config.max_outer {
            return Ok(finish(SolveStatus::NotConverged, res, trace, exposing, tau));
        }
    }
    unreachable!("max_outer >= 1 returns inside the loop")
}

/// Atoms visited by the corrective inner solver, with their measured columns,
/// Gram matrix and current weights.
struct Pool {
    component: Vec<usize>,
    atoms: Vec<Atom>,
    columns: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
    /// `⟨M a_j, b⟩`
    linear: Vec<f64>,
    weights: Vec<f64>,
    lipschitz: f64,
    groups: usize,
}

impl Pool {
    fn new(groups: usize) -> Self {
        Pool {
            component: Vec::new(),
            atoms: Vec::new(),
            columns: Vec::new(),
            gram: Vec::new(),
            linear: Vec::new(),
            weights: Vec::new(),
            lipschitz: 0.0,
            groups,
        }
    }

    fn len(&self) -> usize {
        self.atoms.len()
    }

    fn insert(&mut self, comp: usize, atom: &Atom, column: &[f64], b: &[f64]) -> usize {
        if let Some(j) = (0..self.len()).find(|&j| self.component[j] == comp && self.atoms[j] == *atom) {
            return j;
        }
        let row: Vec<f64> = self.columns.iter().map(|c| dot(c, column)).collect();
        let diag = dot(column, column);
        for (g, v) in self.gram.iter_mut().zip(&row) {
            g.push(*v);
        }
        let mut row = row;
        row.push(diag);
        self.gram.push(row);
        self.component.push(comp);
        self.atoms.push(atom.clone());
        self.columns.push(column.to_vec());
        self.linear.push(dot(column, b));
        self.weights.push(0.0);
        self.lipschitz = 0.0;
        self.len() - 1
    }

    fn evict_unused(&mut self, limit: usize) {
        if self.len() <= limit {
            return;
        }
        let keep: Vec<bool> = self.weights.iter().map(|w| *w > 0.0).collect();
        self.retain(&keep);
    }

    fn retain(&mut self, keep: &[bool]) {
        for row in self.gram.iter_mut() {
            retain_mask(row, keep);
        }
        retain_mask(&mut self.gram, keep);
        retain_mask(&mut self.component, keep);
        retain_mask(&mut self.atoms, keep);
        retain_mask(&mut self.columns, keep);
        retain_mask(&mut self.linear, keep);
        retain_mask(&mut self.weights, keep);
        self.lipschitz = 0.0;
    }

    fn signals(&self, problem: &DemixProblem) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![vec![0.0; problem.n()]; self.groups];
        for ((g, a), w) in self.component.iter().zip(&self.atoms).zip(&self.weights) {
            if *w > 0.0 {
                problem.components[*g].set.atom_add(a, *w, &mut out[*g])?;
            }
        }
        Ok(out)
    }

    fn caps(&self, problem: &DemixProblem, tau: f64) -> Vec<f64> {
        problem.components.iter().map(|c| tau * c.weight).collect()
    }

    /// Rescale each group so its total weight does not exceed `cap`.
    fn fit_caps(&mut self, caps: &[f64]) {
        let mut totals = vec![0.0; self.groups];
        for (w, g) in self.weights.iter().zip(&self.component) {
            totals[*g] += w;
        }
        for (w, g) in self.weights.iter_mut().zip(&self.component) {
            if totals[*g] > caps[*g] {
                *w *= if totals[*g] > 0.0 { caps[*g] / totals[*g] } else { 0.0 };
            }
        }
    }

    fn residual(&self, b: &[f64]) -> Vec<f64> {
        let mut r = b.to_vec();
        for (w, c) in self.weights.iter().zip(&self.columns) {
            if *w != 0.0 {
                axpy(-w, c, &mut r);
            }
        }
        r
    }

    fn gram_apply(&self, x: &[f64]) -> Vec<f64> {
        self.gram.iter().map(|row| dot(row, x)).collect()
    }

    fn project(&self, y: &mut [f64], caps: &[f64]) {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.groups];
        for (j, g) in self.component.iter().enumerate() {
            members[*g].push(j);
        }
        for (g, idx) in members.iter().enumerate() {
            let mut vals: Vec<f64> = idx.iter().map(|&j| y[j]).collect();
            project_capped_simplex(&mut vals, caps[g]);
            for (k, &j) in idx.iter().enumerate() {
                y[j] = vals[k];
            }
        }
    }

    /// Frank–Wolfe gap of the pool-restricted problem.
    fn restricted_gap(&self, grad: &[f64], x: &[f64], caps: &[f64]) -> f64 {
        let mut mins = vec![0.0f64; self.groups];
        let mut gap = 0.0;
        for j in 0..x.len() {
            gap += grad[j] * x[j];
            mins[self.component[j]] = mins[self.component[j]].min(grad[j]);
        }
        gap - mins.iter().zip(caps).map(|(m, c)| m * c).sum::<f64>()
    }

    /// Accelerated projected gradient on `½cᵀGc − ⟨linear, c⟩` over the capped groups.
    fn polish(&mut self, caps: &[f64], tol: f64, max_iter: usize) {
        let n = self.len();
        if n == 0 {
            return;
        }
        if self.lipschitz == 0.0 {
            let g = crate::dense::Mat::from_fn(n, n, |i, j| self.gram[i][j]);
            self.lipschitz = crate::dense::power_norm_sym(&g, 30).max(f64::MIN_POSITIVE);
        }
        let value = |pool: &Pool, x: &[f64], gx: &[f64]| 0.5 * dot(x, gx) - dot(&pool.linear, x);
        let mut x = self.weights.clone();
        let mut gx = self.gram_apply(&x);
        let mut fx = value(self, &x, &gx);
        let mut y = x.clone();
        let mut t = 1.0;
        let mut lip = self.lipschitz;
        for it in 0..max_iter {
            let gy = self.gram_apply(&y);
            let grad_y: Vec<f64> = gy.iter().zip(&self.linear).map(|(a, l)| a - l).collect();
            if it % 5 == 0 {
                let grad_x: Vec<f64> = gx.iter().zip(&self.linear).map(|(a, l)| a - l).collect();
                if self.restricted_gap(&grad_x, &x, caps) <= tol {
                    break;
                }
            }
            let fy = value(self, &y, &gy);
            let (xn, gxn, fxn) = loop {
                let mut cand: Vec<f64> = y.iter().zip(&grad_y).map(|(yi, gi)| yi - gi / lip).collect();
                self.project(&mut cand, caps);
                let gc = self.gram_apply(&cand);
                let fc = value(self, &cand, &gc);
                let mut model = fy;
                let mut sq = 0.0;
                for j in 0..n {
                    let d = cand[j] - y[j];
                    model += grad_y[j] * d;
                    sq += d * d;
                }
                model += 0.5 * lip * sq;
                if fc <= model + 1e-12 * fy.abs().max(1.0) {
                    break (cand, gc, fc);
                }
                lip *= 2.0;
            };
            if fxn > fx {
                // Restart the momentum from the last accepted point.
                y = x.clone();
                t = 1.0;
                continue;
            }
            let tn = (1.0 + sqrt(1.0 + 4.0 * t * t)) / 2.0;
            let beta = (t - 1.0) / tn;
            y = xn.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            x = xn;
            gx = gxn;
            fx = fxn;
            t = tn;
        }
        self.lipschitz = lip;
        self.weights = x;
    }
}

impl Pool {
    /// Replace each group of weighted rank-one atoms sharing a component and
    /// block by the thin SVD of their combination. The represented point is
    /// unchanged and the group's total weight can only shrink.
    fn compress_rank_one(&mut self, problem: &DemixProblem) -> Result<()> {
        let mut groups: Vec<(usize, Option<usize>, Vec<usize>)> = Vec::new();
        for j in 0..self.len() {
            if rank_one_parts(&self.atoms[j]).is_none() {
                continue;
            }
            let key = (self.component[j], self.atoms[j].block_id());
            match groups.iter_mut().find(|g| (g.0, g.1) == key) {
                Some(g) => g.2.push(j),
                None => groups.push((key.0, key.1, alloc::vec![j])),
            }
        }
        let mut keep = vec![true; self.len()];
        let mut fresh: Vec<(usize, Atom, f64)> = Vec::new();
        for (comp, _, members) in groups {
            let active: Vec<usize> = members.iter().copied().filter(|&j| self.weights[j] > 0.0).collect();
            if active.len() < 2 {
                continue;
            }
            let (rows, cols) = rank_one_parts(&self.atoms[active[0]]).map_or((0, 0), |(u, v)| (u.len(), v.len()));
            let r = active.len();
            if rows < 2 || cols < 2 {
                continue;
            }
            let weights: Vec<f64> = active.iter().map(|&j| self.weights[j]).collect();
            let mut us = Mat::zeros(rows, r);
            let mut vs = Mat::zeros(cols, r);
            for (k, &j) in active.iter().enumerate() {
                if let Some((u, v)) = rank_one_parts(&self.atoms[j]) {
                    us.col_mut(k).copy_from_slice(u);
                    vs.col_mut(k).copy_from_slice(v);
                }
            }
            let (left, s, right) = if r <= rows.min(cols) {
                let (qu, qv) = (householder_qr(&us), householder_qr(&vs));
                let core = Mat::from_fn(r, r, |i, k| (0..r).map(|l| qu.r.get(i, l) * weights[l] * qv.r.get(k, l)).sum());
                let svd = jacobi_svd(&core)?;
                (qu.q.matmul(&svd.u), svd.s, qv.q.matmul(&svd.v))
            } else {
                let dense = Mat::from_fn(rows, cols, |i, k| (0..r).map(|l| us.get(i, l) * weights[l] * vs.get(k, l)).sum());
                let svd = jacobi_svd(&dense)?;
                (svd.u, svd.s, svd.v)
            };
            let cutoff = 1e-12 * s.first().copied().unwrap_or(0.0);
            for &j in &members {
                keep[j] = false;
            }
            let template = &self.atoms[active[0]];
            for (k, &sk) in s.iter().enumerate() {
                if sk > cutoff {
                    let atom = Atom::RankOne { u: left.col(k).to_vec(), v: right.col(k).to_vec() };
                    fresh.push((comp, rewrap(template, atom), sk));
                }
            }
        }
        if keep.iter().all(|k| *k) {
            return Ok(());
        }
        self.retain(&keep);
        let b = problem.observation();
        for (comp, atom, w) in fresh {
            let column = problem.measured_atom(comp, &atom)?;
            let j = self.insert(comp, &atom, &column, b);
            self.weights[j] += w;
        }
        Ok(())
    }
}

fn rank_one_parts(atom: &Atom) -> Option<(&[f64], &[f64])> {
    match atom {
        Atom::RankOne { u, v } => Some((u, v)),
        Atom::BlockEmbedded { inner, .. } => rank_one_parts(inner),
        _ => None,
    }
}

fn rewrap(template: &Atom, atom: Atom) -> Atom {
    match template {
        Atom::BlockEmbedded { block_id, block, .. } => Atom::BlockEmbedded {
            block_id: *block_id,
            block: *block,
            inner: alloc::boxed::Box::new(atom),
        },
        _ => atom,
    }
}

/// Primal iterate of the projected inner solver.
struct Primal {
    signals: Vec<Vec<f64>>,
    lipschitz: f64,
}

const PROJECTED_CHECK_EVERY: usize = 5;

impl Primal {
    fn new(problem: &DemixProblem) -> Result<Self> {
        if problem.components.iter().any(|c| !c.set.has_spectrum()) {
            return Err(Error::Unsupported("projected inner mode needs sets with an orthogonal spectrum"));
        }
        let k = problem.components.len() as f64;
        Ok(Primal {
            signals: vec![vec![0.0; problem.n()]; problem.components.len()],
            lipschitz: k * operator_norm_sq(&problem.operator, problem.n())?,
        })
    }
}

/// Power-iteration estimate of `‖M‖²`.
fn operator_norm_sq(op: &LinearOperator, n: usize) -> Result<f64> {
    if op.is_identity() {
        return Ok(1.0);
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i % 7) as f64).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut estimate = 0.0;
    for _ in 0..30 {
        let z = op.adjoint_apply(&op.apply(&x)?)?;
        estimate = norm2(&z);
        if estimate == 0.0 {
            break;
        }
        x = z.iter().map(|v| v / estimate).collect();
    }
    Ok(estimate.max(f64::MIN_POSITIVE))
}

fn measure(problem: &DemixProblem, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut total = vec![0.0; problem.n()];
    for x in xs {
        axpy(1.0, x, &mut total);
    }
    problem.operator.apply(&total)
}

fn projected_dcg(
    problem: &DemixProblem,
    tau: f64,
    eps: f64,
    target: f64,
    config: &LevelSetConfig,
    state: &mut Primal,
) -> Result<DcgResult> {
    let project = |xs: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        problem
            .components
            .iter()
            .zip(xs)
            .map(|(c, x)| project_gauge_ball(&c.set, x, tau * c.weight))
            .collect()
    };
    let b = problem.observation();
    let half_alpha_sq = 0.5 * problem.alpha() * problem.alpha();
    let floor = machine_scale(b);
    let residual_of = |q: &[f64]| -> Vec<f64> { b.iter().zip(q).map(|(bi, qi)| bi - qi).collect() };
    let mut x = project(&state.signals)?;
    let mut qx = measure(problem, &x)?;
    let (mut y, mut qy) = (x.clone(), qx.clone());
    let mut t = 1.0f64;
    let mut lip = state.lipschitz;
    let mut best_lower = f64::NEG_INFINITY;
    let mut last_nontrivial = residual_of(&qx);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let r = residual_of(&qx);
        check_finite(&r, iterations)?;
        if norm2(&r) > floor {
            last_nontrivial.copy_from_slice(&r);
        }
        let objective = 0.5 * dot(&r, &r);
        if (iterations - 1) % PROJECTED_CHECK_EVERY == 0 || iterations >= config.max_inner {
            let ex = expose_measured(problem, &r)?;
            let p = ex.scaled_point(problem, tau);
            let rho: f64 = r.iter().zip(p.iter().zip(&qx)).map(|(ri, (pi, qi))| ri * (pi - qi)).sum();
            best_lower = best_lower.max(objective - rho);
            let done = rho < eps && (norm2(&r) <= target || rho <= 0.5 * (objective - half_alpha_sq));
            if done || iterations >= config.max_inner {
                state.signals = x;
                state.lipschitz = lip;
                return Ok(DcgResult {
                    lower_bound: best_lower,
                    gap: rho,
                    slope: ex.slope,
                    exposed: ex.atoms,
                    p,
                    residual: r,
                    iterations,
                    converged: done,
                    last_nontrivial_residual: last_nontrivial,
                });
            }
        }
        let ry = residual_of(&qy);
        let g = problem.operator.adjoint_apply(&ry)?;
        let fy = 0.5 * dot(&ry, &ry);
        let (xn, qn, fnext) = loop {
            let stepped: Vec<Vec<f64>> = y
                .iter()
                .map(|yi| yi.iter().zip(&g).map(|(a, gi)| a + gi / lip).collect())
                .collect();
            let cand = project(&stepped)?;
            let qc = measure(problem, &cand)?;
            let rc = residual_of(&qc);
            let fc = 0.5 * dot(&rc, &rc);
            let mut model = fy;
            let mut sq = 0.0;
            for (ci, yi) in cand.iter().zip(&y) {
                for ((c, yv), gj) in ci.iter().zip(yi).zip(&g) {
                    let d = c - yv;
                    model -= gj * d;
                    sq += d * d;
                }
            }
            model += 0.5 * lip * sq;
            if fc <= model + 1e-12 * fy.max(1.0) || !lip.is_finite() {
                break (cand, qc, fc);
            }
            lip *= 2.0;
        };
        if fnext > objective {
            // Restart the momentum from the last accepted point.
            y = x.clone();
            qy = qx.clone();
            t = 1.0;
            continue;
        }
        let tn = (1.0 + sqrt(1.0 + 4.0 * t * t)) / 2.0;
        let beta = (t - 1.0) / tn;
        y = xn
            .iter()
            .zip(&x)
            .map(|(a, o)| a.iter().zip(o).map(|(ai, oi)| ai + beta * (ai - oi)).collect())
            .collect();
        qy = qn.iter().zip(&qx).map(|(a, o)| a + beta * (a - o)).collect();
        x = xn;
        qx = qn;
        t = tn;
    }
}

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut i = 0;
    v.retain(|_| {
        i += 1;
        keep[i - 1]
    });
}

/// Euclidean projection onto `{c ≥ 0, Σc ≤ cap}`.
pub fn project_capped_simplex(y: &mut [f64], cap: f64) {
    y.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = y.iter().sum();
    if total <= cap {
        return;
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let mut acc = 0.0;
    let mut shift = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        acc += v;
        let candidate = (acc - cap) / (k + 1) as f64;
        if *v - candidate > 0.0 {
            shift = candidate;
        }
    }
    y.iter_mut().for_each(|v| *v = (*v - shift).max(0.0));
}

/// Stops once the gap is below `ε` and also small against the excess
/// `½‖r‖² − α²/2`, so the lower bound always yields Newton progress.
fn corrective_dcg(
    problem: &DemixProblem,
    tau: f64,
    eps: f64,
    target: f64,
    config: &LevelSetConfig,
    pool: &mut Pool,
) -> Result<DcgResult> {
    let half_alpha_sq = 0.5 * problem.alpha() * problem.alpha();
    let b = problem.observation();
    let caps = pool.caps(problem, tau);
    pool.fit_caps(&caps);
    let mut r = pool.residual(b);
    let floor = machine_scale(b);
    let mut last_nontrivial = r.clone();
    let mut best_lower = f64::NEG_INFINITY;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let ex = expose_measured(problem, &r)?;
        let p = ex.scaled_point(problem, tau);
        let q: Vec<f64> = b.iter().zip(&r).map(|(bi, ri)| bi - ri).collect();
        let dr: Vec<f64> = p.iter().zip(&q).map(|(pi, qi)| pi - qi).collect();
        let rho = dot(&r, &dr);
        let objective = 0.5 * dot(&r, &r);
        best_lower = best_lower.max(objective - rho);
        let done = rho < eps && (norm2(&r) <= target || rho <= 0.5 * (objective - half_alpha_sq));
        if done || iterations >= config.max_inner {
            return Ok(DcgResult {
                lower_bound: best_lower,
                gap: rho,
                slope: ex.slope,
                exposed: ex.atoms,
                p,
                residual: r,
                iterations,
                converged: done,
                last_nontrivial_residual: last_nontrivial,
            });
        }
        // Conditional-gradient step toward the exposed vertex, expressed in pool weights.
        let mut vertex = Vec::with_capacity(problem.components.len());
        for (i, (a, col)) in ex.atoms.iter().zip(&ex.columns).enumerate() {
            if let (Some(a), Some(col)) = (a, col) {
                vertex.push((pool.insert(i, &a.atom, col, b), caps[i]));
            }
        }
        let theta = (rho / dot(&dr, &dr)).min(1.0);
        pool.weights.iter_mut().for_each(|w| *w *= 1.0 - theta);
        for (j, cap) in vertex {
            pool.weights[j] += theta * cap;
        }
        pool.polish(&caps, config.polish.gap_fraction * eps, config.polish.max_iter);
        pool.compress_rank_one(problem)?;
        pool.evict_unused(config.polish.pool_limit);
        r = pool.residual(b);
        check_finite(&r, iterations)?;
        if norm2(&r) > floor {
            last_nontrivial.copy_from_slice(&r);
        }
    }
}
