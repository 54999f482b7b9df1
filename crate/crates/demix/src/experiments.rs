//! Monte Carlo sweeps over planted instances.

use std::path::Path;
use std::time::Instant;

use demix_core::deconvolve::measured_reconstruction;
use demix_core::dense::{norm2, sub};
use demix_core::rng::{trial_stream, RngSeed};
use demix_core::theory::{phase_curve_m, SUCCESS_THRESHOLD};
use demix_core::{demix, generate_instance, DemixConfig, InstanceSpec, SolveStatus};
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::io::write_csv;
use crate::runner::parallel_map;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    PhaseMn,
    PhaseMk,
    NoiseSweep,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    pub s: Vec<usize>,
    pub alpha: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub threshold: f64,
    pub demix: DemixConfig,
    pub workers: usize,
}

fn stepped(start: usize, step: usize, end: usize) -> Vec<usize> {
    (start..=end).step_by(step).collect()
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|j| lo + j as f64 * (hi - lo) / (count - 1) as f64).collect(),
    }
}

impl ExperimentConfig {
    fn base(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            n: Vec::new(),
            m: Vec::new(),
            k: Vec::new(),
            s: Vec::new(),
            alpha: vec![0.0],
            trials: 20,
            seed: 2024,
            threshold: SUCCESS_THRESHOLD,
            demix: DemixConfig::default(),
            workers: 1,
        }
    }

    /// m and n sweep with three 5-sparse components.
    pub fn phase_mn(full_grid: bool) -> Self {
        let grid = if full_grid { stepped(50, 15, 500) } else { stepped(50, 75, 500) };
        ExperimentConfig {
            n: grid.clone(),
            m: grid,
            k: vec![3],
            s: vec![5],
            trials: if full_grid { 50 } else { 20 },
            ..Self::base(ExperimentKind::PhaseMn)
        }
    }

    /// m and k sweep at n = 1000, s = 3.
    pub fn phase_mk(full_grid: bool) -> Self {
        let (k, m, trials) = if full_grid {
            (stepped(2, 1, 10), stepped(100, 100, 1000), 50)
        } else {
            let mut m = stepped(100, 200, 1000);
            m.push(1000);
            (stepped(2, 2, 10), m, 10)
        };
        ExperimentConfig {
            n: vec![1000],
            m,
            k,
            s: vec![3],
            trials,
            ..Self::base(ExperimentKind::PhaseMk)
        }
    }

    /// Error against noise level at m = 125, n = 200, k = 3, s = 5.
    pub fn noise_sweep(full_grid: bool) -> Self {
        let (alpha, trials) = if full_grid {
            ((1..=200).map(|j| j as f64 / 100.0).collect(), 50)
        } else {
            (linspace(0.01, 2.0, 20), 20)
        };
        ExperimentConfig {
            n: vec![200],
            m: vec![125],
            k: vec![3],
            s: vec![5],
            alpha,
            trials,
            ..Self::base(ExperimentKind::NoiseSweep)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.n.is_empty() || self.m.is_empty() || self.k.is_empty() || self.s.is_empty() || self.alpha.is_empty() {
            return Err(HarnessError::Config("every grid needs at least one value".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(HarnessError::Config("success threshold must be positive".into()));
        }
        Ok(())
    }

    /// Grid cells in output order: n, then m, k, s, α.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &m in &self.m {
                for &k in &self.k {
                    for &s in &self.s {
                        for &alpha in &self.alpha {
                            out.push(Cell { n, m, k, s, alpha });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub alpha: f64,
}

impl Cell {
    fn coordinates(&self) -> [u64; 5] {
        [self.n as u64, self.m as u64, self.k as u64, self.s as u64, self.alpha.to_bits()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Converged,
    Infeasible,
    NotConverged,
    /// Instance generation or the solver returned an error.
    Failed,
}

impl From<SolveStatus> for TrialStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => TrialStatus::Converged,
            SolveStatus::Infeasible => TrialStatus::Infeasible,
            SolveStatus::NotConverged => TrialStatus::NotConverged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub alpha: f64,
    pub trial: usize,
    pub seed: u64,
    /// `+∞` for failed trials.
    pub maxerr: f64,
    /// `‖x* − x♮‖` of the aggregate `Σxᵢ`.
    pub aggregate_err: f64,
    pub success: bool,
    pub status: TrialStatus,
    pub tau: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// `‖M Σ cⱼ aⱼ − b‖` from the reported coefficients.
    pub fit_residual: f64,
    /// `√(α² + ε)`
    pub fit_bound: f64,
    pub wall_time_s: f64,
}

impl TrialRecord {
    pub fn fit_ok(&self) -> bool {
        self.fit_residual <= self.fit_bound
    }
}

/// Runs one planted trial. Errors become a failed record.
pub fn run_trial(cell: Cell, trial: usize, config: &ExperimentConfig) -> TrialRecord {
    let stream = trial_stream(&cell.coordinates(), trial as u64);
    let start = Instant::now();
    let mut record = TrialRecord {
        n: cell.n,
        m: cell.m,
        k: cell.k,
        s: cell.s,
        alpha: cell.alpha,
        trial,
        seed: stream,
        maxerr: f64::INFINITY,
        aggregate_err: f64::INFINITY,
        success: false,
        status: TrialStatus::Failed,
        tau: f64::NAN,
        outer_iters: 0,
        inner_iters: 0,
        fit_residual: f64::INFINITY,
        fit_bound: f64::NAN,
        wall_time_s: 0.0,
    };
    let spec = InstanceSpec {
        n: cell.n,
        m: cell.m,
        k: cell.k,
        s: cell.s,
        alpha: cell.alpha,
        seed: RngSeed::new(config.seed, stream),
    };
    let outcome = (|| -> demix_core::Result<()> {
        let inst = generate_instance(&spec)?;
        let sol = demix(&inst.problem, &config.demix, Some(&inst.truth))?;
        let b = inst.problem.observation();
        let eps = config.demix.level_set.epsilon_for(b);
        record.fit_bound = (cell.alpha * cell.alpha + eps).sqrt();
        record.fit_residual = norm2(&sub(&measured_reconstruction(&inst.problem, &sol.coefficients)?, b));
        record.maxerr = sol.maxerr.unwrap_or(f64::INFINITY);
        let aggregate = |xs: &[Vec<f64>]| {
            let mut t = vec![0.0; cell.n];
            xs.iter().for_each(|x| demix_core::dense::axpy(1.0, x, &mut t));
            t
        };
        record.aggregate_err = norm2(&sub(&aggregate(&sol.components), &aggregate(&inst.truth)));
        record.status = sol.status.into();
        record.tau = sol.tau;
        record.outer_iters = sol.trace.len();
        record.inner_iters = sol.trace.iter().map(|r| r.inner_iters).sum();
        Ok(())
    })();
    if outcome.is_err() {
        record.status = TrialStatus::Failed;
    }
    record.success = record.maxerr < config.threshold;
    record.wall_time_s = start.elapsed().as_secs_f64();
    record
}

/// Every trial of every cell, in cell order then trial order.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let jobs: Vec<(Cell, usize)> = config
        .cells()
        .into_iter()
        .flat_map(|c| (0..config.trials).map(move |t| (c, t)))
        .collect();
    Ok(parallel_map(&jobs, config.workers, |(c, t)| run_trial(*c, *t, config)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRow {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub curve_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseRow {
    pub alpha: f64,
    pub mean_maxerr: f64,
    pub std_maxerr: f64,
    pub trials: usize,
}

fn group_by_cell(records: &[TrialRecord]) -> Vec<&[TrialRecord]> {
    let same = |a: &TrialRecord, b: &TrialRecord| (a.n, a.m, a.k, a.s, a.alpha.to_bits()) == (b.n, b.m, b.k, b.s, b.alpha.to_bits());
    records.chunk_by(|a, b| same(a, b)).collect()
}

pub fn phase_rows(records: &[TrialRecord]) -> Result<Vec<PhaseRow>> {
    group_by_cell(records)
        .into_iter()
        .map(|g| {
            let r = &g[0];
            let successes = g.iter().filter(|t| t.success).count();
            Ok(PhaseRow {
                n: r.n,
                m: r.m,
                k: r.k,
                s: r.s,
                trials: g.len(),
                successes,
                success_rate: successes as f64 / g.len() as f64,
                curve_m: phase_curve_m(r.k, r.s, r.n)?,
            })
        })
        .collect()
}

/// Mean and sample standard deviation of maxerr per α. Failed trials (infinite
/// maxerr) are left out of both statistics but still counted in `trials`.
pub fn noise_rows(records: &[TrialRecord]) -> Vec<NoiseRow> {
    group_by_cell(records)
        .into_iter()
        .map(|g| {
            let finite: Vec<f64> = g.iter().map(|t| t.maxerr).filter(|e| e.is_finite()).collect();
            let count = finite.len() as f64;
            let mean = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / count };
            let std = if finite.len() < 2 {
                0.0
            } else {
                (finite.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (count - 1.0)).sqrt()
            };
            NoiseRow {
                alpha: g[0].alpha,
                mean_maxerr: mean,
                std_maxerr: std,
                trials: g.len(),
            }
        })
        .collect()
}

/// Writes `trials.csv` and the aggregate table (`phase.csv` or `noise.csv`) into `out`.
pub fn write_outputs(out: &Path, kind: ExperimentKind, records: &[TrialRecord]) -> Result<()> {
    write_csv(&out.join("trials.csv"), records)?;
    match kind {
        ExperimentKind::PhaseMn | ExperimentKind::PhaseMk => write_csv(&out.join("phase.csv"), &phase_rows(records)?),
        ExperimentKind::NoiseSweep => write_csv(&out.join("noise.csv"), &noise_rows(records)),
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept` with its R².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    LinearFit {
        slope,
        intercept,
        r_squared: if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 },
    }
}

/// Smallest `m` at which the success rate reaches one half, linearly
/// interpolated between grid points; `None` if it never does.
pub fn empirical_boundary(rows: &[PhaseRow], n: usize) -> Option<f64> {
    let mut col: Vec<&PhaseRow> = rows.iter().filter(|r| r.n == n).collect();
    col.sort_by_key(|r| r.m);
    let mut prev: Option<&PhaseRow> = None;
    for r in col {
        if r.success_rate >= 0.5 {
            return Some(match prev {
                Some(p) if r.success_rate > p.success_rate => {
                    let t = (0.5 - p.success_rate) / (r.success_rate - p.success_rate);
                    p.m as f64 + t * (r.m as f64 - p.m as f64)
                }
                _ => r.m as f64,
            });
        }
        prev = Some(r);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_grids() {
        assert_eq!(ExperimentConfig::phase_mn(false).n, vec![50, 125, 200, 275, 350, 425, 500]);
        assert_eq!(ExperimentConfig::phase_mn(true).n.len(), 31);
        assert_eq!(ExperimentConfig::phase_mk(false).m, vec![100, 300, 500, 700, 900, 1000]);
        let a = ExperimentConfig::noise_sweep(false).alpha;
        assert_eq!(a.len(), 20);
        assert!((a[0] - 0.01).abs() < 1e-15 && (a[19] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v + 0.1).collect();
        let f = linear_fit(&x, &y);
        assert!((f.slope - 0.5).abs() < 1e-12 && (f.intercept - 0.1).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_interpolates() {
        let row = |m, rate| PhaseRow { n: 10, m, k: 1, s: 1, trials: 10, successes: 0, success_rate: rate, curve_m: 0.0 };
        let rows = vec![row(10, 0.0), row(20, 0.25), row(30, 0.75)];
        assert_eq!(empirical_boundary(&rows, 10), Some(25.0));
        assert_eq!(empirical_boundary(&rows[..2], 10), None);
    }

    #[test]
    fn success_implies_looser_success() {
        let mut cfg = ExperimentConfig::noise_sweep(false);
        cfg.trials = 1;
        let cell = Cell { n: 40, m: 30, k: 1, s: 2, alpha: 0.0 };
        let strict = run_trial(cell, 0, &cfg);
        cfg.threshold = 1e-1;
        let loose = run_trial(cell, 0, &cfg);
        assert!(!strict.success || loose.success);
        assert_eq!(strict.maxerr, loose.maxerr);
    }
}
