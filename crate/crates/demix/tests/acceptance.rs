//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL` line
//! straight to stdout so it shows even when libtest captures output.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use demix::experiments::{
    empirical_boundary, linear_fit, noise_rows, phase_rows, run_trials, ExperimentConfig, TrialRecord, TrialStatus,
};
use demix::runner::default_workers;
use demix::scenes::{chessboard, multiscale, relative_errors, scene_config, star_galaxy, Scene, SCENE_EPSILON_FACTOR};
use demix::scenes::{ChessboardParams, MultiscaleParams, StarGalaxyParams};
use demix_core::dense::Mat;
use demix_core::rng::{gaussian_vec, RngSeed};
use demix_core::{demix, level_set_solve, AtomicSet, Component, DemixProblem, InnerMode, LevelSetConfig, LinearOperator};

fn report(id: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id}: {verdict} | {detail}");
    let _ = out.flush();
}

fn with_workers(mut c: ExperimentConfig) -> ExperimentConfig {
    c.workers = default_workers();
    c
}

fn phase_mn_records() -> &'static [TrialRecord] {
    static CELL: OnceLock<Vec<TrialRecord>> = OnceLock::new();
    CELL.get_or_init(|| run_trials(&with_workers(ExperimentConfig::phase_mn(false))).unwrap())
}

fn phase_mk_records() -> &'static [TrialRecord] {
    static CELL: OnceLock<Vec<TrialRecord>> = OnceLock::new();
    CELL.get_or_init(|| run_trials(&with_workers(ExperimentConfig::phase_mk(false))).unwrap())
}

fn noise_records() -> &'static [TrialRecord] {
    static CELL: OnceLock<Vec<TrialRecord>> = OnceLock::new();
    CELL.get_or_init(|| run_trials(&with_workers(ExperimentConfig::noise_sweep(false))).unwrap())
}

fn aggregate_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::noise_sweep(false);
    c.n = vec![200];
    c.m = vec![180];
    c.k = vec![1];
    c.s = vec![5];
    c.alpha = vec![0.1, 0.2, 0.4];
    c.trials = 50;
    with_workers(c)
}

fn aggregate_records() -> &'static [TrialRecord] {
    static CELL: OnceLock<Vec<TrialRecord>> = OnceLock::new();
    CELL.get_or_init(|| run_trials(&aggregate_config()).unwrap())
}

// ---- criterion 1 ----------------------------------------------------------

/// Solves the square system `a·x = rhs` by partial pivoting; `None` if singular.
fn solve_small(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let k = rhs.len();
    let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    for col in 0..k {
        let p = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, p);
        rhs.swap(col, p);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for j in col..k {
                a[row][j] -= f * a[col][j];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let tail: f64 = (row + 1..k).map(|j| a[row][j] * x[j]).sum();
        x[row] = (rhs[row] - tail) / a[row][row];
    }
    Some(x)
}

/// `min ½‖Mx − b‖²` over the ℓ₁ ball of radius `radius`, by enumerating every
/// signed support and solving its stationarity system, unconstrained and on
/// the face `Σ|xᵢ| = radius`. Some minimizer has minimal support, and there
/// the system is nonsingular, so the enumeration is exact.
fn ball_value(m: &Mat, b: &[f64], radius: f64) -> f64 {
    let n = m.cols();
    let f = |x: &[f64]| {
        let mut r = vec![0.0; m.rows()];
        m.matvec(x, &mut r);
        0.5 * r.iter().zip(b).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
    };
    let mut best = f(&vec![0.0; n]);
    for code in 1..3usize.pow(n as u32) {
        let signs: Vec<(usize, f64)> = (0..n)
            .filter_map(|i| match (code / 3usize.pow(i as u32)) % 3 {
                1 => Some((i, 1.0)),
                2 => Some((i, -1.0)),
                _ => None,
            })
            .collect();
        let cols: Vec<Vec<f64>> = signs.iter().map(|&(i, s)| m.col(i).iter().map(|v| s * v).collect()).collect();
        let k = cols.len();
        let dotc = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, c)| a * c).sum::<f64>();
        let gram: Vec<Vec<f64>> = cols.iter().map(|u| cols.iter().map(|v| dotc(u, v)).collect()).collect();
        let rhs: Vec<f64> = cols.iter().map(|u| dotc(u, b)).collect();
        let mut candidates = Vec::new();
        if let Some(w) = solve_small(gram.clone(), rhs.clone()) {
            candidates.push(w);
        }
        let mut kkt: Vec<Vec<f64>> = gram.iter().map(|row| row.iter().copied().chain([1.0]).collect()).collect();
        kkt.push(vec![1.0; k].into_iter().chain([0.0]).collect());
        if let Some(sol) = solve_small(kkt, rhs.into_iter().chain([radius]).collect()) {
            candidates.push(sol[..k].to_vec());
        }
        for w in candidates {
            if w.iter().all(|&v| v >= -1e-14) && w.iter().sum::<f64>() <= radius * (1.0 + 1e-12) {
                let mut x = vec![0.0; n];
                for (&(i, s), v) in signs.iter().zip(&w) {
                    x[i] = s * v.max(0.0);
                }
                best = best.min(f(&x));
            }
        }
    }
    best
}

#[test]
fn criterion_1_lower_bound_brackets_value_function() {
    let start = Instant::now();
    let (mut worst_low, mut worst_high, mut rows) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0usize);
    for inst in 0..100u64 {
        let mut rng = RngSeed::new(1, inst).rng();
        let n = 1 + (inst % 3) as usize;
        let m = 1 + ((inst / 3) % 3) as usize;
        let k = 1 + (inst % 2) as usize;
        let mat = Mat::from_col_major(m, n, gaussian_vec(&mut rng, m * n)).unwrap();
        let b = gaussian_vec(&mut rng, m);
        let weights: Vec<f64> = (0..k).map(|i| 0.5 + 0.5 * i as f64).collect();
        let components = weights.iter().map(|&w| Component { weight: w, set: AtomicSet::CrossPolytope(n) }).collect();
        let alpha = 0.2 * (inst % 4) as f64 * demix_core::dense::norm2(&b) / 4.0;
        let problem = DemixProblem::new(LinearOperator::Dense(mat.clone()), b.clone(), alpha, components).unwrap();
        let total_weight: f64 = weights.iter().sum();
        for inner in [InnerMode::Plain, InnerMode::Corrective] {
            let config = LevelSetConfig { inner, ..LevelSetConfig::default() };
            let result = level_set_solve(&problem, &config).unwrap();
            for row in &result.trace {
                let v = ball_value(&mat, &b, row.tau * total_weight);
                let half_r2 = 0.5 * row.residual_norm * row.residual_norm;
                if row.lower_bound - v > 1e-6 || v - half_r2 > 1e-6 {
                    eprintln!("inst {inst} n={n} m={m} k={k} {inner:?} alpha={alpha:.3} {row:?} v={v}");
                }
                worst_low = worst_low.max(row.lower_bound - v);
                worst_high = worst_high.max(v - half_r2);
                rows += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_low <= 1e-6 && worst_high <= 1e-6 && secs < 60.0;
    report(
        1,
        pass,
        &format!("{rows} outer steps over 100 instances; max(ℓ − v) = {worst_low:.2e}, max(v − ½‖r‖²) = {worst_high:.2e}, tol 1e-6; {secs:.1}s"),
    );
    assert!(pass);
}

// ---- criterion 2 ----------------------------------------------------------

#[test]
fn criterion_2_solves_end_inside_the_noise_ball() {
    let all: Vec<&TrialRecord> = [phase_mn_records(), phase_mk_records(), noise_records(), aggregate_records()]
        .into_iter()
        .flatten()
        .filter(|r| r.status == TrialStatus::Converged)
        .collect();
    let violations: Vec<&&TrialRecord> = all.iter().filter(|r| !r.fit_ok()).collect();
    let worst = all.iter().map(|r| r.fit_residual / r.fit_bound).fold(0.0, f64::max);
    let pass = !all.is_empty() && violations.is_empty();
    report(
        2,
        pass,
        &format!(
            "{} converged solves, {} with ‖M Σ c a − b‖ > √(α² + ε); worst ratio {worst:.6}",
            all.len(),
            violations.len()
        ),
    );
    if let Some(v) = violations.first() {
        eprintln!("first violation: {v:?}");
    }
    assert!(pass);
}

// ---- criterion 3 ----------------------------------------------------------

fn rate(rows: &[demix::experiments::PhaseRow], pick: impl Fn(&demix::experiments::PhaseRow) -> bool) -> f64 {
    rows.iter().find(|r| pick(r)).map_or(f64::NAN, |r| r.success_rate)
}

#[test]
fn criterion_3_phase_transition_in_m_and_n() {
    let start = Instant::now();
    let rows = phase_rows(phase_mn_records()).unwrap();
    let high = rate(&rows, |r| r.n == 500 && r.m == 500);
    let low = rate(&rows, |r| r.n == 500 && r.m == 50);
    let mut columns = Vec::new();
    let mut boundary_ok = true;
    for n in ExperimentConfig::phase_mn(false).n {
        let curve = rows.iter().find(|r| r.n == n).unwrap().curve_m;
        let boundary = empirical_boundary(&rows, n);
        // Every cell on or above the curve sits in the ≥ 50 % region.
        let above_ok = rows.iter().filter(|r| r.n == n && r.m as f64 >= curve).all(|r| r.success_rate >= 0.5);
        let ok = above_ok && boundary.is_some_and(|b| b <= curve);
        boundary_ok &= ok;
        columns.push(format!("n={n}: m50={} curve={curve:.0}", boundary.map_or("none".into(), |b| format!("{b:.0}"))));
    }
    let pass = high >= 0.9 && low <= 0.1 && boundary_ok;
    report(
        3,
        pass,
        &format!(
            "rate(500,500)={high:.2} rate(500,50)={low:.2}; {}; {:.0}s",
            columns.join(", "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---- criterion 4 ----------------------------------------------------------

#[test]
fn criterion_4_measurements_scale_with_k() {
    let start = Instant::now();
    let rows = phase_rows(phase_mk_records()).unwrap();
    let high = rate(&rows, |r| r.k == 2 && r.m == 1000);
    let low = rate(&rows, |r| r.k == 10 && r.m == 100);
    let pass = high >= 0.9 && low <= 0.1;
    let table: Vec<String> = rows.iter().map(|r| format!("(k={},m={}):{:.1}", r.k, r.m, r.success_rate)).collect();
    report(
        4,
        pass,
        &format!("rate(k=2,m=1000)={high:.2} rate(k=10,m=100)={low:.2}; {}; {:.0}s", table.join(" "), start.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

// ---- criterion 5 ----------------------------------------------------------

#[test]
fn criterion_5_error_is_linear_in_noise() {
    let rows = noise_rows(noise_records());
    let alpha: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let mean: Vec<f64> = rows.iter().map(|r| r.mean_maxerr).collect();
    let fit = linear_fit(&alpha, &mean);
    let pass = mean.iter().all(|v| v.is_finite()) && fit.r_squared >= 0.95 && fit.intercept <= 0.05;
    report(
        5,
        pass,
        &format!(
            "{} noise levels; slope={:.4} intercept={:.4} R²={:.4} (need R² ≥ 0.95, intercept ≤ 0.05)",
            rows.len(),
            fit.slope,
            fit.intercept,
            fit.r_squared
        ),
    );
    assert!(pass);
}

// ---- criterion 6 ----------------------------------------------------------

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn criterion_6_aggregate_error_halves_with_noise() {
    let records = aggregate_records();
    let med = |a: f64| median(records.iter().filter(|r| r.alpha == a).map(|r| r.aggregate_err).collect());
    let (m1, m2, m4) = (med(0.1), med(0.2), med(0.4));
    let (r1, r2) = (m2 / m1, m4 / m2);
    let within = |r: f64| (2.0 / 1.5..=2.0 * 1.5).contains(&r);
    let pass = within(r1) && within(r2);
    report(
        6,
        pass,
        &format!("median ‖x* − x♮‖ at α=0.1/0.2/0.4: {m1:.4e}/{m2:.4e}/{m4:.4e}; ratios {r1:.3}, {r2:.3} (need [1.333, 3])"),
    );
    assert!(pass);
}

// ---- criterion 7 ----------------------------------------------------------

const PROPERTY_SUITES: [&str; 6] = ["atom_laws", "adjoint", "solver_props", "nnls_brute", "lemmas", "statistics"];

/// Newest compiled test binary `<name>-<hash>` next to this one.
fn suite_binary(name: &str) -> Option<PathBuf> {
    let deps = std::env::current_exe().ok()?.parent()?.to_path_buf();
    let prefix = format!("{name}-");
    std::fs::read_dir(&deps)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let f = e.file_name().to_string_lossy().into_owned();
            f.starts_with(&prefix) && !f.contains('.') && f[prefix.len()..].chars().all(|c| c.is_ascii_hexdigit())
        })
        .max_by_key(|e| e.metadata().and_then(|m| m.modified()).ok())
        .map(|e| e.path())
}

#[test]
fn criterion_7_property_suites_pass() {
    let mut summary = Vec::new();
    let mut pass = true;
    for suite in PROPERTY_SUITES {
        let outcome = match suite_binary(suite) {
            None => "not built".to_string(),
            Some(path) => match Command::new(&path).output() {
                Err(e) => format!("failed to start: {e}"),
                Ok(out) if out.status.success() => "ok".to_string(),
                Ok(out) => {
                    eprintln!("{}", String::from_utf8_lossy(&out.stdout));
                    "FAILED".to_string()
                }
            },
        };
        pass &= outcome == "ok";
        summary.push(format!("{suite}: {outcome}"));
    }
    report(7, pass, &summary.join(", "));
    assert!(pass, "build the core test targets first (cargo test --workspace)");
}

// ---- criterion 8 ----------------------------------------------------------

fn scene_errors(scene: &Scene) -> Vec<f64> {
    let config = scene_config(SCENE_EPSILON_FACTOR);
    let solution = demix(&scene.problem, &config, Some(&scene.truth)).unwrap();
    relative_errors(&solution.components, &scene.truth)
}

#[test]
fn criterion_8_image_scenes_separate() {
    let start = Instant::now();
    let scenes = [
        ("star-galaxy", star_galaxy(&StarGalaxyParams::default()).unwrap()),
        ("chessboard", chessboard(&ChessboardParams::default()).unwrap()),
        ("multiscale", multiscale(&MultiscaleParams::default()).unwrap()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, scene) in &scenes {
        let errors = scene_errors(scene);
        pass &= errors.iter().all(|&e| e <= 1e-2);
        let shown: Vec<String> = scene.names.iter().zip(&errors).map(|(n, e)| format!("{n}={e:.2e}")).collect();
        parts.push(format!("{label}[{}]", shown.join(" ")));
    }
    report(8, pass, &format!("{} (need ≤ 1e-2); {:.0}s", parts.join(" "), start.elapsed().as_secs_f64()));
    assert!(pass);
}
