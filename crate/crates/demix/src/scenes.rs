//! Planted image-like scenes with known components.

use demix_core::atoms::{equilibrate_weights, AtomicSet};
use std::path::Path;

use demix_core::dense::{axpy, Mat};
use demix_core::linops::{sample_rotation_matrix, Block, LinearOperator};
use demix_core::rng::{gaussian, RngSeed};
use demix_core::solver::{Component, DemixProblem, InnerMode};
use demix_core::{demix, DemixConfig, Solution};
use demix_core::instance::sphere_noise;
use demix_core::Result;
use rand::seq::index::sample;
use serde::Serialize;

use crate::error::Result as HarnessResult;
use crate::io::{write_csv, write_pgm, write_trace};

/// A demixing problem on `rows × cols` images with its planted components.
pub struct Scene {
    pub problem: DemixProblem,
    pub truth: Vec<Vec<f64>>,
    pub names: Vec<&'static str>,
    pub rows: usize,
    pub cols: usize,
}

fn assemble(
    sets: Vec<AtomicSet>,
    truth: Vec<Vec<f64>>,
    names: Vec<&'static str>,
    rows: usize,
    cols: usize,
    alpha: f64,
    seed: RngSeed,
) -> Result<Scene> {
    let weights = equilibrate_weights(&sets, &truth)?;
    let mut b = vec![0.0; rows * cols];
    for x in &truth {
        axpy(1.0, x, &mut b);
    }
    axpy(1.0, &sphere_noise(rows * cols, alpha, seed.child(&[99])), &mut b);
    let components = sets
        .into_iter()
        .zip(weights)
        .map(|(set, weight)| Component { weight, set })
        .collect();
    Ok(Scene {
        problem: DemixProblem::new(LinearOperator::Identity(rows * cols), b, alpha, components)?,
        truth,
        names,
        rows,
        cols,
    })
}

fn sparse_entries(n: usize, count: usize, seed: RngSeed, positive: bool) -> Vec<f64> {
    let mut rng = seed.rng();
    let mut x = vec![0.0; n];
    for i in sample(&mut rng, n, count.min(n)) {
        let g = gaussian(&mut rng);
        x[i] = if positive { g.abs() } else { g };
    }
    x
}

#[derive(Clone, Copy, Debug)]
pub struct StarGalaxyParams {
    pub size: usize,
    pub stars: usize,
    pub dct_terms: usize,
    /// Background coefficients are drawn from the `low_freq × low_freq` corner.
    pub low_freq: usize,
    pub alpha: f64,
    pub seed: RngSeed,
}

impl Default for StarGalaxyParams {
    fn default() -> Self {
        StarGalaxyParams {
            size: 64,
            stars: 24,
            dct_terms: 12,
            low_freq: 8,
            alpha: 0.0,
            seed: RngSeed::new(2024, 11),
        }
    }
}

/// Bright point sources over a smooth background that is sparse in the 2-D DCT.
pub fn star_galaxy(p: &StarGalaxyParams) -> Result<Scene> {
    let (rows, cols) = (p.size, p.size);
    let n = rows * cols;
    let stars = sparse_entries(n, p.stars, p.seed.child(&[1]), true);
    let lf = p.low_freq.min(p.size);
    let mut rng = p.seed.child(&[2]).rng();
    let mut coeffs = vec![0.0; n];
    for idx in sample(&mut rng, lf * lf, p.dct_terms.min(lf * lf)) {
        let (i, j) = (idx % lf, idx / lf);
        coeffs[i + j * rows] = 4.0 * gaussian(&mut rng);
    }
    let synthesis = LinearOperator::dct2d(rows, cols).adjoint();
    let background = synthesis.apply(&coeffs)?;
    let sets = vec![
        AtomicSet::CrossPolytope(n),
        AtomicSet::transformed(synthesis, AtomicSet::CrossPolytope(n))?,
    ];
    assemble(sets, vec![stars, background], vec!["sparse", "smooth"], rows, cols, p.alpha, p.seed)
}

/// Demixing sets for an arbitrary observed image (no ground truth).
pub fn star_galaxy_problem(image: Vec<f64>, rows: usize, cols: usize, smooth_weight: f64, alpha: f64) -> Result<DemixProblem> {
    let n = rows * cols;
    let synthesis = LinearOperator::dct2d(rows, cols).adjoint();
    DemixProblem::new(
        LinearOperator::Identity(n),
        image,
        alpha,
        vec![
            Component { weight: 1.0, set: AtomicSet::CrossPolytope(n) },
            Component {
                weight: smooth_weight,
                set: AtomicSet::transformed(synthesis, AtomicSet::CrossPolytope(n))?,
            },
        ],
    )
}

#[derive(Clone, Copy, Debug)]
pub struct ChessboardParams {
    pub size: usize,
    pub square: usize,
    pub foreground_fraction: f64,
    pub noise_terms: usize,
    pub noise_scale: f64,
    pub alpha: f64,
    pub seed: RngSeed,
}

impl Default for ChessboardParams {
    fn default() -> Self {
        ChessboardParams {
            size: 64,
            square: 8,
            foreground_fraction: 0.05,
            noise_terms: 4,
            noise_scale: 1.0,
            alpha: 0.0,
            seed: RngSeed::new(2024, 12),
        }
    }
}

/// Rank-2 checkerboard background, sparse foreground, and noise that is sparse
/// after a random two-sided rotation.
pub fn chessboard(p: &ChessboardParams) -> Result<Scene> {
    let nside = p.size;
    let n = nside * nside;
    let sign = |i: usize| if (i / p.square.max(1)) % 2 == 0 { 1.0 } else { -1.0 };
    let background = Mat::from_fn(nside, nside, |i, j| sign(i) * sign(j) + 0.5).into_vec();
    let count = (p.foreground_fraction * n as f64).round() as usize;
    let foreground = sparse_entries(n, count, p.seed.child(&[1]), false);
    let rot_p = sample_rotation_matrix(nside, p.seed.child(&[2]))?;
    let rot_q = sample_rotation_matrix(nside, p.seed.child(&[3]))?;
    let mixing = LinearOperator::Conjugation {
        left: rot_p.transpose(),
        right: rot_q.transpose(),
    };
    let mut hidden = sparse_entries(n, p.noise_terms, p.seed.child(&[4]), false);
    hidden.iter_mut().for_each(|v| *v *= p.noise_scale);
    let noise = mixing.apply(&hidden)?;
    let sets = vec![
        AtomicSet::CrossPolytope(n),
        AtomicSet::RankOneBall { rows: nside, cols: nside },
        AtomicSet::transformed(mixing, AtomicSet::CrossPolytope(n))?,
    ];
    let names = vec!["foreground", "background", "noise"];
    assemble(sets, vec![foreground, background, noise], names, nside, nside, p.alpha, p.seed)
}

#[derive(Clone, Debug)]
pub struct MultiscaleParams {
    pub size: usize,
    pub block_sizes: Vec<usize>,
    /// Number of planted rank-one blocks at each scale.
    pub active_blocks: Vec<usize>,
    pub alpha: f64,
    pub seed: RngSeed,
}

impl Default for MultiscaleParams {
    fn default() -> Self {
        MultiscaleParams {
            size: 64,
            block_sizes: vec![1, 4, 16, 64],
            active_blocks: vec![12, 3, 1, 1],
            alpha: 0.0,
            seed: RngSeed::new(2024, 13),
        }
    }
}

/// Sum of block-wise rank-one matrices at several uniform partitions.
pub fn multiscale(p: &MultiscaleParams) -> Result<Scene> {
    let nside = p.size;
    let n = nside * nside;
    let mut sets = Vec::new();
    let mut truth = Vec::new();
    for (scale, (&bs, &active)) in p.block_sizes.iter().zip(&p.active_blocks).enumerate() {
        let set = AtomicSet::uniform_blocks(nside, nside, bs)?;
        let per_side = nside / bs;
        let mut rng = p.seed.child(&[1, scale as u64]).rng();
        let mut x = vec![0.0; n];
        for idx in sample(&mut rng, per_side * per_side, active.min(per_side * per_side)) {
            let block = Block::new((idx % per_side) * bs, bs, (idx / per_side) * bs, bs);
            let u: Vec<f64> = (0..bs).map(|_| gaussian(&mut rng)).collect();
            let v: Vec<f64> = (0..bs).map(|_| gaussian(&mut rng)).collect();
            let outer = Mat::from_fn(bs, bs, |i, j| u[i] * v[j] / (bs as f64).sqrt());
            block.embed_add(nside, 1.0, outer.as_slice(), &mut x);
        }
        sets.push(set);
        truth.push(x);
    }
    let names = ["scale-1", "scale-4", "scale-16", "scale-64", "scale-256", "scale-1024"];
    let names = (0..sets.len()).map(|i| names.get(i).copied().unwrap_or("scale")).collect();
    assemble(sets, truth, names, nside, nside, p.alpha, p.seed)
}

/// `‖x − y‖ / ‖y‖` per component.
pub fn relative_errors(recovered: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<f64> {
    recovered
        .iter()
        .zip(truth)
        .map(|(x, y)| {
            let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let t: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if t > 0.0 {
                d / t
            } else {
                d
            }
        })
        .collect()
}

/// Solver settings used for the image scenes: projected inner solves with a
/// tight tolerance `factor·‖b‖²`.
pub fn scene_config(factor: f64) -> DemixConfig {
    let mut config = DemixConfig::default();
    config.level_set.epsilon_factor = factor;
    config.level_set.inner = InnerMode::Projected;
    config
}

pub const SCENE_EPSILON_FACTOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct SceneImageRow {
    pub component: String,
    pub image: String,
    /// Empty for the observation and for images without ground truth.
    pub relative_error: Option<f64>,
    pub pgm_offset: f64,
    pub pgm_scale: f64,
}

pub struct SceneOutcome {
    pub solution: Solution,
    pub relative_errors: Option<Vec<f64>>,
    pub rows: Vec<SceneImageRow>,
}

/// Solves a scene and, if `out` is given, writes PGMs for the observation, the
/// recovered components and the planted components, plus `components.csv` and `trace.csv`.
pub fn run_scene(
    problem: &DemixProblem,
    truth: Option<&[Vec<f64>]>,
    names: &[String],
    (rows, cols): (usize, usize),
    config: &DemixConfig,
    out: Option<&Path>,
) -> HarnessResult<SceneOutcome> {
    let solution = demix(problem, config, truth)?;
    let errors = truth.map(|t| relative_errors(&solution.components, t));
    let mut table = Vec::new();
    if let Some(out) = out {
        let mut emit = |component: &str, image: String, relative_error: Option<f64>, values: &[f64]| -> HarnessResult<()> {
            let map = write_pgm(&out.join(&image), values, rows, cols)?;
            table.push(SceneImageRow {
                component: component.to_string(),
                image,
                relative_error,
                pgm_offset: map.offset,
                pgm_scale: map.scale,
            });
            Ok(())
        };
        emit("observation", "observed.pgm".into(), None, problem.observation())?;
        for (i, (name, x)) in names.iter().zip(&solution.components).enumerate() {
            emit(name, format!("recovered_{name}.pgm"), errors.as_ref().map(|e| e[i]), x)?;
        }
        if let Some(truth) = truth {
            for (name, x) in names.iter().zip(truth) {
                emit(name, format!("truth_{name}.pgm"), None, x)?;
            }
        }
        write_csv(&out.join("components.csv"), &table)?;
        write_trace(&out.join("trace.csv"), &solution.trace)?;
    }
    Ok(SceneOutcome { solution, relative_errors: errors, rows: table })
}
