//! JSON problem files for `demix solve` and the matching output writer.
//!
//! ```json
//! {
//!   "operator": {"kind": "dense", "path": "M.csv", "rows": 40, "cols": 100},
//!   "observation": "b.csv",
//!   "alpha": 0.0,
//!   "components": [
//!     {"lambda": 1.0, "set": {"kind": "cross_polytope", "n": 100}},
//!     {"lambda": 1.0, "set": {"kind": "transformed",
//!                              "q": {"kind": "dct", "n": 100},
//!                              "inner": {"kind": "cross_polytope", "n": 100}}}
//!   ]
//! }
//! ```
//! Relative paths resolve against the directory holding the JSON file.

use std::path::{Path, PathBuf};

use demix_core::atoms::{Atom, AtomicSet, Sign};
use demix_core::deconvolve::CoefficientEntry;
use demix_core::linops::{sample_gaussian_operator, sample_rotation, Block, LinearOperator};
use demix_core::solver::{Component, DemixProblem, InnerMode};
use demix_core::{RngSeed, Solution};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::io::{read_matrix, read_vector, write_bytes, write_csv, write_trace, write_vector};

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity { n: usize },
    /// Text files are row-major; binary files are column-major f64.
    Dense { path: PathBuf, rows: usize, cols: usize },
    Gaussian { rows: usize, cols: usize, seed: u64 },
    Rotation { n: usize, seed: u64 },
    Dct { n: usize },
    Dct2d { rows: usize, cols: usize },
    /// Inverse of the 2-D DCT (synthesis from coefficients).
    Idct2d { rows: usize, cols: usize },
}

impl OperatorSpec {
    pub fn build(&self, base: &Path) -> Result<LinearOperator> {
        Ok(match self {
            OperatorSpec::Identity { n } => LinearOperator::Identity(*n),
            OperatorSpec::Dense { path, rows, cols } => LinearOperator::Dense(read_matrix(&base.join(path), *rows, *cols)?),
            OperatorSpec::Gaussian { rows, cols, seed } => sample_gaussian_operator(*rows, *cols, RngSeed::new(*seed, 0))?,
            OperatorSpec::Rotation { n, seed } => sample_rotation(*n, RngSeed::new(*seed, 0))?,
            OperatorSpec::Dct { n } => LinearOperator::dct(*n),
            OperatorSpec::Dct2d { rows, cols } => LinearOperator::dct2d(*rows, *cols),
            OperatorSpec::Idct2d { rows, cols } => LinearOperator::dct2d(*rows, *cols).adjoint(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    CrossPolytope { n: usize },
    RankOne { rows: usize, cols: usize },
    Transformed { q: OperatorSpec, inner: Box<SetSpec> },
    Scaled { lambda: f64, inner: Box<SetSpec> },
    Sum { members: Vec<SetSpec> },
    /// Each block is `[row_start, row_len, col_start, col_len]`.
    BlockLowRank { rows: usize, cols: usize, blocks: Vec<[usize; 4]> },
    UniformBlocks { rows: usize, cols: usize, size: usize },
}

impl SetSpec {
    pub fn build(&self, base: &Path) -> Result<AtomicSet> {
        Ok(match self {
            SetSpec::CrossPolytope { n } => AtomicSet::CrossPolytope(*n),
            SetSpec::RankOne { rows, cols } => AtomicSet::RankOneBall { rows: *rows, cols: *cols },
            SetSpec::Transformed { q, inner } => AtomicSet::transformed(q.build(base)?, inner.build(base)?)?,
            SetSpec::Scaled { lambda, inner } => AtomicSet::scaled(*lambda, inner.build(base)?)?,
            SetSpec::Sum { members } => AtomicSet::sum(members.iter().map(|m| m.build(base)).collect::<Result<_>>()?)?,
            SetSpec::BlockLowRank { rows, cols, blocks } => {
                let blocks = blocks.iter().map(|b| Block::new(b[0], b[1], b[2], b[3])).collect();
                AtomicSet::block_low_rank(*rows, *cols, blocks)?
            }
            SetSpec::UniformBlocks { rows, cols, size } => AtomicSet::uniform_blocks(*rows, *cols, *size)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub lambda: f64,
    pub set: SetSpec,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSpec {
    Plain,
    Corrective,
    Projected,
}

impl From<InnerSpec> for InnerMode {
    fn from(s: InnerSpec) -> Self {
        match s {
            InnerSpec::Plain => InnerMode::Plain,
            InnerSpec::Corrective => InnerMode::Corrective,
            InnerSpec::Projected => InnerMode::Projected,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub operator: OperatorSpec,
    /// Vector file: `.csv`/`.txt` text, otherwise little-endian f64.
    pub observation: PathBuf,
    #[serde(default)]
    pub alpha: f64,
    /// Absolute inner tolerance; omitted means the solver default.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub inner: Option<InnerSpec>,
    pub components: Vec<ComponentSpec>,
}

/// A parsed problem with the solver overrides it requests.
pub struct LoadedProblem {
    pub problem: DemixProblem,
    pub names: Vec<String>,
    pub epsilon: Option<f64>,
    pub inner: Option<InnerMode>,
}

impl ProblemSpec {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::format(path, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn load(&self, base: &Path) -> Result<LoadedProblem> {
        let operator = self.operator.build(base)?;
        let observation = read_vector(&base.join(&self.observation))?;
        let components = self
            .components
            .iter()
            .map(|c| Ok(Component { weight: c.lambda, set: c.set.build(base)? }))
            .collect::<Result<Vec<_>>>()?;
        let names = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| c.name.clone().unwrap_or_else(|| format!("component_{i}")))
            .collect();
        Ok(LoadedProblem {
            problem: DemixProblem::new(operator, observation, self.alpha, components)?,
            names,
            epsilon: self.epsilon,
            inner: self.inner.map(Into::into),
        })
    }
}

/// Reads and builds a problem file.
pub fn load_problem(path: &Path) -> Result<LoadedProblem> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    ProblemSpec::read(path)?.load(&base)
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum AtomDescriptor<'a> {
    Coordinate { index: usize, sign: i8 },
    RankOne { u: &'a [f64], v: &'a [f64] },
    Block { block_id: usize, block: [usize; 4], inner: Box<AtomDescriptor<'a>> },
    Dense { values: &'a [f64] },
}

fn describe(atom: &Atom) -> AtomDescriptor<'_> {
    match atom {
        Atom::SignedCoordinate { index, sign } => AtomDescriptor::Coordinate {
            index: *index,
            sign: if *sign == Sign::Plus { 1 } else { -1 },
        },
        Atom::RankOne { u, v } => AtomDescriptor::RankOne { u, v },
        Atom::BlockEmbedded { block_id, block, inner } => AtomDescriptor::Block {
            block_id: *block_id,
            block: [block.row_start, block.row_len, block.col_start, block.col_len],
            inner: Box::new(describe(inner)),
        },
        Atom::DenseVector(values) => AtomDescriptor::Dense { values },
    }
}

/// Compact JSON description of an atom.
pub fn atom_descriptor(atom: &Atom) -> String {
    serde_json::to_string(&describe(atom)).expect("atom descriptors serialize")
}

#[derive(Serialize)]
pub struct CoefficientRow {
    pub component_id: usize,
    pub atom_descriptor: String,
    pub coefficient: f64,
}

pub fn coefficient_rows(entries: &[CoefficientEntry]) -> Vec<CoefficientRow> {
    entries
        .iter()
        .map(|e| CoefficientRow {
            component_id: e.component,
            atom_descriptor: atom_descriptor(&e.atom),
            coefficient: e.coefficient,
        })
        .collect()
}

pub fn status_name(s: demix_core::SolveStatus) -> &'static str {
    match s {
        demix_core::SolveStatus::Converged => "converged",
        demix_core::SolveStatus::Infeasible => "infeasible",
        demix_core::SolveStatus::NotConverged => "not-converged",
    }
}

#[derive(Serialize)]
struct SolutionSummary<'a> {
    status: &'static str,
    tau: f64,
    residual_norm: f64,
    outer_iters: usize,
    nnls_kkt: f64,
    nnls_converged: bool,
    recovery: &'a str,
    components: &'a [String],
}

/// Writes `component_<i>.csv`, `coefficients.csv`, `trace.csv` and `solution.json` into `out`.
pub fn write_solution(out: &Path, names: &[String], solution: &Solution) -> Result<()> {
    for (i, x) in solution.components.iter().enumerate() {
        write_vector(&out.join(format!("component_{i}.csv")), x)?;
    }
    write_csv(&out.join("coefficients.csv"), &coefficient_rows(&solution.coefficients))?;
    write_trace(&out.join("trace.csv"), &solution.trace)?;
    let summary = SolutionSummary {
        status: status_name(solution.status),
        tau: solution.tau,
        residual_norm: demix_core::dense::norm2(&solution.residual),
        outer_iters: solution.trace.len(),
        nnls_kkt: solution.nnls_kkt,
        nnls_converged: solution.nnls_converged,
        recovery: match solution.source {
            demix_core::RecoverySource::Faces => "faces",
            demix_core::RecoverySource::Primal => "primal",
        },
        components: names,
    };
    let json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    write_bytes(&out.join("solution.json"), &json)
}
