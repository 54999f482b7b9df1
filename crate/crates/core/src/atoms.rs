//! Atomic sets, their gauges and support functions, and exposed faces.
//!
//! Every set here is centrosymmetric and compact. A `Sum` carries the
//! convention that each member enters as `Aᵢ ∪ {0}`, so a member whose support
//! at `z` is negative contributes zero.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use libm::fabs;

use crate::dense::{dot, jacobi_svd, leading_triplets, norm1, Mat};
use crate::error::{Error, Result};
use crate::linops::{Block, LinearOperator};

pub const DEFAULT_FACE_TOL: f64 = 1e-6;
pub const MAX_ATOMS_CAP: usize = 200;

/// Ambient space of an atomic set. Matrices are flattened column-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// A compactly represented extreme point.
///
/// Atoms of `Transformed` and `Scaled` sets keep the descriptor of the inner
/// set; [`AtomicSet::atom_vector`] maps them into the ambient space.
#[derive(Clone, Debug, PartialEq)]
pub enum Atom {
    SignedCoordinate { index: usize, sign: Sign },
    /// `u vᵀ` with unit `u`, `v`.
    RankOne { u: Vec<f64>, v: Vec<f64> },
    BlockEmbedded {
        block_id: usize,
        block: Block,
        inner: Box<Atom>,
    },
    DenseVector(Vec<f64>),
}

impl Atom {
    /// Block key used to group rank-one atoms that share a face subspace.
    pub fn block_id(&self) -> Option<usize> {
        match self {
            Atom::BlockEmbedded { block_id, .. } => Some(*block_id),
            _ => None,
        }
    }
}

/// Dense ambient vector for an intrinsic atom.
pub fn materialize(atom: &Atom, shape: Shape) -> Result<Vec<f64>> {
    let mut out = vec![0.0; shape.dim()];
    materialize_add(atom, shape, 1.0, &mut out)?;
    Ok(out)
}

/// `out += alpha · atom`
pub fn materialize_add(atom: &Atom, shape: Shape, alpha: f64, out: &mut [f64]) -> Result<()> {
    if out.len() != shape.dim() {
        return Err(Error::dim(shape.dim(), out.len(), "materialize output"));
    }
    match atom {
        Atom::SignedCoordinate { index, sign } => {
            if *index >= shape.dim() {
                return Err(Error::invalid("signed coordinate index outside the ambient dimension"));
            }
            out[*index] += alpha * sign.value();
        }
        Atom::RankOne { u, v } => {
            let (rows, cols) = match shape {
                Shape::Matrix { rows, cols } => (rows, cols),
                Shape::Vector(_) => return Err(Error::invalid("rank-one atom needs a matrix ambient")),
            };
            if u.len() != rows || v.len() != cols {
                return Err(Error::dim(rows * cols, u.len() * v.len(), "rank-one atom"));
            }
            for (j, vj) in v.iter().enumerate() {
                let s = alpha * vj;
                if s != 0.0 {
                    crate::dense::axpy(s, u, &mut out[j * rows..(j + 1) * rows]);
                }
            }
        }
        Atom::BlockEmbedded { block, inner, .. } => {
            let (rows, cols) = match shape {
                Shape::Matrix { rows, cols } => (rows, cols),
                Shape::Vector(_) => return Err(Error::invalid("block atom needs a matrix ambient")),
            };
            if !block.fits(rows, cols) {
                return Err(Error::invalid("block lies outside the ambient matrix"));
            }
            let local = materialize(
                inner,
                Shape::Matrix {
                    rows: block.row_len,
                    cols: block.col_len,
                },
            )?;
            block.embed_add(rows, alpha, &local, out);
        }
        Atom::DenseVector(values) => {
            if values.len() != shape.dim() {
                return Err(Error::dim(shape.dim(), values.len(), "dense atom"));
            }
            crate::dense::axpy(alpha, values, out);
        }
    }
    Ok(())
}

/// Atoms maximizing `⟨a, z⟩` up to a relative tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct ExposedFace {
    pub atoms: Vec<Atom>,
    /// `⟨a, z⟩` for each atom, in the same order (decreasing).
    pub values: Vec<f64>,
    pub support_value: f64,
    pub tolerance_used: f64,
}

impl ExposedFace {
    fn empty(support_value: f64, tol: f64) -> Self {
        ExposedFace {
            atoms: Vec::new(),
            values: Vec::new(),
            support_value,
            tolerance_used: tol,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Recursive description of an atomic set.
#[derive(Clone, Debug, PartialEq)]
pub enum AtomicSet {
    /// `{±e₁, …, ±eₙ}`
    CrossPolytope(usize),
    /// `{u vᵀ : ‖u‖ = ‖v‖ = 1}`
    RankOneBall { rows: usize, cols: usize },
    /// `Q·A` for an orthogonal `Q`.
    Transformed {
        q: LinearOperator,
        inner: Box<AtomicSet>,
    },
    /// `λ·A`, `λ > 0`.
    Scaled { lambda: f64, inner: Box<AtomicSet> },
    Sum(Vec<AtomicSet>),
    /// `⋃_p R_p^* {u vᵀ}` over disjoint blocks of a `rows × cols` matrix.
    BlockLowRank {
        rows: usize,
        cols: usize,
        blocks: Vec<Block>,
    },
}

impl AtomicSet {
    /// `Q·A`. `q` must be orthogonal; only its shape is checked here.
    pub fn transformed(q: LinearOperator, inner: AtomicSet) -> Result<Self> {
        let n = inner.dim();
        if q.rows() != n || q.cols() != n {
            return Err(Error::dim(n, q.cols(), "Transformed operator"));
        }
        Ok(AtomicSet::Transformed {
            q,
            inner: Box::new(inner),
        })
    }

    pub fn scaled(lambda: f64, inner: AtomicSet) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("scale must be positive and finite"));
        }
        Ok(AtomicSet::Scaled {
            lambda,
            inner: Box::new(inner),
        })
    }

    pub fn sum(members: Vec<AtomicSet>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::invalid("sum of zero atomic sets"));
        };
        let n = first.dim();
        for m in &members {
            if m.dim() != n {
                return Err(Error::dim(n, m.dim(), "Sum member"));
            }
        }
        Ok(AtomicSet::Sum(members))
    }

    pub fn block_low_rank(rows: usize, cols: usize, blocks: Vec<Block>) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            if b.is_empty() || !b.fits(rows, cols) {
                return Err(Error::invalid("block empty or outside the matrix"));
            }
            if blocks[..i].iter().any(|o| o.overlaps(b)) {
                return Err(Error::invalid("blocks must be disjoint"));
            }
        }
        Ok(AtomicSet::BlockLowRank { rows, cols, blocks })
    }

    /// Uniform partition of a `rows × cols` matrix into `size × size` blocks.
    pub fn uniform_blocks(rows: usize, cols: usize, size: usize) -> Result<Self> {
        if size == 0 || rows % size != 0 || cols % size != 0 {
            return Err(Error::invalid("block size must divide both matrix sides"));
        }
        let mut blocks = Vec::with_capacity((rows / size) * (cols / size));
        for bj in 0..cols / size {
            for bi in 0..rows / size {
                blocks.push(Block::new(bi * size, size, bj * size, size));
            }
        }
        Ok(AtomicSet::BlockLowRank { rows, cols, blocks })
    }

    pub fn shape(&self) -> Shape {
        match self {
            AtomicSet::CrossPolytope(n) => Shape::Vector(*n),
            AtomicSet::RankOneBall { rows, cols } | AtomicSet::BlockLowRank { rows, cols, .. } => {
                Shape::Matrix {
                    rows: *rows,
                    cols: *cols,
                }
            }
            AtomicSet::Transformed { inner, .. } | AtomicSet::Scaled { inner, .. } => inner.shape(),
            AtomicSet::Sum(members) => members[0].shape(),
        }
    }

    pub fn dim(&self) -> usize {
        self.shape().dim()
    }

    fn check(&self, v: &[f64], ctx: &'static str) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::dim(self.dim(), v.len(), ctx));
        }
        Ok(())
    }

    /// `sup_{a ∈ A} ⟨a, z⟩`
    pub fn support(&self, z: &[f64]) -> Result<f64> {
        self.check(z, "support")?;
        match self {
            AtomicSet::CrossPolytope(_) => Ok(crate::dense::norm_inf(z)),
            AtomicSet::RankOneBall { rows, cols } => {
                let zm = Mat::from_col_major(*rows, *cols, z.to_vec())?;
                Ok(leading_triplets(&zm, 0.0, 1)?.s[0])
            }
            AtomicSet::Transformed { q, inner } => inner.support(&q.adjoint_apply(z)?),
            AtomicSet::Scaled { lambda, inner } => Ok(lambda * inner.support(z)?),
            AtomicSet::Sum(members) => {
                let mut total = 0.0;
                for m in members {
                    total += m.support(z)?.max(0.0);
                }
                Ok(total)
            }
            AtomicSet::BlockLowRank { rows, blocks, .. } => {
                let mut best: f64 = 0.0;
                for b in blocks {
                    best = best.max(block_top(&b.extract(*rows, z))?.0);
                }
                Ok(best)
            }
        }
    }

    /// `γ_A(x)`; `+∞` when `x` lies outside the cone generated by `A`.
    pub fn gauge(&self, x: &[f64]) -> Result<f64> {
        self.check(x, "gauge")?;
        match self {
            AtomicSet::CrossPolytope(_) => Ok(norm1(x)),
            AtomicSet::RankOneBall { rows, cols } => {
                let xm = Mat::from_col_major(*rows, *cols, x.to_vec())?;
                Ok(jacobi_svd(&xm)?.s.iter().sum())
            }
            AtomicSet::Transformed { q, inner } => inner.gauge(&q.adjoint_apply(x)?),
            AtomicSet::Scaled { lambda, inner } => Ok(inner.gauge(x)? / lambda),
            AtomicSet::Sum(_) => Err(Error::Unsupported(
                "gauge of a sum is a polar convolution; it is only available as the level-set value",
            )),
            AtomicSet::BlockLowRank { rows, blocks, .. } => {
                let mut covered = vec![false; x.len()];
                let mut total = 0.0;
                for b in blocks {
                    let xb = b.extract(*rows, x);
                    total += if b.len() == 1 {
                        fabs(xb.get(0, 0))
                    } else {
                        jacobi_svd(&xb)?.s.iter().sum::<f64>()
                    };
                    for j in 0..b.col_len {
                        for i in 0..b.row_len {
                            covered[(b.row_start + i) + (b.col_start + j) * rows] = true;
                        }
                    }
                }
                if x.iter().zip(&covered).any(|(v, c)| !c && *v != 0.0) {
                    return Ok(f64::INFINITY);
                }
                Ok(total)
            }
        }
    }

    /// Atoms with `⟨a, z⟩ ≥ (1 − face_tol)·support(A, z)`, at most `max_atoms`,
    /// ordered by decreasing inner product (ties by lowest index).
    pub fn expose(&self, z: &[f64], face_tol: f64, max_atoms: usize) -> Result<ExposedFace> {
        self.check(z, "expose")?;
        if !(0.0..1.0).contains(&face_tol) {
            return Err(Error::invalid("face_tol must lie in [0, 1)"));
        }
        if max_atoms == 0 {
            return Err(Error::invalid("max_atoms must be >= 1"));
        }
        match self {
            AtomicSet::CrossPolytope(_) => {
                let support = crate::dense::norm_inf(z);
                if support == 0.0 {
                    return Err(Error::ZeroExposingVector);
                }
                let thr = (1.0 - face_tol) * support;
                let mut idx: Vec<usize> = (0..z.len()).filter(|&i| fabs(z[i]) >= thr).collect();
                idx.sort_by(|&a, &b| {
                    fabs(z[b])
                        .partial_cmp(&fabs(z[a]))
                        .unwrap_or(core::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                idx.truncate(max_atoms);
                let mut face = ExposedFace::empty(support, face_tol);
                for i in idx {
                    face.atoms.push(Atom::SignedCoordinate {
                        index: i,
                        sign: Sign::of(z[i]),
                    });
                    face.values.push(fabs(z[i]));
                }
                Ok(face)
            }
            AtomicSet::RankOneBall { rows, cols } => {
                let zm = Mat::from_col_major(*rows, *cols, z.to_vec())?;
                let t = leading_triplets(&zm, face_tol, max_atoms)?;
                if t.s[0] == 0.0 {
                    return Err(Error::ZeroExposingVector);
                }
                let mut face = ExposedFace::empty(t.s[0], face_tol);
                for j in 0..t.s.len() {
                    face.atoms.push(Atom::RankOne {
                        u: t.u.col(j).to_vec(),
                        v: t.v.col(j).to_vec(),
                    });
                    face.values.push(t.s[j]);
                }
                Ok(face)
            }
            AtomicSet::Transformed { q, inner } => inner.expose(&q.adjoint_apply(z)?, face_tol, max_atoms),
            AtomicSet::Scaled { lambda, inner } => {
                let mut face = inner.expose(z, face_tol, max_atoms)?;
                face.support_value *= lambda;
                face.values.iter_mut().for_each(|v| *v *= lambda);
                Ok(face)
            }
            AtomicSet::Sum(_) => Err(Error::Unsupported(
                "the face of a sum is the Minkowski sum of member faces; use expose_members",
            )),
            AtomicSet::BlockLowRank { rows, blocks, .. } => {
                expose_blocks(*rows, blocks, z, face_tol, max_atoms)
            }
        }
    }

    /// One face per member of a `Sum` (empty when a member exposes only the origin).
    pub fn expose_members(&self, z: &[f64], face_tol: f64, max_atoms: usize) -> Result<Vec<ExposedFace>> {
        match self {
            AtomicSet::Sum(members) => members
                .iter()
                .map(|m| match m.expose(z, face_tol, max_atoms) {
                    Ok(f) if f.support_value > 0.0 => Ok(f),
                    Ok(f) => Ok(ExposedFace::empty(f.support_value, face_tol)),
                    Err(Error::ZeroExposingVector) => Ok(ExposedFace::empty(0.0, face_tol)),
                    Err(e) => Err(e),
                })
                .collect(),
            other => Ok(vec![other.expose(z, face_tol, max_atoms)?]),
        }
    }

    /// Dense ambient vector of an atom produced by this set's `expose`.
    pub fn atom_vector(&self, atom: &Atom) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.atom_add(atom, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += alpha · atom_vector(atom)`
    pub fn atom_add(&self, atom: &Atom, alpha: f64, out: &mut [f64]) -> Result<()> {
        match self {
            AtomicSet::Transformed { q, inner } => {
                let local = inner.atom_vector(atom)?;
                let mapped = q.apply(&local)?;
                crate::dense::axpy(alpha, &mapped, out);
                Ok(())
            }
            AtomicSet::Scaled { lambda, inner } => inner.atom_add(atom, alpha * lambda, out),
            AtomicSet::Sum(_) => Err(Error::Unsupported("atoms of a sum belong to its members")),
            _ => materialize_add(atom, self.shape(), alpha, out),
        }
    }

    /// The innermost non-transformed, non-scaled set.
    pub fn base(&self) -> &AtomicSet {
        match self {
            AtomicSet::Transformed { inner, .. } | AtomicSet::Scaled { inner, .. } => inner.base(),
            other => other,
        }
    }
}

/// Leading singular value and vectors of a block.
fn block_top(b: &Mat) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if b.rows() == 1 && b.cols() == 1 {
        let v = b.get(0, 0);
        return Ok((fabs(v), vec![if v < 0.0 { -1.0 } else { 1.0 }], vec![1.0]));
    }
    let t = leading_triplets(b, 0.0, 1)?;
    Ok((t.s[0], t.u.col(0).to_vec(), t.v.col(0).to_vec()))
}

fn expose_blocks(rows: usize, blocks: &[Block], z: &[f64], face_tol: f64, max_atoms: usize) -> Result<ExposedFace> {
    let mut tops = Vec::with_capacity(blocks.len());
    let mut support: f64 = 0.0;
    for b in blocks {
        let t = block_top(&b.extract(rows, z))?;
        support = support.max(t.0);
        tops.push(t);
    }
    if support == 0.0 {
        return Err(Error::ZeroExposingVector);
    }
    let thr = (1.0 - face_tol) * support;
    let mut entries: Vec<(f64, usize, Atom)> = Vec::new();
    for (id, (b, top)) in blocks.iter().zip(tops).enumerate() {
        if top.0 < thr {
            continue;
        }
        if face_tol == 0.0 || b.row_len.min(b.col_len) == 1 {
            entries.push((top.0, id, block_atom(id, *b, top.1, top.2)));
        } else {
            let t = leading_triplets(&b.extract(rows, z), 1.0 - thr / top.0.max(f64::MIN_POSITIVE), max_atoms)?;
            for j in 0..t.s.len() {
                if t.s[j] >= thr {
                    entries.push((t.s[j], id, block_atom(id, *b, t.u.col(j).to_vec(), t.v.col(j).to_vec())));
                }
            }
        }
    }
    entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    entries.truncate(max_atoms);
    let mut face = ExposedFace::empty(support, face_tol);
    for (v, _, a) in entries {
        face.values.push(v);
        face.atoms.push(a);
    }
    Ok(face)
}

fn block_atom(block_id: usize, block: Block, u: Vec<f64>, v: Vec<f64>) -> Atom {
    Atom::BlockEmbedded {
        block_id,
        block,
        inner: Box::new(Atom::RankOne { u, v }),
    }
}

/// Weights `λᵢ = γ_{Aᵢ}(xᵢ) / γ_{A₁}(x₁)` so that `γ_{λᵢAᵢ}(xᵢ)` is the same for all `i`.
pub fn equilibrate_weights(sets: &[AtomicSet], signals: &[Vec<f64>]) -> Result<Vec<f64>> {
    if sets.len() != signals.len() || sets.is_empty() {
        return Err(Error::invalid("need one signal per atomic set"));
    }
    let mut gauges = Vec::with_capacity(sets.len());
    for (a, x) in sets.iter().zip(signals) {
        let g = a.gauge(x)?;
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::invalid("weight undefined: signal has zero or infinite gauge"));
        }
        gauges.push(g);
    }
    Ok(gauges.iter().map(|g| g / gauges[0]).collect())
}

/// `⟨materialized atom, z⟩`, used by consistency checks.
pub fn atom_inner(set: &AtomicSet, atom: &Atom, z: &[f64]) -> Result<f64> {
    Ok(dot(&set.atom_vector(atom)?, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::sample_rotation;
    use crate::rng::RngSeed;

    #[test]
    fn cross_polytope_support() {
        assert_eq!(AtomicSet::CrossPolytope(3).support(&[1.0, -3.0, 2.0]).unwrap(), 3.0);
    }

    #[test]
    fn scaled_support() {
        let s = AtomicSet::scaled(2.0, AtomicSet::CrossPolytope(2)).unwrap();
        assert_eq!(s.support(&[1.0, -3.0]).unwrap(), 6.0);
    }

    #[test]
    fn sum_support() {
        let s = AtomicSet::sum(vec![
            AtomicSet::CrossPolytope(2),
            AtomicSet::scaled(2.0, AtomicSet::CrossPolytope(2)).unwrap(),
        ])
        .unwrap();
        assert_eq!(s.support(&[1.0, -3.0]).unwrap(), 9.0);
    }

    #[test]
    fn gauges() {
        assert_eq!(AtomicSet::CrossPolytope(3).gauge(&[1.0, -2.0, 0.0]).unwrap(), 3.0);
        let r = AtomicSet::RankOneBall { rows: 2, cols: 2 };
        // diag(3, 1), column-major
        assert!((r.gauge(&[3.0, 0.0, 0.0, 1.0]).unwrap() - 4.0).abs() < 1e-12);
        let sum = AtomicSet::sum(vec![AtomicSet::CrossPolytope(1)]).unwrap();
        assert!(matches!(sum.gauge(&[1.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rotated_gauge_is_invariant() {
        let q = sample_rotation(5, RngSeed::new(9, 1)).unwrap();
        let x = [0.5, -1.0, 0.0, 2.0, 0.25];
        let qx = q.apply(&x).unwrap();
        let set = AtomicSet::transformed(q, AtomicSet::CrossPolytope(5)).unwrap();
        assert!((set.gauge(&qx).unwrap() - 3.75).abs() < 1e-12);
    }

    #[test]
    fn expose_unique_and_tie() {
        let c = AtomicSet::CrossPolytope(2);
        let f = c.expose(&[1.0, -3.0], 0.0, 10).unwrap();
        assert_eq!(f.atoms, vec![Atom::SignedCoordinate { index: 1, sign: Sign::Minus }]);
        assert_eq!(f.support_value, 3.0);
        let f = c.expose(&[2.0, 2.0], 0.0, 10).unwrap();
        assert_eq!(
            f.atoms,
            vec![
                Atom::SignedCoordinate { index: 0, sign: Sign::Plus },
                Atom::SignedCoordinate { index: 1, sign: Sign::Plus }
            ]
        );
        assert_eq!(f.support_value, 2.0);
        assert_eq!(c.expose(&[0.0, 0.0], 0.0, 1), Err(Error::ZeroExposingVector));
    }

    #[test]
    fn expose_rank_one_diag() {
        let r = AtomicSet::RankOneBall { rows: 2, cols: 2 };
        let f = r.expose(&[3.0, 0.0, 0.0, 1.0], 0.0, 10).unwrap();
        assert_eq!(f.atoms.len(), 1);
        assert!((f.support_value - 3.0).abs() < 1e-12);
        let a = r.atom_vector(&f.atoms[0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12 && a[1].abs() < 1e-12 && a[2].abs() < 1e-12 && a[3].abs() < 1e-12);
    }

    #[test]
    fn materialize_examples() {
        let a = Atom::SignedCoordinate { index: 1, sign: Sign::Minus };
        assert_eq!(materialize(&a, Shape::Vector(3)).unwrap(), vec![0.0, -1.0, 0.0]);
        let r = Atom::RankOne { u: vec![1.0, 0.0], v: vec![0.0, 1.0] };
        // single 1 at (row 0, col 1) → column-major index 2
        assert_eq!(materialize(&r, Shape::Matrix { rows: 2, cols: 2 }).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        let b = Atom::BlockEmbedded {
            block_id: 0,
            block: Block::new(0, 2, 0, 2),
            inner: Box::new(Atom::RankOne { u: vec![1.0, 0.0], v: vec![1.0, 0.0] }),
        };
        let m = materialize(&b, Shape::Matrix { rows: 4, cols: 4 }).unwrap();
        assert_eq!(m[0], 1.0);
        assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 1);
        assert!(materialize(&a, Shape::Vector(1)).is_err());
    }

    #[test]
    fn equilibrate_examples() {
        let sets = vec![AtomicSet::CrossPolytope(2), AtomicSet::CrossPolytope(2)];
        let l = equilibrate_weights(&sets, &[vec![1.0, -2.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(l, vec![1.0, 2.0]);
        let l = equilibrate_weights(&sets, &[vec![1.0, -2.0], vec![1.0, -2.0]]).unwrap();
        assert_eq!(l, vec![1.0, 1.0]);
        let l = equilibrate_weights(&sets, &[vec![1.0, -2.0], vec![0.5, 1.0]]).unwrap();
        assert_eq!(l, vec![1.0, 0.5]);
        assert!(equilibrate_weights(&sets, &[vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn block_low_rank_scale_one_is_l1() {
        let s = AtomicSet::uniform_blocks(2, 2, 1).unwrap();
        let x = [1.0, -2.0, 0.5, 0.0];
        assert!((s.gauge(&x).unwrap() - 3.5).abs() < 1e-14);
        assert!((s.support(&x).unwrap() - 2.0).abs() < 1e-14);
        let f = s.expose(&x, 0.0, 4).unwrap();
        assert_eq!(f.atoms.len(), 1);
        let v = s.atom_vector(&f.atoms[0]).unwrap();
        assert_eq!(v, vec![0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn block_partition_validation() {
        assert!(AtomicSet::block_low_rank(4, 4, vec![Block::new(0, 2, 0, 2), Block::new(1, 2, 1, 2)]).is_err());
        assert!(AtomicSet::uniform_blocks(4, 4, 3).is_err());
        assert!(AtomicSet::scaled(0.0, AtomicSet::CrossPolytope(1)).is_err());
        assert!(AtomicSet::sum(vec![AtomicSet::CrossPolytope(1), AtomicSet::CrossPolytope(2)]).is_err());
    }
}
