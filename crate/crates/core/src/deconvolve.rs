//! Recovery of individual components from the exposed faces at the final residual.

use alloc::vec;
use alloc::vec::Vec;

use crate::atoms::{Atom, ExposedFace};
use crate::dense::{dot, norm2, symmetric_eigen, Mat};
use crate::error::{Error, Result};
use crate::nnls::{nnls_gram, NnlsConfig};
use crate::solver::{level_set_solve, DemixProblem, LevelSetConfig, SolveStatus, TraceRow};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemixConfig {
    pub level_set: LevelSetConfig,
    pub nnls: NnlsConfig,
    /// Re-express tied rank-one atoms along the eigenvectors of a fitted core.
    pub align_rank_one: bool,
}

impl Default for DemixConfig {
    fn default() -> Self {
        DemixConfig {
            level_set: LevelSetConfig::default(),
            nnls: NnlsConfig::default(),
            align_rank_one: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientEntry {
    pub component: usize,
    pub atom: Atom,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub components: Vec<Vec<f64>>,
    pub coefficients: Vec<CoefficientEntry>,
    pub residual: Vec<f64>,
    pub tau: f64,
    pub status: SolveStatus,
    pub trace: Vec<TraceRow>,
    pub nnls_kkt: f64,
    pub nnls_converged: bool,
    pub maxerr: Option<f64>,
    pub source: RecoverySource,
}

/// Which candidate decomposition a [`Solution`] reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecoverySource {
    /// Nonnegative fit over the faces exposed by the final residual.
    Faces,
    /// Spectral atoms of the inner solver's own component iterate.
    Primal,
}

/// `expose(Aᵢ, Mᵀr, face_tol, max_atoms)` for every component.
pub fn collect_faces(problem: &DemixProblem, residual: &[f64], face_tol: f64, max_atoms: usize) -> Result<Vec<ExposedFace>> {
    let z = problem.operator().adjoint_apply(residual)?;
    problem
        .components()
        .iter()
        .map(|c| match c.set.expose(&z, face_tol, max_atoms) {
            Err(Error::ZeroExposingVector) => Ok(ExposedFace {
                atoms: Vec::new(),
                values: Vec::new(),
                support_value: 0.0,
                tolerance_used: face_tol,
            }),
            other => other,
        })
        .collect()
}

pub struct Recovery {
    pub components: Vec<Vec<f64>>,
    pub coefficients: Vec<CoefficientEntry>,
    pub kkt: f64,
    pub converged: bool,
}

fn rank_one_parts(atom: &Atom) -> Option<(Option<usize>, &[f64], &[f64])> {
    match atom {
        Atom::RankOne { u, v } => Some((None, u, v)),
        Atom::BlockEmbedded { block_id, inner, .. } => match inner.as_ref() {
            Atom::RankOne { u, v } => Some((Some(*block_id), u, v)),
            _ => None,
        },
        _ => None,
    }
}

fn with_factors(template: &Atom, u: Vec<f64>, v: Vec<f64>) -> Atom {
    match template {
        Atom::BlockEmbedded { block_id, block, .. } => Atom::BlockEmbedded {
            block_id: *block_id,
            block: *block,
            inner: alloc::boxed::Box::new(Atom::RankOne { u, v }),
        },
        _ => Atom::RankOne { u, v },
    }
}

/// Rank-one atoms of one component sharing a block, to be re-aligned together.
struct TiedGroup {
    component: usize,
    atoms: Vec<Atom>,
}

fn tied_groups(faces: &[ExposedFace]) -> (Vec<(usize, Atom)>, Vec<TiedGroup>) {
    let mut singles = Vec::new();
    let mut groups: Vec<TiedGroup> = Vec::new();
    for (i, face) in faces.iter().enumerate() {
        let mut keyed: Vec<(Option<usize>, Vec<Atom>)> = Vec::new();
        for a in &face.atoms {
            match rank_one_parts(a) {
                Some((key, _, _)) => match keyed.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, list)) => list.push(a.clone()),
                    None => keyed.push((key, vec![a.clone()])),
                },
                None => singles.push((i, a.clone())),
            }
        }
        for (_, list) in keyed {
            if list.len() == 1 {
                singles.push((i, list.into_iter().next().unwrap()));
            } else {
                groups.push(TiedGroup { component: i, atoms: list });
            }
        }
    }
    (singles, groups)
}

fn gram_of(columns: &[Vec<f64>], target: &[f64]) -> (Mat, Vec<f64>) {
    let p = columns.len();
    let mut h = Mat::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v = dot(&columns[i], &columns[j]);
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    (h, columns.iter().map(|c| dot(c, target)).collect())
}

/// Minimum-norm-ish least squares through a tiny ridge.
fn ridge_solve(h: &Mat, f: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    let trace: f64 = (0..n).map(|i| h.get(i, i)).sum();
    let ridge = 1e-12 * (trace / n.max(1) as f64).max(f64::MIN_POSITIVE);
    let reg = Mat::from_fn(n, n, |i, j| h.get(i, j) + if i == j { ridge } else { 0.0 });
    let (vals, vecs) = symmetric_eigen(&reg)?;
    let mut x = vec![0.0; n];
    for k in 0..n {
        if vals[k] > ridge {
            let coeff = dot(vecs.col(k), f) / vals[k];
            crate::dense::axpy(coeff, vecs.col(k), &mut x);
        }
    }
    Ok(x)
}

/// Fits a free symmetric core `W` per tied group and returns atoms along its eigenvectors.
fn align_groups(
    problem: &DemixProblem,
    singles: &[(usize, Atom)],
    groups: &[TiedGroup],
    target: &[f64],
) -> Result<Vec<(usize, Atom)>> {
    let mut columns = Vec::new();
    for (i, a) in singles {
        columns.push(problem.measured_atom(*i, a)?);
    }
    let mut layout = Vec::new();
    for g in groups {
        let d = g.atoms.len();
        let parts: Vec<(&[f64], &[f64])> = g
            .atoms
            .iter()
            .map(|a| {
                let (_, u, v) = rank_one_parts(a).expect("grouped atoms are rank-one");
                (u, v)
            })
            .collect();
        for p in 0..d {
            for q in p..d {
                let mut col = problem.measured_atom(g.component, &with_factors(&g.atoms[0], parts[p].0.to_vec(), parts[q].1.to_vec()))?;
                if p != q {
                    let other = problem.measured_atom(g.component, &with_factors(&g.atoms[0], parts[q].0.to_vec(), parts[p].1.to_vec()))?;
                    crate::dense::axpy(1.0, &other, &mut col);
                }
                columns.push(col);
                layout.push((p, q));
            }
        }
    }
    let (h, f) = gram_of(&columns, target);
    let coef = ridge_solve(&h, &f)?;
    let mut out: Vec<(usize, Atom)> = singles.to_vec();
    let mut offset = singles.len();
    for g in groups {
        let d = g.atoms.len();
        let mut w = Mat::zeros(d, d);
        let count = d * (d + 1) / 2;
        for k in 0..count {
            let (p, q) = layout[offset - singles.len() + k];
            w.set(p, q, coef[offset + k]);
            w.set(q, p, coef[offset + k]);
        }
        offset += count;
        let (_, vecs) = symmetric_eigen(&w)?;
        let (us, vs): (Vec<&[f64]>, Vec<&[f64]>) = g
            .atoms
            .iter()
            .map(|a| {
                let (_, u, v) = rank_one_parts(a).expect("grouped atoms are rank-one");
                (u, v)
            })
            .unzip();
        for k in 0..d {
            let e = vecs.col(k);
            let mut u = vec![0.0; us[0].len()];
            let mut v = vec![0.0; vs[0].len()];
            for j in 0..d {
                crate::dense::axpy(e[j], us[j], &mut u);
                crate::dense::axpy(e[j], vs[j], &mut v);
            }
            let (nu, nv) = (norm2(&u), norm2(&v));
            if nu > 0.0 && nv > 0.0 {
                u.iter_mut().for_each(|x| *x /= nu);
                v.iter_mut().for_each(|x| *x /= nv);
                out.push((g.component, with_factors(&g.atoms[0], u, v)));
            }
        }
    }
    Ok(out)
}

/// Nonnegative fit of `b − r*` over the measured face atoms.
pub fn recover_components(
    problem: &DemixProblem,
    residual: &[f64],
    faces: &[ExposedFace],
    config: &DemixConfig,
) -> Result<Recovery> {
    if faces.len() != problem.components().len() {
        return Err(Error::dim(problem.components().len(), faces.len(), "faces"));
    }
    let b = problem.observation();
    let target: Vec<f64> = b.iter().zip(residual).map(|(bi, ri)| bi - ri).collect();
    let (singles, groups) = tied_groups(faces);
    let atoms: Vec<(usize, Atom)> = if config.align_rank_one && !groups.is_empty() {
        align_groups(problem, &singles, &groups, &target)?
    } else {
        faces
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.atoms.iter().map(move |a| (i, a.clone())))
            .collect()
    };
    let mut components = vec![vec![0.0; problem.n()]; problem.components().len()];
    if atoms.is_empty() {
        return Ok(Recovery {
            components,
            coefficients: Vec::new(),
            kkt: 0.0,
            converged: true,
        });
    }
    let mut columns = Vec::with_capacity(atoms.len());
    for (i, a) in &atoms {
        columns.push(problem.measured_atom(*i, a)?);
    }
    let (h, f) = gram_of(&columns, &target);
    drop(columns);
    let fit = nnls_gram(&h, &f, &config.nnls)?;
    let mut coefficients = Vec::with_capacity(atoms.len());
    for ((i, a), c) in atoms.into_iter().zip(&fit.coefficients) {
        if *c > 0.0 {
            problem.components()[i].set.atom_add(&a, *c, &mut components[i])?;
        }
        coefficients.push(CoefficientEntry {
            component: i,
            atom: a,
            coefficient: *c,
        });
    }
    Ok(Recovery {
        components,
        coefficients,
        kkt: fit.kkt,
        converged: fit.converged,
    })
}

/// Decompression, face collection and recovery.
/// `M Σ cⱼ aⱼ` rebuilt from a coefficient table alone.
pub fn measured_reconstruction(problem: &DemixProblem, coefficients: &[CoefficientEntry]) -> Result<Vec<f64>> {
    let mut total = vec![0.0; problem.n()];
    for e in coefficients {
        let set = &problem
            .components()
            .get(e.component)
            .ok_or_else(|| Error::invalid("coefficient refers to a missing component"))?
            .set;
        if e.coefficient != 0.0 {
            set.atom_add(&e.atom, e.coefficient, &mut total)?;
        }
    }
    problem.operator().apply(&total)
}

/// Decomposition of the solver's component iterate into its spectral atoms.
pub fn primal_recovery(problem: &DemixProblem, signals: &[Vec<f64>]) -> Result<Recovery> {
    let mut components = Vec::with_capacity(signals.len());
    let mut coefficients = Vec::new();
    for (i, (c, x)) in problem.components().iter().zip(signals).enumerate() {
        let spectrum = c.set.spectrum(x)?;
        let mut rebuilt = vec![0.0; problem.n()];
        for (atom, coefficient) in c.set.spectral_atoms(&spectrum) {
            c.set.atom_add(&atom, coefficient, &mut rebuilt)?;
            coefficients.push(CoefficientEntry { component: i, atom, coefficient });
        }
        components.push(rebuilt);
    }
    Ok(Recovery {
        components,
        coefficients,
        kkt: 0.0,
        converged: true,
    })
}

/// `(max(0, ‖b − MΣxᵢ‖ − target), maxᵢ γ_{Aᵢ}(xᵢ)/λᵢ)`
fn recovery_score(problem: &DemixProblem, rec: &Recovery, target: f64) -> Result<(f64, f64)> {
    let mut total = vec![0.0; problem.n()];
    let mut objective: f64 = 0.0;
    for (c, x) in problem.components().iter().zip(&rec.components) {
        crate::dense::axpy(1.0, x, &mut total);
        objective = objective.max(c.set.gauge(x)? / c.weight);
    }
    let fit = problem.operator().apply(&total)?;
    let misfit = norm2(&crate::dense::sub(problem.observation(), &fit));
    Ok(((misfit - target).max(0.0), objective))
}

fn prefer(a: (f64, f64), b: (f64, f64)) -> bool {
    if a.0 != b.0 {
        a.0 < b.0
    } else {
        a.1 < b.1
    }
}

/// Solve, then recover components. When the inner solver keeps a primal
/// iterate, it competes with the face fit: the candidate that fits `b` within
/// `√(α² + ε)` with the smaller weighted gauge is reported.
pub fn demix(problem: &DemixProblem, config: &DemixConfig, ground_truth: Option<&[Vec<f64>]>) -> Result<Solution> {
    let solved = level_set_solve(problem, &config.level_set)?;
    let faces = collect_faces(
        problem,
        &solved.exposing_residual,
        config.level_set.face_tol,
        config.level_set.max_atoms,
    )?;
    let mut rec = recover_components(problem, &solved.residual, &faces, config)?;
    let mut source = RecoverySource::Faces;
    let spectral = problem.components().iter().all(|c| c.set.has_spectrum());
    if let (Some(signals), true) = (&solved.primal, spectral) {
        let target = libm::sqrt(problem.alpha() * problem.alpha() + solved.epsilon);
        let candidate = primal_recovery(problem, signals)?;
        if prefer(recovery_score(problem, &candidate, target)?, recovery_score(problem, &rec, target)?) {
            rec = candidate;
            source = RecoverySource::Primal;
        }
    }
    let maxerr = match ground_truth {
        Some(truth) => Some(crate::theory::maxerr(&rec.components, truth)?),
        None => None,
    };
    Ok(Solution {
        components: rec.components,
        coefficients: rec.coefficients,
        residual: solved.residual,
        tau: solved.tau,
        status: solved.status,
        trace: solved.trace,
        nnls_kkt: rec.kkt,
        nnls_converged: rec.converged,
        maxerr,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::AtomicSet;
    use crate::linops::LinearOperator;
    use crate::solver::Component;

    fn scalar() -> DemixProblem {
        DemixProblem::new(
            LinearOperator::Identity(1),
            vec![2.0],
            0.0,
            vec![Component {
                weight: 1.0,
                set: AtomicSet::CrossPolytope(1),
            }],
        )
        .unwrap()
    }

    #[test]
    fn scalar_end_to_end() {
        let mut cfg = DemixConfig::default();
        cfg.level_set.epsilon = Some(1e-8);
        let sol = demix(&scalar(), &cfg, Some(&[vec![2.0]])).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!((sol.components[0][0] - 2.0).abs() < 1e-3);
        assert_eq!(sol.coefficients.len(), 1);
        assert!(sol.maxerr.unwrap() < 1e-3);
    }

    #[test]
    fn empty_faces_give_zero() {
        let p = scalar();
        let faces = collect_faces(&p, &[0.0], 0.0, 1).unwrap();
        assert!(faces[0].is_empty());
        let rec = recover_components(&p, &[0.0], &faces, &DemixConfig::default()).unwrap();
        assert_eq!(rec.components, vec![vec![0.0]]);
    }

    #[test]
    fn inside_noise_ball_is_zero() {
        let p = DemixProblem::new(
            LinearOperator::Identity(2),
            vec![0.3, -0.2],
            1.0,
            vec![Component {
                weight: 1.0,
                set: AtomicSet::CrossPolytope(2),
            }],
        )
        .unwrap();
        let sol = demix(&p, &DemixConfig::default(), None).unwrap();
        assert_eq!(sol.components, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn tied_rank_one_face_is_aligned() {
        // Identity measurement of a rank-2 PSD-core matrix X = U W Vᵀ with non-diagonal W;
        // exposing with the identity core ties both singular directions.
        let u = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let face = ExposedFace {
            atoms: vec![
                Atom::RankOne { u: u[0].to_vec(), v: u[0].to_vec() },
                Atom::RankOne { u: u[1].to_vec(), v: u[1].to_vec() },
            ],
            values: vec![1.0, 1.0],
            support_value: 1.0,
            tolerance_used: 0.0,
        };
        // W = [[2, 1], [1, 2]]
        let x = vec![2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0];
        let p = DemixProblem::new(
            LinearOperator::Identity(9),
            x.clone(),
            0.0,
            vec![Component {
                weight: 1.0,
                set: AtomicSet::RankOneBall { rows: 3, cols: 3 },
            }],
        )
        .unwrap();
        let rec = recover_components(&p, &[0.0; 9], &[face.clone()], &DemixConfig::default()).unwrap();
        for (a, b) in rec.components[0].iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
        let plain = DemixConfig {
            align_rank_one: false,
            ..DemixConfig::default()
        };
        let rec = recover_components(&p, &[0.0; 9], &[face], &plain).unwrap();
        assert!((rec.components[0][1] - 1.0).abs() > 0.5);
    }
}
