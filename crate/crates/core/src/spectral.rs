//! Orthogonal atomic decompositions `x = Σ σⱼ aⱼ` with `σ ≥ 0` and `Σσⱼ = γ_A(x)`,
//! and Euclidean projection onto gauge balls built on them.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use libm::fabs;

use crate::atoms::{Atom, AtomicSet, Sign};
use crate::dense::{jacobi_svd, Mat};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Frame {
    Signs(Vec<f64>),
    Singular { u: Mat, v: Mat },
    Nested(Box<Frame>),
    /// One frame per block plus its number of spectral values.
    Blocks(Vec<(Frame, usize)>),
}

/// Nonnegative spectral values of a signal together with the orthogonal frame
/// needed to resynthesize it from modified values.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    frame: Frame,
}

fn svd_frame(m: &Mat) -> Result<(Vec<f64>, Frame)> {
    if m.rows() == 1 && m.cols() == 1 {
        let v = m.get(0, 0);
        return Ok((vec![fabs(v)], Frame::Signs(vec![if v < 0.0 { -1.0 } else { 1.0 }])));
    }
    let svd = jacobi_svd(m)?;
    Ok((svd.s, Frame::Singular { u: svd.u, v: svd.v }))
}

fn decompose(set: &AtomicSet, x: &[f64]) -> Result<(Vec<f64>, Frame)> {
    match set {
        AtomicSet::CrossPolytope(_) => Ok((
            x.iter().map(|v| fabs(*v)).collect(),
            Frame::Signs(x.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect()),
        )),
        AtomicSet::RankOneBall { rows, cols } => svd_frame(&Mat::from_col_major(*rows, *cols, x.to_vec())?),
        AtomicSet::Transformed { q, inner } => {
            let (values, frame) = decompose(inner, &q.adjoint_apply(x)?)?;
            Ok((values, Frame::Nested(Box::new(frame))))
        }
        AtomicSet::Scaled { lambda, inner } => {
            let (mut values, frame) = decompose(inner, x)?;
            values.iter_mut().for_each(|v| *v /= lambda);
            Ok((values, Frame::Nested(Box::new(frame))))
        }
        AtomicSet::BlockLowRank { rows, blocks, .. } => {
            let mut values = Vec::new();
            let mut frames = Vec::with_capacity(blocks.len());
            for b in blocks {
                let (v, f) = svd_frame(&b.extract(*rows, x))?;
                frames.push((f, v.len()));
                values.extend(v);
            }
            Ok((values, Frame::Blocks(frames)))
        }
        AtomicSet::Sum(_) => Err(Error::Unsupported("a sum has no orthogonal decomposition")),
    }
}

fn compose(set: &AtomicSet, frame: &Frame, values: &[f64], out: &mut [f64]) -> Result<()> {
    match (set, frame) {
        (AtomicSet::CrossPolytope(_), Frame::Signs(signs)) => {
            for ((o, s), v) in out.iter_mut().zip(signs).zip(values) {
                *o += s * v;
            }
            Ok(())
        }
        (AtomicSet::RankOneBall { rows, .. }, f) => compose_matrix(*rows, f, values, out),
        (AtomicSet::Transformed { q, inner }, Frame::Nested(f)) => {
            let mut local = vec![0.0; inner.dim()];
            compose(inner, f, values, &mut local)?;
            crate::dense::axpy(1.0, &q.apply(&local)?, out);
            Ok(())
        }
        (AtomicSet::Scaled { lambda, inner }, Frame::Nested(f)) => {
            let scaled: Vec<f64> = values.iter().map(|v| v * lambda).collect();
            compose(inner, f, &scaled, out)
        }
        (AtomicSet::BlockLowRank { rows, blocks, .. }, Frame::Blocks(frames)) => {
            let mut offset = 0;
            for (b, (f, len)) in blocks.iter().zip(frames) {
                let mut local = vec![0.0; b.len()];
                compose_matrix(b.row_len, f, &values[offset..offset + len], &mut local)?;
                b.embed_add(*rows, 1.0, &local, out);
                offset += len;
            }
            Ok(())
        }
        _ => Err(Error::invalid("spectrum does not belong to this atomic set")),
    }
}

fn compose_matrix(rows: usize, frame: &Frame, values: &[f64], out: &mut [f64]) -> Result<()> {
    match frame {
        Frame::Signs(s) => {
            out[0] += s[0] * values[0];
            Ok(())
        }
        Frame::Singular { u, v } => {
            for (k, &sk) in values.iter().enumerate() {
                if sk == 0.0 {
                    continue;
                }
                for (j, vj) in v.col(k).iter().enumerate() {
                    crate::dense::axpy(sk * vj, u.col(k), &mut out[j * rows..(j + 1) * rows]);
                }
            }
            Ok(())
        }
        _ => Err(Error::invalid("matrix frame expected")),
    }
}

impl AtomicSet {
    /// Orthogonal decomposition of `x`. Mass that no atom can represent (outside
    /// every block of a `BlockLowRank` set) is discarded.
    pub fn spectrum(&self, x: &[f64]) -> Result<Spectrum> {
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len(), "spectrum"));
        }
        let (values, frame) = decompose(self, x)?;
        Ok(Spectrum { values, frame })
    }

    /// Signal with the frame of `spectrum` and the given spectral values.
    pub fn synthesize(&self, spectrum: &Spectrum, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != spectrum.values.len() {
            return Err(Error::dim(spectrum.values.len(), values.len(), "synthesize"));
        }
        let mut out = vec![0.0; self.dim()];
        compose(self, &spectrum.frame, values, &mut out)?;
        Ok(out)
    }

    /// Atoms of this set with positive spectral value, paired with that value.
    pub fn spectral_atoms(&self, spectrum: &Spectrum) -> Vec<(Atom, f64)> {
        let mut out = Vec::new();
        collect_atoms(self, &spectrum.frame, &spectrum.values, &mut out);
        out
    }

    /// Whether [`AtomicSet::spectrum`] is available.
    pub fn has_spectrum(&self) -> bool {
        match self {
            AtomicSet::Sum(_) => false,
            AtomicSet::Transformed { inner, .. } | AtomicSet::Scaled { inner, .. } => inner.has_spectrum(),
            _ => true,
        }
    }
}

fn collect_atoms(set: &AtomicSet, frame: &Frame, values: &[f64], out: &mut Vec<(Atom, f64)>) {
    match (set, frame) {
        (AtomicSet::CrossPolytope(_), Frame::Signs(signs)) => {
            for (index, (s, v)) in signs.iter().zip(values).enumerate() {
                if *v > 0.0 {
                    out.push((Atom::SignedCoordinate { index, sign: Sign::of(*s) }, *v));
                }
            }
        }
        (AtomicSet::RankOneBall { .. }, f) => matrix_atoms(f, values, &mut |a, v| out.push((a, v))),
        (AtomicSet::Transformed { inner, .. } | AtomicSet::Scaled { inner, .. }, Frame::Nested(f)) => {
            collect_atoms(inner, f, values, out)
        }
        (AtomicSet::BlockLowRank { blocks, .. }, Frame::Blocks(frames)) => {
            let mut offset = 0;
            for (block_id, (b, (f, len))) in blocks.iter().zip(frames).enumerate() {
                matrix_atoms(f, &values[offset..offset + len], &mut |a, v| {
                    out.push((
                        Atom::BlockEmbedded {
                            block_id,
                            block: *b,
                            inner: Box::new(a),
                        },
                        v,
                    ))
                });
                offset += len;
            }
        }
        _ => {}
    }
}

fn matrix_atoms(frame: &Frame, values: &[f64], emit: &mut dyn FnMut(Atom, f64)) {
    match frame {
        Frame::Signs(s) if values[0] > 0.0 => emit(Atom::RankOne { u: vec![s[0]], v: vec![1.0] }, values[0]),
        Frame::Singular { u, v } => {
            for (k, &sk) in values.iter().enumerate() {
                if sk > 0.0 {
                    emit(Atom::RankOne { u: u.col(k).to_vec(), v: v.col(k).to_vec() }, sk);
                }
            }
        }
        _ => {}
    }
}

/// Threshold `θ ≥ 0` with `Σᵢ cᵢ Σⱼ (σᵢⱼ − θcᵢ)₊ = budget`, or `0` when the
/// unshrunk spectra already fit.
pub fn shrink_level(groups: &[(&[f64], f64)], budget: f64) -> f64 {
    let total: f64 = groups.iter().map(|(s, c)| c * s.iter().sum::<f64>()).sum();
    if total <= budget {
        return 0.0;
    }
    let mut breaks: Vec<(f64, f64, f64)> = groups
        .iter()
        .flat_map(|&(s, c)| s.iter().filter(|v| **v > 0.0).map(move |v| (v / c, c * v, c * c)))
        .collect();
    breaks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));
    let (mut lin, mut quad) = (0.0, 0.0);
    for (k, &(theta_k, a, q)) in breaks.iter().enumerate() {
        lin += a;
        quad += q;
        let theta = (lin - budget) / quad;
        let next = breaks.get(k + 1).map_or(0.0, |b| b.0);
        if theta >= next {
            return theta.min(theta_k).max(0.0);
        }
    }
    ((lin - budget) / quad).max(0.0)
}

/// Projection of `x` onto `{γ_A(x) ≤ radius}`.
pub fn project_gauge_ball(set: &AtomicSet, x: &[f64], radius: f64) -> Result<Vec<f64>> {
    let s = set.spectrum(x)?;
    let theta = shrink_level(&[(s.values.as_slice(), 1.0)], radius.max(0.0));
    let shrunk: Vec<f64> = s.values.iter().map(|v| (v - theta).max(0.0)).collect();
    set.synthesize(&s, &shrunk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{norm2, sub};
    use crate::linops::sample_rotation;
    use crate::rng::{gaussian_vec, RngSeed};

    fn sets() -> Vec<AtomicSet> {
        vec![
            AtomicSet::CrossPolytope(16),
            AtomicSet::RankOneBall { rows: 4, cols: 4 },
            AtomicSet::transformed(sample_rotation(16, RngSeed::new(1, 2)).unwrap(), AtomicSet::CrossPolytope(16)).unwrap(),
            AtomicSet::scaled(2.5, AtomicSet::uniform_blocks(4, 4, 2).unwrap()).unwrap(),
        ]
    }

    #[test]
    fn roundtrip_and_gauge() {
        let x = gaussian_vec(&mut RngSeed::new(3, 4).rng(), 16);
        for a in sets() {
            let s = a.spectrum(&x).unwrap();
            let back = a.synthesize(&s, &s.values).unwrap();
            assert!(norm2(&sub(&back, &x)) < 1e-10, "{a:?}");
            let g: f64 = s.values.iter().sum();
            assert!((g - a.gauge(&x).unwrap()).abs() < 1e-9);
            let mut rebuilt = vec![0.0; 16];
            for (atom, c) in a.spectral_atoms(&s) {
                a.atom_add(&atom, c, &mut rebuilt).unwrap();
            }
            assert!(norm2(&sub(&rebuilt, &x)) < 1e-10, "{a:?}");
        }
    }

    #[test]
    fn shrink_level_examples() {
        assert_eq!(shrink_level(&[(&[1.0, 2.0], 1.0)], 5.0), 0.0);
        assert!((shrink_level(&[(&[1.0, 3.0], 1.0)], 2.0) - 1.0).abs() < 1e-12);
        assert!((shrink_level(&[(&[4.0], 1.0), (&[4.0], 2.0)], 4.0) - 1.6).abs() < 1e-12);
        assert!((shrink_level(&[(&[3.0], 1.0)], 0.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projection_lands_on_radius() {
        let mut rng = RngSeed::new(5, 6).rng();
        for a in sets() {
            let x = gaussian_vec(&mut rng, 16);
            let p = project_gauge_ball(&a, &x, 0.5).unwrap();
            assert!((a.gauge(&p).unwrap() - 0.5).abs() < 1e-8);
            let inside = project_gauge_ball(&a, &p, 1.0).unwrap();
            assert!(norm2(&sub(&inside, &p)) < 1e-10);
        }
    }
}
