//! Conic Carathéodory reduction of parent supports.
//!
//! Every support tuple `t` becomes a point in `R^D` collecting
//! `vec(D_t(a|x) C_t)` for `a <= o_x - 2` and `vec(C_t)`. The points sum to
//! the embedding of the measurement set, so a linear dependence `lambda`
//! lets us reweight `C_t -> (1 - gamma lambda_t) C_t` with
//! `gamma = 1 / max lambda` and drop at least one tuple.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{HermitianBasis, RealVector};
use crate::povm::{MeasurementSet, OutcomeTuple, ParentPovm, Shape, VANISHING_TRACE};

/// Dependence is declared when `sigma_min / sigma_max` falls below this.
pub const RANK_TOL: f64 = 1e-10;
/// Reweighting factors may dip this far below zero before we refuse.
pub const PSD_SLACK: f64 = 1e-10;

/// `d^2 (sum_x (o_x - 1) + 1)`.
pub fn ambient_dimension(shape: &Shape) -> usize {
    let d = shape.dim;
    d * d * (shape.outcomes.iter().map(|o| o - 1).sum::<usize>() + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubMeasurementPoint {
    pub tuple: OutcomeTuple,
    pub coords: RealVector,
}

/// One point per support tuple, in tuple order.
pub fn embed(parent: &ParentPovm) -> Vec<SubMeasurementPoint> {
    let shape = parent.shape();
    let d = shape.dim;
    let basis = HermitianBasis::new(d);
    let n = d * d;
    let dim = ambient_dimension(shape);
    parent
        .iter()
        .map(|(t, c)| {
            let mut coords = RealVector::zeros(dim);
            let mut off = 0;
            for (x, &o) in shape.outcomes.iter().enumerate() {
                for a in 0..o - 1 {
                    if t.responds(x, a) {
                        basis.write_coords(c.matrix(), &mut coords.as_mut_slice()[off..off + n]);
                    }
                    off += n;
                }
            }
            basis.write_coords(c.matrix(), &mut coords.as_mut_slice()[off..off + n]);
            SubMeasurementPoint { tuple: t.clone(), coords }
        })
        .collect()
}

/// Embedding of a measurement set plus the identity tracker: the sum of
/// [`embed`] over any parent of `ms`.
pub fn embed_measurements(ms: &MeasurementSet) -> RealVector {
    let shape = ms.shape();
    let d = shape.dim;
    let basis = HermitianBasis::new(d);
    let n = d * d;
    let mut out = RealVector::zeros(ambient_dimension(&shape));
    let mut off = 0;
    for (x, &o) in shape.outcomes.iter().enumerate() {
        for a in 0..o - 1 {
            basis.write_coords(ms.element(a, x).matrix(), &mut out.as_mut_slice()[off..off + n]);
            off += n;
        }
    }
    let id = crate::hermitian::HermitianMatrix::identity(d);
    basis.write_coords(id.matrix(), &mut out.as_mut_slice()[off..off + n]);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    /// Null vector, one entry per point, with `max lambda > 0`.
    pub lambda: Vec<f64>,
    pub gamma: f64,
    pub eliminated: OutcomeTuple,
}

/// Finds a linear dependence among the points (smallest right singular
/// vector) and the elimination it induces. `None` means full column rank.
pub fn reduce_once(points: &[SubMeasurementPoint]) -> Option<Reduction> {
    let k = points.len();
    if k < 2 {
        return None;
    }
    let dim = points[0].coords.len();
    // zero-pad to at least k rows so the thin SVD exposes the whole null space
    let rows = dim.max(k);
    let mut a = DMatrix::<f64>::zeros(rows, k);
    for (j, p) in points.iter().enumerate() {
        a.view_mut((0, j), (dim, 1)).copy_from(&p.coords);
    }
    let svd = SVD::new(a, false, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return None;
    }
    let (imin, smin) = sv.iter().cloned().enumerate().fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    if smin / smax >= RANK_TOL {
        return None;
    }
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut lambda: Vec<f64> = (0..k).map(|j| vt[(imin, j)]).collect();
    let max = lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || -min > max {
        lambda.iter_mut().for_each(|l| *l = -*l);
    }
    let max = lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // ties go to the lexicographically lowest tuple
    let pick = (0..k)
        .filter(|&j| lambda[j] >= max * (1.0 - 1e-12))
        .min_by(|&i, &j| points[i].tuple.cmp(&points[j].tuple))
        .expect("at least one maximizer");
    Some(Reduction { lambda, gamma: 1.0 / max, eliminated: points[pick].tuple.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionStep {
    pub eliminated: Vec<OutcomeTuple>,
    pub gamma: f64,
    pub support_size: usize,
    /// Smallest reweighting factor before clamping.
    pub min_weight: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReduceOptions {
    /// Keep reducing while any dependence exists, even below the bound.
    pub greedy: bool,
}

/// Reduces the support of `parent` to at most [`ambient_dimension`].
pub fn reduce_parent(ms: &MeasurementSet, parent: &ParentPovm) -> Result<ParentPovm> {
    reduce_parent_traced(ms, parent, ReduceOptions::default()).map(|(p, _)| p)
}

pub fn reduce_parent_traced(
    ms: &MeasurementSet,
    parent: &ParentPovm,
    opts: ReduceOptions,
) -> Result<(ParentPovm, Vec<ReductionStep>)> {
    let dev = parent.marginal_deviation(ms);
    if dev > 1e-8 {
        return Err(Error::MarginalMismatch { max_dev: dev, tol: 1e-8 });
    }
    let shape = parent.shape().clone();
    let bound = ambient_dimension(&shape);
    let mut current = parent.clone();
    let mut trace = Vec::new();
    while current.support_size() > 1 && (opts.greedy || current.support_size() > bound) {
        let points = embed(&current);
        let Some(red) = reduce_once(&points) else {
            if current.support_size() > bound {
                return Err(Error::Solver(format!(
                    "no dependence found among {} points in dimension {bound}",
                    current.support_size()
                )));
            }
            break;
        };
        let weights: Vec<f64> = red.lambda.iter().map(|l| 1.0 - red.gamma * l).collect();
        let min_weight = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_weight < -PSD_SLACK {
            return Err(Error::Solver(format!("reweighting factor {min_weight:.3e} would break positivity")));
        }
        let mut kept = Vec::new();
        let mut eliminated = Vec::new();
        for ((t, c), &w) in current.iter().zip(&weights) {
            let scaled = c.scale(w.max(0.0));
            if *t == red.eliminated || w <= 0.0 || scaled.trace() < VANISHING_TRACE {
                eliminated.push(t.clone());
            } else {
                kept.push((t.clone(), scaled));
            }
        }
        current = ParentPovm::new(shape.clone(), kept, 1e-7)?;
        trace.push(ReductionStep { eliminated, gamma: red.gamma, support_size: current.support_size(), min_weight });
    }
    let dev = current.marginal_deviation(ms);
    if dev > 1e-7 {
        return Err(Error::MarginalMismatch { max_dev: dev, tol: 1e-7 });
    }
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::*;
    use crate::random::random_parent;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rank(points: &[SubMeasurementPoint]) -> usize {
        let m = DMatrix::from_columns(&points.iter().map(|p| p.coords.clone()).collect::<Vec<_>>());
        let sv = m.singular_values();
        let max = sv.max();
        sv.iter().filter(|s| **s > 1e-10 * max).count()
    }

    #[test]
    fn dimensions() {
        assert_eq!(ambient_dimension(&Shape::uniform(2, 3, 2).unwrap()), 16);
        assert_eq!(ambient_dimension(&Shape::uniform(3, 2, 3).unwrap()), 45);
        assert_eq!(ambient_dimension(&Shape::uniform(2, 5, 2).unwrap()), 24);
        assert_eq!(ambient_dimension(&Shape::new(2, vec![2, 3]).unwrap()), 16);
    }

    #[test]
    fn embedding_sums_to_measurements() {
        for (parent, ms) in [(trine_parent(), example_trine()), (example_qutrit_parent(), example_qutrit_triple())] {
            let pts = embed(&parent);
            assert_eq!(pts.len(), parent.support_size());
            let total = pts.iter().fold(RealVector::zeros(pts[0].coords.len()), |acc, p| acc + &p.coords);
            assert!((total - embed_measurements(&ms)).amax() < 1e-12);
        }
        assert_eq!(embed(&trine_parent())[0].coords.len(), 16);
    }

    #[test]
    fn noisy_pauli_points_independent() {
        let parent = noisy_pauli_parent(CRITICAL_ETA).unwrap();
        let pts = embed(&parent);
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].coords.len(), 12);
        assert_eq!(rank(&pts), 4);
        assert!(reduce_once(&pts).is_none());
        let ms = example_noisy_pauli(CRITICAL_ETA).unwrap();
        assert_eq!(reduce_parent(&ms, &parent).unwrap(), parent);
    }

    #[test]
    fn duplicate_point_dependence() {
        let parent = noisy_pauli_parent(0.5).unwrap();
        let mut pts = embed(&parent);
        let mut dup = pts[1].clone();
        dup.tuple = OutcomeTuple(vec![9, 9]);
        pts.push(dup);
        let red = reduce_once(&pts).unwrap();
        let l = &red.lambda;
        assert!((l[1] + l[4]).abs() < 1e-9);
        assert!(l[0].abs() < 1e-9 && l[2].abs() < 1e-9 && l[3].abs() < 1e-9);
        assert!((red.gamma * l[1].max(l[4]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overcomplete_points_reduce() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<SubMeasurementPoint> = (0..33)
            .map(|i| SubMeasurementPoint {
                tuple: OutcomeTuple(vec![i]),
                coords: RealVector::from_fn(24, |_, _| rng.sample(StandardNormal)),
            })
            .collect();
        let red = reduce_once(&pts).unwrap();
        let combo = pts.iter().zip(&red.lambda).fold(RealVector::zeros(24), |acc, (p, l)| acc + &p.coords * *l);
        assert!(combo.amax() < 1e-10);
        let idx = red.eliminated.get(0);
        assert!((1.0 - red.gamma * red.lambda[idx]).abs() < 1e-12);
    }

    #[test]
    fn random_parents_reach_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in 2..=5 {
            let shape = Shape::uniform(2, m, 2).unwrap();
            for _ in 0..3 {
                let (parent, ms) = random_parent(&shape, &mut rng);
                let (reduced, steps) = reduce_parent_traced(&ms, &parent, ReduceOptions::default()).unwrap();
                assert!(reduced.support_size() <= ambient_dimension(&shape));
                assert!(reduced.marginal_deviation(&ms) < 1e-7);
                assert!(steps.len() <= parent.support_size().saturating_sub(ambient_dimension(&shape)));
                for w in steps.windows(2) {
                    assert!(w[1].support_size < w[0].support_size);
                }
                assert!(steps.iter().all(|s| s.min_weight >= -PSD_SLACK));
            }
        }
    }

    #[test]
    fn greedy_mode_stays_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = Shape::uniform(2, 3, 2).unwrap();
        let (parent, ms) = random_parent(&shape, &mut rng);
        let (reduced, _) = reduce_parent_traced(&ms, &parent, ReduceOptions { greedy: true }).unwrap();
        assert!(reduced.marginal_deviation(&ms) < 1e-7);
        assert!(reduce_once(&embed(&reduced)).is_none());
    }

    #[test]
    fn mismatched_input_rejected() {
        let ms = example_noisy_pauli(0.3).unwrap();
        let parent = noisy_pauli_parent(0.5).unwrap();
        assert!(matches!(reduce_parent(&ms, &parent), Err(Error::MarginalMismatch { .. })));
    }
}
