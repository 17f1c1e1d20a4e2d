use std::sync::{Arc, Mutex};

use nalgebra::{DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jmeas_core::boundary::{furthest_compatible, sample_boundary, SamplerConfig};
use jmeas_core::caratheodory::{ambient_dimension, embed, reduce_once, reduce_parent, reduce_parent_traced, ReduceOptions};
use jmeas_core::catalog::*;
use jmeas_core::compat::{decide_compatibility, restricted_parent, witness_value, Verdict};
use jmeas_core::exec::ExecMode;
use jmeas_core::hermitian::{real_embed, subspace_pauli, sum, HermitianBasis, HermitianMatrix, PauliKind};
use jmeas_core::povm::{bell_numbers, enumerate_partition_children, MeasurementSet, OutcomeTuple, ParentPovm, Shape};
use jmeas_core::prob_parent::{canonicalize_prob, search_prob_parent, verify_prob_parent, ProbabilisticParent};
use jmeas_core::random::{ginibre, random_parent, random_povm, random_state};
use jmeas_core::sdp::{self, Objective, SdpProblem, SolverOptions};
use jmeas_core::search::{binomial, min_parent_size, min_parent_size_with, SearchOptions};
use jmeas_core::steering::{assemblage_from_measurements, assemblage_from_state, lhs_from_parent, measurements_from_assemblage, pure_state};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_hermitian(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
    HermitianMatrix::hermitian_part(&ginibre(d, d, rng))
}

// --- Hermitian matrices ---

#[test]
fn psd_agrees_with_real_embedding() {
    let mut r = rng(1);
    for i in 0..1000 {
        let d = 1 + i % 5;
        // shift towards the PSD boundary so both answers occur
        let h = random_hermitian(d, &mut r);
        let h = &h + &HermitianMatrix::identity(d).scale(r.random_range(-0.5..2.5));
        let real = SymmetricEigen::new(real_embed(&h)).eigenvalues.min();
        assert_eq!(h.is_psd(1e-9), real >= -1e-9, "sample {i}");
    }
}

#[test]
fn subspace_paulis_square_to_projectors() {
    for d in 2..6 {
        for i in 0..d {
            for j in (i + 1)..d {
                let proj = &HermitianMatrix::basis_projector(i, d) + &HermitianMatrix::basis_projector(j, d);
                for kind in [PauliKind::X, PauliKind::Z] {
                    let p = subspace_pauli(kind, i, j, d).unwrap();
                    assert!(p.trace().abs() < 1e-15);
                    let sq = HermitianMatrix::from_complex(p.matrix() * p.matrix()).unwrap();
                    assert!(sq.max_abs_diff(&proj) < 1e-15);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vectorization_is_isometric(seed in any::<u64>(), d in 1usize..7) {
        let h = random_hermitian(d, &mut rng(seed));
        let v = HermitianBasis::new(d).vectorize(&h).unwrap();
        prop_assert!((v.norm_squared() - h.inner(&h)).abs() < 1e-10);
    }

    // --- POVMs and parents ---

    #[test]
    fn parents_sum_to_identity(seed in any::<u64>(), d in 1usize..4, o0 in 1usize..4, o1 in 1usize..4) {
        let shape = Shape::new(d, vec![o0, o1]).unwrap();
        let (parent, ms) = random_parent(&shape, &mut rng(seed));
        let total = sum(d, parent.iter().map(|(_, c)| c));
        prop_assert!(total.max_abs_diff(&HermitianMatrix::identity(d)) < 1e-9);
        prop_assert!(parent.marginal_deviation(&ms) < 1e-12);
    }

    // --- compatibility ---

    #[test]
    fn parents_from_verdicts_reproduce_marginals(seed in any::<u64>(), eta in 0.0f64..1.0) {
        let mut r = rng(seed);
        let (_, random_ms) = random_parent(&Shape::uniform(2, 2, 2).unwrap(), &mut r);
        for ms in [random_ms, example_noisy_pauli(eta).unwrap()] {
            let v = decide_compatibility(&ms).unwrap();
            if let Some(p) = v.parent {
                prop_assert!(p.marginal_deviation(&ms) <= 1e-6);
            }
        }
    }

    #[test]
    fn restricted_supports_are_monotone(seed in any::<u64>(), drop in 0usize..4) {
        let mut r = rng(seed);
        let shape = Shape::uniform(2, 2, 2).unwrap();
        let tuples = shape.tuples();
        // parent on three tuples, so the restriction to those three is compatible
        let povm = random_povm(2, 3, &mut r);
        let kept: Vec<OutcomeTuple> = tuples.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, t)| t.clone()).collect();
        let parent = ParentPovm::new(shape, kept.iter().cloned().zip(povm.elements().iter().cloned()), 1e-9).unwrap();
        let ms = parent.marginals();
        prop_assert!(restricted_parent(&ms, &kept).unwrap().is_compatible());
        prop_assert!(restricted_parent(&ms, &tuples).unwrap().is_compatible());
    }

    // --- reduction ---

    #[test]
    fn reduction_is_conic_and_terminates(seed in any::<u64>(), m in 2usize..6) {
        let shape = Shape::uniform(2, m, 2).unwrap();
        let (parent, ms) = random_parent(&shape, &mut rng(seed));
        let points = embed(&parent);
        let before: DVector<f64> = points.iter().fold(DVector::zeros(points[0].coords.len()), |acc, p| acc + &p.coords);
        if let Some(red) = reduce_once(&points) {
            let after: DVector<f64> = points
                .iter()
                .zip(&red.lambda)
                .fold(DVector::zeros(before.len()), |acc, (p, l)| acc + &p.coords * (1.0 - red.gamma * l));
            prop_assert!((after - &before).amax() < 1e-9);
            prop_assert!(red.lambda.iter().all(|l| 1.0 - red.gamma * l >= -1e-10));
        }
        let (reduced, steps) = reduce_parent_traced(&ms, &parent, ReduceOptions::default()).unwrap();
        let bound = ambient_dimension(&shape);
        prop_assert!(reduced.support_size() <= bound);
        prop_assert!(steps.len() <= parent.support_size().saturating_sub(bound));
        let mut last = parent.support_size();
        for s in &steps {
            prop_assert!(s.support_size < last);
            prop_assert!(s.min_weight >= -1e-10);
            last = s.support_size;
        }
    }

    // --- steering ---

    #[test]
    fn steering_preserves_statistics(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ms = example_qutrit_triple();
        let rho_ab = random_state(6, &mut r);
        let asm = assemblage_from_state(&rho_ab, &ms).unwrap();
        let rho = asm.reduced_state();
        for x in 1..ms.len() {
            prop_assert!(asm.marginal(x).max_abs_diff(&rho) < 1e-9);
        }
        let sm = measurements_from_assemblage(&asm).unwrap();
        let again = assemblage_from_state(&pure_state(&sm.purification), &sm.measurements).unwrap();
        for (sx, tx) in asm.members.iter().zip(&again.members) {
            for (s, t) in sx.iter().zip(tx) {
                prop_assert!((s.trace() - t.trace()).abs() < 1e-9);
            }
        }
        for x in 1..ms.len() {
            prop_assert!(again.marginal(x).max_abs_diff(&again.marginal(0)) < 1e-9);
        }
    }

    // --- probabilistic parents ---

    #[test]
    fn deterministic_parents_embed_and_canonicalize(seed in any::<u64>(), o0 in 2usize..4, o1 in 2usize..4) {
        let shape = Shape::new(2, vec![o0, o1]).unwrap();
        let (parent, ms) = random_parent(&shape, &mut rng(seed));
        let pp = ProbabilisticParent::from_deterministic(&parent);
        prop_assert!(verify_prob_parent(&pp, &ms, 1e-12).unwrap());
        let canonical = canonicalize_prob(&pp).unwrap();
        for x in 0..2 {
            for a in 0..shape.outcomes[x] {
                prop_assert!(canonical.marginal(x).element(a).max_abs_diff(&pp.reconstruct(a, x)) < 1e-12);
            }
        }
    }
}

#[test]
fn bell_counts_match_children() {
    let mut r = rng(3);
    let bell = bell_numbers(7);
    // B(n+1) = sum_k C(n,k) B(k)
    for n in 0..7 {
        let next: u64 = (0..=n).map(|k| binomial(n as u128, k as u128) as u64 * bell[k]).sum();
        assert_eq!(next, bell[n + 1]);
    }
    for o in 2..=7 {
        let parent = random_povm(2, o, &mut r);
        assert_eq!(enumerate_partition_children(&parent, 7).unwrap().len() as u64, bell[o] - 2);
    }
}

#[test]
fn witnesses_exclude_their_supports() {
    let examples: Vec<MeasurementSet> =
        vec![example_trine(), example_noisy_pauli(0.6).unwrap(), example_noisy_pauli(0.9).unwrap(), example_qutrit_triple()];
    for ms in &examples {
        let shape = ms.shape();
        let tuples = shape.tuples();
        for skip in 0..tuples.len() {
            let support: Vec<OutcomeTuple> = tuples.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, t)| t.clone()).collect();
            let v = restricted_parent(ms, &support).unwrap();
            if let Some(w) = &v.witness {
                assert!(witness_value(w, ms).unwrap() < 0.0);
                assert!(!v.is_compatible());
            }
        }
    }
}

// --- SDP engine ---

/// Random feasible problem: blocks built from a known PSD point, with a
/// trace budget to keep it bounded.
fn feasible_instance(seed: u64) -> (SdpProblem, f64) {
    let mut r = rng(seed);
    let dims: Vec<usize> = (0..r.random_range(1..4)).map(|_| r.random_range(1..4)).collect();
    let mut p = SdpProblem::new();
    let blocks: Vec<_> = dims.iter().enumerate().map(|(i, &d)| p.add_block(format!("X{i}"), d)).collect();
    let point: Vec<HermitianMatrix> = dims
        .iter()
        .map(|&d| {
            let g = ginibre(d, d, &mut r);
            HermitianMatrix::hermitian_part(&(&g * g.adjoint()))
        })
        .collect();
    for k in 0..r.random_range(1..4) {
        let coeffs: Vec<HermitianMatrix> = dims.iter().map(|&d| random_hermitian(d, &mut r)).collect();
        let rhs: f64 = coeffs.iter().zip(&point).map(|(c, x)| c.inner(x)).sum();
        p.add_scalar_equality(format!("c{k}"), blocks.iter().copied().zip(coeffs).collect(), vec![], rhs);
    }
    let budget: f64 = point.iter().map(|x| x.trace()).sum::<f64>() + 1.0;
    let s = p.add_scalar("slack", sdp::Sign::NonNeg);
    p.add_scalar_equality("budget", blocks.iter().zip(&dims).map(|(&b, &d)| (b, HermitianMatrix::identity(d))).collect(), vec![(s, 1.0)], budget);
    let objective: Vec<HermitianMatrix> = dims.iter().map(|&d| random_hermitian(d, &mut r)).collect();
    let value = objective.iter().zip(&point).map(|(w, x)| w.inner(x)).sum();
    p.maximize(Objective { blocks: blocks.into_iter().zip(objective).collect(), scalars: vec![] });
    (p, value)
}

#[test]
fn sdp_feasible_instances() {
    let opts = SolverOptions::default();
    for seed in 0..200 {
        let (p, constructed) = feasible_instance(seed);
        let sol = sdp::solve(&p, &opts).unwrap();
        assert!(sol.is_optimal(), "seed {seed}: {:?}", sol.status);
        assert!(sol.objective >= constructed - opts.tol, "seed {seed}");
        let bound = p.certify_weak_duality_with_tol(&sol.duals, 10.0 * opts.tol).unwrap();
        assert!(bound - sol.objective <= 10.0 * opts.tol * (1.0 + sol.objective.abs()), "seed {seed}: gap {}", bound - sol.objective);
        let again = sdp::solve(&p, &opts).unwrap();
        assert_eq!(again.objective.to_bits(), sol.objective.to_bits());
    }
}

// --- search ---

#[test]
fn min_size_is_bounded_by_reductions() {
    let mut r = rng(11);
    for m in 2..4 {
        let shape = Shape::uniform(2, m, 2).unwrap();
        for _ in 0..5 {
            let (parent, ms) = random_parent(&shape, &mut r);
            let reduced = reduce_parent(&ms, &parent).unwrap();
            let upper = shape.num_tuples().min(ambient_dimension(&shape));
            let rep = min_parent_size(&ms, 1, upper).unwrap();
            assert!(rep.min_size <= reduced.support_size());
            assert!(rep.min_size <= ambient_dimension(&shape));
            assert!(rep.witness_parent.marginal_deviation(&ms) <= 1e-6);
        }
    }
}

#[test]
fn every_support_below_the_minimum_is_tested() {
    let ms = example_qutrit_triple();
    let counts = Arc::new(Mutex::new(std::collections::BTreeMap::<usize, u128>::new()));
    let sink = counts.clone();
    let mut opts = SearchOptions::new(6, 8);
    opts.progress = Some(Arc::new(move |e: &jmeas_core::search::ProgressEvent| *sink.lock().unwrap().entry(e.size).or_default() += 1));
    let rep = min_parent_size_with(&ms, &opts).unwrap();
    assert_eq!(rep.min_size, 8);
    let counts = counts.lock().unwrap();
    assert_eq!(counts[&6], binomial(8, 6));
    assert_eq!(counts[&7], binomial(8, 7));
    assert_eq!(rep.infeasibility_certificates.len() as u128, binomial(8, 7));
    assert!(rep.rigorous);
}

// --- boundary sampling ---

#[test]
fn boundary_points_are_extremal_and_reproducible() {
    let shape = Shape::uniform(2, 2, 2).unwrap();
    let cfg = SamplerConfig { compute_complexity: true, ..SamplerConfig::default() };
    let par = sample_boundary(&shape, 24, 3, &cfg).unwrap();
    let seq = sample_boundary(&shape, 24, 3, &SamplerConfig { mode: ExecMode::Sequential, ..cfg.clone() }).unwrap();
    assert_eq!(par.histogram, seq.histogram);
    for (a, b) in par.points.iter().zip(&seq.points) {
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
    for p in &par.points {
        let again = furthest_compatible(&p.direction, &shape, &cfg.compat.sdp).unwrap();
        assert!((again.objective - p.objective).abs() <= 1e-6);
        let c = p.complexity.unwrap();
        assert!(c <= ambient_dimension(&shape) && c <= shape.num_tuples());
        assert_eq!(decide_compatibility(&p.measurements).unwrap().verdict, Verdict::Compatible);
    }
}

#[test]
fn lhs_models_never_exceed_the_dimension_bound() {
    let mut r = rng(13);
    let shape = Shape::uniform(2, 3, 2).unwrap();
    for _ in 0..10 {
        let (parent, ms) = random_parent(&shape, &mut r);
        let reduced = reduce_parent(&ms, &parent).unwrap();
        let rho = random_state(2, &mut r);
        let lhs = lhs_from_parent(&reduced, &rho).unwrap();
        assert_eq!(lhs.len(), reduced.support_size());
        assert!(lhs.len() <= ambient_dimension(&shape));
        let predicted = lhs.assemblage(&shape).unwrap();
        assert!(predicted.max_abs_diff(&assemblage_from_measurements(&ms, &rho).unwrap()) < 1e-8);
    }
}

#[test]
fn prob_search_results_always_verify() {
    let mut r = rng(17);
    for eta in [0.3, 0.5] {
        let ms = example_noisy_pauli(eta).unwrap();
        if let Some(pp) = search_prob_parent(&ms, 3, 8, &mut r).unwrap() {
            assert!(verify_prob_parent(&pp, &ms, 1e-7).unwrap());
        }
    }
}
