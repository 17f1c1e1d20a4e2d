use super::*;
use crate::hermitian::{pauli_x, pauli_z, HermitianMatrix};
use crate::random::ginibre;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lambda_max_problem(w: &HermitianMatrix) -> SdpProblem {
    let mut p = SdpProblem::new();
    let x = p.add_block("x", w.dim());
    p.add_scalar_equality("trace", vec![(x, HermitianMatrix::identity(w.dim()))], vec![], 1.0);
    p.maximize(Objective { blocks: vec![(x, w.clone())], scalars: vec![] });
    p
}

#[test]
fn largest_eigenvalue() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 1..=4 {
        let g = ginibre(d, d, &mut rng);
        let w = HermitianMatrix::hermitian_part(&g);
        let p = lambda_max_problem(&w);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert!(sol.is_optimal(), "{:?}", sol.status);
        assert!((sol.objective - w.max_eigenvalue()).abs() < 1e-6);
        let bound = p.certify_weak_duality(&sol.duals).unwrap();
        assert!(bound >= w.max_eigenvalue() - 1e-6);
        assert!((bound - sol.objective).abs() < 1e-6);
    }
}

#[test]
fn shifted_block_and_sign() {
    // max t s.t. X0 + X1 = I, X_i >= t I, t <= 0, X0 fixed to (I + Z)/2
    let mut p = SdpProblem::new();
    let t = p.add_scalar("t", Sign::NonPos);
    let x0 = p.add_shifted_block("x0", 2, t);
    let x1 = p.add_shifted_block("x1", 2, t);
    let i2 = HermitianMatrix::identity(2);
    p.add_matrix_equality("norm", vec![(x0, 1.0), (x1, 1.0)], vec![], i2.clone());
    p.add_matrix_equality("fix", vec![(x0, 1.0)], vec![], (&i2 + &pauli_z()).scale(0.5));
    p.maximize(Objective { blocks: vec![], scalars: vec![(t, 1.0)] });
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert!(sol.is_optimal());
    assert!(sol.objective.abs() < 1e-6);
    let bound = p.certify_weak_duality(&sol.duals).unwrap();
    assert!(bound > -1e-6);

    // fixing X0 = (I + 2X)/2 forces t = -1/2
    let mut q = p.clone();
    if let Constraint::Matrix(m) = &mut q.constraints[1] {
        m.rhs = (&i2 + &pauli_x().scale(2.0)).scale(0.5);
    }
    let sol = solve(&q, &SolverOptions::default()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.objective + 0.5).abs() < 1e-6, "{}", sol.objective);
    assert!((q.certify_weak_duality(&sol.duals).unwrap() + 0.5).abs() < 1e-6);
}

#[test]
fn free_scalar() {
    // max -(a - 3)^2 is not linear; use max a s.t. a + x = 3, x in PSD(1)
    let mut p = SdpProblem::new();
    let a = p.add_scalar("a", Sign::Free);
    let x = p.add_block("x", 1);
    p.add_scalar_equality("sum", vec![(x, HermitianMatrix::identity(1))], vec![(a, 1.0)], 3.0);
    p.maximize(Objective { blocks: vec![], scalars: vec![(a, 1.0)] });
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.scalar(a) - 3.0).abs() < 1e-6);
    // raw multipliers satisfy the free-scalar stationarity only to solver accuracy
    let bound = p.certify_weak_duality_with_tol(&sol.duals, 1e-6).unwrap();
    assert!((bound - 3.0).abs() < 1e-6);
}

#[test]
fn redundant_and_inconsistent_equalities() {
    let mut p = lambda_max_problem(&pauli_z());
    let x = BlockId(0);
    p.add_scalar_equality("again", vec![(x, HermitianMatrix::identity(2).scale(2.0))], vec![], 2.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.objective - 1.0).abs() < 1e-6);
    p.certify_weak_duality(&sol.duals).unwrap();

    p.add_scalar_equality("clash", vec![(x, HermitianMatrix::identity(2))], vec![], 2.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    let z = p.implied_cone_duals(&sol.duals).unwrap();
    assert!(z.iter().all(|m| m.frobenius_norm() < 1e-9 + p.objective.blocks[0].1.frobenius_norm()));
    assert!((p.dual_objective(&sol.duals).unwrap() + 1.0).abs() < 1e-9);
}

#[test]
fn certify_rejects_bad_multipliers() {
    let p = lambda_max_problem(&pauli_z());
    // y = 0.5 gives Z = 0.5 I - Z, not PSD
    let err = p.certify_weak_duality(&[DualValue::Scalar(0.5)]).unwrap_err();
    assert!(matches!(err, Error::InfeasibleDual { .. }));
    assert!((p.certify_weak_duality(&[DualValue::Scalar(1.5)]).unwrap() - 1.5).abs() < 1e-15);
    assert!(p.certify_weak_duality(&[]).is_err());
}

#[test]
fn malformed_problem_rejected() {
    let mut p = SdpProblem::new();
    let x = p.add_block("x", 2);
    p.add_matrix_equality("bad", vec![(x, 1.0)], vec![], HermitianMatrix::identity(3));
    assert!(matches!(solve(&p, &SolverOptions::default()), Err(Error::MalformedProblem(_))));
}

#[test]
fn solution_serializes() {
    let p = lambda_max_problem(&pauli_x());
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    let js = serde_json::to_string(&sol).unwrap();
    let back: SdpSolution = serde_json::from_str(&js).unwrap();
    assert_eq!(back.status, sol.status);
    let js = serde_json::to_string(&p).unwrap();
    let back: SdpProblem = serde_json::from_str(&js).unwrap();
    assert_eq!(back.constraints.len(), 1);
}
