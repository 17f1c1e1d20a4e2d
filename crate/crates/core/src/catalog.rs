//! Named measurement sets and parents: the trine, noisy Pauli pairs, and the
//! qutrit triple whose only parents have all eight elements.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hermitian::{pauli_x, pauli_y, pauli_z, subspace_pauli, HermitianMatrix, PauliKind, C64, DEFAULT_TOL};
use crate::povm::{MeasurementSet, OutcomeTuple, ParentPovm, Povm, Shape};

/// Qubit POVM with Bloch vectors on the vertices of an equilateral triangle
/// in the xy-plane: `K_l = (I + n_l . sigma) / 3`.
pub fn trine_povm() -> Povm {
    let els = (0..3)
        .map(|l| {
            let th = 2.0 * PI * l as f64 / 3.0;
            (&HermitianMatrix::identity(2) + &(&pauli_x().scale(th.cos()) + &pauli_y().scale(th.sin()))).scale(1.0 / 3.0)
        })
        .collect();
    Povm::new(els).expect("trine is a valid POVM")
}

/// The three two-outcome coarse-grainings of the trine, `(L, M, N)` with
/// `L_0 = K_0`, `M_0 = K_1`, `N_0 = K_2`.
pub fn example_trine() -> MeasurementSet {
    let k = trine_povm();
    let povms = (0..3)
        .map(|i| {
            let rest = (0..3).filter(|&j| j != i).fold(HermitianMatrix::zeros(2), |acc, j| &acc + k.element(j));
            Povm::new(vec![k.element(i).clone(), rest]).expect("valid")
        })
        .collect();
    MeasurementSet::new(povms).expect("valid")
}

/// Canonical three-element parent of [`example_trine`].
pub fn trine_parent() -> ParentPovm {
    let k = trine_povm();
    let shape = Shape::uniform(2, 3, 2).expect("valid shape");
    let els = (0..3).map(|l| {
        let t: Vec<usize> = (0..3).map(|x| usize::from(x != l)).collect();
        (OutcomeTuple(t), k.element(l).clone())
    });
    ParentPovm::new(shape, els, DEFAULT_TOL).expect("valid parent")
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta = {eta} outside [0, 1]")));
    }
    Ok(())
}

/// `M_a = (I + eta (-1)^a X)/2`, `N_b = (I + eta (-1)^b Z)/2`.
pub fn example_noisy_pauli(eta: f64) -> Result<MeasurementSet> {
    check_eta(eta)?;
    let id = HermitianMatrix::identity(2);
    let binary = |p: &HermitianMatrix| {
        Povm::new(vec![(&id + &p.scale(eta)).scale(0.5), (&id - &p.scale(eta)).scale(0.5)])
    };
    MeasurementSet::new(vec![binary(&pauli_x())?, binary(&pauli_z())?])
}

/// `C_ab = (I + eta((-1)^a X + (-1)^b Z)) / 4`; a valid parent of
/// [`example_noisy_pauli`] exactly when `eta <= 1/sqrt(2)`.
pub fn noisy_pauli_parent(eta: f64) -> Result<ParentPovm> {
    check_eta(eta)?;
    let shape = Shape::uniform(2, 2, 2)?;
    ParentPovm::new(shape, noisy_pauli_parent_elements(eta), DEFAULT_TOL)
}

/// The four elements of [`noisy_pauli_parent`] without validation.
pub fn noisy_pauli_parent_elements(eta: f64) -> Vec<(OutcomeTuple, HermitianMatrix)> {
    let mut out = Vec::with_capacity(4);
    for a in 0..2 {
        for b in 0..2 {
            let sa = if a == 0 { 1.0 } else { -1.0 };
            let sb = if b == 0 { 1.0 } else { -1.0 };
            let c = (&HermitianMatrix::identity(2) + &(&pauli_x().scale(sa * eta) + &pauli_z().scale(sb * eta))).scale(0.25);
            out.push((OutcomeTuple(vec![a, b]), c));
        }
    }
    out
}

/// The three qutrit binary measurements
/// `L_a = (I + (-1)^a (3 sqrt2/8 X01 + X02/2))/2`,
/// `M_b = (I + (-1)^b (3 sqrt2/8 Z01 + X12/2))/2`,
/// `N_c = (I + (-1)^c (Z02 + Z12)/2)/2`.
pub fn example_qutrit_triple() -> MeasurementSet {
    let p = |k, i, j| subspace_pauli(k, i, j, 3).expect("valid indices");
    let c = 3.0 * SQRT_2 / 8.0;
    let obs = [
        &p(PauliKind::X, 0, 1).scale(c) + &p(PauliKind::X, 0, 2).scale(0.5),
        &p(PauliKind::Z, 0, 1).scale(c) + &p(PauliKind::X, 1, 2).scale(0.5),
        (&p(PauliKind::Z, 0, 2) + &p(PauliKind::Z, 1, 2)).scale(0.5),
    ];
    let id = HermitianMatrix::identity(3);
    let povms = obs
        .iter()
        .map(|o| Povm::new(vec![(&id + o).scale(0.5), (&id - o).scale(0.5)]).expect("valid"))
        .collect();
    MeasurementSet::new(povms).expect("valid")
}

/// The eight-element parent `C_{a0 a1 a2} = (3/8)|phi><phi|` of
/// [`example_qutrit_triple`].
pub fn example_qutrit_parent() -> ParentPovm {
    let shape = Shape::uniform(3, 3, 2).expect("valid shape");
    let (c8, s8) = ((PI / 8.0).cos(), (PI / 8.0).sin());
    let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let els = shape.tuples().into_iter().map(|t| {
        let (a0, a1, a2) = (t.get(0), t.get(1), t.get(2));
        let mut v = DVector::from_element(3, C64::new(0.0, 0.0));
        if a2 == 0 {
            v[a1] = C64::new(sign(a0) * c8, 0.0);
            v[a1 ^ 1] = C64::new(s8, 0.0);
        } else {
            let n = 6f64.sqrt();
            v[0] = C64::new(1.0 / n, 0.0);
            v[1] = C64::new(sign(a0 + a1) / n, 0.0);
            v[2] = C64::new(2.0 * sign(a0) / n, 0.0);
        }
        (t, HermitianMatrix::outer(&v).scale(3.0 / 8.0))
    });
    ParentPovm::new(shape, els, DEFAULT_TOL).expect("valid parent")
}

/// Named objects available to the command line.
pub const NAMES: &[&str] = &["trine", "trine-children", "trine-parent", "noisy-pauli", "noisy-pauli-parent", "qutrit-triple", "qutrit-parent"];

/// Default noise for the noisy Pauli examples: the compatibility threshold.
pub const CRITICAL_ETA: f64 = FRAC_1_SQRT_2;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qutrit_parent_sums_to_identity() {
        let p = example_qutrit_parent();
        assert_eq!(p.support_size(), 8);
        let s = crate::hermitian::sum(3, p.iter().map(|(_, c)| c));
        assert!(s.max_abs_diff(&HermitianMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn noisy_pauli_at_zero_is_trivial() {
        let ms = example_noisy_pauli(0.0).unwrap();
        let half = HermitianMatrix::identity(2).scale(0.5);
        for x in 0..2 {
            for a in 0..2 {
                assert!(ms.element(a, x).max_abs_diff(&half) < 1e-15);
            }
        }
    }

    #[test]
    fn eta_out_of_range() {
        assert!(example_noisy_pauli(1.2).is_err());
        assert!(example_noisy_pauli(-0.1).is_err());
    }

    #[test]
    fn trine_traces() {
        for e in trine_povm().elements() {
            assert!((e.trace() - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn noisy_pauli_parent_validity_threshold() {
        assert!(noisy_pauli_parent(CRITICAL_ETA).is_ok());
        assert!(noisy_pauli_parent(0.72).is_err());
    }

    #[test]
    fn trine_parent_marginals() {
        assert!(trine_parent().marginal_deviation(&example_trine()) < 1e-15);
    }
}
