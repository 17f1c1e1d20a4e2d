//! Seeded random instances: Ginibre matrices, random POVMs and parents.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::hermitian::{CMatrix, HermitianMatrix, C64, DEFAULT_TOL};
use crate::povm::{MeasurementSet, ParentPovm, Povm, Shape};

/// `rows x cols` matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Random full-rank `k`-outcome POVM: Gram matrices of Ginibre draws,
/// normalized by `S^{-1/2} G S^{-1/2}`.
pub fn random_povm(d: usize, k: usize, rng: &mut impl Rng) -> Povm {
    let grams: Vec<HermitianMatrix> = (0..k)
        .map(|_| {
            let a = ginibre(d, d, rng);
            HermitianMatrix::hermitian_part(&(&a * a.adjoint()))
        })
        .collect();
    normalize_to_povm(grams)
}

/// `S^{-1/2} G_i S^{-1/2}` with `S = sum_i G_i` (must be positive definite).
pub fn normalize_to_povm(grams: Vec<HermitianMatrix>) -> Povm {
    let d = grams[0].dim();
    let total = crate::hermitian::sum(d, &grams);
    let w = total.inv_sqrt().expect("sum of random Gram matrices is positive definite");
    let els = grams.iter().map(|g| g.congruence(w.matrix())).collect();
    Povm::with_tol(els, 1e-9).expect("normalized Gram matrices form a POVM")
}

/// Random parent over every tuple of `shape`, plus its marginals.
pub fn random_parent(shape: &Shape, rng: &mut impl Rng) -> (ParentPovm, MeasurementSet) {
    let tuples = shape.tuples();
    let povm = random_povm(shape.dim, tuples.len(), rng);
    let parent = ParentPovm::new(shape.clone(), tuples.into_iter().zip(povm.elements().iter().cloned()), DEFAULT_TOL)
        .expect("random POVM is a valid parent");
    let ms = parent.marginals();
    (parent, ms)
}

/// Random density matrix (Hilbert-Schmidt measure).
pub fn random_state(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
    let a = ginibre(d, d, rng);
    let g = HermitianMatrix::hermitian_part(&(&a * a.adjoint()));
    let t = g.trace();
    g.scale(1.0 / t)
}
