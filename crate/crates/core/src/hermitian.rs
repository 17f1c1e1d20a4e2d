//! Dense complex Hermitian matrices and the real coordinate charts used
//! throughout the crate.
//!
//! Every POVM element, density operator, dual variable and witness operator
//! is a [`HermitianMatrix`]. Values are immutable once built; arithmetic
//! returns new values and re-symmetrizes so the Hermitian invariant holds
//! exactly rather than up to rounding.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type RealVector = DVector<f64>;

/// Entrywise absolute tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default structural tolerance for PSD and normalization checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A `d x d` complex Hermitian matrix.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    m: CMatrix,
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianMatrix{:?}", self.m.as_slice())
    }
}

/// Largest entrywise deviation of `m` from its conjugate transpose.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

impl HermitianMatrix {
    /// Validates `m` as Hermitian within [`HERMITIAN_TOL`].
    pub fn from_complex(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let max_dev = hermitian_deviation(&m);
        if max_dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { max_dev });
        }
        Ok(Self::hermitian_part(&m))
    }

    /// `(m + m^dagger) / 2`, always Hermitian.
    pub fn hermitian_part(m: &CMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "hermitian_part needs a square matrix");
        let n = m.nrows();
        let mut out = CMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Self { m: out }
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_complex(m.map(|x| C64::new(x, 0.0)))
    }

    /// Builds from row-major real entries; panics on a non-symmetric input.
    pub fn from_real_rows(d: usize, rows: &[f64]) -> Self {
        let m = DMatrix::from_row_slice(d, d, rows);
        Self::from_real(&m).expect("real rows must be symmetric")
    }

    pub fn identity(d: usize) -> Self {
        Self { m: CMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: CMatrix::zeros(d, d) }
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self { m }
    }

    /// `|v><v|` for a (not necessarily normalized) vector.
    pub fn outer(v: &DVector<C64>) -> Self {
        Self::hermitian_part(&(v * v.adjoint()))
    }

    /// `|i><i|` in dimension `d`.
    pub fn basis_projector(i: usize, d: usize) -> Self {
        let mut m = CMatrix::zeros(d, d);
        m[(i, i)] = C64::new(1.0, 0.0);
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].re).sum()
    }

    /// Real trace inner product `tr(self * other)`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        // tr(AB) = sum_ij A_ij B_ji = sum_ij A_ij conj(B_ij) for Hermitian B
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.m.iter().zip(other.m.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: self.m.map(|z| z * s) }
    }

    /// Complex-conjugated matrix, i.e. the transpose of a Hermitian matrix.
    pub fn transpose(&self) -> Self {
        Self { m: self.m.map(|z| z.conj()) }
    }

    /// `a * self * a^dagger`, where `a` may be rectangular.
    pub fn congruence(&self, a: &CMatrix) -> Self {
        Self::hermitian_part(&(a * &self.m * a.adjoint()))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(self.m.clone()).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Eigen-decomposition with eigenvalues ascending; eigenvectors are columns.
    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        let eig = SymmetricEigen::new(self.m.clone());
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vecs = CMatrix::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            vecs.set_column(k, &eig.eigenvectors.column(i));
        }
        (vals, vecs)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("dimension >= 1")
    }

    /// True iff the minimum eigenvalue is at least `-tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Applies `f` to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigh();
        let n = self.dim();
        let mut d = CMatrix::zeros(n, n);
        for (i, v) in vals.iter().enumerate() {
            d[(i, i)] = C64::new(f(*v), 0.0);
        }
        Self::hermitian_part(&(&vecs * d * vecs.adjoint()))
    }

    /// Square root of the PSD part (negative eigenvalues clipped to zero).
    pub fn sqrt_psd(&self) -> Self {
        self.map_spectrum(|x| x.max(0.0).sqrt())
    }

    /// Projection onto the PSD cone in Frobenius norm.
    pub fn psd_part(&self) -> Self {
        self.map_spectrum(|x| x.max(0.0))
    }

    /// `self^(-1/2)`; fails unless the matrix is positive definite.
    pub fn inv_sqrt(&self) -> Result<Self> {
        let min = self.min_eigenvalue();
        if min <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "inverse square root of a matrix with eigenvalue {min:.3e}"
            )));
        }
        Ok(self.map_spectrum(|x| 1.0 / x.sqrt()))
    }

    /// Row-major `[re, im]` entries.
    pub fn to_rows(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| [self.m[(i, j)].re, self.m[(i, j)].im]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let mut m = CMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare { rows: n, cols: row.len() });
            }
            for (j, e) in row.iter().enumerate() {
                m[(i, j)] = C64::new(e[0], e[1]);
            }
        }
        Self::from_complex(m)
    }
}

impl Serialize for HermitianMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        HermitianMatrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: &self.m + &rhs.m }
    }
}

impl Add for HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: self.m + rhs.m }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: &self.m - &rhs.m }
    }
}

impl Sub for HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: self.m - rhs.m }
    }
}

impl AddAssign<&HermitianMatrix> for HermitianMatrix {
    fn add_assign(&mut self, rhs: &HermitianMatrix) {
        self.m += &rhs.m;
    }
}

impl SubAssign<&HermitianMatrix> for HermitianMatrix {
    fn sub_assign(&mut self, rhs: &HermitianMatrix) {
        self.m -= &rhs.m;
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, s: f64) -> HermitianMatrix {
        self.scale(s)
    }
}

impl Mul<f64> for HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, s: f64) -> HermitianMatrix {
        self.scale(s)
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        self.scale(-1.0)
    }
}

impl Neg for HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        self.scale(-1.0)
    }
}

/// Sum of a non-empty iterator of matrices sharing one dimension.
pub fn sum<'a>(d: usize, it: impl IntoIterator<Item = &'a HermitianMatrix>) -> HermitianMatrix {
    let mut acc = HermitianMatrix::zeros(d);
    for h in it {
        acc += h;
    }
    acc
}

/// `[[Re H, -Im H], [Im H, Re H]]`, PSD iff `H` is.
pub fn real_embed(h: &HermitianMatrix) -> DMatrix<f64> {
    let d = h.dim();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let z = h.m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + d, j + d)] = z.re;
            out[(i, j + d)] = -z.im;
            out[(i + d, j)] = z.im;
        }
    }
    out
}

pub fn pauli_x() -> HermitianMatrix {
    HermitianMatrix::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_z() -> HermitianMatrix {
    HermitianMatrix::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0])
}

pub fn pauli_y() -> HermitianMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 1)] = C64::new(0.0, -1.0);
    m[(1, 0)] = C64::new(0.0, 1.0);
    HermitianMatrix { m }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliKind {
    X,
    Z,
}

/// Pauli operator acting on the span of `|i>` and `|j>` inside dimension `d`:
/// `X_ij = |i><j| + |j><i|`, `Z_ij = |i><i| - |j><j|`.
pub fn subspace_pauli(kind: PauliKind, i: usize, j: usize, d: usize) -> Result<HermitianMatrix> {
    if i >= j || j >= d {
        return Err(Error::IndexOutOfRange(format!("need 0 <= i < j < d, got i={i}, j={j}, d={d}")));
    }
    let mut m = CMatrix::zeros(d, d);
    match kind {
        PauliKind::X => {
            m[(i, j)] = C64::new(1.0, 0.0);
            m[(j, i)] = C64::new(1.0, 0.0);
        }
        PauliKind::Z => {
            m[(i, i)] = C64::new(1.0, 0.0);
            m[(j, j)] = C64::new(-1.0, 0.0);
        }
    }
    Ok(HermitianMatrix { m })
}

/// Orthonormal (trace inner product) Hermitian basis of `d x d` matrices.
///
/// Order: `I/sqrt(d)`; symmetric off-diagonals `(|j><k| + |k><j|)/sqrt(2)` for
/// `j < k` in lexicographic order; antisymmetric off-diagonals
/// `(-i|j><k| + i|k><j|)/sqrt(2)` in the same order; diagonal generalized
/// Gell-Mann matrices `diag(1,..,1,-l,0,..)/sqrt(l(l+1))` for `l = 1..d-1`.
#[derive(Clone, Debug)]
pub struct HermitianBasis {
    d: usize,
    pairs: Vec<(usize, usize)>,
}

impl HermitianBasis {
    pub fn new(d: usize) -> Self {
        assert!(d >= 1, "basis dimension must be at least 1");
        let pairs = (0..d).flat_map(|j| ((j + 1)..d).map(move |k| (j, k))).collect();
        Self { d, pairs }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of basis elements, `d^2`.
    pub fn len(&self) -> usize {
        self.d * self.d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `k`-th basis element.
    pub fn element(&self, k: usize) -> HermitianMatrix {
        let d = self.d;
        let np = self.pairs.len();
        let mut m = CMatrix::zeros(d, d);
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        if k == 0 {
            let s = 1.0 / (d as f64).sqrt();
            for i in 0..d {
                m[(i, i)] = C64::new(s, 0.0);
            }
        } else if k <= np {
            let (j, l) = self.pairs[k - 1];
            m[(j, l)] = C64::new(r2, 0.0);
            m[(l, j)] = C64::new(r2, 0.0);
        } else if k <= 2 * np {
            let (j, l) = self.pairs[k - 1 - np];
            m[(j, l)] = C64::new(0.0, -r2);
            m[(l, j)] = C64::new(0.0, r2);
        } else {
            let l = k - 2 * np;
            let s = 1.0 / ((l * (l + 1)) as f64).sqrt();
            for i in 0..l {
                m[(i, i)] = C64::new(s, 0.0);
            }
            m[(l, l)] = C64::new(-(l as f64) * s, 0.0);
        }
        HermitianMatrix { m }
    }

    pub fn elements(&self) -> Vec<HermitianMatrix> {
        (0..self.len()).map(|k| self.element(k)).collect()
    }

    /// Coordinates `c_k = tr(B_k H)`.
    pub fn vectorize(&self, h: &HermitianMatrix) -> Result<RealVector> {
        if h.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: h.dim() });
        }
        let mut out = RealVector::zeros(self.len());
        self.write_coords(h.matrix(), out.as_mut_slice());
        Ok(out)
    }

    /// Writes the coordinates of the Hermitian part of `m` into `out`.
    pub fn write_coords(&self, m: &CMatrix, out: &mut [f64]) {
        let d = self.d;
        let np = self.pairs.len();
        let s2 = std::f64::consts::SQRT_2;
        out[0] = (0..d).map(|i| m[(i, i)].re).sum::<f64>() / (d as f64).sqrt();
        for (p, &(j, k)) in self.pairs.iter().enumerate() {
            let h = (m[(j, k)] + m[(k, j)].conj()) * 0.5;
            out[1 + p] = s2 * h.re;
            out[1 + np + p] = -s2 * h.im;
        }
        let mut partial = 0.0;
        for l in 1..d {
            partial += m[(l - 1, l - 1)].re;
            out[2 * np + l] = (partial - (l as f64) * m[(l, l)].re) / ((l * (l + 1)) as f64).sqrt();
        }
    }

    /// Inverse of [`Self::vectorize`].
    pub fn devectorize(&self, c: &[f64]) -> Result<HermitianMatrix> {
        if c.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: c.len() });
        }
        let d = self.d;
        let np = self.pairs.len();
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = CMatrix::zeros(d, d);
        let s = c[0] / (d as f64).sqrt();
        for i in 0..d {
            m[(i, i)] = C64::new(s, 0.0);
        }
        for (p, &(j, k)) in self.pairs.iter().enumerate() {
            let v = C64::new(c[1 + p] * r2, -c[1 + np + p] * r2);
            m[(j, k)] = v;
            m[(k, j)] = v.conj();
        }
        for l in 1..d {
            let s = c[2 * np + l] / ((l * (l + 1)) as f64).sqrt();
            for i in 0..l {
                m[(i, i)].re += s;
            }
            m[(l, l)].re -= (l as f64) * s;
        }
        Ok(HermitianMatrix { m })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(d: usize, rng: &mut impl Rng) -> CMatrix {
        CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_hermitian(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
        HermitianMatrix::hermitian_part(&random_complex(d, rng))
    }

    #[test]
    fn identity_is_psd() {
        assert!(HermitianMatrix::identity(2).is_psd(1e-9));
    }

    #[test]
    fn negative_pauli_combination_is_not_psd() {
        let h = (&pauli_x() + &pauli_z()).scale(-0.5);
        assert!(!h.is_psd(1e-9));
        assert_abs_diff_eq!(h.min_eigenvalue(), -0.5 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gram_matrices_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..6 {
            let a = random_complex(d, &mut rng);
            let g = HermitianMatrix::hermitian_part(&(a.adjoint() * &a));
            assert!(g.is_psd(1e-12));
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(HermitianMatrix::from_complex(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn real_embed_identity() {
        assert_eq!(real_embed(&HermitianMatrix::identity(3)), DMatrix::identity(6, 6));
    }

    #[test]
    fn real_embed_pauli_y_spectrum() {
        let e = real_embed(&pauli_y());
        let mut ev: Vec<f64> = SymmetricEigen::new(e).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn real_embed_noisy_pauli_parent_element() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = (&HermitianMatrix::identity(2) + &(&pauli_x() + &pauli_z()).scale(s)).scale(0.25);
        let e = real_embed(&c);
        let min = SymmetricEigen::new(e).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(min, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vectorize_identity() {
        for d in 1..5 {
            let b = HermitianBasis::new(d);
            let v = b.vectorize(&HermitianMatrix::identity(d)).unwrap();
            assert_abs_diff_eq!(v[0], (d as f64).sqrt(), epsilon = 1e-14);
            assert!(v.iter().skip(1).all(|x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn vectorize_dimension_mismatch() {
        let b = HermitianBasis::new(3);
        assert!(b.vectorize(&HermitianMatrix::identity(2)).is_err());
    }

    #[test]
    fn pauli_orthogonality_in_coordinates() {
        let b = HermitianBasis::new(2);
        let vx = b.vectorize(&pauli_x()).unwrap();
        let vz = b.vectorize(&pauli_z()).unwrap();
        assert_abs_diff_eq!(vx.dot(&vz), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn basis_is_orthonormal_and_matches_fast_coords() {
        for d in 1..5 {
            let b = HermitianBasis::new(d);
            let el = b.elements();
            for (i, bi) in el.iter().enumerate() {
                for (j, bj) in el.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(bi.inner(bj), expect, epsilon = 1e-14);
                }
                let v = b.vectorize(bi).unwrap();
                for (j, x) in v.iter().enumerate() {
                    assert_abs_diff_eq!(*x, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn subspace_paulis() {
        assert_eq!(subspace_pauli(PauliKind::X, 0, 1, 2).unwrap(), pauli_x());
        assert_eq!(subspace_pauli(PauliKind::Z, 0, 2, 3).unwrap(), HermitianMatrix::diag(&[1.0, 0.0, -1.0]));
        let ev = subspace_pauli(PauliKind::X, 0, 2, 3).unwrap().eigenvalues();
        for (a, b) in ev.iter().zip([-1.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(subspace_pauli(PauliKind::X, 1, 1, 3).is_err());
        assert!(subspace_pauli(PauliKind::Z, 0, 3, 3).is_err());
    }

    #[test]
    fn subspace_pauli_squares() {
        for d in 2..5 {
            for i in 0..d {
                for j in (i + 1)..d {
                    let proj = &HermitianMatrix::basis_projector(i, d) + &HermitianMatrix::basis_projector(j, d);
                    for kind in [PauliKind::X, PauliKind::Z] {
                        let p = subspace_pauli(kind, i, j, d).unwrap();
                        assert_abs_diff_eq!(p.trace(), 0.0);
                        let sq = HermitianMatrix::hermitian_part(&(p.matrix() * p.matrix()));
                        assert!(sq.max_abs_diff(&proj) < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn psd_agrees_with_real_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 0..1000 {
            let d = 1 + n % 4;
            // shift by a random multiple of identity so both outcomes occur
            let h = &random_hermitian(d, &mut rng) + &HermitianMatrix::identity(d).scale(rng.random_range(0.0..2.0));
            let e = real_embed(&h);
            let min_e = SymmetricEigen::new(e).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(h.is_psd(1e-9), min_e >= -1e-9, "sample {n}");
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let h = pauli_y();
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, "[[[0.0,0.0],[0.0,-1.0]],[[0.0,1.0],[0.0,0.0]]]");
        let back: HermitianMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
        assert!(serde_json::from_str::<HermitianMatrix>("[[[0,0],[1,0]],[[0,0],[0,0]]]").is_err());
    }

    proptest! {
        #[test]
        fn vectorize_round_trip_and_isometry(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_hermitian(d, &mut rng);
            let b = random_hermitian(d, &mut rng);
            let basis = HermitianBasis::new(d);
            let va = basis.vectorize(&a).unwrap();
            let vb = basis.vectorize(&b).unwrap();
            prop_assert!(basis.devectorize(va.as_slice()).unwrap().max_abs_diff(&a) < 1e-12);
            prop_assert!((va.norm_squared() - a.inner(&a)).abs() < 1e-10);
            prop_assert!((va.dot(&vb) - a.inner(&b)).abs() < 1e-10);
        }
    }
}
