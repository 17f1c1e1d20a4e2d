//! Conversions between measurement sets, steering assemblages, local
//! hidden state models and parents.
//!
//! Transposes are taken in the eigenbasis of Bob's reduced state `rho`
//! (eigenvalues descending, first nonzero component of every eigenvector
//! real and positive). Operators on Alice's side are written in Bob's
//! basis when `rho` has full rank; otherwise everything is compressed to
//! the support of `rho` and Alice's operators are given in the
//! coordinates of its eigenvectors.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{CMatrix, HermitianMatrix, C64};
use crate::povm::{MeasurementSet, OutcomeTuple, ParentPovm, Povm, Shape};

/// Tolerance for assemblage and state invariants.
pub const STEERING_TOL: f64 = 1e-9;
/// Eigenvalues of `rho` below this (relative to the largest) are treated
/// as outside its support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Unnormalized conditional states `sigma[x][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assemblage {
    pub dim: usize,
    pub members: Vec<Vec<HermitianMatrix>>,
}

impl Assemblage {
    pub fn new(members: Vec<Vec<HermitianMatrix>>) -> Result<Self> {
        let dim = members.first().and_then(|m| m.first()).map(|s| s.dim()).ok_or_else(|| {
            Error::InvalidArgument("assemblage needs at least one measurement with one outcome".into())
        })?;
        let a = Self { dim, members };
        a.validate(STEERING_TOL)?;
        Ok(a)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        for sx in &self.members {
            for s in sx {
                if s.dim() != self.dim {
                    return Err(Error::DimensionMismatch { expected: self.dim, found: s.dim() });
                }
                if !s.is_psd(tol) {
                    return Err(Error::InvalidState(format!("member with eigenvalue {:.3e}", s.min_eigenvalue())));
                }
            }
        }
        let rho = self.marginal(0);
        for x in 1..self.members.len() {
            let dev = self.marginal(x).max_abs_diff(&rho);
            if dev > tol {
                return Err(Error::InvalidState(format!("signalling: marginal of x={x} differs by {dev:.3e}")));
            }
        }
        if (rho.trace() - 1.0).abs() > tol {
            return Err(Error::InvalidState(format!("reduced state has trace {}", rho.trace())));
        }
        Ok(())
    }

    /// `sum_a sigma_{a|x}`.
    pub fn marginal(&self, x: usize) -> HermitianMatrix {
        crate::hermitian::sum(self.dim, &self.members[x])
    }

    /// Bob's reduced state.
    pub fn reduced_state(&self) -> HermitianMatrix {
        self.marginal(0)
    }

    pub fn max_abs_diff(&self, other: &Assemblage) -> f64 {
        self.members
            .iter()
            .flatten()
            .zip(other.members.iter().flatten())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Canonical local hidden state model: `sigma_{a|x} = sum_t p(t) [t_x = a] rho_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhsModel {
    pub support: Vec<OutcomeTuple>,
    pub weights: Vec<f64>,
    pub states: Vec<HermitianMatrix>,
}

impl LhsModel {
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.support.len() != self.weights.len() || self.support.len() != self.states.len() {
            return Err(Error::InvalidArgument("LHS model fields differ in length".into()));
        }
        if self.weights.iter().any(|&w| w < -tol) || (self.weights.iter().sum::<f64>() - 1.0).abs() > tol {
            return Err(Error::InvalidDistribution("LHS weights must be a probability vector".into()));
        }
        for s in &self.states {
            if !s.is_psd(tol) || (s.trace() - 1.0).abs() > tol {
                return Err(Error::InvalidState("hidden states must be unit-trace PSD".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// The assemblage this model predicts for measurements of `shape`.
    pub fn assemblage(&self, shape: &Shape) -> Result<Assemblage> {
        let d = self.states.first().map(|s| s.dim()).ok_or(Error::EmptySupport)?;
        let mut members: Vec<Vec<HermitianMatrix>> =
            shape.outcomes.iter().map(|&o| vec![HermitianMatrix::zeros(d); o]).collect();
        for ((t, w), s) in self.support.iter().zip(&self.weights).zip(&self.states) {
            if !shape.contains(t) {
                return Err(Error::IndexOutOfRange(format!("tuple {t} outside shape {}", shape.dmo())));
            }
            for (x, mx) in members.iter_mut().enumerate() {
                mx[t.get(x)] += &s.scale(*w);
            }
        }
        Ok(Assemblage { dim: d, members })
    }
}

/// Eigen-frame of Bob's state restricted to its support.
#[derive(Clone, Debug)]
pub struct StateFrame {
    /// `d x r` matrix of eigenvectors with nonzero eigenvalue.
    pub vectors: CMatrix,
    /// The `r` nonzero eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub dim: usize,
}

impl StateFrame {
    pub fn new(rho: &HermitianMatrix) -> Result<Self> {
        let d = rho.dim();
        if !rho.is_psd(STEERING_TOL) || (rho.trace() - 1.0).abs() > STEERING_TOL {
            return Err(Error::InvalidState("state must be unit-trace PSD".into()));
        }
        let (vals, vecs) = rho.eigh();
        let top = vals.last().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..d).rev().filter(|&i| vals[i] > SUPPORT_TOL * top.max(1.0)).collect();
        let r = keep.len();
        let mut vectors = CMatrix::zeros(d, r);
        for (k, &i) in keep.iter().enumerate() {
            let mut col = vecs.column(i).into_owned();
            if let Some(lead) = col.iter().find(|v| v.norm() > 1e-12).copied() {
                let phase = lead.conj() / lead.norm();
                col *= phase;
            }
            vectors.set_column(k, &col);
        }
        Ok(Self { vectors, eigenvalues: keep.iter().map(|&i| vals[i]).collect(), dim: d })
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.dim
    }

    /// Dimension of Alice's side in this frame's conventions.
    pub fn alice_dim(&self) -> usize {
        if self.is_full_rank() {
            self.dim
        } else {
            self.rank()
        }
    }

    /// `V^dagger X V` after checking that `X` lives on the support.
    fn compress(&self, x: &HermitianMatrix) -> Result<CMatrix> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.dim() });
        }
        let v = &self.vectors;
        let inner = v.adjoint() * x.matrix() * v;
        let back = v * &inner * v.adjoint();
        let leak = (x.matrix() - back).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if leak > STEERING_TOL {
            return Err(Error::SupportViolation { leak });
        }
        Ok(inner)
    }

    fn expand(&self, y: &CMatrix) -> HermitianMatrix {
        HermitianMatrix::hermitian_part(&(&self.vectors * y * self.vectors.adjoint()))
    }

    fn alice_out(&self, y: &CMatrix) -> HermitianMatrix {
        if self.is_full_rank() {
            self.expand(y)
        } else {
            HermitianMatrix::hermitian_part(y)
        }
    }

    fn alice_in(&self, x: &HermitianMatrix) -> Result<CMatrix> {
        if self.is_full_rank() {
            self.compress(x)
        } else if x.dim() == self.rank() {
            Ok(x.matrix().clone())
        } else if x.dim() == self.dim {
            // Only the block on the support of rho is visible.
            Ok(self.vectors.adjoint() * x.matrix() * &self.vectors)
        } else {
            Err(Error::DimensionMismatch { expected: self.rank(), found: x.dim() })
        }
    }

    /// `Lambda^{1/2} Y^T Lambda^{1/2}` (frame coordinates).
    fn dress(&self, y: &CMatrix) -> CMatrix {
        let r = self.rank();
        CMatrix::from_fn(r, r, |i, j| y[(j, i)] * (self.eigenvalues[i] * self.eigenvalues[j]).sqrt())
    }

    /// Inverse of [`Self::dress`].
    fn undress(&self, y: &CMatrix) -> CMatrix {
        let r = self.rank();
        CMatrix::from_fn(r, r, |i, j| y[(j, i)] / (self.eigenvalues[i] * self.eigenvalues[j]).sqrt())
    }

    /// `sum_i sqrt(lambda_i) |a_i> |v_i>` with Alice's index first.
    pub fn purification(&self) -> DVector<C64> {
        let da = self.alice_dim();
        let d = self.dim;
        let mut psi = DVector::from_element(da * d, C64::new(0.0, 0.0));
        for (i, &l) in self.eigenvalues.iter().enumerate() {
            let s = l.sqrt();
            for ia in 0..da {
                let alice = if self.is_full_rank() { self.vectors[(ia, i)] } else if ia == i { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                if alice.norm() == 0.0 {
                    continue;
                }
                for jb in 0..d {
                    psi[ia * d + jb] += alice * self.vectors[(jb, i)] * s;
                }
            }
        }
        psi
    }
}

/// `sigma_{a|x} = tr_A[(M_{a|x} (x) I) rho_AB]`, Alice's index first.
pub fn assemblage_from_state(rho_ab: &HermitianMatrix, ms: &MeasurementSet) -> Result<Assemblage> {
    let da = ms.dim();
    let n = rho_ab.dim();
    if !n.is_multiple_of(da) {
        return Err(Error::DimensionMismatch { expected: da, found: n });
    }
    let db = n / da;
    if !rho_ab.is_psd(STEERING_TOL) || (rho_ab.trace() - 1.0).abs() > STEERING_TOL {
        return Err(Error::InvalidState("bipartite state must be unit-trace PSD".into()));
    }
    let r = rho_ab.matrix();
    let members = ms
        .measurements()
        .iter()
        .map(|p| {
            p.elements()
                .iter()
                .map(|m| {
                    let mm = m.matrix();
                    let s = CMatrix::from_fn(db, db, |j, jp| {
                        let mut acc = C64::new(0.0, 0.0);
                        for i in 0..da {
                            for k in 0..da {
                                acc += mm[(i, k)] * r[(k * db + j, i * db + jp)];
                            }
                        }
                        acc
                    });
                    HermitianMatrix::hermitian_part(&s)
                })
                .collect()
        })
        .collect();
    Assemblage::new(members)
}

/// Bipartite state `|psi><psi|` as a Hermitian matrix.
pub fn pure_state(psi: &DVector<C64>) -> HermitianMatrix {
    HermitianMatrix::outer(psi)
}

/// Measurements that, applied to the purification of `rho`, prepare the
/// assemblage.
#[derive(Clone, Debug)]
pub struct SteeringMeasurements {
    pub measurements: MeasurementSet,
    pub state: HermitianMatrix,
    pub purification: DVector<C64>,
    pub frame: StateFrame,
}

/// `M_{a|x} = rho^{-1/2} sigma_{a|x}^T rho^{-1/2}` on the support of `rho`.
pub fn measurements_from_assemblage(asm: &Assemblage) -> Result<SteeringMeasurements> {
    asm.validate(STEERING_TOL)?;
    let rho = asm.reduced_state();
    let frame = StateFrame::new(&rho)?;
    let povms = asm
        .members
        .iter()
        .map(|sx| {
            let els = sx.iter().map(|s| Ok(frame.alice_out(&frame.undress(&frame.compress(s)?)))).collect::<Result<Vec<_>>>()?;
            Povm::with_tol(els, 1e-8)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SteeringMeasurements {
        measurements: MeasurementSet::new(povms)?,
        purification: frame.purification(),
        state: rho,
        frame,
    })
}

/// `sigma_{a|x} = rho^{1/2} M_{a|x}^T rho^{1/2}`: the assemblage produced by
/// measuring the purification of `rho`.
pub fn assemblage_from_measurements(ms: &MeasurementSet, rho: &HermitianMatrix) -> Result<Assemblage> {
    let frame = StateFrame::new(rho)?;
    let members = ms
        .measurements()
        .iter()
        .map(|p| p.elements().iter().map(|m| Ok(frame.expand(&frame.dress(&frame.alice_in(m)?)))).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(Assemblage { dim: rho.dim(), members })
}

/// `p(t) = tr[rho^{1/2} C_t^T rho^{1/2}]`, `rho_t = rho^{1/2} C_t^T rho^{1/2} / p(t)`.
pub fn lhs_from_parent(parent: &ParentPovm, rho: &HermitianMatrix) -> Result<LhsModel> {
    let frame = StateFrame::new(rho)?;
    let mut model = LhsModel { support: Vec::new(), weights: Vec::new(), states: Vec::new() };
    for (t, c) in parent.iter() {
        let s = frame.expand(&frame.dress(&frame.alice_in(c)?));
        let p = s.trace();
        if p > 1e-15 {
            model.support.push(t.clone());
            model.weights.push(p);
            model.states.push(s.scale(1.0 / p));
        }
    }
    Ok(model)
}

/// `C_t = p(t) rho^{-1/2} rho_t^T rho^{-1/2}` on the support of `rho`.
pub fn parent_from_lhs(lhs: &LhsModel, shape: &Shape, rho: &HermitianMatrix) -> Result<ParentPovm> {
    let frame = StateFrame::new(rho)?;
    let els = lhs
        .support
        .iter()
        .zip(&lhs.weights)
        .zip(&lhs.states)
        .map(|((t, w), s)| {
            let c = frame.undress(&frame.compress(s)?) * C64::new(*w, 0.0);
            Ok((t.clone(), frame.alice_out(&c)))
        })
        .collect::<Result<Vec<_>>>()?;
    let shape = Shape::new(frame.alice_dim(), shape.outcomes.clone())?;
    ParentPovm::new(shape, els, 1e-8)
}
