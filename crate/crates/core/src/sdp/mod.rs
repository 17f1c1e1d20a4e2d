//! Small dense semidefinite programs over Hermitian PSD blocks.
//!
//! A problem maximizes a linear objective over Hermitian block variables
//! `X_j` and real scalars `t_k` subject to affine equalities and
//!
//! * `X_j - t_s I >= 0` for every block (the shift `t_s` is optional),
//! * a sign constraint on every scalar.
//!
//! Matrix-valued equalities are imposed in the orthonormal Hermitian basis
//! of [`HermitianBasis`], so their multipliers come back as Hermitian
//! matrices. With multipliers `y` the dual reads
//!
//! ```text
//! minimize  <b, y>
//! s.t.      Z_j = A_j^*(y) - C_j >= 0
//!           c_k - a_k^*(y) - sum_{j shifted by k} tr Z_j   (= 0 | <= 0 | >= 0)
//! ```
//!
//! for free, non-negative and non-positive scalars respectively, and any
//! dual-feasible `y` bounds the primal maximum from above.

mod ipm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;

pub use ipm::solve;

/// Tolerance used when checking candidate dual multipliers.
pub const DUAL_FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScalarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Free,
    NonNeg,
    NonPos,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockVar {
    pub label: String,
    pub dim: usize,
    /// Scalar `t` in the cone constraint `X - t I >= 0`.
    pub shift: Option<ScalarId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalarVar {
    pub label: String,
    pub sign: Sign,
}

/// `sum_j coeff_j X_j + sum_k t_k H_k = rhs`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixEquality {
    pub label: String,
    pub dim: usize,
    pub blocks: Vec<(BlockId, f64)>,
    pub scalars: Vec<(ScalarId, HermitianMatrix)>,
    pub rhs: HermitianMatrix,
}

/// `sum_j tr(W_j X_j) + sum_k a_k t_k = rhs`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalarEquality {
    pub label: String,
    pub blocks: Vec<(BlockId, HermitianMatrix)>,
    pub scalars: Vec<(ScalarId, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Matrix(MatrixEquality),
    Scalar(ScalarEquality),
}

impl Constraint {
    pub fn label(&self) -> &str {
        match self {
            Constraint::Matrix(c) => &c.label,
            Constraint::Scalar(c) => &c.label,
        }
    }
}

/// Linear functional to maximize.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Objective {
    pub blocks: Vec<(BlockId, HermitianMatrix)>,
    pub scalars: Vec<(ScalarId, f64)>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<BlockVar>,
    pub scalars: Vec<ScalarVar>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, label: impl Into<String>, dim: usize) -> BlockId {
        self.blocks.push(BlockVar { label: label.into(), dim, shift: None });
        BlockId(self.blocks.len() - 1)
    }

    /// Block constrained by `X >= t I` for the scalar `shift`.
    pub fn add_shifted_block(&mut self, label: impl Into<String>, dim: usize, shift: ScalarId) -> BlockId {
        self.blocks.push(BlockVar { label: label.into(), dim, shift: Some(shift) });
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_scalar(&mut self, label: impl Into<String>, sign: Sign) -> ScalarId {
        self.scalars.push(ScalarVar { label: label.into(), sign });
        ScalarId(self.scalars.len() - 1)
    }

    pub fn add_matrix_equality(
        &mut self,
        label: impl Into<String>,
        blocks: Vec<(BlockId, f64)>,
        scalars: Vec<(ScalarId, HermitianMatrix)>,
        rhs: HermitianMatrix,
    ) -> usize {
        let dim = rhs.dim();
        self.constraints.push(Constraint::Matrix(MatrixEquality { label: label.into(), dim, blocks, scalars, rhs }));
        self.constraints.len() - 1
    }

    pub fn add_scalar_equality(
        &mut self,
        label: impl Into<String>,
        blocks: Vec<(BlockId, HermitianMatrix)>,
        scalars: Vec<(ScalarId, f64)>,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint::Scalar(ScalarEquality { label: label.into(), blocks, scalars, rhs }));
        self.constraints.len() - 1
    }

    pub fn maximize(&mut self, objective: Objective) {
        self.objective = objective;
    }

    pub fn block_id(&self, label: &str) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.label == label).map(BlockId)
    }

    pub fn scalar_id(&self, label: &str) -> Option<ScalarId> {
        self.scalars.iter().position(|s| s.label == label).map(ScalarId)
    }

    /// Total real dimension of the variables.
    pub fn num_variables(&self) -> usize {
        self.blocks.iter().map(|b| b.dim * b.dim).sum::<usize>() + self.scalars.len()
    }

    /// Checks that every reference resolves and every dimension agrees.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedProblem(msg));
        for b in &self.blocks {
            if b.dim == 0 {
                return bad(format!("block {} has dimension 0", b.label));
            }
            if let Some(s) = b.shift {
                if s.0 >= self.scalars.len() {
                    return bad(format!("block {} shifted by unknown scalar {}", b.label, s.0));
                }
            }
        }
        let block = |id: BlockId| self.blocks.get(id.0);
        let check_scalar = |id: ScalarId, ctx: &str| {
            if id.0 >= self.scalars.len() {
                Err(Error::MalformedProblem(format!("{ctx}: unknown scalar {}", id.0)))
            } else {
                Ok(())
            }
        };
        for c in &self.constraints {
            match c {
                Constraint::Matrix(m) => {
                    for &(id, _) in &m.blocks {
                        match block(id) {
                            None => return bad(format!("{}: unknown block {}", m.label, id.0)),
                            Some(b) if b.dim != m.dim => {
                                return bad(format!("{}: block {} has dim {} != {}", m.label, b.label, b.dim, m.dim))
                            }
                            _ => {}
                        }
                    }
                    for (id, h) in &m.scalars {
                        check_scalar(*id, &m.label)?;
                        if h.dim() != m.dim {
                            return bad(format!("{}: scalar coefficient has wrong dimension", m.label));
                        }
                    }
                }
                Constraint::Scalar(s) => {
                    for (id, w) in &s.blocks {
                        match block(*id) {
                            None => return bad(format!("{}: unknown block {}", s.label, id.0)),
                            Some(b) if b.dim != w.dim() => return bad(format!("{}: coefficient dim mismatch", s.label)),
                            _ => {}
                        }
                    }
                    for &(id, _) in &s.scalars {
                        check_scalar(id, &s.label)?;
                    }
                }
            }
        }
        for (id, w) in &self.objective.blocks {
            match block(*id) {
                None => return bad(format!("objective: unknown block {}", id.0)),
                Some(b) if b.dim != w.dim() => return bad("objective: coefficient dim mismatch".into()),
                _ => {}
            }
        }
        for &(id, _) in &self.objective.scalars {
            check_scalar(id, "objective")?;
        }
        Ok(())
    }

    /// Objective value at a primal point.
    pub fn objective_value(&self, blocks: &[HermitianMatrix], scalars: &[f64]) -> f64 {
        self.objective.blocks.iter().map(|(id, w)| w.inner(&blocks[id.0])).sum::<f64>()
            + self.objective.scalars.iter().map(|(id, c)| c * scalars[id.0]).sum::<f64>()
    }

    /// Largest absolute violation of the equality constraints at a primal point.
    pub fn equality_residual(&self, blocks: &[HermitianMatrix], scalars: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            match c {
                Constraint::Matrix(m) => {
                    let mut lhs = HermitianMatrix::zeros(m.dim);
                    for (id, a) in &m.blocks {
                        lhs += &blocks[id.0].scale(*a);
                    }
                    for (id, h) in &m.scalars {
                        lhs += &h.scale(scalars[id.0]);
                    }
                    worst = worst.max(lhs.max_abs_diff(&m.rhs));
                }
                Constraint::Scalar(s) => {
                    let lhs = s.blocks.iter().map(|(id, w)| w.inner(&blocks[id.0])).sum::<f64>()
                        + s.scalars.iter().map(|(id, a)| a * scalars[id.0]).sum::<f64>();
                    worst = worst.max((lhs - s.rhs).abs());
                }
            }
        }
        worst
    }

    /// Cone multipliers `Z_j = A_j^*(y) - C_j` implied by equality multipliers.
    pub fn implied_cone_duals(&self, duals: &[DualValue]) -> Result<Vec<HermitianMatrix>> {
        self.check_dual_shapes(duals)?;
        let mut z: Vec<HermitianMatrix> = self.blocks.iter().map(|b| HermitianMatrix::zeros(b.dim)).collect();
        for (c, y) in self.constraints.iter().zip(duals) {
            match (c, y) {
                (Constraint::Matrix(m), DualValue::Matrix(ym)) => {
                    for (id, a) in &m.blocks {
                        z[id.0] += &ym.scale(*a);
                    }
                }
                (Constraint::Scalar(s), DualValue::Scalar(ys)) => {
                    for (id, w) in &s.blocks {
                        z[id.0] += &w.scale(*ys);
                    }
                }
                _ => unreachable!("shapes checked"),
            }
        }
        for (id, w) in &self.objective.blocks {
            z[id.0] -= w;
        }
        Ok(z)
    }

    fn check_dual_shapes(&self, duals: &[DualValue]) -> Result<()> {
        if duals.len() != self.constraints.len() {
            return Err(Error::MalformedProblem(format!(
                "{} multipliers for {} constraints",
                duals.len(),
                self.constraints.len()
            )));
        }
        for (c, y) in self.constraints.iter().zip(duals) {
            match (c, y) {
                (Constraint::Matrix(m), DualValue::Matrix(ym)) if ym.dim() == m.dim => {}
                (Constraint::Scalar(_), DualValue::Scalar(_)) => {}
                _ => return Err(Error::MalformedProblem(format!("multiplier shape mismatch at {}", c.label()))),
            }
        }
        Ok(())
    }

    /// Dual objective `<b, y>`.
    pub fn dual_objective(&self, duals: &[DualValue]) -> Result<f64> {
        self.check_dual_shapes(duals)?;
        Ok(self
            .constraints
            .iter()
            .zip(duals)
            .map(|(c, y)| match (c, y) {
                (Constraint::Matrix(m), DualValue::Matrix(ym)) => ym.inner(&m.rhs),
                (Constraint::Scalar(s), DualValue::Scalar(ys)) => ys * s.rhs,
                _ => unreachable!(),
            })
            .sum())
    }

    /// Validates candidate multipliers against every dual feasibility
    /// condition (within [`DUAL_FEASIBILITY_TOL`]) and returns the dual
    /// objective, an upper bound on the primal maximum.
    pub fn certify_weak_duality(&self, duals: &[DualValue]) -> Result<f64> {
        self.certify_weak_duality_with_tol(duals, DUAL_FEASIBILITY_TOL)
    }

    pub fn certify_weak_duality_with_tol(&self, duals: &[DualValue], tol: f64) -> Result<f64> {
        self.validate()?;
        let z = self.implied_cone_duals(duals)?;
        for (b, zj) in self.blocks.iter().zip(&z) {
            let min = zj.min_eigenvalue();
            if min < -tol {
                return Err(Error::InfeasibleDual { constraint: format!("cone multiplier of block {}", b.label), violation: -min });
            }
        }
        // stationarity in every scalar
        let mut g: Vec<f64> = vec![0.0; self.scalars.len()];
        for (id, c) in &self.objective.scalars {
            g[id.0] += c;
        }
        for (c, y) in self.constraints.iter().zip(duals) {
            match (c, y) {
                (Constraint::Matrix(m), DualValue::Matrix(ym)) => {
                    for (id, h) in &m.scalars {
                        g[id.0] -= ym.inner(h);
                    }
                }
                (Constraint::Scalar(s), DualValue::Scalar(ys)) => {
                    for (id, a) in &s.scalars {
                        g[id.0] -= a * ys;
                    }
                }
                _ => unreachable!(),
            }
        }
        for (b, zj) in self.blocks.iter().zip(&z) {
            if let Some(s) = b.shift {
                g[s.0] -= zj.trace();
            }
        }
        for (s, gk) in self.scalars.iter().zip(&g) {
            let violation = match s.sign {
                Sign::Free => gk.abs(),
                Sign::NonNeg => gk.max(0.0),
                Sign::NonPos => (-gk).max(0.0),
            };
            if violation > tol {
                return Err(Error::InfeasibleDual { constraint: format!("stationarity in scalar {}", s.label), violation });
            }
        }
        self.dual_objective(duals)
    }
}

/// Multiplier of one equality constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DualValue {
    Matrix(HermitianMatrix),
    Scalar(f64),
}

impl DualValue {
    pub fn as_matrix(&self) -> Option<&HermitianMatrix> {
        match self {
            DualValue::Matrix(m) => Some(m),
            DualValue::Scalar(_) => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            DualValue::Scalar(s) => Some(*s),
            DualValue::Matrix(_) => None,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        match self {
            DualValue::Matrix(m) => DualValue::Matrix(m.scale(s)),
            DualValue::Scalar(v) => DualValue::Scalar(v * s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Equalities are inconsistent; `duals` hold a ray with `A^*(y) = 0`
    /// and `<b, y> = -1`.
    PrimalInfeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal objective value.
    pub objective: f64,
    pub dual_objective: f64,
    pub blocks: Vec<HermitianMatrix>,
    pub scalars: Vec<f64>,
    /// One multiplier per equality constraint.
    pub duals: Vec<DualValue>,
    /// One PSD multiplier per block cone.
    pub cone_duals: Vec<HermitianMatrix>,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn block(&self, id: BlockId) -> &HermitianMatrix {
        &self.blocks[id.0]
    }

    pub fn scalar(&self, id: ScalarId) -> f64 {
        self.scalars[id.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

pub const DEFAULT_SDP_TOL: f64 = 1e-7;

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_SDP_TOL, max_iter: 100 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[cfg(test)]
mod tests;
