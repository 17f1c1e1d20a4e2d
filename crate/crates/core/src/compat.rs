//! Joint-measurability SDPs, verdicts, parent extraction and dual witnesses.
//!
//! For a support `S` of outcome tuples the program is
//!
//! ```text
//! maximize nu  s.t.  sum_{t in S, t_x = a} C_t = M_{a|x}   (a <= o_x - 2)
//!                    sum_{t in S} C_t = I,  C_t >= nu I,  nu <= 0
//! ```
//!
//! and its dual multipliers `rho_{ax}` (marginal equalities) and `omega`
//! (normalization) form a [`Witness`]: whenever
//! `Z_t = omega + sum_x rho_{t_x x} >= 0` on `S` and `sum_t tr Z_t <= 1`,
//! the value `sum tr(rho_{ax} M_{a|x}) + tr omega` bounds `nu` from above.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, C64};
use crate::povm::{MeasurementSet, OutcomeTuple, ParentPovm, Shape};
use crate::sdp::{self, BlockId, DualValue, Objective, ScalarId, SdpProblem, SdpSolution, Sign, SolveStatus, SolverOptions};

/// `nu*` at or above this value counts as compatible.
pub const COMPATIBLE_NU: f64 = -1e-6;
/// `nu*` must be at or below this value before a witness is attempted.
pub const INCOMPATIBLE_NU: f64 = -1e-5;
/// A repaired witness is reported only at or below this value.
pub const WITNESS_VALUE_MAX: f64 = -1e-6;
/// Tolerance for witness dual feasibility.
pub const WITNESS_TOL: f64 = 1e-9;
/// Marginals of an extracted parent must match within this.
pub const PARENT_TOL: f64 = 1e-6;

/// Dual certificate that no parent exists on `support` (when its value is
/// negative).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub support: Vec<OutcomeTuple>,
    /// `rho[x][a]` for `a` in `0..o_x - 1`.
    pub rho: Vec<Vec<HermitianMatrix>>,
    pub omega: HermitianMatrix,
}

impl Witness {
    pub fn zero(shape: &Shape, support: Vec<OutcomeTuple>) -> Self {
        let d = shape.dim;
        let rho = shape.outcomes.iter().map(|&o| vec![HermitianMatrix::zeros(d); o - 1]).collect();
        Self { support, rho, omega: HermitianMatrix::zeros(d) }
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    /// `omega + sum_x rho_{t_x x}` (terms with `t_x = o_x - 1` are absent).
    pub fn slack(&self, t: &OutcomeTuple) -> HermitianMatrix {
        let mut z = self.omega.clone();
        for (x, rx) in self.rho.iter().enumerate() {
            if let Some(r) = rx.get(t.get(x)) {
                z += r;
            }
        }
        z
    }

    /// Total trace `sum_{t in S} tr Z_t`.
    pub fn trace_budget(&self) -> f64 {
        self.support.iter().map(|t| self.slack(t).trace()).sum()
    }

    fn check_shape(&self, ms: &MeasurementSet) -> Result<()> {
        let shape = ms.shape();
        if self.omega.dim() != shape.dim || self.rho.len() != shape.outcomes.len() {
            return Err(Error::DimensionMismatch { expected: shape.dim, found: self.omega.dim() });
        }
        for (rx, &o) in self.rho.iter().zip(&shape.outcomes) {
            if rx.len() != o - 1 || rx.iter().any(|r| r.dim() != shape.dim) {
                return Err(Error::MalformedProblem("witness operator count does not match the measurement set".into()));
            }
        }
        if self.support.is_empty() {
            return Err(Error::EmptySupport);
        }
        for t in &self.support {
            if !shape.contains(t) {
                return Err(Error::IndexOutOfRange(format!("tuple {t} outside shape {}", shape.dmo())));
            }
        }
        Ok(())
    }

    /// Checks both dual feasibility conditions within `tol`.
    pub fn check_feasible(&self, tol: f64) -> Result<()> {
        for t in &self.support {
            let min = self.slack(t).min_eigenvalue();
            if min < -tol {
                return Err(Error::InfeasibleDual { constraint: format!("slack at tuple {t}"), violation: -min });
            }
        }
        let budget = self.trace_budget();
        if budget > 1.0 + tol {
            return Err(Error::InfeasibleDual { constraint: "trace budget".into(), violation: budget - 1.0 });
        }
        Ok(())
    }

    /// Objective `sum tr(rho_{ax} M_{a|x}) + tr omega` without any checks.
    pub fn raw_value(&self, ms: &MeasurementSet) -> f64 {
        let mut v = self.omega.trace();
        for (x, rx) in self.rho.iter().enumerate() {
            for (a, r) in rx.iter().enumerate() {
                v += r.inner(ms.element(a, x));
            }
        }
        v
    }

    /// Scales every operator by `s`.
    pub fn scale(&self, s: f64) -> Self {
        Self {
            support: self.support.clone(),
            rho: self.rho.iter().map(|rx| rx.iter().map(|r| r.scale(s)).collect()).collect(),
            omega: self.omega.scale(s),
        }
    }

    /// Adds `eps I` to `omega` (eps = worst slack violation) and then
    /// rescales so the trace budget is at most one.
    pub fn repaired(&self) -> Self {
        let worst = self.support.iter().map(|t| self.slack(t).min_eigenvalue()).fold(f64::INFINITY, f64::min);
        let mut w = self.clone();
        if worst < 0.0 {
            w.omega += &HermitianMatrix::identity(self.dim()).scale(-worst);
        }
        let budget = w.trace_budget();
        if budget > 1.0 {
            w = w.scale(1.0 / budget);
        }
        w
    }
}

/// Validated witness value; negative means no parent on the support.
pub fn witness_value(w: &Witness, ms: &MeasurementSet) -> Result<f64> {
    w.check_shape(ms)?;
    w.check_feasible(WITNESS_TOL)?;
    Ok(w.raw_value(ms))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Compatible,
    Incompatible,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompatVerdict {
    pub verdict: Verdict,
    pub parent: Option<ParentPovm>,
    pub witness: Option<Witness>,
    pub witness_value: Option<f64>,
    pub nu_star: f64,
    pub status: SolveStatus,
    pub diagnostics: Option<String>,
}

impl CompatVerdict {
    pub fn is_compatible(&self) -> bool {
        self.verdict == Verdict::Compatible
    }

    pub fn is_incompatible(&self) -> bool {
        self.verdict == Verdict::Incompatible
    }
}

/// Compatibility SDP together with the handles needed to read it back.
#[derive(Clone, Debug)]
pub struct CompatSdp {
    pub problem: SdpProblem,
    pub support: Vec<OutcomeTuple>,
    pub nu: ScalarId,
    pub blocks: Vec<BlockId>,
    /// Constraint index of the marginal equality for `(x, a)`.
    pub marginal_rows: Vec<Vec<usize>>,
    pub normalization_row: usize,
}

/// Builds the SDP over `support` (all tuples when `None`).
pub fn build_compat_sdp(ms: &MeasurementSet, support: Option<&[OutcomeTuple]>) -> Result<CompatSdp> {
    let shape = ms.shape();
    let support: Vec<OutcomeTuple> = match support {
        Some(s) => {
            for t in s {
                if !shape.contains(t) {
                    return Err(Error::IndexOutOfRange(format!("tuple {t} outside shape {}", shape.dmo())));
                }
            }
            let mut s = s.to_vec();
            s.sort();
            s.dedup();
            s
        }
        None => shape.tuples(),
    };
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let d = shape.dim;
    let mut p = SdpProblem::new();
    let nu = p.add_scalar("nu", Sign::NonPos);
    let blocks: Vec<BlockId> = support.iter().map(|t| p.add_shifted_block(format!("C{t}"), d, nu)).collect();
    let mut marginal_rows = Vec::with_capacity(shape.outcomes.len());
    for (x, &o) in shape.outcomes.iter().enumerate() {
        let mut rows = Vec::with_capacity(o - 1);
        for a in 0..o - 1 {
            let terms = support
                .iter()
                .zip(&blocks)
                .filter(|(t, _)| t.responds(x, a))
                .map(|(_, &b)| (b, 1.0))
                .collect();
            rows.push(p.add_matrix_equality(format!("marginal x={x} a={a}"), terms, vec![], ms.element(a, x).clone()));
        }
        marginal_rows.push(rows);
    }
    let normalization_row = p.add_matrix_equality(
        "normalization",
        blocks.iter().map(|&b| (b, 1.0)).collect(),
        vec![],
        HermitianMatrix::identity(d),
    );
    p.maximize(Objective { blocks: vec![], scalars: vec![(nu, 1.0)] });
    Ok(CompatSdp { problem: p, support, nu, blocks, marginal_rows, normalization_row })
}

impl CompatSdp {
    /// Reads `(rho, omega)` off equality multipliers.
    pub fn witness_from_duals(&self, shape: &Shape, duals: &[DualValue]) -> Witness {
        let m = |i: usize| duals[i].as_matrix().cloned().unwrap_or_else(|| HermitianMatrix::zeros(shape.dim));
        Witness {
            support: self.support.clone(),
            rho: self.marginal_rows.iter().map(|rows| rows.iter().map(|&i| m(i)).collect()).collect(),
            omega: m(self.normalization_row),
        }
    }

    /// Multipliers in the solver's layout for a witness on this support.
    pub fn duals_from_witness(&self, w: &Witness) -> Vec<DualValue> {
        let mut out = vec![DualValue::Scalar(0.0); self.problem.constraints.len()];
        for (rows, rx) in self.marginal_rows.iter().zip(&w.rho) {
            for (&i, r) in rows.iter().zip(rx) {
                out[i] = DualValue::Matrix(r.clone());
            }
        }
        out[self.normalization_row] = DualValue::Matrix(w.omega.clone());
        out
    }
}

/// Tunable thresholds of the verdict band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompatOptions {
    pub sdp: SolverOptions,
    pub compatible_nu: f64,
    pub incompatible_nu: f64,
    pub witness_value_max: f64,
}

impl Default for CompatOptions {
    fn default() -> Self {
        Self {
            sdp: SolverOptions::default(),
            compatible_nu: COMPATIBLE_NU,
            incompatible_nu: INCOMPATIBLE_NU,
            witness_value_max: WITNESS_VALUE_MAX,
        }
    }
}

impl CompatOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { sdp: SolverOptions::with_tol(tol), ..Self::default() }
    }
}

/// Full-support verdict.
pub fn decide_compatibility(ms: &MeasurementSet) -> Result<CompatVerdict> {
    decide_with(ms, None, &CompatOptions::default())
}

/// Verdict restricted to parents supported on `support`.
pub fn restricted_parent(ms: &MeasurementSet, support: &[OutcomeTuple]) -> Result<CompatVerdict> {
    decide_with(ms, Some(support), &CompatOptions::default())
}

pub fn decide_with(ms: &MeasurementSet, support: Option<&[OutcomeTuple]>, opts: &CompatOptions) -> Result<CompatVerdict> {
    let sdp = build_compat_sdp(ms, support)?;
    let sol = sdp::solve(&sdp.problem, &opts.sdp)?;
    Ok(interpret(ms, &sdp, &sol, opts))
}

fn interpret(ms: &MeasurementSet, sdp: &CompatSdp, sol: &SdpSolution, opts: &CompatOptions) -> CompatVerdict {
    let shape = ms.shape();
    let mut out = CompatVerdict {
        verdict: Verdict::Indeterminate,
        parent: None,
        witness: None,
        witness_value: None,
        nu_star: sol.objective,
        status: sol.status,
        diagnostics: None,
    };
    if sol.status == SolveStatus::PrimalInfeasible {
        let w = sdp.witness_from_duals(&shape, &sol.duals).repaired();
        match witness_value(&w, ms) {
            Ok(v) if v <= opts.witness_value_max => {
                out.verdict = Verdict::Incompatible;
                out.witness = Some(w);
                out.witness_value = Some(v);
            }
            Ok(v) => out.diagnostics = Some(format!("inconsistent equalities but ray value {v:.3e}")),
            Err(e) => out.diagnostics = Some(format!("inconsistent equalities, ray rejected: {e}")),
        }
        return out;
    }
    let nu = sol.objective;
    if nu.is_finite() && nu >= opts.compatible_nu {
        match extract_parent(ms, sdp, sol) {
            Ok(p) => {
                out.verdict = Verdict::Compatible;
                out.parent = Some(p);
            }
            Err(e) => out.diagnostics = Some(format!("nu* = {nu:.3e} ({:?}) but parent extraction failed: {e}", sol.status)),
        }
        return out;
    }
    if nu.is_finite() && nu <= opts.incompatible_nu {
        let w = sdp.witness_from_duals(&shape, &sol.duals).repaired();
        match witness_value(&w, ms) {
            Ok(v) if v <= opts.witness_value_max => {
                out.verdict = Verdict::Incompatible;
                out.witness = Some(w);
                out.witness_value = Some(v);
            }
            Ok(v) => out.diagnostics = Some(format!("nu* = {nu:.3e} but repaired witness value {v:.3e}")),
            Err(e) => out.diagnostics = Some(format!("nu* = {nu:.3e} but witness rejected: {e}")),
        }
        return out;
    }
    out.diagnostics = Some(format!("nu* = {nu:.3e} inside the guard band ({:?})", sol.status));
    out
}

/// Turns the SDP blocks into a valid parent: clip negative eigenvalues,
/// renormalize with `S^{-1/2}`, then verify the marginals.
fn extract_parent(ms: &MeasurementSet, sdp: &CompatSdp, sol: &SdpSolution) -> Result<ParentPovm> {
    let shape = ms.shape();
    let d = shape.dim;
    let clipped: Vec<HermitianMatrix> = sdp.blocks.iter().map(|&b| sol.block(b).psd_part()).collect();
    let total = crate::hermitian::sum(d, &clipped);
    let w = total.inv_sqrt()?;
    let els: Vec<(OutcomeTuple, HermitianMatrix)> = sdp
        .support
        .iter()
        .cloned()
        .zip(clipped.iter().map(|c| c.congruence(w.matrix())))
        .collect();
    let parent = ParentPovm::new(shape, els, 1e-9)?;
    let dev = parent.marginal_deviation(ms);
    if dev > PARENT_TOL {
        return Err(Error::MarginalMismatch { max_dev: dev, tol: PARENT_TOL });
    }
    Ok(parent)
}

/// Self-contained certificate that third parties can re-check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessCertificate {
    pub measurements: MeasurementSet,
    pub witness: Witness,
    pub value: f64,
}

impl WitnessCertificate {
    pub fn new(ms: &MeasurementSet, witness: Witness) -> Result<Self> {
        let value = witness_value(&witness, ms)?;
        Ok(Self { measurements: ms.clone(), witness, value })
    }

    /// Recomputes the value from scratch and compares with the stored one.
    pub fn verify(&self) -> Result<f64> {
        let v = witness_value(&self.witness, &self.measurements)?;
        if (v - self.value).abs() > 1e-9 * (1.0 + v.abs()) {
            return Err(Error::InvalidArgument(format!("stored value {} differs from recomputed {v}", self.value)));
        }
        Ok(v)
    }
}

/// Analytic certificate excluding `astar` for the qutrit triple of
/// [`crate::catalog::example_qutrit_triple`].
///
/// With `b_x = 1 - astar_x`:
/// `psi = (-1)^(a0+a1) alpha |a1> + beta |1-a1> + (-1)^(a0 a1) gamma |2>`,
/// `rho_{0x} = -(-1)^(astar_x) |psi><psi| / 5`,
/// `omega = ((b0 + b1) b2 + (b0 + b1 - 1) astar_2) |psi><psi| / 5`,
/// with `(alpha, beta, gamma) = (1, 0, 0)` if `astar_2 = 0` and
/// `(sqrt2/4, sqrt2/4, sqrt3/2)` otherwise.
pub fn qutrit_certificate(astar: &OutcomeTuple) -> Result<Witness> {
    if astar.len() != 3 || astar.0.iter().any(|&a| a > 1) {
        return Err(Error::InvalidArgument(format!("qutrit certificate needs a binary triple, got {astar}")));
    }
    let (a0, a1, a2) = (astar.get(0), astar.get(1), astar.get(2));
    let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let (alpha, beta, gamma) = if a2 == 0 {
        (1.0, 0.0, 0.0)
    } else {
        let s2 = std::f64::consts::SQRT_2;
        (s2 / 4.0, s2 / 4.0, 3f64.sqrt() / 2.0)
    };
    let mut psi = nalgebra::DVector::from_element(3, C64::new(0.0, 0.0));
    psi[a1] = C64::new(sign(a0 + a1) * alpha, 0.0);
    psi[1 - a1] = C64::new(beta, 0.0);
    psi[2] = C64::new(sign(a0 * a1) * gamma, 0.0);
    let proj = HermitianMatrix::outer(&psi);
    let b = |a: usize| 1.0 - a as f64;
    let w = (b(a0) + b(a1)) * b(a2) + (b(a0) + b(a1) - 1.0) * a2 as f64;
    let shape = Shape::uniform(3, 3, 2)?;
    let support = shape.tuples().into_iter().filter(|t| t != astar).collect();
    Ok(Witness {
        support,
        rho: astar.0.iter().map(|&a| vec![proj.scale(-sign(a) / 5.0)]).collect(),
        omega: proj.scale(w / 5.0),
    })
}

/// Closed-form value of [`qutrit_certificate`].
pub fn qutrit_certificate_value(astar: &OutcomeTuple) -> f64 {
    let (s2, s6) = (std::f64::consts::SQRT_2, 6f64.sqrt());
    if astar.get(2) == 0 {
        (4.0 - 3.0 * s2) / 80.0
    } else if astar.get(1) == 0 {
        (12.0 - 8.0 * s6 - 3.0 * s2) / 320.0
    } else {
        (12.0 - 8.0 * s6 + 3.0 * s2) / 320.0
    }
}

/// The parent element forced on the remaining tuple when a two-by-two set
/// has every other tuple pinned: `I - M_{a|0} - M_{b|1}` style residue.
pub fn forced_remaining_element(ms: &MeasurementSet, excluded: &OutcomeTuple) -> Result<HermitianMatrix> {
    let shape = ms.shape();
    if shape.outcomes != [2, 2] || !shape.contains(excluded) {
        return Err(Error::InvalidArgument("forced element needs two binary measurements".into()));
    }
    // with C_excluded = 0 the neighbours are pinned to the marginals
    let (a, b) = (excluded.get(0), excluded.get(1));
    let m = ms.element(a, 0);
    let n = ms.element(b, 1);
    let id = HermitianMatrix::identity(shape.dim);
    Ok(&(&id - m) - n)
}
