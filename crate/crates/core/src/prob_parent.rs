//! Parents that may mix over responses: `M_{a|x} = sum_l p_x(a|l) K_l`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::catalog::example_noisy_pauli;
use crate::error::{Error, Result};
use crate::exec::{find_first, ExecMode};
use crate::hermitian::{sum, HermitianBasis, HermitianMatrix, RealVector};
use nalgebra::DMatrix;
use crate::povm::{canonicalize, MeasurementSet, ParentPovm, Povm, ResponseTable};
use crate::sdp::{solve, BlockId, Objective, ScalarId, SdpProblem, SdpSolution, Sign, SolveStatus, SolverOptions};

/// Reconstruction residual below which a search result is accepted.
pub const SEARCH_RESIDUAL: f64 = 1e-7;

/// A parent POVM with stochastic responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticParent {
    pub parent: Povm,
    pub responses: Vec<ResponseTable>,
}

impl ProbabilisticParent {
    pub fn new(parent: Povm, responses: Vec<ResponseTable>) -> Result<Self> {
        let k = parent.outcomes();
        for r in &responses {
            r.validate(k, r.rows.first().map_or(0, Vec::len))?;
        }
        Ok(Self { parent, responses })
    }

    /// `{0,1}` responses reading off each tuple entry.
    pub fn from_deterministic(parent: &ParentPovm) -> Self {
        let (parent, responses) = parent.to_povm_with_responses();
        Self { parent, responses }
    }

    pub fn size(&self) -> usize {
        self.parent.outcomes()
    }

    /// `sum_l p_x(a|l) K_l`.
    pub fn reconstruct(&self, a: usize, x: usize) -> HermitianMatrix {
        let d = self.parent.dim();
        let mut acc = HermitianMatrix::zeros(d);
        for (l, k) in self.parent.elements().iter().enumerate() {
            let p = self.responses[x].rows[l][a];
            if p != 0.0 {
                acc += &k.scale(p);
            }
        }
        acc
    }

    /// Largest deviation of the reconstructed children from `ms`.
    pub fn residual(&self, ms: &MeasurementSet) -> Result<f64> {
        self.check_shape(ms)?;
        let mut worst: f64 = 0.0;
        for (x, povm) in ms.measurements().iter().enumerate() {
            for (a, m) in povm.elements().iter().enumerate() {
                worst = worst.max(self.reconstruct(a, x).max_abs_diff(m));
            }
        }
        Ok(worst)
    }

    fn check_shape(&self, ms: &MeasurementSet) -> Result<()> {
        if ms.dim() != self.parent.dim() {
            return Err(Error::DimensionMismatch { expected: ms.dim(), found: self.parent.dim() });
        }
        if ms.len() != self.responses.len() {
            return Err(Error::DimensionMismatch { expected: ms.len(), found: self.responses.len() });
        }
        for (x, r) in self.responses.iter().enumerate() {
            let o = ms.measurement(x).outcomes();
            let width = r.rows.first().map_or(0, Vec::len);
            if width != o {
                return Err(Error::DimensionMismatch { expected: o, found: width });
            }
        }
        Ok(())
    }
}

/// True iff every child is reproduced within `tol`.
pub fn verify_prob_parent(pp: &ProbabilisticParent, ms: &MeasurementSet, tol: f64) -> Result<bool> {
    Ok(pp.residual(ms)? <= tol)
}

/// Canonical deterministic parent with the same children.
pub fn canonicalize_prob(pp: &ProbabilisticParent) -> Result<ParentPovm> {
    canonicalize(&pp.parent, &pp.responses)
}

/// Three-outcome candidate for the noisy Pauli pair. The elements are
/// kept even when they fail to be PSD so that validity can be reported.
#[derive(Clone, Debug)]
pub struct NoisyPauliConstruction {
    pub eta: f64,
    pub elements: Vec<HermitianMatrix>,
    pub responses: Vec<ResponseTable>,
    pub min_eigenvalue: f64,
}

impl NoisyPauliConstruction {
    pub fn is_valid(&self) -> bool {
        self.min_eigenvalue >= -VALIDITY_TOL
    }

    /// The probabilistic parent, if every element is PSD.
    pub fn parent(&self) -> Option<ProbabilisticParent> {
        if !self.is_valid() {
            return None;
        }
        let povm = Povm::with_tol(self.elements.clone(), VALIDITY_TOL).ok()?;
        Some(ProbabilisticParent { parent: povm, responses: self.responses.clone() })
    }
}

const VALIDITY_TOL: f64 = 1e-12;

/// `K_0 = (2M_0 - eta sqrt2 N_0)/(2 - eta^2)`, `K_1` with `M` and `N`
/// swapped, `K_2 = I - K_0 - K_1`; `M` answers `0` with probabilities
/// `(1, eta/sqrt2, 0)` and `N` with `(eta/sqrt2, 1, 0)`.
pub fn noisy_pauli_prob_parent(eta: f64) -> Result<NoisyPauliConstruction> {
    let ms = example_noisy_pauli(eta)?;
    let m0 = ms.element(0, 0);
    let n0 = ms.element(0, 1);
    let denom = 2.0 - eta * eta;
    let k0 = (&m0.scale(2.0) - &n0.scale(eta * SQRT_2)).scale(1.0 / denom);
    let k1 = (&n0.scale(2.0) - &m0.scale(eta * SQRT_2)).scale(1.0 / denom);
    let k2 = &(&HermitianMatrix::identity(2) - &k0) - &k1;
    let c = eta / SQRT_2;
    let responses = vec![
        ResponseTable { rows: vec![vec![1.0, 0.0], vec![c, 1.0 - c], vec![0.0, 1.0]] },
        ResponseTable { rows: vec![vec![c, 1.0 - c], vec![1.0, 0.0], vec![0.0, 1.0]] },
    ];
    let elements = vec![k0, k1, k2];
    let min_eigenvalue = elements.iter().map(|e| e.min_eigenvalue()).fold(f64::INFINITY, f64::min);
    Ok(NoisyPauliConstruction { eta, elements, responses, min_eigenvalue })
}

/// Smallest eigenvalue over the four deterministic noisy Pauli parent elements.
pub fn noisy_pauli_deterministic_min_eigenvalue(eta: f64) -> f64 {
    crate::catalog::noisy_pauli_parent_elements(eta)
        .iter()
        .map(|(_, c)| c.min_eigenvalue())
        .fold(f64::INFINITY, f64::min)
}

/// Largest `eta` in `[lo, hi]` with `min_eigenvalue(eta) >= 0`: scans a grid
/// of spacing at most `step`, then bisects the first valid-to-invalid
/// transition after the last valid grid point to `1e-10`. Returns `None` if
/// no grid point is valid and `hi` if all are.
pub fn threshold_scan(min_eigenvalue: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> Option<f64> {
    let valid = |eta: f64| min_eigenvalue(eta) >= -VALIDITY_TOL;
    let n = (((hi - lo) / step).ceil() as usize).max(1);
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let last = grid.iter().rposition(|&e| valid(e))?;
    if last == n {
        return Some(hi);
    }
    let (mut good, mut bad) = (grid[last], grid[last + 1]);
    while bad - good > 1e-10 {
        let mid = 0.5 * (good + bad);
        if valid(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// Budget for [`search_prob_parent_with`].
#[derive(Clone, Debug)]
pub struct ProbSearchOptions {
    pub restarts: usize,
    pub max_rounds: usize,
    pub mode: ExecMode,
    pub sdp: SolverOptions,
}

impl Default for ProbSearchOptions {
    fn default() -> Self {
        Self { restarts: 50, max_rounds: 400, mode: ExecMode::default(), sdp: SolverOptions { tol: 1e-9, max_iter: 100 } }
    }
}

/// Heuristic search for a size-`k` probabilistic parent. `None` means
/// nothing was found, not that none exists.
pub fn search_prob_parent(ms: &MeasurementSet, k: usize, restarts: usize, rng: &mut impl Rng) -> Result<Option<ProbabilisticParent>> {
    let opts = ProbSearchOptions { restarts, ..ProbSearchOptions::default() };
    search_prob_parent_with(ms, k, rng.random(), &opts)
}

/// Restart `r` is seeded by stream `r` of `seed`; the lowest successful
/// restart index wins regardless of scheduling.
pub fn search_prob_parent_with(ms: &MeasurementSet, k: usize, seed: u64, opts: &ProbSearchOptions) -> Result<Option<ProbabilisticParent>> {
    if k == 0 {
        return Err(Error::InvalidArgument("parent size must be at least 1".into()));
    }
    let found = find_first(opts.mode, opts.restarts as u128, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        alternate(ms, k, &mut rng, opts).filter(|pp| verify_prob_parent(pp, ms, SEARCH_RESIDUAL).unwrap_or(false))
    });
    Ok(found.map(|(_, pp)| pp))
}

fn random_responses(ms: &MeasurementSet, k: usize, rng: &mut impl Rng) -> Vec<ResponseTable> {
    ms.measurements()
        .iter()
        .map(|p| ResponseTable {
            rows: (0..k)
                .map(|_| {
                    let raw: Vec<f64> = (0..p.outcomes()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / s).collect()
                })
                .collect(),
        })
        .collect()
}

/// One restart: alternate the two convex subproblems until the residual
/// drops below target or stops improving.
fn alternate(ms: &MeasurementSet, k: usize, rng: &mut impl Rng, opts: &ProbSearchOptions) -> Option<ProbabilisticParent> {
    let d = ms.dim();
    let mut responses = random_responses(ms, k, rng);
    let mut elements = vec![HermitianMatrix::identity(d).scale(1.0 / k as f64); k];
    let mut best: Option<(f64, ProbabilisticParent)> = None;
    let mut checkpoint = f64::INFINITY;
    let mut failures = 0;
    for round in 0..opts.max_rounds {
        match fit_elements(ms, &responses, &opts.sdp) {
            Some(e) => elements = e,
            None => failures += 1,
        }
        match fit_responses(ms, &elements, &opts.sdp) {
            Some(r) => responses = r,
            None => failures += 1,
        }
        if let Some(pp) = assemble(&elements, &responses) {
            let res = pp.residual(ms).ok()?;
            if res < SEARCH_RESIDUAL {
                return Some(pp);
            }
            if res < POLISH_FROM {
                if let Some(done) = polish(ms, &elements, &responses).filter(|q| q.residual(ms).is_ok_and(|r| r < SEARCH_RESIDUAL)) {
                    return Some(done);
                }
            }
            if best.as_ref().is_none_or(|(r, _)| res < *r) {
                best = Some((res, pp));
            }
        }
        if failures > 10 {
            break;
        }
        if round % 20 == 19 {
            let current = best.as_ref().map_or(f64::INFINITY, |(r, _)| *r);
            if current > 0.5 * checkpoint {
                break;
            }
            checkpoint = current;
        }
    }
    None
}

/// Residual below which Newton polishing is attempted.
const POLISH_FROM: f64 = 1e-3;
/// Eigenvalues below this are treated as exactly zero while polishing.
const SINGULAR: f64 = 1e-3;
/// Response entries below this are held at zero while polishing.
const PINNED: f64 = 1e-4;

/// Gauss-Newton on the bilinear equations `sum_l p_x(a|l) K_l = M_{a|x}`,
/// `sum_l K_l = I`, `sum_a p_x(a|l) = 1` with minimum-norm steps. The
/// interior-point subproblems lose accuracy once the residual is tiny,
/// which is where this converges fastest.
fn polish(ms: &MeasurementSet, elements: &[HermitianMatrix], responses: &[ResponseTable]) -> Option<ProbabilisticParent> {
    let d = ms.dim();
    let k = elements.len();
    let basis = HermitianBasis::new(d);
    let n = basis.len();
    let mut ks: Vec<RealVector> = elements.iter().map(|e| basis.vectorize(e)).collect::<Result<_>>().ok()?;
    let mut probs: Vec<Vec<Vec<f64>>> = responses.iter().map(|r| r.rows.clone()).collect();
    let mut free = Vec::new();
    for (x, table) in probs.iter().enumerate() {
        for (l, row) in table.iter().enumerate() {
            for (a, &v) in row.iter().enumerate() {
                if v >= PINNED {
                    free.push((x, l, a));
                }
            }
        }
    }
    for row in probs.iter_mut().flatten() {
        row.iter_mut().for_each(|v| if *v < PINNED { *v = 0.0 });
    }
    let targets: Vec<Vec<RealVector>> =
        ms.measurements().iter().map(|p| p.elements().iter().map(|m| basis.vectorize(m)).collect::<Result<_>>()).collect::<Result<_>>().ok()?;
    let identity = basis.vectorize(&HermitianMatrix::identity(d)).ok()?;
    let child_rows: Vec<usize> = ms.measurements().iter().map(|p| p.outcomes()).scan(0, |acc, o| {
        let start = *acc;
        *acc += o;
        Some(start)
    }).collect();
    let children: usize = ms.measurements().iter().map(|p| p.outcomes()).sum();
    // Near-singular eigenspaces are held singular: V^dagger K V = 0.
    let ranks: Vec<usize> = elements.iter().map(|e| e.eigenvalues().iter().filter(|&&v| v < SINGULAR).count()).collect();
    let sub_rows: Vec<usize> = ranks.iter().map(|r| r * r).collect();
    let rows = children * n + n + ms.len() * k + sub_rows.iter().sum::<usize>();
    let cols = free.len() + k * n;
    for _ in 0..30 {
        let mut r = RealVector::zeros(rows);
        for (x, t) in targets.iter().enumerate() {
            for (a, m) in t.iter().enumerate() {
                let off = (child_rows[x] + a) * n;
                let mut acc = -m.clone();
                for l in 0..k {
                    acc += &ks[l] * probs[x][l][a];
                }
                r.rows_mut(off, n).copy_from(&acc);
            }
        }
        let mut norm = -identity.clone();
        for kl in &ks {
            norm += kl;
        }
        r.rows_mut(children * n, n).copy_from(&norm);
        for x in 0..ms.len() {
            for l in 0..k {
                r[children * n + n + x * k + l] = probs[x][l].iter().sum::<f64>() - 1.0;
            }
        }
        let mut jac = DMatrix::<f64>::zeros(rows, cols);
        let mut row = children * n + n + ms.len() * k;
        for l in 0..k {
            let r_l = ranks[l];
            if r_l == 0 {
                continue;
            }
            let kl = basis.devectorize(ks[l].as_slice()).ok()?;
            let (_, vecs) = kl.eigh();
            let v = vecs.columns(0, r_l).into_owned();
            let compressed = HermitianMatrix::hermitian_part(&(v.adjoint() * kl.matrix() * &v));
            let small = HermitianBasis::new(r_l);
            let coords = small.vectorize(&compressed).ok()?;
            for j in 0..small.len() {
                r[row + j] = coords[j];
                let lifted = HermitianMatrix::hermitian_part(&(&v * small.element(j).matrix() * v.adjoint()));
                let grad = basis.vectorize(&lifted).ok()?;
                jac.view_mut((row + j, free.len() + l * n), (1, n)).copy_from(&grad.transpose());
            }
            row += small.len();
        }
        if r.amax() < 1e-14 {
            break;
        }
        for (c, &(x, l, a)) in free.iter().enumerate() {
            jac.view_mut(((child_rows[x] + a) * n, c), (n, 1)).copy_from(&ks[l]);
            jac[(children * n + n + x * k + l, c)] = 1.0;
        }
        for l in 0..k {
            let c0 = free.len() + l * n;
            for (x, table) in probs.iter().enumerate() {
                for (a, &p) in table[l].iter().enumerate() {
                    let row0 = (child_rows[x] + a) * n;
                    for j in 0..n {
                        jac[(row0 + j, c0 + j)] = p;
                    }
                }
            }
            for j in 0..n {
                jac[(children * n + j, c0 + j)] = 1.0;
            }
        }
        let step = jac.svd(true, true).solve(&(-r), 1e-12).ok()?;
        for (c, &(x, l, a)) in free.iter().enumerate() {
            probs[x][l][a] += step[c];
        }
        for (l, kl) in ks.iter_mut().enumerate() {
            *kl += step.rows(free.len() + l * n, n);
        }
    }
    let mut tables = Vec::with_capacity(probs.len());
    for table in probs {
        let mut rows = Vec::with_capacity(k);
        for row in table {
            if row.iter().any(|&v| v < -1e-12) {
                return None;
            }
            let clipped: Vec<f64> = row.iter().map(|v| v.max(0.0)).collect();
            let s: f64 = clipped.iter().sum();
            rows.push(clipped.into_iter().map(|v| v / s).collect());
        }
        tables.push(ResponseTable { rows });
    }
    let fitted: Vec<HermitianMatrix> = ks.iter().map(|c| basis.devectorize(c.as_slice())).collect::<Result<_>>().ok()?;
    if fitted.iter().any(|e| e.min_eigenvalue() < -1e-9) {
        return None;
    }
    assemble(&fitted, &tables)
}

/// Clips the elements to PSD, restores the normalization and checks the
/// result is a POVM.
fn assemble(elements: &[HermitianMatrix], responses: &[ResponseTable]) -> Option<ProbabilisticParent> {
    let d = elements[0].dim();
    let k = elements.len();
    let clipped: Vec<HermitianMatrix> = elements.iter().map(HermitianMatrix::psd_part).collect();
    let gap = &HermitianMatrix::identity(d) - &sum(d, &clipped);
    let fixed: Vec<HermitianMatrix> = clipped.iter().map(|e| e + &gap.scale(1.0 / k as f64)).collect();
    let parent = Povm::with_tol(fixed, 1e-9).ok()?;
    Some(ProbabilisticParent { parent, responses: responses.to_vec() })
}

/// Subproblems are only steps of a heuristic whose output is verified
/// separately, so a stalled but nearly feasible iterate is good enough.
fn usable(sol: SdpSolution) -> Option<SdpSolution> {
    (sol.is_optimal() || sol.residuals.primal < 1e-5 && sol.status != SolveStatus::PrimalInfeasible).then_some(sol)
}

/// Adds `-tI <= sum_l w_l K_l - M <= tI` for one child via two PSD slacks.
fn bound_residual(
    p: &mut SdpProblem,
    label: &str,
    target: &HermitianMatrix,
    t: ScalarId,
    blocks: Vec<(BlockId, f64)>,
    scalars: Vec<(ScalarId, HermitianMatrix)>,
) {
    let d = target.dim();
    let id = HermitianMatrix::identity(d);
    let up = p.add_block(format!("{label}+"), d);
    let down = p.add_block(format!("{label}-"), d);
    let mut b_up = blocks.clone();
    b_up.push((up, 1.0));
    let mut s_up = scalars.clone();
    s_up.push((t, -&id));
    p.add_matrix_equality(format!("{label} upper"), b_up, s_up, target.clone());
    let mut b_down: Vec<(BlockId, f64)> = blocks.into_iter().map(|(b, c)| (b, -c)).collect();
    b_down.push((down, 1.0));
    let mut s_down: Vec<(ScalarId, HermitianMatrix)> = scalars.into_iter().map(|(s, h)| (s, -&h)).collect();
    s_down.push((t, -&id));
    p.add_matrix_equality(format!("{label} lower"), b_down, s_down, -target);
}

/// Elements minimizing the worst reconstruction error for fixed responses.
fn fit_elements(ms: &MeasurementSet, responses: &[ResponseTable], sdp: &SolverOptions) -> Option<Vec<HermitianMatrix>> {
    let d = ms.dim();
    let k = responses[0].rows.len();
    let mut p = SdpProblem::new();
    let t = p.add_scalar("t", Sign::NonNeg);
    let ks: Vec<BlockId> = (0..k).map(|l| p.add_block(format!("K{l}"), d)).collect();
    p.add_matrix_equality("normalization", ks.iter().map(|&b| (b, 1.0)).collect(), vec![], HermitianMatrix::identity(d));
    for (x, povm) in ms.measurements().iter().enumerate() {
        for (a, m) in povm.elements().iter().enumerate() {
            let blocks = ks.iter().enumerate().map(|(l, &b)| (b, responses[x].rows[l][a])).filter(|&(_, c)| c != 0.0).collect();
            bound_residual(&mut p, &format!("x{x}a{a}"), m, t, blocks, vec![]);
        }
    }
    p.maximize(Objective { blocks: vec![], scalars: vec![(t, -1.0)] });
    let sol = usable(solve(&p, sdp).ok()?)?;
    Some(ks.iter().map(|&b| sol.block(b).clone()).collect())
}

/// Row-stochastic responses minimizing the worst reconstruction error for
/// fixed elements; one problem per measurement.
fn fit_responses(ms: &MeasurementSet, elements: &[HermitianMatrix], sdp: &SolverOptions) -> Option<Vec<ResponseTable>> {
    let k = elements.len();
    let mut tables = Vec::with_capacity(ms.len());
    for povm in ms.measurements() {
        let o = povm.outcomes();
        let mut p = SdpProblem::new();
        let t = p.add_scalar("t", Sign::NonNeg);
        let probs: Vec<Vec<ScalarId>> =
            (0..k).map(|l| (0..o).map(|a| p.add_scalar(format!("p{l}_{a}"), Sign::NonNeg)).collect()).collect();
        for (l, row) in probs.iter().enumerate() {
            p.add_scalar_equality(format!("row {l}"), vec![], row.iter().map(|&s| (s, 1.0)).collect(), 1.0);
        }
        for (a, m) in povm.elements().iter().enumerate() {
            let scalars = (0..k).map(|l| (probs[l][a], elements[l].clone())).collect();
            bound_residual(&mut p, &format!("a{a}"), m, t, vec![], scalars);
        }
        p.maximize(Objective { blocks: vec![], scalars: vec![(t, -1.0)] });
        let sol = usable(solve(&p, sdp).ok()?)?;

        let rows = probs
            .iter()
            .map(|row| {
                let raw: Vec<f64> = row.iter().map(|&s| sol.scalar(s).max(0.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        tables.push(ResponseTable { rows });
    }
    Some(tables)
}

/// `sum_l K_l`, for checks.
pub fn total(pp: &ProbabilisticParent) -> HermitianMatrix {
    sum(pp.parent.dim(), pp.parent.elements())
}
