//! Minimal parent size by exhaustive support enumeration, and a heuristic
//! hunt for maximally complex measurement sets.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::caratheodory::{ambient_dimension, reduce_parent_traced, ReduceOptions};
use crate::compat::{decide_with, CompatOptions, Verdict, Witness};
use crate::error::{Error, Result};
use crate::exec::{map_indices, ExecMode};
use crate::hermitian::HermitianMatrix;
use crate::povm::{MeasurementSet, OutcomeTuple, ParentPovm, Povm, Shape};
use crate::sdp::{self, Objective, Sign};

/// Default ceiling on the number of supports of one size.
pub const DEFAULT_SUPPORT_CAP: u128 = 100_000_000;

/// `n choose k`, saturating at `u128::MAX`.
pub fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        let Some(num) = acc.checked_mul(n - i) else {
            return u128::MAX;
        };
        acc = num / (i + 1);
    }
    acc
}

/// The `index`-th `k`-subset of `0..n` in lexicographic order.
pub fn unrank_combination(n: usize, k: usize, mut index: u128) -> Option<Vec<usize>> {
    if index >= binomial(n as u128, k as u128) {
        return None;
    }
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for i in 0..k {
        let mut c = next;
        loop {
            let count = binomial((n - c - 1) as u128, (k - i - 1) as u128);
            if index < count {
                break;
            }
            index -= count;
            c += 1;
        }
        out.push(c);
        next = c + 1;
    }
    Some(out)
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Lexicographic iterator over supports of one size, restartable at any
/// offset.
#[derive(Clone, Debug)]
pub struct SupportEnumerator {
    shape: Shape,
    current: Option<Vec<usize>>,
    index: u128,
    total: u128,
}

impl SupportEnumerator {
    pub fn total(&self) -> u128 {
        self.total
    }

    /// Index of the next support to be yielded.
    pub fn position(&self) -> u128 {
        self.index
    }
}

impl Iterator for SupportEnumerator {
    type Item = Vec<OutcomeTuple>;

    fn next(&mut self) -> Option<Self::Item> {
        let cur = self.current.as_mut()?;
        let out = cur.iter().map(|&i| self.shape.tuple_at(i)).collect();
        self.index += 1;
        if !next_combination(cur, self.shape.num_tuples()) {
            self.current = None;
        }
        Some(out)
    }
}

pub fn enumerate_supports(shape: &Shape, size: usize, offset: u128) -> Result<SupportEnumerator> {
    enumerate_supports_with_cap(shape, size, offset, DEFAULT_SUPPORT_CAP)
}

pub fn enumerate_supports_with_cap(shape: &Shape, size: usize, offset: u128, cap: u128) -> Result<SupportEnumerator> {
    let n = shape.num_tuples();
    if size == 0 || size > n {
        return Err(Error::InvalidArgument(format!("support size {size} outside 1..={n}")));
    }
    let total = binomial(n as u128, size as u128);
    if total > cap {
        return Err(Error::SupportCountOverflow { count: total, cap });
    }
    Ok(SupportEnumerator { shape: shape.clone(), current: unrank_combination(n, size, offset), index: offset, total })
}

/// The `index`-th support of the given size.
pub fn support_at(shape: &Shape, size: usize, index: u128) -> Option<Vec<OutcomeTuple>> {
    unrank_combination(shape.num_tuples(), size, index).map(|c| c.into_iter().map(|i| shape.tuple_at(i)).collect())
}

/// Multi-process split: this process handles indices `i` with
/// `i % count == index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub index: u64,
    pub count: u64,
}

impl Shard {
    /// Parses `K/N` with `1 <= K <= N`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("shard must look like K/N with 1 <= K <= N, got {s:?}"));
        let (k, n) = s.split_once('/').ok_or_else(bad)?;
        let k: u64 = k.trim().parse().map_err(|_| bad())?;
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        if k == 0 || n == 0 || k > n {
            return Err(bad());
        }
        Ok(Self { index: k - 1, count: n })
    }

    pub fn owns(&self, i: u128) -> bool {
        i % self.count as u128 == self.index as u128
    }
}

/// One line of the progress stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub size: usize,
    pub index: u128,
    pub verdict: Verdict,
}

pub type ProgressSink = Arc<dyn Fn(&ProgressEvent) + Send + Sync>;

#[derive(Clone)]
pub struct SearchOptions {
    pub lower: usize,
    pub upper: usize,
    pub mode: ExecMode,
    pub shard: Option<Shard>,
    pub compat: CompatOptions,
    pub cap: u128,
    /// Resume point `(size, offset)`; sizes below are skipped.
    pub resume: Option<(usize, u128)>,
    pub progress: Option<ProgressSink>,
    /// Supports solved per parallel batch.
    pub batch: usize,
}

impl SearchOptions {
    pub fn new(lower: usize, upper: usize) -> Self {
        Self {
            lower,
            upper,
            mode: ExecMode::default(),
            shard: None,
            compat: CompatOptions::default(),
            cap: DEFAULT_SUPPORT_CAP,
            resume: None,
            progress: None,
            batch: 256,
        }
    }
}

/// Outcome of one support of the size just below the minimum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportCertificate {
    pub support: Vec<OutcomeTuple>,
    pub witness: Option<Witness>,
    pub value: Option<f64>,
    /// Set when no verified witness is available.
    pub diagnostics: Option<String>,
}

impl SupportCertificate {
    pub fn is_certified(&self) -> bool {
        self.witness.is_some()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub min_size: usize,
    pub witness_parent: ParentPovm,
    /// Every support of size `min_size - 1` tested by this run.
    pub infeasibility_certificates: Vec<SupportCertificate>,
    pub supports_tested: u128,
    /// All size `min_size - 1` supports carry verified witnesses (or
    /// `min_size == 1`).
    pub rigorous: bool,
    pub lower: usize,
    pub upper: usize,
}

impl ComplexityReport {
    pub fn indeterminate_count(&self) -> usize {
        self.infeasibility_certificates.iter().filter(|c| !c.is_certified()).count()
    }
}

/// Rigorous lower bound: every nonzero element needs a tuple responding to it.
pub fn trivial_lower_bound(ms: &MeasurementSet) -> usize {
    ms.measurements()
        .iter()
        .map(|p| p.elements().iter().filter(|e| e.trace() > crate::povm::VANISHING_TRACE).count())
        .max()
        .unwrap_or(1)
        .max(1)
}

/// Upper bound from a compatible parent reduced greedily.
pub fn reduction_upper_bound(ms: &MeasurementSet, opts: &CompatOptions) -> Result<(usize, ParentPovm)> {
    let v = decide_with(ms, None, opts)?;
    let parent = v.parent.ok_or_else(|| {
        Error::InvalidArgument(format!("input is not certified compatible: {:?} {}", v.verdict, v.diagnostics.unwrap_or_default()))
    })?;
    // the solver's parent matches `ms` only to the verdict tolerance; its own
    // marginals are exact, and the bound is re-checked by the scan anyway
    let (reduced, _) = reduce_parent_traced(&parent.marginals(), &parent, ReduceOptions { greedy: true })?;
    Ok((reduced.support_size(), reduced))
}

pub fn min_parent_size(ms: &MeasurementSet, lower: usize, upper: usize) -> Result<ComplexityReport> {
    min_parent_size_with(ms, &SearchOptions::new(lower, upper))
}

enum Outcome {
    Feasible(ParentPovm),
    Infeasible(Witness, f64),
    Unknown(String),
}

pub fn min_parent_size_with(ms: &MeasurementSet, opts: &SearchOptions) -> Result<ComplexityReport> {
    let shape = ms.shape();
    let limit = shape.num_tuples().min(ambient_dimension(&shape));
    if opts.lower < 1 || opts.lower > opts.upper || opts.upper > limit {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= lower <= upper <= {limit}, got lower={} upper={}",
            opts.lower, opts.upper
        )));
    }
    let n = shape.num_tuples();
    let mut tested: u128 = 0;
    let mut previous: Option<Vec<SupportCertificate>> = None;
    let first = opts.resume.map(|(s, _)| s.max(opts.lower)).unwrap_or(opts.lower);
    for size in first..=opts.upper {
        let total = binomial(n as u128, size as u128);
        if total > opts.cap {
            return Err(Error::SupportCountOverflow { count: total, cap: opts.cap });
        }
        let mut start = match opts.resume {
            Some((s, off)) if s == size => off,
            _ => 0,
        };
        let mut certs = Vec::new();
        let mut found = None;
        while start < total && found.is_none() {
            let len = (total - start).min(opts.batch.max(1) as u128) as usize;
            let results = map_indices(opts.mode, len, |i| {
                let idx = start + i as u128;
                if let Some(sh) = opts.shard {
                    if !sh.owns(idx) {
                        return None;
                    }
                }
                let support = support_at(&shape, size, idx).expect("index below total");
                let outcome = match decide_with(ms, Some(&support), &opts.compat) {
                    Ok(v) => match v.verdict {
                        Verdict::Compatible => Outcome::Feasible(v.parent.expect("compatible carries a parent")),
                        Verdict::Incompatible => {
                            Outcome::Infeasible(v.witness.expect("incompatible carries a witness"), v.witness_value.unwrap_or(f64::NAN))
                        }
                        Verdict::Indeterminate => Outcome::Unknown(v.diagnostics.unwrap_or_default()),
                    },
                    Err(e) => Outcome::Unknown(e.to_string()),
                };
                Some((idx, support, outcome))
            });
            for (idx, support, outcome) in results.into_iter().flatten() {
                tested += 1;
                let verdict = match &outcome {
                    Outcome::Feasible(_) => Verdict::Compatible,
                    Outcome::Infeasible(..) => Verdict::Incompatible,
                    Outcome::Unknown(_) => Verdict::Indeterminate,
                };
                if let Some(sink) = &opts.progress {
                    sink(&ProgressEvent { size, index: idx, verdict });
                }
                match outcome {
                    Outcome::Feasible(p) => {
                        found = Some(p);
                        break;
                    }
                    Outcome::Infeasible(w, v) => {
                        certs.push(SupportCertificate { support, witness: Some(w), value: Some(v), diagnostics: None })
                    }
                    Outcome::Unknown(msg) => {
                        certs.push(SupportCertificate { support, witness: None, value: None, diagnostics: Some(msg) })
                    }
                }
            }
            start += len as u128;
        }
        if let Some(parent) = found {
            let infeasibility_certificates = if size > opts.lower { previous.unwrap_or_default() } else { Vec::new() };
            let complete = size > opts.lower
                && infeasibility_certificates.len() as u128 == binomial(n as u128, size as u128 - 1)
                && infeasibility_certificates.iter().all(|c| c.is_certified());
            return Ok(ComplexityReport {
                min_size: size,
                witness_parent: parent,
                infeasibility_certificates,
                supports_tested: tested,
                rigorous: size == 1 || complete,
                lower: opts.lower,
                upper: opts.upper,
            });
        }
        previous = Some(certs);
    }
    Err(Error::AllSizesInfeasible { lower: opts.lower, upper: opts.upper })
}

/// Haar-random projective measurement with `o` outcomes on `C^d`
/// (`o <= d`; basis vectors are dealt round-robin to the outcomes).
pub fn random_projective(d: usize, o: usize, rng: &mut impl Rng) -> Result<Povm> {
    if o == 0 || o > d {
        return Err(Error::InvalidArgument(format!("projective measurement needs 1 <= o <= d, got o={o} d={d}")));
    }
    let u = crate::boundary::haar_unitary(d, rng);
    let mut els = vec![HermitianMatrix::zeros(d); o];
    for k in 0..d {
        let col = u.column(k).into_owned();
        els[k % o] += &HermitianMatrix::outer(&col);
    }
    Povm::with_tol(els, 1e-9)
}

/// `t P_a + (1 - t) tr(P_a)/d I` for every element.
pub fn with_white_noise(ms: &MeasurementSet, t: f64) -> Result<MeasurementSet> {
    let d = ms.dim();
    let id = HermitianMatrix::identity(d);
    let povms = ms
        .measurements()
        .iter()
        .map(|p| {
            let els = p.elements().iter().map(|e| &e.scale(t) + &id.scale((1.0 - t) * e.trace() / d as f64)).collect();
            Povm::with_tol(els, 1e-9)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(povms)
}

/// Largest `t` in `[0, 1]` for which [`with_white_noise`] is compatible.
pub fn critical_visibility(ms: &MeasurementSet, sdp_opts: &sdp::SolverOptions) -> Result<f64> {
    let shape = ms.shape();
    let d = shape.dim;
    let mut p = sdp::SdpProblem::new();
    let t = p.add_scalar("t", Sign::NonNeg);
    let slack = p.add_scalar("slack", Sign::NonNeg);
    let tuples = shape.tuples();
    let blocks: Vec<_> = tuples.iter().map(|tp| p.add_block(format!("C{tp}"), d)).collect();
    let id = HermitianMatrix::identity(d);
    for (x, &o) in shape.outcomes.iter().enumerate() {
        for a in 0..o - 1 {
            let e = ms.element(a, x);
            let noise = id.scale(e.trace() / d as f64);
            let terms = tuples.iter().zip(&blocks).filter(|(tp, _)| tp.responds(x, a)).map(|(_, &b)| (b, 1.0)).collect();
            // sum C = t E + (1 - t) tr(E)/d I
            p.add_matrix_equality(format!("x={x} a={a}"), terms, vec![(t, &noise - e)], noise);
        }
    }
    p.add_matrix_equality("norm", blocks.iter().map(|&b| (b, 1.0)).collect(), vec![], id);
    p.add_scalar_equality("t<=1", vec![], vec![(t, 1.0), (slack, 1.0)], 1.0);
    p.maximize(Objective { blocks: vec![], scalars: vec![(t, 1.0)] });
    let sol = sdp::solve(&p, sdp_opts)?;
    if !sol.is_optimal() {
        return Err(Error::Solver(format!("critical visibility SDP ended with {:?}", sol.status)));
    }
    Ok(sol.scalar(t).clamp(0.0, 1.0))
}

/// Where [`search_max_complexity`] draws candidates from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateKind {
    NoisyProjective,
    Boundary,
}

#[derive(Clone, Debug)]
pub struct MaxComplexityOptions {
    pub attempts: usize,
    pub mode: ExecMode,
    pub compat: CompatOptions,
    /// Relative step back from the critical visibility.
    pub margin: f64,
}

impl Default for MaxComplexityOptions {
    fn default() -> Self {
        Self { attempts: 20, mode: ExecMode::default(), compat: CompatOptions::default(), margin: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct MaxComplexityHit {
    pub measurements: MeasurementSet,
    pub report: ComplexityReport,
    pub attempt: usize,
    pub kind: CandidateKind,
}

pub fn search_max_complexity(shape: &Shape, attempts: usize, rng: &mut impl Rng) -> Result<Option<MeasurementSet>> {
    let opts = MaxComplexityOptions { attempts, ..Default::default() };
    Ok(search_max_complexity_with(shape, &opts, rng)?.map(|h| h.measurements))
}

/// Tries noise-scaled Haar projective sets at their critical visibility
/// and, when `o_x = d` for all `x`, boundary-sampler points; returns the
/// first candidate whose every support of size `prod o_x - 1` is certified
/// infeasible.
pub fn search_max_complexity_with(shape: &Shape, opts: &MaxComplexityOptions, rng: &mut impl Rng) -> Result<Option<MaxComplexityHit>> {
    let full = shape.num_tuples();
    let bound = ambient_dimension(shape);
    if full > bound {
        return Err(Error::ShapeExcluded(format!(
            "{} tuples exceed the bound {bound}; no set of shape {} can need them all",
            full,
            shape.dmo()
        )));
    }
    let boundary_ok = shape.outcomes.iter().all(|&o| o == shape.dim);
    for attempt in 0..opts.attempts {
        let kind = if boundary_ok && attempt % 2 == 1 { CandidateKind::Boundary } else { CandidateKind::NoisyProjective };
        let candidate = match kind {
            CandidateKind::NoisyProjective => {
                let povms = shape
                    .outcomes
                    .iter()
                    .map(|&o| {
                        if o <= shape.dim {
                            random_projective(shape.dim, o, rng)
                        } else {
                            Ok(crate::random::random_povm(shape.dim, o, rng))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let ms = MeasurementSet::new(povms)?;
                let t = critical_visibility(&ms, &opts.compat.sdp)?;
                with_white_noise(&ms, t * (1.0 - opts.margin))?
            }
            CandidateKind::Boundary => {
                let seed: u64 = rng.random();
                let cfg = crate::boundary::SamplerConfig { mode: ExecMode::Sequential, ..Default::default() };
                match crate::boundary::sample_point(shape, seed, 0, &cfg) {
                    Ok(p) => p.measurements,
                    Err(_) => continue,
                }
            }
        };
        let mut sopts = SearchOptions::new(full - 1, full);
        sopts.mode = opts.mode;
        sopts.compat = opts.compat;
        match min_parent_size_with(&candidate, &sopts) {
            Ok(report) if report.min_size == full && report.rigorous => {
                return Ok(Some(MaxComplexityHit { measurements: candidate, report, attempt, kind }));
            }
            _ => continue,
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 3), 4);
        assert_eq!(binomial(8, 7), 8);
        assert_eq!(binomial(32, 16), 601_080_390);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(200, 100), u128::MAX);
    }

    #[test]
    fn enumeration_counts_and_order() {
        let s = Shape::uniform(2, 2, 2).unwrap();
        assert_eq!(enumerate_supports(&s, 3, 0).unwrap().count(), 4);
        assert_eq!(enumerate_supports(&s, 4, 0).unwrap().count(), 1);
        let q = Shape::uniform(3, 3, 2).unwrap();
        let all: Vec<_> = enumerate_supports(&q, 7, 0).unwrap().collect();
        assert_eq!(all.len(), 8);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        let tail: Vec<_> = enumerate_supports(&q, 7, 5).unwrap().collect();
        assert_eq!(tail, all[5..].to_vec());
        let s5 = Shape::uniform(2, 5, 2).unwrap();
        assert!(matches!(enumerate_supports_with_cap(&s5, 16, 0, 1000), Err(Error::SupportCountOverflow { .. })));
    }

    #[test]
    fn unranking_matches_iteration() {
        let n = 9;
        for k in 1..=n {
            let mut c: Vec<usize> = (0..k).collect();
            let mut idx = 0u128;
            loop {
                assert_eq!(unrank_combination(n, k, idx).unwrap(), c);
                idx += 1;
                if !next_combination(&mut c, n) {
                    break;
                }
            }
            assert_eq!(idx, binomial(n as u128, k as u128));
            assert!(unrank_combination(n, k, idx).is_none());
        }
    }

    #[test]
    fn shards_partition_indices() {
        let a = Shard::parse("1/3").unwrap();
        let b = Shard::parse("3/3").unwrap();
        assert!(a.owns(0) && a.owns(3) && !a.owns(1));
        assert!(b.owns(2));
        assert!(Shard::parse("0/3").is_err());
        assert!(Shard::parse("4/3").is_err());
        assert!(Shard::parse("x").is_err());
    }

    #[test]
    fn noisy_pauli_needs_four() {
        let ms = example_noisy_pauli(CRITICAL_ETA - 1e-3).unwrap();
        let r = min_parent_size(&ms, 1, 4).unwrap();
        assert_eq!(r.min_size, 4);
        assert_eq!(r.infeasibility_certificates.len(), 4);
        assert!(r.rigorous);
        assert!(r.witness_parent.marginal_deviation(&ms) < 1e-6);
    }

    #[test]
    fn trine_needs_three() {
        let ms = example_trine();
        let r = min_parent_size(&ms, 2, 3).unwrap();
        assert_eq!(r.min_size, 3);
        assert_eq!(r.infeasibility_certificates.len(), 28);
        assert!(r.rigorous);
    }

    #[test]
    fn modes_agree_on_winner() {
        let ms = example_trine();
        let mut o = SearchOptions::new(3, 3);
        o.mode = ExecMode::Sequential;
        let a = min_parent_size_with(&ms, &o).unwrap();
        o.mode = ExecMode::Parallel;
        o.batch = 7;
        let b = min_parent_size_with(&ms, &o).unwrap();
        assert_eq!(a.witness_parent.support(), b.witness_parent.support());
        assert_eq!(a.supports_tested, b.supports_tested);
    }

    #[test]
    fn bad_bounds_and_incompatible_input() {
        let ms = example_noisy_pauli(0.5).unwrap();
        assert!(min_parent_size(&ms, 0, 3).is_err());
        assert!(min_parent_size(&ms, 3, 2).is_err());
        assert!(min_parent_size(&ms, 1, 5).is_err());
        let bad = example_noisy_pauli(0.9).unwrap();
        assert!(matches!(min_parent_size(&bad, 1, 4), Err(Error::AllSizesInfeasible { .. })));
    }

    #[test]
    fn lower_and_upper_bounds() {
        let ms = example_noisy_pauli(0.5).unwrap();
        assert_eq!(trivial_lower_bound(&ms), 2);
        let (up, parent) = reduction_upper_bound(&ms, &CompatOptions::default()).unwrap();
        assert!((2..=4).contains(&up));
        assert!(parent.marginal_deviation(&ms) < 1e-6);
    }

    #[test]
    fn excluded_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = Shape::uniform(2, 5, 2).unwrap();
        assert!(matches!(search_max_complexity(&s, 3, &mut rng), Err(Error::ShapeExcluded(_))));
    }

    #[test]
    fn white_noise_visibility_of_pauli_pair() {
        let ms = example_noisy_pauli(1.0).unwrap();
        let t = critical_visibility(&ms, &sdp::SolverOptions::default()).unwrap();
        assert!((t - CRITICAL_ETA).abs() < 1e-6, "{t}");
    }

    #[test]
    fn finds_maximally_complex_qubit_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = Shape::uniform(2, 2, 2).unwrap();
        let ms = search_max_complexity(&s, 10, &mut rng).unwrap().expect("found within budget");
        let r = min_parent_size(&ms, 3, 4).unwrap();
        assert_eq!(r.min_size, 4);
    }
}
