//! Measurement data model: POVMs, measurement sets, canonical parents,
//! partition-generated children and marginals.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, DEFAULT_TOL};

/// Elements with trace below this are treated as vanishing.
pub const VANISHING_TRACE: f64 = 1e-9;
/// Default cap on the parent outcome count for partition enumeration.
pub const DEFAULT_PARTITION_CAP: usize = 8;

/// A finite-outcome POVM.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<HermitianMatrix>,
}

impl Povm {
    /// Validates PSD elements summing to the identity within [`DEFAULT_TOL`].
    pub fn new(elements: Vec<HermitianMatrix>) -> Result<Self> {
        Self::with_tol(elements, DEFAULT_TOL)
    }

    pub fn with_tol(elements: Vec<HermitianMatrix>, tol: f64) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::InvalidPovm("no elements".into()));
        };
        let d = first.dim();
        for (a, e) in elements.iter().enumerate() {
            if e.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: e.dim() });
            }
            let min = e.min_eigenvalue();
            if min < -tol {
                return Err(Error::InvalidPovm(format!("element {a} has eigenvalue {min:.3e}")));
            }
        }
        let dev = crate::hermitian::sum(d, &elements).max_abs_diff(&HermitianMatrix::identity(d));
        if dev > tol {
            return Err(Error::InvalidPovm(format!("elements sum to identity only within {dev:.3e}")));
        }
        Ok(Self { elements })
    }

    /// The single-outcome POVM `{I}`.
    pub fn trivial(d: usize) -> Self {
        Self { elements: vec![HermitianMatrix::identity(d)] }
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn element(&self, a: usize) -> &HermitianMatrix {
        &self.elements[a]
    }

    pub fn max_abs_diff(&self, other: &Povm) -> f64 {
        if self.outcomes() != other.outcomes() || self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.elements.iter().zip(&other.elements).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }
}

impl Serialize for Povm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.elements.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Povm::new(Vec::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// Dimension and per-measurement outcome counts `(d, o_1, .., o_m)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub dim: usize,
    pub outcomes: Vec<usize>,
}

impl Shape {
    pub fn new(dim: usize, outcomes: Vec<usize>) -> Result<Self> {
        if dim == 0 || outcomes.is_empty() || outcomes.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid shape d={dim}, outcomes={outcomes:?}")));
        }
        Ok(Self { dim, outcomes })
    }

    /// `m` measurements of `o` outcomes each.
    pub fn uniform(dim: usize, m: usize, o: usize) -> Result<Self> {
        Self::new(dim, vec![o; m])
    }

    pub fn num_measurements(&self) -> usize {
        self.outcomes.len()
    }

    /// `prod_x o_x`.
    pub fn num_tuples(&self) -> usize {
        self.outcomes.iter().product()
    }

    /// Tuple for a lexicographic index (first entry most significant).
    pub fn tuple_at(&self, mut index: usize) -> OutcomeTuple {
        let mut entries = vec![0; self.outcomes.len()];
        for (x, &o) in self.outcomes.iter().enumerate().rev() {
            entries[x] = index % o;
            index /= o;
        }
        OutcomeTuple(entries)
    }

    pub fn index_of(&self, t: &OutcomeTuple) -> usize {
        t.0.iter().zip(&self.outcomes).fold(0, |acc, (&a, &o)| acc * o + a)
    }

    /// All tuples in lexicographic order.
    pub fn tuples(&self) -> Vec<OutcomeTuple> {
        (0..self.num_tuples()).map(|i| self.tuple_at(i)).collect()
    }

    pub fn contains(&self, t: &OutcomeTuple) -> bool {
        t.0.len() == self.outcomes.len() && t.0.iter().zip(&self.outcomes).all(|(&a, &o)| a < o)
    }

    /// Display form `d,o1,..,om` (e.g. `2,2,2`), or `(d,m,o)` notation via [`Shape::dmo`].
    pub fn dmo(&self) -> String {
        let o0 = self.outcomes[0];
        if self.outcomes.iter().all(|&o| o == o0) {
            format!("({},{},{})", self.dim, self.outcomes.len(), o0)
        } else {
            format!("(d={}, o={:?})", self.dim, self.outcomes)
        }
    }
}

/// Outcome tuple `(a_1, .., a_m)` labelling a canonical parent element.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeTuple(pub Vec<usize>);

impl OutcomeTuple {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Deterministic response `D_a(a|x) = [a_x == a]`.
    pub fn responds(&self, x: usize, a: usize) -> bool {
        self.0[x] == a
    }

    pub fn get(&self, x: usize) -> usize {
        self.0[x]
    }
}

impl fmt::Display for OutcomeTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.0 {
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// A collection of `m >= 1` POVMs on a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    dim: usize,
    measurements: Vec<Povm>,
}

impl MeasurementSet {
    pub fn new(measurements: Vec<Povm>) -> Result<Self> {
        let Some(first) = measurements.first() else {
            return Err(Error::InvalidArgument("measurement set needs at least one POVM".into()));
        };
        let dim = first.dim();
        if let Some(p) = measurements.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
        }
        Ok(Self { dim, measurements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn measurements(&self) -> &[Povm] {
        &self.measurements
    }

    pub fn measurement(&self, x: usize) -> &Povm {
        &self.measurements[x]
    }

    /// `M_{a|x}`.
    pub fn element(&self, a: usize, x: usize) -> &HermitianMatrix {
        self.measurements[x].element(a)
    }

    pub fn shape(&self) -> Shape {
        Shape { dim: self.dim, outcomes: self.measurements.iter().map(Povm::outcomes).collect() }
    }

    pub fn max_abs_diff(&self, other: &MeasurementSet) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.measurements.iter().zip(&other.measurements).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct MeasurementSetJson {
    dim: usize,
    measurements: Vec<Vec<HermitianMatrix>>,
}

impl Serialize for MeasurementSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasurementSetJson {
            dim: self.dim,
            measurements: self.measurements.iter().map(|p| p.elements.clone()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasurementSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MeasurementSetJson::deserialize(d)?;
        let povms = raw.measurements.into_iter().map(Povm::new).collect::<Result<Vec<_>>>().map_err(D::Error::custom)?;
        let ms = MeasurementSet::new(povms).map_err(D::Error::custom)?;
        if ms.dim != raw.dim {
            return Err(D::Error::custom(format!("declared dim {} but matrices have dim {}", raw.dim, ms.dim)));
        }
        Ok(ms)
    }
}

/// Canonical parent `{C_a}` over outcome tuples; tuples absent from the map
/// are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ParentPovm {
    shape: Shape,
    elements: BTreeMap<OutcomeTuple, HermitianMatrix>,
}

impl ParentPovm {
    /// Validates the parent: drops vanishing elements (trace below
    /// [`VANISHING_TRACE`]), then checks PSD and normalization within `tol`.
    pub fn new(shape: Shape, elements: impl IntoIterator<Item = (OutcomeTuple, HermitianMatrix)>, tol: f64) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (t, c) in elements {
            if !shape.contains(&t) {
                return Err(Error::InvalidParent(format!("tuple {t:?} outside shape {:?}", shape.outcomes)));
            }
            if c.dim() != shape.dim {
                return Err(Error::DimensionMismatch { expected: shape.dim, found: c.dim() });
            }
            if c.trace() < VANISHING_TRACE {
                continue;
            }
            let min = c.min_eigenvalue();
            if min < -tol {
                return Err(Error::InvalidParent(format!("element {t} has eigenvalue {min:.3e}")));
            }
            if map.insert(t.clone(), c).is_some() {
                return Err(Error::InvalidParent(format!("duplicate tuple {t}")));
            }
        }
        if map.is_empty() {
            return Err(Error::InvalidParent("no non-vanishing elements".into()));
        }
        let dev = crate::hermitian::sum(shape.dim, map.values()).max_abs_diff(&HermitianMatrix::identity(shape.dim));
        if dev > tol {
            return Err(Error::InvalidParent(format!("elements sum to identity only within {dev:.3e}")));
        }
        Ok(Self { shape, elements: map })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    /// Support size `|O(C)|`.
    pub fn support_size(&self) -> usize {
        self.elements.len()
    }

    pub fn support(&self) -> Vec<OutcomeTuple> {
        self.elements.keys().cloned().collect()
    }

    pub fn get(&self, t: &OutcomeTuple) -> Option<&HermitianMatrix> {
        self.elements.get(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutcomeTuple, &HermitianMatrix)> {
        self.elements.iter()
    }

    /// Marginal POVM for measurement `x`: `sum over a with a_x = a of C_a`.
    pub fn marginal(&self, x: usize) -> Povm {
        let o = self.shape.outcomes[x];
        let mut els = vec![HermitianMatrix::zeros(self.dim()); o];
        for (t, c) in &self.elements {
            els[t.get(x)] += c;
        }
        Povm { elements: els }
    }

    /// All marginals as a measurement set.
    pub fn marginals(&self) -> MeasurementSet {
        let povms = (0..self.shape.num_measurements()).map(|x| self.marginal(x)).collect();
        MeasurementSet { dim: self.dim(), measurements: povms }
    }

    /// Largest entrywise deviation between the marginals and `ms`.
    pub fn marginal_deviation(&self, ms: &MeasurementSet) -> f64 {
        if ms.shape() != self.shape {
            return f64::INFINITY;
        }
        self.marginals().max_abs_diff(ms)
    }

    /// The parent as a plain POVM in support order, with deterministic
    /// responses `p_x(a|lambda) = [a = a_x]`.
    pub fn to_povm_with_responses(&self) -> (Povm, Vec<ResponseTable>) {
        let els: Vec<HermitianMatrix> = self.elements.values().cloned().collect();
        let responses = (0..self.shape.num_measurements())
            .map(|x| {
                let o = self.shape.outcomes[x];
                ResponseTable {
                    rows: self
                        .elements
                        .keys()
                        .map(|t| (0..o).map(|a| if t.get(x) == a { 1.0 } else { 0.0 }).collect())
                        .collect(),
                }
            })
            .collect();
        (Povm { elements: els }, responses)
    }
}

#[derive(Serialize, Deserialize)]
struct ParentEntryJson {
    tuple: OutcomeTuple,
    element: HermitianMatrix,
}

#[derive(Serialize, Deserialize)]
struct ParentJson {
    dim: usize,
    outcomes: Vec<usize>,
    elements: Vec<ParentEntryJson>,
}

impl Serialize for ParentPovm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParentJson {
            dim: self.shape.dim,
            outcomes: self.shape.outcomes.clone(),
            elements: self
                .elements
                .iter()
                .map(|(t, c)| ParentEntryJson { tuple: t.clone(), element: c.clone() })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParentPovm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ParentJson::deserialize(d)?;
        let shape = Shape::new(raw.dim, raw.outcomes).map_err(D::Error::custom)?;
        ParentPovm::new(shape, raw.elements.into_iter().map(|e| (e.tuple, e.element)), DEFAULT_TOL)
            .map_err(D::Error::custom)
    }
}

/// Conditional distribution `p_x(a|lambda)`: one row per parent outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseTable {
    pub rows: Vec<Vec<f64>>,
}

impl ResponseTable {
    /// Checks each row is a probability distribution over `outcomes` values.
    pub fn validate(&self, parent_outcomes: usize, outcomes: usize) -> Result<()> {
        if self.rows.len() != parent_outcomes {
            return Err(Error::InvalidDistribution(format!(
                "{} rows for {parent_outcomes} parent outcomes",
                self.rows.len()
            )));
        }
        for (l, row) in self.rows.iter().enumerate() {
            if row.len() != outcomes {
                return Err(Error::InvalidDistribution(format!("row {l} has {} entries, expected {outcomes}", row.len())));
            }
            if row.iter().any(|&p| !(-1e-12..=1.0 + 1e-12).contains(&p)) {
                return Err(Error::InvalidDistribution(format!("row {l} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!("row {l} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Deterministic table sending parent outcome `l` to `map[l]`.
    pub fn deterministic(map: &[usize], outcomes: usize) -> Self {
        Self { rows: map.iter().map(|&a| (0..outcomes).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect() }
    }
}

/// Canonical parent `C_a = sum_lambda prod_x p_x(a_x|lambda) K_lambda`.
///
/// Tuples whose element vanishes are dropped from the support.
pub fn canonicalize(parent: &Povm, responses: &[ResponseTable]) -> Result<ParentPovm> {
    let k = parent.outcomes();
    let outcomes: Vec<usize> = responses.iter().map(|r| r.rows.first().map_or(0, Vec::len)).collect();
    for r in responses {
        r.validate(k, r.rows.first().map_or(0, Vec::len))?;
    }
    let shape = Shape::new(parent.dim(), outcomes)?;
    let mut acc: BTreeMap<OutcomeTuple, HermitianMatrix> = BTreeMap::new();
    for (l, kl) in parent.elements().iter().enumerate() {
        // enumerate tuples with non-zero weight for this lambda only
        let mut partial: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        for r in responses {
            let mut next = Vec::new();
            for (prefix, w) in &partial {
                for (a, &p) in r.rows[l].iter().enumerate() {
                    if p > 0.0 {
                        let mut t = prefix.clone();
                        t.push(a);
                        next.push((t, w * p));
                    }
                }
            }
            partial = next;
        }
        for (t, w) in partial {
            let term = kl.scale(w);
            acc.entry(OutcomeTuple(t)).and_modify(|c| *c += &term).or_insert(term);
        }
    }
    ParentPovm::new(shape, acc, DEFAULT_TOL)
}

/// A set partition of `{0..n-1}` into non-empty disjoint blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &i in b {
                if i >= n {
                    return Err(Error::InvalidPartition(format!("index {i} outside 0..{n}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidPartition(format!("index {i} appears twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("index {i} not covered")));
        }
        Ok(Self { blocks })
    }

    /// Partition whose block labels are given by a restricted growth string.
    pub fn from_rgs(rgs: &[usize]) -> Self {
        let nb = rgs.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); nb];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn ground_size(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block index of every ground element.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.ground_size()];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block {
                out[i] = b;
            }
        }
        out
    }
}

/// All restricted growth strings of length `n` in lexicographic order.
///
/// The string `r` satisfies `r[0] = 0` and `r[i] <= 1 + max(r[..i])`; it
/// labels the block of each element, so each set partition appears once.
pub fn restricted_growth_strings(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for b in 0..=max + 1 {
            prefix.push(b);
            rec(prefix, max.max(b), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut prefix = vec![0];
    rec(&mut prefix, 0, n, &mut out);
    out
}

/// Child POVM whose element per block sums the parent elements in that block.
pub fn child_from_partition(parent: &Povm, partition: &Partition) -> Result<Povm> {
    if partition.ground_size() != parent.outcomes() {
        return Err(Error::InvalidPartition(format!(
            "partition of {} elements for a parent with {} outcomes",
            partition.ground_size(),
            parent.outcomes()
        )));
    }
    let d = parent.dim();
    let elements = partition
        .blocks()
        .iter()
        .map(|b| crate::hermitian::sum(d, b.iter().map(|&i| parent.element(i))))
        .collect();
    Ok(Povm { elements })
}

/// One child per non-trivial partition of the parent's outcomes, in
/// restricted-growth-string order; `B_o - 2` children in total.
pub fn enumerate_partition_children(parent: &Povm, cap: usize) -> Result<Vec<Povm>> {
    let o = parent.outcomes();
    if o > cap {
        return Err(Error::EnumerationCap { outcomes: o, cap });
    }
    if o < 2 {
        return Err(Error::InvalidArgument("parent needs at least 2 outcomes".into()));
    }
    restricted_growth_strings(o)
        .into_iter()
        .filter(|r| {
            let nb = r.iter().max().map_or(0, |m| m + 1);
            nb != 1 && nb != o
        })
        .map(|r| child_from_partition(parent, &Partition::from_rgs(&r)))
        .collect()
}

/// Bell numbers `B_0..=B_n` from the Bell triangle.
pub fn bell_numbers(n: usize) -> Vec<u64> {
    let mut out = vec![1u64];
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        out.push(next[0]);
        row = next;
    }
    out.truncate(n + 1);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use proptest::prelude::*;

    #[test]
    fn bell_recurrence() {
        assert_eq!(bell_numbers(8), vec![1, 1, 2, 5, 15, 52, 203, 877, 4140]);
    }

    #[test]
    fn rgs_counts_match_bell() {
        let bell = bell_numbers(8);
        for n in 0..=8 {
            assert_eq!(restricted_growth_strings(n).len() as u64, bell[n]);
        }
    }

    #[test]
    fn trine_partition_children() {
        let k = catalog::trine_povm();
        let l = child_from_partition(&k, &Partition::new(vec![vec![0], vec![1, 2]], 3).unwrap()).unwrap();
        assert!(l.element(0).max_abs_diff(k.element(0)) < 1e-15);
        assert!(l.element(1).max_abs_diff(&(k.element(1) + k.element(2))) < 1e-15);
        let n = child_from_partition(&k, &Partition::new(vec![vec![2], vec![0, 1]], 3).unwrap()).unwrap();
        let trine = catalog::example_trine();
        assert!(n.max_abs_diff(trine.measurement(2)) < 1e-15);
    }

    #[test]
    fn single_block_is_trivial() {
        let k = catalog::trine_povm();
        let c = child_from_partition(&k, &Partition::new(vec![vec![0, 1, 2]], 3).unwrap()).unwrap();
        assert_eq!(c.outcomes(), 1);
        assert!(c.element(0).max_abs_diff(&HermitianMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn invalid_partitions() {
        assert!(Partition::new(vec![vec![0], vec![0, 1]], 2).is_err());
        assert!(Partition::new(vec![vec![0]], 2).is_err());
        assert!(Partition::new(vec![vec![0, 1], vec![]], 2).is_err());
        assert!(Partition::new(vec![vec![0, 2]], 2).is_err());
        let k = catalog::trine_povm();
        let p = Partition::new(vec![vec![0, 1]], 2).unwrap();
        assert!(child_from_partition(&k, &p).is_err());
    }

    #[test]
    fn partition_children_counts() {
        let trine = catalog::trine_povm();
        let kids = enumerate_partition_children(&trine, DEFAULT_PARTITION_CAP).unwrap();
        assert_eq!(kids.len(), 3);
        let expected = catalog::example_trine();
        // RGS order: 001, 010, 011 -> {01|2}, {02|1}, {0|12}
        assert!(kids[2].max_abs_diff(expected.measurement(0)) < 1e-15);
        let two = Povm::new(vec![HermitianMatrix::basis_projector(0, 2), HermitianMatrix::basis_projector(1, 2)]).unwrap();
        assert!(enumerate_partition_children(&two, 8).unwrap().is_empty());
        let bell = bell_numbers(8);
        for o in 2..=7 {
            let els = (0..o).map(|_| HermitianMatrix::identity(2).scale(1.0 / o as f64)).collect();
            let p = Povm::new(els).unwrap();
            assert_eq!(enumerate_partition_children(&p, 8).unwrap().len() as u64, bell[o] - 2);
        }
    }

    #[test]
    fn partition_cap_enforced() {
        let els = (0..9).map(|_| HermitianMatrix::identity(2).scale(1.0 / 9.0)).collect();
        let p = Povm::new(els).unwrap();
        assert!(matches!(enumerate_partition_children(&p, 8), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn povm_validation() {
        let bad = vec![HermitianMatrix::identity(2), HermitianMatrix::identity(2)];
        assert!(Povm::new(bad).is_err());
        let neg = vec![HermitianMatrix::diag(&[2.0, 1.0]), HermitianMatrix::diag(&[-1.0, 0.0])];
        assert!(Povm::new(neg).is_err());
    }

    #[test]
    fn noisy_pauli_parent_marginals() {
        let parent = catalog::noisy_pauli_parent(std::f64::consts::FRAC_1_SQRT_2).unwrap();
        let ms = catalog::example_noisy_pauli(std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!(parent.marginal(0).max_abs_diff(ms.measurement(0)) < 1e-15);
        assert!(parent.marginal_deviation(&ms) < 1e-15);
    }

    #[test]
    fn qutrit_parent_marginals_by_direct_summation() {
        let parent = catalog::example_qutrit_parent();
        let ms = catalog::example_qutrit_triple();
        for x in 0..3 {
            for a in 0..2 {
                let mut acc = HermitianMatrix::zeros(3);
                for (t, c) in parent.iter() {
                    if t.get(x) == a {
                        acc += c;
                    }
                }
                assert!(acc.max_abs_diff(ms.element(a, x)) < 1e-14);
            }
        }
    }

    #[test]
    fn canonicalize_trine_deterministic() {
        let k = catalog::trine_povm();
        let responses = vec![
            ResponseTable::deterministic(&[0, 1, 1], 2),
            ResponseTable::deterministic(&[1, 0, 1], 2),
            ResponseTable::deterministic(&[1, 1, 0], 2),
        ];
        let c = canonicalize(&k, &responses).unwrap();
        assert_eq!(c.support_size(), 3);
        assert_eq!(c.support(), vec![OutcomeTuple(vec![0, 1, 1]), OutcomeTuple(vec![1, 0, 1]), OutcomeTuple(vec![1, 1, 0])]);
        assert!(c.marginal_deviation(&catalog::example_trine()) < 1e-15);
    }

    #[test]
    fn canonicalize_identity_responses() {
        let parent = catalog::example_qutrit_parent();
        let (k, resp) = parent.to_povm_with_responses();
        let again = canonicalize(&k, &resp).unwrap();
        assert_eq!(again.support(), parent.support());
        for (t, c) in parent.iter() {
            assert!(again.get(t).unwrap().max_abs_diff(c) < 1e-15);
        }
    }

    #[test]
    fn canonicalize_rejects_bad_rows() {
        let k = catalog::trine_povm();
        let bad = ResponseTable { rows: vec![vec![0.5, 0.6], vec![1.0, 0.0], vec![0.0, 1.0]] };
        assert!(matches!(canonicalize(&k, &[bad]), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn json_schemas() {
        let ms = catalog::example_noisy_pauli(0.6).unwrap();
        let s = serde_json::to_string(&ms).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["dim"], 2);
        assert_eq!(v["measurements"].as_array().unwrap().len(), 2);
        let back: MeasurementSet = serde_json::from_str(&s).unwrap();
        assert!(back.max_abs_diff(&ms) < 1e-15);

        let parent = catalog::example_qutrit_parent();
        let s = serde_json::to_string(&parent).unwrap();
        let back: ParentPovm = serde_json::from_str(&s).unwrap();
        assert_eq!(back.support(), parent.support());

        let bad = r#"{"dim":2,"measurements":[[[[[1,0],[0,0]],[[0,0],[0,0]]]]]}"#;
        assert!(serde_json::from_str::<MeasurementSet>(bad).is_err());
    }

    #[test]
    fn shape_indexing() {
        let s = Shape::new(2, vec![2, 3, 2]).unwrap();
        assert_eq!(s.num_tuples(), 12);
        for (i, t) in s.tuples().iter().enumerate() {
            assert_eq!(s.index_of(t), i);
        }
        let tuples = s.tuples();
        assert!(tuples.windows(2).all(|w| w[0] < w[1]));
    }

    fn random_povm(o: usize, seed: u64) -> Povm {
        crate::random::random_povm(2, o, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed))
    }

    proptest! {
        #[test]
        fn coarse_graining_composes(seed in any::<u64>(), o in 2usize..6, pick1 in any::<usize>(), pick2 in any::<usize>()) {
            let parent = random_povm(o, seed);
            let rgs = restricted_growth_strings(o);
            let first = Partition::from_rgs(&rgs[pick1 % rgs.len()]);
            let child = child_from_partition(&parent, &first).unwrap();
            let rgs2 = restricted_growth_strings(child.outcomes());
            let second = Partition::from_rgs(&rgs2[pick2 % rgs2.len()]);
            let grandchild = child_from_partition(&child, &second).unwrap();
            let l1 = first.labels();
            let l2 = second.labels();
            let composed: Vec<usize> = l1.iter().map(|&b| l2[b]).collect();
            let nb = second.num_blocks();
            let mut blocks = vec![Vec::new(); nb];
            for (i, &b) in composed.iter().enumerate() { blocks[b].push(i); }
            let direct = child_from_partition(&parent, &Partition::new(blocks, o).unwrap()).unwrap();
            prop_assert!(direct.max_abs_diff(&grandchild) < 1e-13);
        }

        #[test]
        fn canonical_support_bounded(seed in any::<u64>(), k in 1usize..5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let parent = crate::random::random_povm(2, k, &mut rng);
            let outcomes = [2usize, 3];
            let responses: Vec<ResponseTable> = outcomes.iter().map(|&o| ResponseTable {
                rows: (0..k).map(|_| {
                    let a = rng.random_range(0..o);
                    (0..o).map(|b| if a == b { 1.0 } else { 0.0 }).collect()
                }).collect(),
            }).collect();
            let c = canonicalize(&parent, &responses).unwrap();
            prop_assert!(c.support_size() <= k.min(6));
            let dev = crate::hermitian::sum(2, c.iter().map(|(_, m)| m)).max_abs_diff(&HermitianMatrix::identity(2));
            prop_assert!(dev < 1e-9);
        }
    }
}
