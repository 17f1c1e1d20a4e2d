//! Sampling the boundary of the compatible set: Haar projective
//! measurements give an incompatible point, the compatibility duals give a
//! direction, and a second SDP finds the compatible set furthest along it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caratheodory::ambient_dimension;
use crate::compat::{build_compat_sdp, CompatOptions, Verdict};
use crate::error::{Error, Result};
use crate::exec::{map_indices, ExecMode};
use crate::hermitian::{CMatrix, HermitianMatrix, C64};
use crate::povm::{MeasurementSet, OutcomeTuple, ParentPovm, Povm, Shape};
use crate::random::ginibre;
use crate::sdp::{self, Objective, SolveStatus};
use crate::search::{min_parent_size_with, trivial_lower_bound, SearchOptions};

/// What the direction operators are made of; recorded in outputs.
pub const DIRECTION_SOURCE: &str = "negated marginal-equality multipliers of the compatibility SDP";

/// Haar-random unitary: QR of a Ginibre matrix with the phases of the
/// diagonal of R moved into Q.
pub fn haar_unitary(d: usize, rng: &mut impl Rng) -> CMatrix {
    let qr = ginibre(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Rank-one projectors onto the columns of `u`.
pub fn projective_from_unitary(u: &CMatrix) -> Result<Povm> {
    let d = u.nrows();
    if u.ncols() != d {
        return Err(Error::NotSquare { rows: d, cols: u.ncols() });
    }
    let dev = (u.adjoint() * u - CMatrix::identity(d, d)).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if dev > 1e-10 {
        return Err(Error::NotUnitary { dev });
    }
    let els = (0..d).map(|k| HermitianMatrix::outer(&u.column(k).into_owned())).collect();
    Povm::with_tol(els, 1e-9)
}

/// Operators `F[x][a]` for `a` in `0..o_x - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub operators: Vec<Vec<HermitianMatrix>>,
}

impl Direction {
    pub fn norm(&self) -> f64 {
        self.operators.iter().flatten().map(|f| f.frobenius_norm()).sum()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.operators.iter().flatten().all(|f| f.frobenius_norm() <= tol)
    }

    /// Scaled so that the Frobenius norms sum to one.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n <= 1e-9 {
            return Err(Error::ZeroDirection);
        }
        Ok(Self { operators: self.operators.iter().map(|fx| fx.iter().map(|f| f.scale(1.0 / n)).collect()).collect() })
    }

    /// `sum_{x, a <= o_x - 2} tr(F_{ax} M_{a|x})`.
    pub fn evaluate(&self, ms: &MeasurementSet) -> f64 {
        self.operators
            .iter()
            .enumerate()
            .flat_map(|(x, fx)| fx.iter().enumerate().map(move |(a, f)| (x, a, f)))
            .map(|(x, a, f)| f.inner(ms.element(a, x)))
            .sum()
    }

    fn tuple_weight(&self, t: &OutcomeTuple, d: usize) -> HermitianMatrix {
        let mut g = HermitianMatrix::zeros(d);
        for (x, fx) in self.operators.iter().enumerate() {
            if let Some(f) = fx.get(t.get(x)) {
                g += f;
            }
        }
        g
    }

    fn check_shape(&self, shape: &Shape) -> Result<()> {
        let ok = self.operators.len() == shape.outcomes.len()
            && self
                .operators
                .iter()
                .zip(&shape.outcomes)
                .all(|(fx, &o)| fx.len() == o - 1 && fx.iter().all(|f| f.dim() == shape.dim));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("direction does not match shape {}", shape.dmo())))
        }
    }
}

/// Outward normal of the compatible set at an incompatible `ms`: the
/// negated multipliers of the marginal equalities.
pub fn incompat_direction(ms: &MeasurementSet, opts: &CompatOptions) -> Result<Direction> {
    let sdp_ = build_compat_sdp(ms, None)?;
    let sol = sdp::solve(&sdp_.problem, &opts.sdp)?;
    if sol.objective >= opts.compatible_nu || sol.status == SolveStatus::PrimalInfeasible {
        return Err(Error::CompatibleInput);
    }
    let w = sdp_.witness_from_duals(&ms.shape(), &sol.duals);
    let dir = Direction { operators: w.rho.iter().map(|rx| rx.iter().map(|r| -r).collect()).collect() };
    if dir.is_zero(1e-9) {
        return Err(Error::ZeroDirection);
    }
    Ok(dir)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub measurements: MeasurementSet,
    pub direction: Direction,
    pub objective: f64,
    pub complexity: Option<usize>,
    pub parent: ParentPovm,
    /// Upper bound on the objective from the dual of the maximization.
    pub dual_bound: f64,
    pub resamples: usize,
}

/// Maximizes the direction over all compatible sets of `shape`.
pub fn furthest_compatible(direction: &Direction, shape: &Shape, opts: &sdp::SolverOptions) -> Result<BoundaryPoint> {
    direction.check_shape(shape)?;
    if direction.is_zero(1e-9) {
        return Err(Error::ZeroDirection);
    }
    let d = shape.dim;
    let tuples = shape.tuples();
    let mut p = sdp::SdpProblem::new();
    let blocks: Vec<_> = tuples.iter().map(|t| p.add_block(format!("C{t}"), d)).collect();
    p.add_matrix_equality("norm", blocks.iter().map(|&b| (b, 1.0)).collect(), vec![], HermitianMatrix::identity(d));
    p.maximize(Objective {
        blocks: tuples.iter().zip(&blocks).map(|(t, &b)| (b, direction.tuple_weight(t, d))).collect(),
        scalars: vec![],
    });
    let sol = sdp::solve(&p, opts)?;
    if !sol.is_optimal() {
        return Err(Error::Solver(format!("furthest compatible SDP ended with {:?}", sol.status)));
    }
    let clipped: Vec<HermitianMatrix> = blocks.iter().map(|&b| sol.block(b).psd_part()).collect();
    let w = crate::hermitian::sum(d, &clipped).inv_sqrt()?;
    let parent = ParentPovm::new(
        shape.clone(),
        tuples.into_iter().zip(clipped.iter().map(|c| c.congruence(w.matrix()))),
        1e-9,
    )?;
    let measurements = parent.marginals();
    let objective = direction.evaluate(&measurements);
    // any multiplier Y with Y >= G_t for all t bounds the objective by tr Y
    let y = sol.duals[0].as_matrix().expect("matrix multiplier").clone();
    let worst = p
        .objective
        .blocks
        .iter()
        .map(|(_, g)| (&y - g).min_eigenvalue())
        .fold(f64::INFINITY, f64::min);
    let dual_bound = y.trace() - worst.min(0.0) * d as f64;
    Ok(BoundaryPoint { measurements, direction: direction.clone(), objective, complexity: None, parent, dual_bound, resamples: 0 })
}

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub mode: ExecMode,
    pub compat: CompatOptions,
    pub max_retries: usize,
    pub compute_complexity: bool,
    /// Refuse shapes with more tuples than this.
    pub max_tuples: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { mode: ExecMode::default(), compat: CompatOptions::default(), max_retries: 50, compute_complexity: true, max_tuples: 16 }
    }
}

/// Independent stream for point `index` of a run seeded with `seed`.
pub fn point_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One pipeline run; draws are resampled while compatible.
pub fn sample_point(shape: &Shape, seed: u64, index: u64, cfg: &SamplerConfig) -> Result<BoundaryPoint> {
    if shape.outcomes.iter().any(|&o| o != shape.dim) {
        return Err(Error::InvalidArgument(format!("boundary sampling needs o_x = d, got shape {}", shape.dmo())));
    }
    let mut rng = point_rng(seed, index);
    let mut resamples = 0;
    let direction = loop {
        let povms = (0..shape.outcomes.len())
            .map(|_| projective_from_unitary(&haar_unitary(shape.dim, &mut rng)))
            .collect::<Result<Vec<_>>>()?;
        let ms = MeasurementSet::new(povms)?;
        match incompat_direction(&ms, &cfg.compat) {
            Ok(dir) => break dir.normalized()?,
            Err(Error::CompatibleInput) | Err(Error::ZeroDirection) if resamples < cfg.max_retries => resamples += 1,
            Err(e) => return Err(e),
        }
    };
    let mut point = furthest_compatible(&direction, shape, &cfg.compat.sdp)?;
    point.resamples = resamples;
    if cfg.compute_complexity {
        let mut opts = SearchOptions::new(
            trivial_lower_bound(&point.measurements),
            shape.num_tuples().min(ambient_dimension(shape)),
        );
        opts.mode = ExecMode::Sequential;
        opts.compat = cfg.compat;
        let report = min_parent_size_with(&point.measurements, &opts)?;
        point.complexity = Some(report.min_size);
    }
    Ok(point)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: BTreeMap<usize, u64>,
    pub total: u64,
    pub shape: Shape,
    pub seed: u64,
    /// Draws that were compatible and had to be redrawn.
    pub resamples: u64,
    /// Points dropped because the pipeline failed on them.
    pub failures: u64,
    pub direction_source: String,
}

impl Histogram {
    pub fn new(shape: Shape, seed: u64) -> Self {
        Self {
            bins: BTreeMap::new(),
            total: 0,
            shape,
            seed,
            resamples: 0,
            failures: 0,
            direction_source: DIRECTION_SOURCE.to_string(),
        }
    }

    pub fn add(&mut self, complexity: usize) {
        *self.bins.entry(complexity).or_default() += 1;
        self.total += 1;
    }

    /// Associative, commutative merge of two runs over the same shape.
    pub fn merge(&mut self, other: &Histogram) {
        for (k, v) in &other.bins {
            *self.bins.entry(*k).or_default() += v;
        }
        self.total += other.total;
        self.resamples += other.resamples;
        self.failures += other.failures;
    }

    /// Share of points needing every tuple.
    pub fn fraction_maximal(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.bins.get(&self.shape.num_tuples()).unwrap_or(&0) as f64 / self.total as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("complexity,count\n");
        for (k, v) in &self.bins {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    pub fn to_gnuplot(&self) -> String {
        let mut s = format!("# shape {} seed {} total {}\n# complexity count\n", self.shape.dmo(), self.seed, self.total);
        for (k, v) in &self.bins {
            s.push_str(&format!("{k} {v}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleRun {
    pub histogram: Histogram,
    pub points: Vec<BoundaryPoint>,
    /// `(index, message)` for every excluded point.
    pub failures: Vec<(u64, String)>,
}

pub fn sample_boundary(shape: &Shape, n: usize, seed: u64, cfg: &SamplerConfig) -> Result<SampleRun> {
    if shape.num_tuples() > cfg.max_tuples {
        return Err(Error::InvalidArgument(format!(
            "shape {} has {} tuples, above the cap {}",
            shape.dmo(),
            shape.num_tuples(),
            cfg.max_tuples
        )));
    }
    let results = map_indices(cfg.mode, n, |i| sample_point(shape, seed, i as u64, cfg));
    let mut hist = Histogram::new(shape.clone(), seed);
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => {
                hist.resamples += p.resamples as u64;
                if let Some(c) = p.complexity {
                    hist.add(c);
                }
                points.push(p);
            }
            Err(e) => {
                hist.failures += 1;
                failures.push((i as u64, e.to_string()));
            }
        }
    }
    Ok(SampleRun { histogram: hist, points, failures })
}

/// Compatibility verdict of a point (a sanity check for callers).
pub fn point_verdict(p: &BoundaryPoint, opts: &CompatOptions) -> Result<Verdict> {
    Ok(crate::compat::decide_with(&p.measurements, None, opts)?.verdict)
}
