//! Primal-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector) on Hermitian blocks and a non-negative orthant.
//!
//! The problem is brought to the standard form
//!
//! ```text
//! min <C, S> + c.u   s.t.  A(S) + a u = b,  S >= 0,  u >= 0
//! ```
//!
//! with `S_j = X_j - t I` for shifted blocks and every scalar written as a
//! signed combination of orthant variables.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::{
    Constraint, DualValue, Residuals, SdpProblem, SdpSolution, Sign, SolveStatus, SolverOptions,
};
use crate::error::Result;
use crate::hermitian::{CMatrix, HermitianBasis, HermitianMatrix, C64};

type Entries = Vec<(usize, usize, C64)>;

struct Row {
    blocks: Vec<(usize, Entries)>,
    lp: Vec<(usize, f64)>,
    b: f64,
}

struct StdForm {
    dims: Vec<usize>,
    n_lp: usize,
    rows: Vec<Row>,
    c: Vec<CMatrix>,
    c_lp: Vec<f64>,
    scalar_rep: Vec<Vec<(usize, f64)>>,
    /// (constraint, basis element) behind every row.
    origin: Vec<(usize, usize)>,
}

fn sparsify(m: &CMatrix) -> Entries {
    let mut out = Vec::new();
    for p in 0..m.nrows() {
        for q in 0..m.ncols() {
            let v = m[(p, q)];
            if v.re != 0.0 || v.im != 0.0 {
                out.push((p, q, v));
            }
        }
    }
    out
}

fn densify(e: &Entries, d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for &(p, q, v) in e {
        m[(p, q)] += v;
    }
    m
}

/// `Re tr(A M)` for sparse `A`.
fn re_tr(e: &Entries, m: &CMatrix) -> f64 {
    e.iter().map(|&(p, q, v)| (v * m[(q, p)]).re).sum()
}

/// `Re tr(A B)` for Hermitian `B`.
fn hinner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn herm(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn frob(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn build(p: &SdpProblem) -> StdForm {
    let mut n_lp = 0usize;
    let scalar_rep: Vec<Vec<(usize, f64)>> = p
        .scalars
        .iter()
        .map(|s| {
            let rep = match s.sign {
                Sign::Free => vec![(n_lp, 1.0), (n_lp + 1, -1.0)],
                Sign::NonNeg => vec![(n_lp, 1.0)],
                Sign::NonPos => vec![(n_lp, -1.0)],
            };
            n_lp += rep.len();
            rep
        })
        .collect();
    let dims: Vec<usize> = p.blocks.iter().map(|b| b.dim).collect();

    let mut rows = Vec::new();
    let mut origin = Vec::new();
    let finish = |blocks: Vec<Option<CMatrix>>, lp: Vec<f64>, b: f64| Row {
        blocks: blocks
            .into_iter()
            .enumerate()
            .filter_map(|(j, m)| m.map(|m| (j, sparsify(&m))))
            .filter(|(_, e)| !e.is_empty())
            .collect(),
        lp: lp.into_iter().enumerate().filter(|(_, a)| *a != 0.0).collect(),
        b,
    };
    for (ci, c) in p.constraints.iter().enumerate() {
        match c {
            Constraint::Matrix(m) => {
                let basis = HermitianBasis::new(m.dim);
                for (q, bq) in basis.elements().iter().enumerate() {
                    let mut blocks: Vec<Option<CMatrix>> = vec![None; dims.len()];
                    let mut lp = vec![0.0; n_lp];
                    for &(id, alpha) in &m.blocks {
                        let entry = blocks[id.0].get_or_insert_with(|| CMatrix::zeros(m.dim, m.dim));
                        *entry += bq.matrix() * C64::new(alpha, 0.0);
                        if let Some(s) = p.blocks[id.0].shift {
                            for &(l, coef) in &scalar_rep[s.0] {
                                lp[l] += alpha * bq.trace() * coef;
                            }
                        }
                    }
                    for (id, h) in &m.scalars {
                        let v = bq.inner(h);
                        for &(l, coef) in &scalar_rep[id.0] {
                            lp[l] += v * coef;
                        }
                    }
                    rows.push(finish(blocks, lp, bq.inner(&m.rhs)));
                    origin.push((ci, q));
                }
            }
            Constraint::Scalar(s) => {
                let mut blocks: Vec<Option<CMatrix>> = vec![None; dims.len()];
                let mut lp = vec![0.0; n_lp];
                for (id, w) in &s.blocks {
                    let d = dims[id.0];
                    let entry = blocks[id.0].get_or_insert_with(|| CMatrix::zeros(d, d));
                    *entry += w.matrix();
                    if let Some(sh) = p.blocks[id.0].shift {
                        for &(l, coef) in &scalar_rep[sh.0] {
                            lp[l] += w.trace() * coef;
                        }
                    }
                }
                for &(id, a) in &s.scalars {
                    for &(l, coef) in &scalar_rep[id.0] {
                        lp[l] += a * coef;
                    }
                }
                rows.push(finish(blocks, lp, s.rhs));
                origin.push((ci, 0));
            }
        }
    }

    let mut c: Vec<CMatrix> = dims.iter().map(|&d| CMatrix::zeros(d, d)).collect();
    let mut c_lp = vec![0.0; n_lp];
    for (id, w) in &p.objective.blocks {
        c[id.0] -= w.matrix();
        if let Some(sh) = p.blocks[id.0].shift {
            for &(l, coef) in &scalar_rep[sh.0] {
                c_lp[l] -= w.trace() * coef;
            }
        }
    }
    for &(id, a) in &p.objective.scalars {
        for &(l, coef) in &scalar_rep[id.0] {
            c_lp[l] -= a * coef;
        }
    }
    StdForm { dims, n_lp, rows, c, c_lp, scalar_rep, origin }
}

enum Presolve {
    Keep(Vec<usize>),
    /// Combination of rows with vanishing left-hand side and `<b, y> != 0`.
    Inconsistent(Vec<f64>),
}

/// Rank-revealing Gram-Schmidt over the rows in the orthonormal coordinates
/// of every block.
fn presolve(sf: &StdForm) -> Presolve {
    let bases: Vec<HermitianBasis> = sf.dims.iter().map(|&d| HermitianBasis::new(d)).collect();
    let mut offsets = Vec::with_capacity(sf.dims.len());
    let mut ncols = 0;
    for &d in &sf.dims {
        offsets.push(ncols);
        ncols += d * d;
    }
    let lp_off = ncols;
    ncols += sf.n_lp;
    let n = sf.rows.len();
    let b_scale: Vec<f64> = sf.rows.iter().map(|r| r.b.abs()).collect();

    let mut qs: Vec<Vec<f64>> = Vec::new();
    let mut ts: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (r, row) in sf.rows.iter().enumerate() {
        let mut v = vec![0.0; ncols];
        for (j, e) in &row.blocks {
            let d = sf.dims[*j];
            bases[*j].write_coords(&densify(e, d), &mut v[offsets[*j]..offsets[*j] + d * d]);
        }
        for &(l, a) in &row.lp {
            v[lp_off + l] += a;
        }
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut coef = vec![0.0; n];
        coef[r] = 1.0;
        for _ in 0..2 {
            for (q, t) in qs.iter().zip(&ts) {
                let proj: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                if proj != 0.0 {
                    v.iter_mut().zip(q).for_each(|(x, qq)| *x -= proj * qq);
                    coef.iter_mut().zip(t).for_each(|(x, tt)| *x -= proj * tt);
                }
            }
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 > 0.0 && nv > 1e-9 * norm0 {
            v.iter_mut().for_each(|x| *x /= nv);
            coef.iter_mut().for_each(|x| *x /= nv);
            qs.push(v);
            ts.push(coef);
            kept.push(r);
        } else {
            let delta: f64 = coef.iter().zip(&sf.rows).map(|(c, row)| c * row.b).sum();
            let scale: f64 = coef.iter().zip(&b_scale).map(|(c, b)| c.abs() * b).sum();
            if delta.abs() > 1e-8 * (1.0 + scale) {
                return Presolve::Inconsistent(coef.iter().map(|c| -c / delta).collect());
            }
        }
    }
    Presolve::Keep(kept)
}

struct Ipm<'a> {
    sf: &'a StdForm,
    rows: Vec<&'a Row>,
    /// block -> (row, index into that row's block list)
    by_block: Vec<Vec<(usize, usize)>>,
}

struct Dir {
    ds: Vec<CMatrix>,
    dz: Vec<CMatrix>,
    du: Vec<f64>,
    dzl: Vec<f64>,
    dy: DVector<f64>,
}

struct State {
    s: Vec<CMatrix>,
    z: Vec<CMatrix>,
    u: Vec<f64>,
    zl: Vec<f64>,
    y: DVector<f64>,
}

impl<'a> Ipm<'a> {
    fn new(sf: &'a StdForm, kept: &[usize]) -> Self {
        let rows: Vec<&Row> = kept.iter().map(|&r| &sf.rows[r]).collect();
        let mut by_block = vec![Vec::new(); sf.dims.len()];
        for (r, row) in rows.iter().enumerate() {
            for (k, (j, _)) in row.blocks.iter().enumerate() {
                by_block[*j].push((r, k));
            }
        }
        Self { sf, rows, by_block }
    }

    fn apply(&self, s: &[CMatrix], u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| {
                row.blocks.iter().map(|(j, e)| re_tr(e, &s[*j])).sum::<f64>()
                    + row.lp.iter().map(|&(l, a)| a * u[l]).sum::<f64>()
            }),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> (Vec<CMatrix>, Vec<f64>) {
        let mut m: Vec<CMatrix> = self.sf.dims.iter().map(|&d| CMatrix::zeros(d, d)).collect();
        let mut lp = vec![0.0; self.sf.n_lp];
        for (row, &yr) in self.rows.iter().zip(y.iter()) {
            if yr == 0.0 {
                continue;
            }
            for (j, e) in &row.blocks {
                for &(p, q, v) in e {
                    m[*j][(p, q)] += v * yr;
                }
            }
            for &(l, a) in &row.lp {
                lp[l] += a * yr;
            }
        }
        (m, lp)
    }

    fn initial(&self) -> State {
        let sf = self.sf;
        let b_abs: Vec<f64> = self.rows.iter().map(|r| r.b.abs()).collect();
        let mut s = Vec::new();
        let mut z = Vec::new();
        for (j, &d) in sf.dims.iter().enumerate() {
            let n = d as f64;
            let mut xi = 10f64.max(n.sqrt());
            let mut eta = 10f64.max(n.sqrt()).max(frob(&sf.c[j]));
            for &(r, k) in &self.by_block[j] {
                let e = &self.rows[r].blocks[k].1;
                let na = e.iter().map(|(_, _, v)| v.norm_sqr()).sum::<f64>().sqrt();
                xi = xi.max(n.sqrt() * (1.0 + b_abs[r]) / (1.0 + na));
                eta = eta.max(na);
            }
            s.push(CMatrix::identity(d, d) * C64::new(xi, 0.0));
            z.push(CMatrix::identity(d, d) * C64::new(eta, 0.0));
        }
        let mut lp_xi = vec![10.0f64; sf.n_lp];
        let mut lp_eta: Vec<f64> = sf.c_lp.iter().map(|c| 10f64.max(c.abs())).collect();
        for (r, row) in self.rows.iter().enumerate() {
            for &(l, a) in &row.lp {
                lp_xi[l] = lp_xi[l].max((1.0 + b_abs[r]) / (1.0 + a.abs()));
                lp_eta[l] = lp_eta[l].max(a.abs());
            }
        }
        State { s, z, u: lp_xi, zl: lp_eta, y: DVector::zeros(self.rows.len()) }
    }

    fn schur(&self, st: &State, zinv: &[CMatrix]) -> DMatrix<f64> {
        let m = self.rows.len();
        let mut out = DMatrix::<f64>::zeros(m, m);
        for (j, list) in self.by_block.iter().enumerate() {
            let s = &st.s[j];
            let zi = &zinv[j];
            for (ia, &(r, kr)) in list.iter().enumerate() {
                let er = &self.rows[r].blocks[kr].1;
                for &(rs, ks) in &list[ia..] {
                    let es = &self.rows[rs].blocks[ks].1;
                    let mut acc = 0.0;
                    for &(p, q, v) in er {
                        for &(p2, q2, v2) in es {
                            acc += (v * s[(q, p2)] * v2 * zi[(q2, p)]).re;
                        }
                    }
                    out[(r, rs)] += acc;
                    if rs != r {
                        out[(rs, r)] += acc;
                    }
                }
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            for &(l, a) in &row.lp {
                let w = st.u[l] / st.zl[l];
                for (rs, row2) in self.rows.iter().enumerate() {
                    for &(l2, a2) in &row2.lp {
                        if l2 == l {
                            out[(r, rs)] += a * w * a2;
                        }
                    }
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        st: &State,
        zinv: &[CMatrix],
        chol: &Cholesky<f64, nalgebra::Dyn>,
        rp: &DVector<f64>,
        rd: &[CMatrix],
        rdl: &[f64],
        target: f64,
        corr: Option<&Dir>,
    ) -> Dir {
        let nb = self.sf.dims.len();
        // H = target Z^-1 - S - S Rd Z^-1 - corr
        let mut h = Vec::with_capacity(nb);
        for j in 0..nb {
            let d = self.sf.dims[j];
            let mut hj = &zinv[j] * C64::new(target, 0.0) - &st.s[j] - &st.s[j] * &rd[j] * &zinv[j];
            if let Some(c) = corr {
                hj -= &c.ds[j] * &c.dz[j] * &zinv[j];
            }
            debug_assert_eq!(hj.nrows(), d);
            h.push(hj);
        }
        let hl: Vec<f64> = (0..self.sf.n_lp)
            .map(|l| {
                let mut v = target / st.zl[l] - st.u[l] - st.u[l] * rdl[l] / st.zl[l];
                if let Some(c) = corr {
                    v -= c.du[l] * c.dzl[l] / st.zl[l];
                }
                v
            })
            .collect();
        let ah = self.apply(&h, &hl);
        let rhs = rp - ah;
        let dy = if rhs.is_empty() { rhs } else { chol.solve(&rhs) };
        let (aty, aty_lp) = self.adjoint(&dy);
        let mut ds = Vec::with_capacity(nb);
        let mut dz = Vec::with_capacity(nb);
        for j in 0..nb {
            let dzj = &rd[j] - &aty[j];
            let dsj = herm(&(&h[j] + &st.s[j] * &aty[j] * &zinv[j]));
            ds.push(dsj);
            dz.push(dzj);
        }
        let dzl: Vec<f64> = (0..self.sf.n_lp).map(|l| rdl[l] - aty_lp[l]).collect();
        let du: Vec<f64> = (0..self.sf.n_lp).map(|l| hl[l] + st.u[l] * aty_lp[l] / st.zl[l]).collect();
        Dir { ds, dz, du, dzl, dy }
    }
}

/// Largest `a` with `X + a dX >= 0` (infinite if unbounded).
fn max_step_psd(x: &CMatrix, dx: &CMatrix) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let t = l.solve_lower_triangular(dx)?;
    let w = l.solve_lower_triangular(&t.adjoint())?;
    let lam = SymmetricEigen::new(herm(&w)).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(if lam >= 0.0 { f64::INFINITY } else { -1.0 / lam })
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn step_lengths(st: &State, dir: &Dir) -> Option<(f64, f64)> {
    let mut ap = max_step_lp(&st.u, &dir.du);
    let mut ad = max_step_lp(&st.zl, &dir.dzl);
    for j in 0..st.s.len() {
        ap = ap.min(max_step_psd(&st.s[j], &dir.ds[j])?);
        ad = ad.min(max_step_psd(&st.z[j], &dir.dz[j])?);
    }
    Some((ap, ad))
}

fn inverse_pd(m: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(m.clone()).map(|c| herm(&c.inverse()))
}

fn factor_schur(m: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().iter().cloned().fold(1.0f64, f64::max);
    let mut delta = 1e-13 * scale;
    for _ in 0..8 {
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += delta;
        }
        if let Some(c) = Cholesky::new(reg) {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}

/// Solves `problem` with a primal-dual interior-point method. Errors only
/// on malformed input; numerical trouble is reported through the status.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let sf = build(problem);
    let kept = match presolve(&sf) {
        Presolve::Keep(k) => k,
        Presolve::Inconsistent(ray) => return Ok(infeasible_solution(problem, &sf, &ray)),
    };
    let ipm = Ipm::new(&sf, &kept);
    let mut st = ipm.initial();

    let b = DVector::from_iterator(kept.len(), ipm.rows.iter().map(|r| r.b));
    let b_norm = b.norm();
    let c_norm = (sf.c.iter().map(|c| frob(c).powi(2)).sum::<f64>() + sf.c_lp.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let n_cone = sf.dims.iter().sum::<usize>() + sf.n_lp;
    let free_pairs: Vec<(usize, usize)> = problem
        .scalars
        .iter()
        .enumerate()
        .filter(|(_, s)| s.sign == Sign::Free)
        .map(|(k, _)| (sf.scalar_rep[k][0].0, sf.scalar_rep[k][1].0))
        .collect();

    let mut status = SolveStatus::MaxIterations;
    let mut residuals = Residuals::default();
    let mut iterations = 0;
    let mut stalls = 0;
    for iter in 0..=opts.max_iter {
        iterations = iter;
        let rp = &b - ipm.apply(&st.s, &st.u);
        let (aty, aty_lp) = ipm.adjoint(&st.y);
        let rd: Vec<CMatrix> = (0..sf.dims.len()).map(|j| &sf.c[j] - &aty[j] - &st.z[j]).collect();
        let rdl: Vec<f64> = (0..sf.n_lp).map(|l| sf.c_lp[l] - aty_lp[l] - st.zl[l]).collect();
        let pobj = (0..sf.dims.len()).map(|j| hinner(&sf.c[j], &st.s[j])).sum::<f64>()
            + sf.c_lp.iter().zip(&st.u).map(|(c, u)| c * u).sum::<f64>();
        let dobj = b.dot(&st.y);
        let comp = (0..sf.dims.len()).map(|j| hinner(&st.s[j], &st.z[j])).sum::<f64>()
            + st.u.iter().zip(&st.zl).map(|(a, b)| a * b).sum::<f64>();
        let mu = comp / n_cone.max(1) as f64;
        let rd_norm = (rd.iter().map(|m| frob(m).powi(2)).sum::<f64>() + rdl.iter().map(|v| v * v).sum::<f64>()).sqrt();
        residuals = Residuals {
            primal: rp.norm() / (1.0 + b_norm),
            dual: rd_norm / (1.0 + c_norm),
            gap: comp.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs()),
        };
        if residuals.primal <= opts.tol && residuals.dual <= opts.tol && residuals.gap <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        if !(pobj.is_finite() && dobj.is_finite() && mu.is_finite()) || pobj.abs().max(dobj.abs()) > 1e13 {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let Some(zinv) = st.z.iter().map(inverse_pd).collect::<Option<Vec<_>>>() else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let schur = ipm.schur(&st, &zinv);
        let Some(chol) = factor_schur(schur) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let pred = ipm.direction(&st, &zinv, &chol, &rp, &rd, &rdl, 0.0, None);
        let Some((ap, ad)) = step_lengths(&st, &pred) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut comp_aff = 0.0;
        for j in 0..sf.dims.len() {
            let s = &st.s[j] + &pred.ds[j] * C64::new(ap, 0.0);
            let z = &st.z[j] + &pred.dz[j] * C64::new(ad, 0.0);
            comp_aff += hinner(&s, &z);
        }
        for l in 0..sf.n_lp {
            comp_aff += (st.u[l] + ap * pred.du[l]) * (st.zl[l] + ad * pred.dzl[l]);
        }
        let mu_aff = comp_aff.max(0.0) / n_cone.max(1) as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };
        let dir = ipm.direction(&st, &zinv, &chol, &rp, &rd, &rdl, sigma * mu, Some(&pred));
        let Some((ap, ad)) = step_lengths(&st, &dir) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let tau = 0.98;
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);
        for j in 0..sf.dims.len() {
            st.s[j] = herm(&(&st.s[j] + &dir.ds[j] * C64::new(ap, 0.0)));
            st.z[j] = herm(&(&st.z[j] + &dir.dz[j] * C64::new(ad, 0.0)));
        }
        for l in 0..sf.n_lp {
            st.u[l] += ap * dir.du[l];
            st.zl[l] += ad * dir.dzl[l];
        }
        st.y += &dir.dy * ad;
        for &(lp, ln) in &free_pairs {
            let common = st.u[lp].min(st.u[ln]);
            if common > 1e2 * (1.0 + (st.u[lp] - st.u[ln]).abs()) {
                st.u[lp] -= 0.9 * common;
                st.u[ln] -= 0.9 * common;
            }
        }
        if ap.max(ad) < 1e-10 {
            stalls += 1;
            if stalls > 5 {
                status = SolveStatus::NumericalFailure;
                break;
            }
        } else {
            stalls = 0;
        }
    }

    let mut y_full = vec![0.0; sf.rows.len()];
    for (k, &r) in kept.iter().enumerate() {
        y_full[r] = -st.y[k];
    }
    let scalars: Vec<f64> = sf
        .scalar_rep
        .iter()
        .map(|rep| rep.iter().map(|&(l, coef)| coef * st.u[l]).sum())
        .collect();
    let blocks: Vec<HermitianMatrix> = problem
        .blocks
        .iter()
        .zip(&st.s)
        .map(|(bv, s)| {
            let shift = bv.shift.map(|k| scalars[k.0]).unwrap_or(0.0);
            let mut x = s.clone();
            for i in 0..bv.dim {
                x[(i, i)] += C64::new(shift, 0.0);
            }
            HermitianMatrix::hermitian_part(&x)
        })
        .collect();
    let duals = assemble_duals(problem, &sf, &y_full);
    let objective = problem.objective_value(&blocks, &scalars);
    let dual_objective = problem.dual_objective(&duals)?;
    Ok(SdpSolution {
        status,
        objective,
        dual_objective,
        blocks,
        scalars,
        duals,
        cone_duals: st.z.iter().map(HermitianMatrix::hermitian_part).collect(),
        residuals,
        iterations,
    })
}

fn assemble_duals(problem: &SdpProblem, sf: &StdForm, y: &[f64]) -> Vec<DualValue> {
    let mut coords: Vec<Vec<f64>> = problem
        .constraints
        .iter()
        .map(|c| match c {
            Constraint::Matrix(m) => vec![0.0; m.dim * m.dim],
            Constraint::Scalar(_) => vec![0.0],
        })
        .collect();
    for (&(ci, q), &v) in sf.origin.iter().zip(y) {
        coords[ci][q] = v;
    }
    problem
        .constraints
        .iter()
        .zip(coords)
        .map(|(c, co)| match c {
            Constraint::Matrix(m) => {
                DualValue::Matrix(HermitianBasis::new(m.dim).devectorize(&co).expect("coordinate count matches"))
            }
            Constraint::Scalar(_) => DualValue::Scalar(co[0]),
        })
        .collect()
}

fn infeasible_solution(problem: &SdpProblem, sf: &StdForm, ray: &[f64]) -> SdpSolution {
    let duals = assemble_duals(problem, sf, ray);
    let dual_objective = problem.dual_objective(&duals).unwrap_or(-1.0);
    SdpSolution {
        status: SolveStatus::PrimalInfeasible,
        objective: f64::NEG_INFINITY,
        dual_objective,
        blocks: problem.blocks.iter().map(|b| HermitianMatrix::zeros(b.dim)).collect(),
        scalars: vec![0.0; problem.scalars.len()],
        duals,
        cone_duals: problem.blocks.iter().map(|b| HermitianMatrix::zeros(b.dim)).collect(),
        residuals: Residuals { primal: f64::INFINITY, dual: 0.0, gap: f64::INFINITY },
        iterations: 0,
    }
}
