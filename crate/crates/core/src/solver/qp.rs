//! Convex QP by operator splitting (ADMM on `l ≤ Ax ≤ u` with a penalty
//! adapted to the residual balance), followed by an active-set polish that
//! solves the KKT system of the guessed active set exactly.
//!
//! The KKT matrix `P + σI + Aᵀ diag(ρ) A` of the splitting step depends on
//! the constraint matrix and ρ only, never on `l`/`u`, so a factorization
//! carries over across bound changes (the branch-and-bound nodes).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::linalg::{rcm_order, EnvelopeCholesky, SymLower};
use super::{row_bounds, Solution, SolveConfig, SolverError, Status};
use crate::optmodel::Problem;

const SIGMA: f64 = 1e-6;
const RHO: f64 = 1.0;
const RHO_EQ_FACTOR: f64 = 1e3;
const RELAX: f64 = 1.6;
const CHECK_EVERY: usize = 10;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// Refactor when the suggested penalty moves by more than this factor.
const RHO_TRIGGER: f64 = 5.0;
const RHO_INTERVAL: usize = 100;
const RHO_UPDATES: usize = 3;
const RUIZ_PASSES: usize = 15;
const INFEAS_TOL: f64 = 1e-6;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_PASSES: usize = 30;
const REFINE_STEPS: usize = 15;

type SparseRow = Vec<(usize, f64)>;

/// QP data `min ½xᵀPx + qᵀx + offset` over `l ≤ Ax ≤ u`, where the rows of
/// `A` are the problem constraints followed by one unit row per variable
/// with a finite bound.
#[derive(Debug, Clone)]
pub(crate) struct QpData {
    pub n: usize,
    p_rows: Vec<SparseRow>,
    q: Vec<f64>,
    offset: f64,
    rows: Vec<SparseRow>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    n_general: usize,
    bound_row: Vec<Option<usize>>,
    /// Variable owning each bound row.
    bound_var: Vec<usize>,
}

impl QpData {
    pub fn from_problem(p: &Problem) -> QpData {
        let n = p.num_vars();
        let mut p_rows: Vec<SparseRow> = vec![Vec::new(); n];
        for &(a, b, c) in &p.objective().quadratic {
            let (i, j) = (a.index(), b.index());
            if i == j {
                p_rows[i].push((i, 2.0 * c));
            } else {
                p_rows[i].push((j, c));
                p_rows[j].push((i, c));
            }
        }
        for r in &mut p_rows {
            r.sort_by_key(|t| t.0);
        }
        let mut q = vec![0.0; n];
        for &(v, c) in &p.objective().linear.terms {
            q[v.index()] += c;
        }
        let mut rows = Vec::new();
        let mut l = Vec::new();
        let mut u = Vec::new();
        for c in p.constraints() {
            let (lo, hi) = row_bounds(c.sense, c.rhs);
            rows.push(c.expr.terms.iter().map(|&(v, a)| (v.index(), a)).collect());
            l.push(lo);
            u.push(hi);
        }
        let n_general = rows.len();
        let mut bound_row = vec![None; n];
        let mut bound_var = Vec::new();
        for (j, v) in p.variables().iter().enumerate() {
            if v.lower.is_finite() || v.upper.is_finite() {
                bound_row[j] = Some(rows.len());
                bound_var.push(j);
                rows.push(vec![(j, 1.0)]);
                l.push(v.lower);
                u.push(v.upper);
            }
        }
        QpData {
            n,
            p_rows,
            q,
            offset: p.objective().linear.constant,
            rows,
            l,
            u,
            n_general,
            bound_row,
            bound_var,
        }
    }

    pub fn bound_row(&self, var: usize) -> Option<usize> {
        self.bound_row[var]
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.offset;
        for (i, row) in self.p_rows.iter().enumerate() {
            let px: f64 = row.iter().map(|&(j, a)| a * x[j]).sum();
            v += 0.5 * x[i] * px + self.q[i] * x[i];
        }
        v
    }

    fn p_mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, row) in self.p_rows.iter().enumerate() {
            out[i] = row.iter().map(|&(j, a)| a * x[j]).sum();
        }
    }

    fn row_dot(&self, k: usize, x: &[f64]) -> f64 {
        self.rows[k].iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct QpOutcome {
    pub status: Status,
    pub x: Vec<f64>,
    /// Multipliers of all rows, `Px + q + Aᵀy = 0` convention.
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
}

pub(crate) struct QpParams {
    pub eps: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub max_iterations: usize,
    pub deadline: Option<Instant>,
    /// Stop after the first polish attempt even if it fails.
    pub single_polish: bool,
}

/// ADMM state over scaled data with a cached factorization.
pub(crate) struct AdmmWorkspace {
    data: QpData,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    sp_rows: Vec<SparseRow>,
    sq: Vec<f64>,
    sa_rows: Vec<SparseRow>,
    sa_cols: Vec<SparseRow>,
    rho: Vec<f64>,
    rho_scale: f64,
    is_eq: Vec<bool>,
    chol: EnvelopeCholesky,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    work: Vec<f64>,
}

impl AdmmWorkspace {
    pub fn new(data: QpData) -> AdmmWorkspace {
        let n = data.n;
        let m = data.rows.len();
        let (d, e, c) = ruiz(&data);
        let sp_rows: Vec<SparseRow> = data
            .p_rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&(j, a)| (j, c * d[i] * a * d[j])).collect())
            .collect();
        let sq: Vec<f64> = (0..n).map(|j| c * d[j] * data.q[j]).collect();
        let sa_rows: Vec<SparseRow> = data
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| r.iter().map(|&(j, a)| (j, e[k] * a * d[j])).collect())
            .collect();
        let mut sa_cols: Vec<SparseRow> = vec![Vec::new(); n];
        for (k, r) in sa_rows.iter().enumerate() {
            for &(j, a) in r {
                sa_cols[j].push((k, a));
            }
        }
        let is_eq: Vec<bool> = (0..m).map(|k| data.l[k] == data.u[k]).collect();
        let rho = penalties(&is_eq, RHO);
        let chol = factor(n, &sp_rows, &sa_rows, &rho);
        AdmmWorkspace {
            data,
            d,
            e,
            c,
            sp_rows,
            sq,
            sa_rows,
            sa_cols,
            rho,
            rho_scale: RHO,
            is_eq,
            chol,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            work: Vec::with_capacity(n),
        }
    }

    fn set_rho(&mut self, scale: f64) {
        self.rho_scale = scale;
        self.rho = penalties(&self.is_eq, scale);
        self.chol = factor(self.data.n, &self.sp_rows, &self.sa_rows, &self.rho);
    }

    pub fn data(&self) -> &QpData {
        &self.data
    }

    /// Current iterate `(x, z, y)` in scaled units.
    pub fn iterate(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (self.x.clone(), self.z.clone(), self.y.clone())
    }

    pub fn set_iterate(&mut self, it: &(Vec<f64>, Vec<f64>, Vec<f64>)) {
        self.x.copy_from_slice(&it.0);
        self.z.copy_from_slice(&it.1);
        self.y.copy_from_slice(&it.2);
    }

    /// Solves with row bounds `l`, `u` (unscaled, one per row), warm
    /// started from the current iterate.
    pub fn solve(&mut self, l: &[f64], u: &[f64], params: &QpParams) -> QpOutcome {
        let n = self.data.n;
        let m = self.data.rows.len();
        let sl: Vec<f64> = (0..m).map(|k| l[k] * self.e[k]).collect();
        let su: Vec<f64> = (0..m).map(|k| u[k] * self.e[k]).collect();

        let mut rhs = vec![0.0; n];
        let mut xt = vec![0.0; n];
        let mut zt = vec![0.0; m];
        let mut x_prev = vec![0.0; n];
        let mut y_prev = vec![0.0; m];
        let mut eps = params.eps;
        let mut iterations = 0usize;
        let mut best: Option<QpOutcome> = None;
        let mut last_update = 0usize;
        let mut updates = 0usize;

        loop {
            if iterations >= params.max_iterations
                || params.deadline.is_some_and(|d| Instant::now() >= d)
            {
                return best.unwrap_or_else(|| self.outcome(Status::LimitReached, iterations));
            }
            x_prev.copy_from_slice(&self.x);
            y_prev.copy_from_slice(&self.y);
            for j in 0..n {
                let mut s = SIGMA * self.x[j] - self.sq[j];
                for &(k, a) in &self.sa_cols[j] {
                    s += a * (self.rho[k] * self.z[k] - self.y[k]);
                }
                rhs[j] = s;
            }
            xt.copy_from_slice(&rhs);
            self.chol.solve(&mut xt, &mut self.work);
            for k in 0..m {
                zt[k] = self.sa_rows[k].iter().map(|&(j, a)| a * xt[j]).sum();
            }
            for j in 0..n {
                self.x[j] = RELAX * xt[j] + (1.0 - RELAX) * self.x[j];
            }
            for k in 0..m {
                let zr = RELAX * zt[k] + (1.0 - RELAX) * self.z[k];
                let znew = (zr + self.y[k] / self.rho[k]).clamp(sl[k], su[k]);
                self.y[k] += self.rho[k] * (zr - znew);
                self.z[k] = znew;
            }
            iterations += 1;
            if iterations % CHECK_EVERY != 0 {
                continue;
            }

            if self.primal_infeasible(&y_prev, l, u) {
                return self.outcome(Status::Infeasible, iterations);
            }
            if self.dual_infeasible(&x_prev, l, u) {
                return self.outcome(Status::Unbounded, iterations);
            }
            let (prim, pn, dual, dn) = self.residuals();
            if prim > eps + eps * pn || dual > eps + eps * dn {
                let ratio = ((prim / pn.max(1e-10)) / (dual / dn.max(1e-10)).max(1e-30)).sqrt();
                let scale = (self.rho_scale * ratio).clamp(RHO_MIN, RHO_MAX);
                if updates < RHO_UPDATES
                    && iterations >= last_update + RHO_INTERVAL
                    && (scale > self.rho_scale * RHO_TRIGGER || scale * RHO_TRIGGER < self.rho_scale)
                {
                    self.set_rho(scale);
                    last_update = iterations;
                    updates += 1;
                }
                continue;
            }
            let mut out = self.outcome(Status::Optimal, iterations);
            if let Some((x, y)) = polish(&self.data, l, u, &out.x, &out.y, params) {
                out.objective = self.data.objective(&x);
                out.x = x;
                out.y = y;
                out.polished = true;
                return out;
            }
            let (rp, rd) = kkt_residuals(&self.data, l, u, &out.x, &out.y);
            if rp <= params.primal_tol && rd <= params.dual_tol {
                return out;
            }
            if params.single_polish {
                return out;
            }
            best = Some(QpOutcome {
                status: Status::LimitReached,
                ..out
            });
            eps = (eps * 0.1).max(1e-13);
        }
    }

    fn outcome(&self, status: Status, iterations: usize) -> QpOutcome {
        let x: Vec<f64> = (0..self.data.n).map(|j| self.d[j] * self.x[j]).collect();
        let y: Vec<f64> = (0..self.data.rows.len())
            .map(|k| self.e[k] * self.y[k] / self.c)
            .collect();
        let objective = match status {
            Status::Infeasible => f64::INFINITY,
            Status::Unbounded => f64::NEG_INFINITY,
            _ => self.data.objective(&x),
        };
        QpOutcome {
            status,
            x,
            y,
            objective,
            iterations,
            polished: false,
        }
    }

    /// Primal and dual residuals with the norms they are measured against.
    fn residuals(&self) -> (f64, f64, f64, f64) {
        let n = self.data.n;
        let m = self.data.rows.len();
        let mut prim = 0.0f64;
        let mut ax_norm = 0.0f64;
        let mut z_norm = 0.0f64;
        for k in 0..m {
            let ax: f64 = self.sa_rows[k].iter().map(|&(j, a)| a * self.x[j]).sum();
            prim = prim.max(((ax - self.z[k]) / self.e[k]).abs());
            ax_norm = ax_norm.max((ax / self.e[k]).abs());
            z_norm = z_norm.max((self.z[k] / self.e[k]).abs());
        }
        let mut dual = 0.0f64;
        let mut px_norm = 0.0f64;
        let mut aty_norm = 0.0f64;
        let mut q_norm = 0.0f64;
        for j in 0..n {
            let px: f64 = self.sp_rows[j].iter().map(|&(i, a)| a * self.x[i]).sum();
            let aty: f64 = self.sa_cols[j].iter().map(|&(k, a)| a * self.y[k]).sum();
            let s = 1.0 / (self.d[j] * self.c);
            dual = dual.max(((px + self.sq[j] + aty) * s).abs());
            px_norm = px_norm.max((px * s).abs());
            aty_norm = aty_norm.max((aty * s).abs());
            q_norm = q_norm.max((self.sq[j] * s).abs());
        }
        (prim, ax_norm.max(z_norm), dual, px_norm.max(aty_norm).max(q_norm))
    }

    fn primal_infeasible(&self, y_prev: &[f64], l: &[f64], u: &[f64]) -> bool {
        let m = self.data.rows.len();
        let dy: Vec<f64> = (0..m).map(|k| self.y[k] - y_prev[k]).collect();
        let norm = (0..m)
            .map(|k| (self.e[k] * dy[k]).abs())
            .fold(0.0, f64::max);
        if norm < 1e-10 {
            return false;
        }
        let mut support = 0.0;
        for k in 0..m {
            let v = self.e[k] * dy[k];
            if v > 0.0 {
                if u[k] == f64::INFINITY {
                    return false;
                }
                support += u[k] * v;
            } else if v < 0.0 {
                if l[k] == f64::NEG_INFINITY {
                    return false;
                }
                support += l[k] * v;
            }
        }
        if support >= -INFEAS_TOL * norm {
            return false;
        }
        (0..self.data.n).all(|j| {
            let aty: f64 = self.sa_cols[j].iter().map(|&(k, a)| a * dy[k]).sum();
            (aty / self.d[j]).abs() <= INFEAS_TOL * norm
        })
    }

    fn dual_infeasible(&self, x_prev: &[f64], l: &[f64], u: &[f64]) -> bool {
        let n = self.data.n;
        let dx: Vec<f64> = (0..n).map(|j| self.x[j] - x_prev[j]).collect();
        let norm = (0..n).map(|j| (self.d[j] * dx[j]).abs()).fold(0.0, f64::max);
        if norm < 1e-10 {
            return false;
        }
        let tol = INFEAS_TOL * norm;
        let qdx: f64 = (0..n).map(|j| self.sq[j] * dx[j]).sum::<f64>() / self.c;
        if qdx >= -tol {
            return false;
        }
        for j in 0..n {
            let pdx: f64 = self.sp_rows[j].iter().map(|&(i, a)| a * dx[i]).sum();
            if (pdx / (self.d[j] * self.c)).abs() > tol {
                return false;
            }
        }
        (0..self.data.rows.len()).all(|k| {
            let adx = self.sa_rows[k].iter().map(|&(j, a)| a * dx[j]).sum::<f64>() / self.e[k];
            let lo_ok = l[k] == f64::NEG_INFINITY || adx >= -tol;
            let hi_ok = u[k] == f64::INFINITY || adx <= tol;
            lo_ok && hi_ok
        })
    }
}

fn penalties(is_eq: &[bool], scale: f64) -> Vec<f64> {
    is_eq
        .iter()
        .map(|&eq| if eq { scale * RHO_EQ_FACTOR } else { scale })
        .collect()
}

fn factor(n: usize, sp_rows: &[SparseRow], sa_rows: &[SparseRow], rho: &[f64]) -> EnvelopeCholesky {
    let mut klow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, r) in sp_rows.iter().enumerate() {
        for &(j, a) in r {
            if j <= i {
                klow[i].push((j, a));
            }
        }
        klow[i].push((i, SIGMA));
    }
    for (k, r) in sa_rows.iter().enumerate() {
        for &(i, ai) in r {
            for &(j, aj) in r {
                if j <= i {
                    klow[i].push((j, rho[k] * ai * aj));
                }
            }
        }
    }
    let kmat = SymLower { n, rows: klow };
    let perm = rcm_order(&kmat);
    EnvelopeCholesky::factorize(&kmat, perm).expect("ADMM system is positive definite by construction")
}

/// Modified Ruiz equilibration of `[P Aᵀ; A 0]` plus cost scaling.
fn ruiz(data: &QpData) -> (Vec<f64>, Vec<f64>, f64) {
    let n = data.n;
    let m = data.rows.len();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..RUIZ_PASSES {
        let mut col = vec![0.0f64; n];
        for (i, r) in data.p_rows.iter().enumerate() {
            for &(j, a) in r {
                col[j] = col[j].max((d[i] * a * d[j]).abs());
            }
        }
        let mut row = vec![0.0f64; m];
        for (k, r) in data.rows.iter().enumerate() {
            for &(j, a) in r {
                let v = (e[k] * a * d[j]).abs();
                col[j] = col[j].max(v);
                row[k] = row[k].max(v);
            }
        }
        for j in 0..n {
            d[j] /= clamp(col[j]).sqrt();
        }
        for k in 0..m {
            e[k] /= clamp(row[k]).sqrt();
        }
    }
    let mut pcol = vec![0.0f64; n];
    for (i, r) in data.p_rows.iter().enumerate() {
        for &(j, a) in r {
            pcol[j] = pcol[j].max((d[i] * a * d[j]).abs());
        }
    }
    let mean_p = if n > 0 {
        pcol.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let q_norm = (0..n).map(|j| (d[j] * data.q[j]).abs()).fold(0.0, f64::max);
    let c = 1.0 / clamp(mean_p.max(q_norm));
    (d, e, c)
}

/// Max primal violation and max stationarity residual at `(x, y)`.
pub(crate) fn kkt_residuals(data: &QpData, l: &[f64], u: &[f64], x: &[f64], y: &[f64]) -> (f64, f64) {
    let mut rp = 0.0f64;
    for k in 0..data.rows.len() {
        let ax = data.row_dot(k, x);
        rp = rp.max(l[k] - ax).max(ax - u[k]);
    }
    let mut g = vec![0.0; data.n];
    data.p_mul(x, &mut g);
    for (k, r) in data.rows.iter().enumerate() {
        for &(j, a) in r {
            g[j] += a * y[k];
        }
    }
    let rd = g
        .iter()
        .zip(&data.q)
        .map(|(gj, qj)| (gj + qj).abs())
        .fold(0.0, f64::max);
    (rp.max(0.0), rd)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Act {
    Inactive,
    Lower,
    Upper,
    Fixed,
}

/// Active-set refinement of an approximate solution. Returns an exact
/// KKT point `(x, y)` when one is found.
fn polish(
    data: &QpData,
    l: &[f64],
    u: &[f64],
    x0: &[f64],
    y0: &[f64],
    params: &QpParams,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = data.n;
    let m = data.rows.len();
    let mut act: Vec<Act> = (0..m)
        .map(|k| {
            if l[k] == u[k] {
                return Act::Fixed;
            }
            let z = data.row_dot(k, x0).clamp(l[k], u[k]);
            if z - l[k] < -y0[k] {
                Act::Lower
            } else if u[k] - z < y0[k] {
                Act::Upper
            } else {
                Act::Inactive
            }
        })
        .collect();
    let q_scale = data.q.iter().fold(1.0f64, |a, q| a.max(q.abs()));
    let ptol = 0.1 * params.primal_tol;
    let dtol = 0.1 * params.dual_tol * q_scale;
    let mut x = x0.to_vec();
    let mut y = vec![0.0; m];

    for _ in 0..POLISH_PASSES {
        // Variables pinned by an active bound row.
        let mut fixed_val: Vec<Option<f64>> = vec![None; n];
        for (b, &j) in data.bound_var.iter().enumerate() {
            let k = data.n_general + b;
            fixed_val[j] = match act[k] {
                Act::Lower | Act::Fixed => Some(l[k]),
                Act::Upper => Some(u[k]),
                Act::Inactive => None,
            };
        }
        let free: Vec<usize> = (0..n).filter(|&j| fixed_val[j].is_none()).collect();
        let active: Vec<usize> = (0..data.n_general)
            .filter(|&k| act[k] != Act::Inactive)
            .collect();
        let mut col_of = vec![usize::MAX; n];
        for (c, &j) in free.iter().enumerate() {
            col_of[j] = c;
        }
        for j in 0..n {
            if let Some(v) = fixed_val[j] {
                x[j] = v;
            }
        }
        let nf = free.len();
        let dim = nf + active.len();
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for (c, &j) in free.iter().enumerate() {
            let mut r = -data.q[j];
            for &(i, a) in &data.p_rows[j] {
                if col_of[i] != usize::MAX {
                    kkt[(c, col_of[i])] += a;
                } else {
                    r -= a * x[i];
                }
            }
            rhs[c] = r;
        }
        for (g, &k) in active.iter().enumerate() {
            let target = match act[k] {
                Act::Upper => u[k],
                _ => l[k],
            };
            let mut r = target;
            for &(j, a) in &data.rows[k] {
                if col_of[j] != usize::MAX {
                    kkt[(nf + g, col_of[j])] += a;
                    kkt[(col_of[j], nf + g)] += a;
                } else {
                    r -= a * x[j];
                }
            }
            rhs[nf + g] = r;
        }
        let mut reg = kkt.clone();
        for i in 0..dim {
            reg[(i, i)] += if i < nf { POLISH_DELTA } else { -POLISH_DELTA };
        }
        let lu = reg.lu();
        let mut t = DVector::<f64>::zeros(dim);
        for (c, &j) in free.iter().enumerate() {
            t[c] = x0[j];
        }
        for (g, &k) in active.iter().enumerate() {
            t[nf + g] = y0[k];
        }
        let rhs_norm = rhs.amax().max(1.0);
        for _ in 0..REFINE_STEPS {
            let r = &rhs - &kkt * &t;
            if r.amax() <= 1e-13 * rhs_norm {
                break;
            }
            let dt = lu.solve(&r)?;
            t += dt;
        }
        for (c, &j) in free.iter().enumerate() {
            x[j] = t[c];
        }
        y.iter_mut().for_each(|v| *v = 0.0);
        for (g, &k) in active.iter().enumerate() {
            y[k] = t[nf + g];
        }
        // Gradient of the Lagrangian without the bound rows.
        let mut grad = vec![0.0; n];
        data.p_mul(&x, &mut grad);
        for j in 0..n {
            grad[j] += data.q[j];
        }
        for &k in &active {
            for &(j, a) in &data.rows[k] {
                grad[j] += a * y[k];
            }
        }
        for (b, &j) in data.bound_var.iter().enumerate() {
            let k = data.n_general + b;
            if fixed_val[j].is_some() {
                y[k] = -grad[j];
            }
        }

        let mut changed = false;
        let mut stationary = true;
        for &j in &free {
            if grad[j].abs() > dtol {
                stationary = false;
            }
        }
        for k in 0..m {
            if act[k] != Act::Inactive {
                continue;
            }
            let ax = data.row_dot(k, &x);
            let tol = ptol * l[k].abs().max(u[k].abs()).min(1e6).max(1.0);
            if ax < l[k] - tol {
                act[k] = Act::Lower;
                changed = true;
            } else if ax > u[k] + tol {
                act[k] = Act::Upper;
                changed = true;
            }
        }
        if !changed {
            for k in 0..m {
                let wrong = match act[k] {
                    Act::Lower => y[k] > dtol,
                    Act::Upper => y[k] < -dtol,
                    _ => false,
                };
                if wrong {
                    act[k] = Act::Inactive;
                    changed = true;
                }
            }
        }
        if !changed {
            return stationary.then_some((x, y));
        }
    }
    None
}

/// Solves a convex QP (or LP) without binaries.
pub fn solve_qp(p: &Problem, cfg: &SolveConfig) -> Result<Solution, SolverError> {
    cfg.validate()?;
    if p.is_mip() {
        return Err(SolverError::WrongClass("solve_qp does not accept binaries"));
    }
    let start = Instant::now();
    let data = QpData::from_problem(p);
    let (l, u) = (data.l.clone(), data.u.clone());
    let n_general = p.num_constraints();
    let mut ws = AdmmWorkspace::new(data);
    let params = QpParams {
        eps: 1e-6,
        primal_tol: cfg.qp_primal_tol,
        dual_tol: cfg.qp_dual_tol,
        max_iterations: cfg.max_iterations,
        deadline: cfg.deadline(start),
        single_polish: false,
    };
    let out = ws.solve(&l, &u, &params);
    let mut sol = Solution::empty(out.status, p.num_vars());
    sol.objective = match out.status {
        Status::Infeasible => f64::INFINITY,
        Status::Unbounded => f64::NEG_INFINITY,
        _ => p.evaluate_objective(&out.x),
    };
    if out.status == Status::Optimal {
        sol.duals = Some(out.y[..n_general].iter().map(|v| -v).collect());
    }
    sol.values = out.x;
    sol.iterations = out.iterations;
    sol.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optmodel::{Constraint, LinearExpr, Variable};

    #[test]
    fn clipped_unconstrained_optimum() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::continuous("x", 0.0, 1.0)).unwrap();
        p.add_sum_of_squares(&[LinearExpr::from(x) - 2.0]).unwrap();
        let s = solve_qp(&p, &SolveConfig::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value(x) - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_unconstrained_minimum() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::free("x")).unwrap();
        p.add_sum_of_squares(&[LinearExpr::from(x)]).unwrap();
        let s = solve_qp(&p, &SolveConfig::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!(s.value(x).abs() < 1e-10);
    }

    #[test]
    fn detects_infeasibility() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::continuous("x", 0.0, 1.0)).unwrap();
        p.add_constraint(Constraint::ge("c", LinearExpr::from(x), 2.0))
            .unwrap();
        p.add_sum_of_squares(&[LinearExpr::from(x)]).unwrap();
        let s = solve_qp(&p, &SolveConfig::default()).unwrap();
        assert_eq!(s.status, Status::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::nonnegative("x")).unwrap();
        let y = p.add_variable(Variable::free("y")).unwrap();
        p.add_sum_of_squares(&[LinearExpr::from(y)]).unwrap();
        p.add_linear_objective(&LinearExpr::term(x, -1.0)).unwrap();
        let s = solve_qp(&p, &SolveConfig::default()).unwrap();
        assert_eq!(s.status, Status::Unbounded);
    }

    #[test]
    fn tracking_with_coupled_rows() {
        // min (a + b - 3)² s.t. a - b = 1, 0 ≤ a, b ≤ 1.5 → a = 1.5, b = 0.5
        let mut p = Problem::new();
        let a = p.add_variable(Variable::continuous("a", 0.0, 1.5)).unwrap();
        let b = p.add_variable(Variable::continuous("b", 0.0, 1.5)).unwrap();
        p.add_constraint(Constraint::eq(
            "diff",
            LinearExpr::from(a) - LinearExpr::from(b),
            1.0,
        ))
        .unwrap();
        p.add_sum_of_squares(&[LinearExpr::from(a) + LinearExpr::from(b) - 3.0])
            .unwrap();
        let s = solve_qp(&p, &SolveConfig::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value(a) - 1.5).abs() < 1e-10);
        assert!((s.value(b) - 0.5).abs() < 1e-10);
        assert!((s.objective - 1.0).abs() < 1e-9);
    }
}
