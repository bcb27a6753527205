//! Bounded-variable revised primal simplex.
//!
//! Every row `aᵢᵀx` gets a logical variable `sᵢ = aᵢᵀx` carrying the row
//! bounds, so the working system is `[A −I]·(x, s) = 0` with box bounds on
//! all columns and the all-logical basis as the starting point. Phase 1
//! minimizes the total bound violation of the basic variables; phase 2 the
//! (scaled) cost. Pricing is Dantzig on norm-weighted reduced costs;
//! after a run of degenerate pivots the method switches to Bland's rule
//! until the objective moves again.

use std::time::Instant;

use super::lu::{BasisFactor, SparseCol};

const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 50;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// Basis statuses of structural and logical columns, reusable as a warm
/// start for a problem with the same shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Basis {
    states: Vec<VarState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    LimitReached,
}

pub(crate) struct Limits {
    pub max_iterations: usize,
    pub deadline: Option<Instant>,
}

impl Limits {
    fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// A linear row `lo ≤ Σ coef·x ≤ hi`.
pub(crate) struct Row {
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// Scaled LP data: `min cᵀx` over `lo ≤ Ax ≤ hi`, `l ≤ x ≤ u`.
#[derive(Debug, Clone)]
pub(crate) struct LpData {
    n: usize,
    m: usize,
    cols: Vec<SparseCol>,
    col_norm: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    col_scale: Vec<f64>,
    row_scale: Vec<f64>,
    cost_scale: f64,
}

impl LpData {
    pub fn new(cost: &[f64], lower: &[f64], upper: &[f64], rows: &[Row]) -> LpData {
        let n = cost.len();
        let m = rows.len();
        let (row_scale, col_scale) = geometric_scaling(n, rows);

        let mut cols: Vec<SparseCol> = vec![Vec::new(); n + m];
        for (i, r) in rows.iter().enumerate() {
            for &(j, a) in &r.terms {
                if a != 0.0 {
                    cols[j].push((i, a * row_scale[i] * col_scale[j]));
                }
            }
            cols[n + i].push((i, -1.0));
        }
        let max_cost = cost
            .iter()
            .zip(&col_scale)
            .map(|(c, s)| (c * s).abs())
            .fold(0.0, f64::max);
        let cost_scale = if max_cost > 0.0 { 1.0 / max_cost } else { 1.0 };

        let mut scost = vec![0.0; n + m];
        let mut slo = vec![0.0; n + m];
        let mut shi = vec![0.0; n + m];
        for j in 0..n {
            scost[j] = cost[j] * col_scale[j] * cost_scale;
            slo[j] = lower[j] / col_scale[j];
            shi[j] = upper[j] / col_scale[j];
        }
        for (i, r) in rows.iter().enumerate() {
            slo[n + i] = r.lo * row_scale[i];
            shi[n + i] = r.hi * row_scale[i];
        }
        let col_norm = cols
            .iter()
            .map(|c| c.iter().map(|&(_, a)| a * a).sum::<f64>())
            .collect();
        LpData {
            n,
            m,
            cols,
            col_norm,
            cost: scost,
            lower: slo,
            upper: shi,
            col_scale,
            row_scale,
            cost_scale,
        }
    }

    /// Working bounds with structural column `j` overridden by the given
    /// unscaled bounds.
    pub fn bounds_with(&self, overrides: &[(usize, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.lower.clone();
        let mut hi = self.upper.clone();
        for &(j, l, u) in overrides {
            lo[j] = l / self.col_scale[j];
            hi[j] = u / self.col_scale[j];
        }
        (lo, hi)
    }
}

/// Power-of-two geometric-mean scaling of rows and columns.
fn geometric_scaling(n: usize, rows: &[Row]) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len();
    let mut r = vec![1.0; m];
    let mut c = vec![1.0; n];
    for _ in 0..4 {
        for (i, row) in rows.iter().enumerate() {
            let (lo, hi) = row
                .terms
                .iter()
                .filter(|t| t.1 != 0.0)
                .map(|&(j, a)| (a * c[j]).abs())
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi > 0.0 {
                r[i] = 1.0 / (lo * hi).sqrt();
            }
        }
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![0.0f64; n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                if a != 0.0 {
                    let v = (a * r[i]).abs();
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
        }
        for j in 0..n {
            if hi[j] > 0.0 {
                c[j] = 1.0 / (lo[j] * hi[j]).sqrt();
            }
        }
    }
    let pow2 = |v: f64| 2f64.powi(v.log2().round() as i32);
    (r.into_iter().map(pow2).collect(), c.into_iter().map(pow2).collect())
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot {
        pos: usize,
        theta: f64,
        leave_value: f64,
        leave_state: VarState,
    },
}

pub(crate) struct Simplex<'a> {
    lp: &'a LpData,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    pos_of: Vec<usize>,
    factor: BasisFactor,
    cb: Vec<f64>,
    y: Vec<f64>,
    alpha: Vec<f64>,
    pub iterations: usize,
}

impl<'a> Simplex<'a> {
    /// Sets up a solver over `lp` with working (scaled) bounds, starting
    /// from `warm` when it has the right shape.
    pub fn new(lp: &'a LpData, lower: Vec<f64>, upper: Vec<f64>, warm: Option<&Basis>) -> Self {
        let total = lp.n + lp.m;
        let mut s = Simplex {
            lp,
            lower,
            upper,
            x: vec![0.0; total],
            state: vec![VarState::AtLower; total],
            basis: Vec::with_capacity(lp.m),
            pos_of: vec![NONE; total],
            factor: BasisFactor::default(),
            cb: vec![0.0; lp.m],
            y: vec![0.0; lp.m],
            alpha: vec![0.0; lp.m],
            iterations: 0,
        };
        let warm_ok = warm.is_some_and(|b| {
            b.states.len() == total
                && b.states.iter().filter(|&&st| st == VarState::Basic).count() == lp.m
        });
        if warm_ok {
            s.state = warm.unwrap().states.clone();
        } else {
            for j in 0..total {
                s.state[j] = if j >= lp.n {
                    VarState::Basic
                } else {
                    VarState::AtLower
                };
            }
        }
        for j in 0..total {
            if s.state[j] == VarState::Basic {
                s.pos_of[j] = s.basis.len();
                s.basis.push(j);
            } else {
                s.state[j] = s.nonbasic_state(j, s.state[j]);
            }
        }
        s
    }

    /// Valid nonbasic status for `j`, keeping `preferred` when possible.
    fn nonbasic_state(&self, j: usize, preferred: VarState) -> VarState {
        let (l, u) = (self.lower[j], self.upper[j]);
        match preferred {
            VarState::AtUpper if u.is_finite() => VarState::AtUpper,
            _ if l.is_finite() => VarState::AtLower,
            _ if u.is_finite() => VarState::AtUpper,
            _ => VarState::Free,
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            _ => 0.0,
        }
    }

    fn refactor(&mut self) {
        let m = self.lp.m;
        for _ in 0..m.max(1) + 1 {
            let cols: Vec<&SparseCol> = self.basis.iter().map(|&j| &self.lp.cols[j]).collect();
            match BasisFactor::factorize(m, &cols) {
                Ok(f) => {
                    self.factor = f;
                    return;
                }
                Err(singular) => {
                    for (&pos, &row) in singular.positions.iter().zip(&singular.rows) {
                        let out = self.basis[pos];
                        let logical = self.lp.n + row;
                        self.pos_of[out] = NONE;
                        let near_upper = self.upper[out].is_finite()
                            && (self.upper[out] - self.x[out]).abs()
                                < (self.x[out] - self.lower[out]).abs();
                        let pref = if near_upper {
                            VarState::AtUpper
                        } else {
                            VarState::AtLower
                        };
                        self.state[out] = self.nonbasic_state(out, pref);
                        self.basis[pos] = logical;
                        self.pos_of[logical] = pos;
                        self.state[logical] = VarState::Basic;
                    }
                }
            }
        }
        panic!("basis repair did not converge");
    }

    fn recompute_primal(&mut self) {
        let n_total = self.lp.n + self.lp.m;
        let mut rhs = vec![0.0; self.lp.m];
        for j in 0..n_total {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != 0.0 {
                for &(i, a) in &self.lp.cols[j] {
                    rhs[i] -= a * v;
                }
            }
        }
        self.factor.ftran(&mut rhs);
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = rhs[pos];
        }
    }

    fn refactor_and_recompute(&mut self) {
        self.refactor();
        self.recompute_primal();
    }

    /// Fills basic costs; returns true when some basic variable violates
    /// its bounds (phase 1).
    fn fill_basic_costs(&mut self) -> bool {
        let mut infeasible = false;
        for (pos, &j) in self.basis.iter().enumerate() {
            let v = self.x[j];
            self.cb[pos] = if v < self.lower[j] - FEAS_TOL {
                infeasible = true;
                -1.0
            } else if v > self.upper[j] + FEAS_TOL {
                infeasible = true;
                1.0
            } else {
                0.0
            };
        }
        if !infeasible {
            for (pos, &j) in self.basis.iter().enumerate() {
                self.cb[pos] = self.lp.cost[j];
            }
        }
        infeasible
    }

    fn reduced_cost(&self, j: usize, phase1: bool) -> f64 {
        let c = if phase1 { 0.0 } else { self.lp.cost[j] };
        c - self.lp.cols[j]
            .iter()
            .map(|&(i, a)| a * self.y[i])
            .sum::<f64>()
    }

    fn price(&self, phase1: bool, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.lp.n + self.lp.m {
            let st = self.state[j];
            if st == VarState::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j, phase1);
            let dir = match st {
                VarState::AtLower if d < -DUAL_TOL => 1.0,
                VarState::AtUpper if d > DUAL_TOL => -1.0,
                VarState::Free if d.abs() > DUAL_TOL => -d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            let score = d * d / (1.0 + self.lp.col_norm[j]);
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    fn load_alpha(&mut self, q: usize) {
        self.alpha.iter_mut().for_each(|a| *a = 0.0);
        for &(i, a) in &self.lp.cols[q] {
            self.alpha[i] = a;
        }
        self.factor.ftran(&mut self.alpha);
    }

    fn ratio_test(&self, q: usize, dir: f64, phase1: bool, bland: bool) -> Step {
        let range = if dir > 0.0 {
            self.upper[q] - self.x[q]
        } else {
            self.x[q] - self.lower[q]
        };
        let amax = self.alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let ptol = PIVOT_TOL * amax.max(1.0);

        // (pos, exact ratio, relaxed ratio, bound hit, state after leaving)
        let mut cands: Vec<(usize, f64, f64, f64, VarState)> = Vec::new();
        for (pos, &a) in self.alpha.iter().enumerate() {
            if a.abs() < ptol {
                continue;
            }
            let rate = -dir * a;
            let j = self.basis[pos];
            let (v, l, u) = (self.x[j], self.lower[j], self.upper[j]);
            let hit = if rate < 0.0 {
                if phase1 && v > u + FEAS_TOL {
                    Some((u, 0.0, VarState::AtUpper))
                } else if v < l - FEAS_TOL || l == f64::NEG_INFINITY {
                    None
                } else {
                    Some((l, FEAS_TOL, VarState::AtLower))
                }
            } else if phase1 && v < l - FEAS_TOL {
                Some((l, 0.0, VarState::AtLower))
            } else if v > u + FEAS_TOL || u == f64::INFINITY {
                None
            } else {
                Some((u, FEAS_TOL, VarState::AtUpper))
            };
            if let Some((bound, slack, st)) = hit {
                let exact = ((bound - v) / rate).max(0.0);
                let relaxed = ((bound - v).abs() + slack) / rate.abs();
                cands.push((pos, exact, relaxed, bound, st));
            }
        }

        let chosen = if bland {
            let min = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.1 <= min + 1e-12)
                .min_by_key(|c| self.basis[c.0])
        } else {
            let theta_max = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
            cands.iter().filter(|c| c.1 <= theta_max).max_by(|a, b| {
                self.alpha[a.0]
                    .abs()
                    .partial_cmp(&self.alpha[b.0].abs())
                    .unwrap()
                    .then(b.0.cmp(&a.0))
            })
        };
        match chosen {
            Some(&(pos, theta, _, bound, st)) if theta < range => Step::Pivot {
                pos,
                theta,
                leave_value: bound,
                leave_state: st,
            },
            _ if range.is_finite() => Step::Flip(range),
            _ => Step::Unbounded,
        }
    }

    fn apply(&mut self, q: usize, dir: f64, theta: f64) {
        if theta != 0.0 {
            self.x[q] += dir * theta;
            for (pos, &j) in self.basis.iter().enumerate() {
                self.x[j] -= dir * theta * self.alpha[pos];
            }
        }
    }

    pub fn run(&mut self, limits: &Limits) -> LpStatus {
        self.refactor_and_recompute();
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut confirmed = false;
        let mut stalls = 0usize;
        loop {
            if self.iterations >= limits.max_iterations || limits.expired() {
                return LpStatus::LimitReached;
            }
            if self.factor.num_updates() >= REFACTOR_EVERY {
                self.refactor_and_recompute();
            }
            let phase1 = self.fill_basic_costs();
            self.y.copy_from_slice(&self.cb);
            self.factor.btran(&mut self.y);
            let Some((q, dir)) = self.price(phase1, bland) else {
                if !confirmed {
                    self.refactor_and_recompute();
                    confirmed = true;
                    continue;
                }
                return if phase1 {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                };
            };
            confirmed = false;
            self.load_alpha(q);
            self.iterations += 1;
            let theta = match self.ratio_test(q, dir, phase1, bland) {
                Step::Unbounded => {
                    if phase1 {
                        // Phase 1 is bounded below; only numerical drift
                        // gets here.
                        stalls += 1;
                        if stalls > 3 {
                            return LpStatus::Infeasible;
                        }
                        self.refactor_and_recompute();
                        continue;
                    }
                    return LpStatus::Unbounded;
                }
                Step::Flip(theta) => {
                    self.apply(q, dir, theta);
                    self.state[q] = if dir > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.x[q] = self.nonbasic_value(q);
                    theta
                }
                Step::Pivot {
                    pos,
                    theta,
                    leave_value,
                    leave_state,
                } => {
                    self.apply(q, dir, theta);
                    let out = self.basis[pos];
                    self.x[out] = leave_value;
                    self.state[out] = if self.lower[out] == self.upper[out] {
                        VarState::AtLower
                    } else {
                        leave_state
                    };
                    self.pos_of[out] = NONE;
                    self.basis[pos] = q;
                    self.pos_of[q] = pos;
                    self.state[q] = VarState::Basic;
                    self.factor.update(pos, &self.alpha);
                    theta
                }
            };
            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
    }

    /// Structural values in the caller's (unscaled) units.
    pub fn structural_values(&self) -> Vec<f64> {
        (0..self.lp.n)
            .map(|j| self.x[j] * self.lp.col_scale[j])
            .collect()
    }

    /// Row duals `y` such that `c − Aᵀy` are the reduced costs, unscaled.
    pub fn row_duals(&mut self) -> Vec<f64> {
        for (pos, &j) in self.basis.iter().enumerate() {
            self.cb[pos] = self.lp.cost[j];
        }
        self.y.copy_from_slice(&self.cb);
        self.factor.btran(&mut self.y);
        self.y
            .iter()
            .zip(&self.lp.row_scale)
            .map(|(y, r)| y * r / self.lp.cost_scale)
            .collect()
    }

    pub fn basis(&self) -> Basis {
        Basis {
            states: self.state.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(cost: &[f64], lo: &[f64], hi: &[f64], rows: &[Row]) -> (LpStatus, Vec<f64>) {
        let lp = LpData::new(cost, lo, hi, rows);
        let (l, u) = lp.bounds_with(&[]);
        let mut s = Simplex::new(&lp, l, u, None);
        let st = s.run(&Limits {
            max_iterations: 10_000,
            deadline: None,
        });
        (st, s.structural_values())
    }

    #[test]
    fn single_active_bound() {
        let (st, x) = solve(&[-1.0], &[0.0], &[3.0], &[]);
        assert_eq!(st, LpStatus::Optimal);
        assert_eq!(x, vec![3.0]);
    }

    #[test]
    fn covering_row() {
        let rows = [Row {
            terms: vec![(0, 1.0), (1, 1.0)],
            lo: 2.0,
            hi: f64::INFINITY,
        }];
        let inf = f64::INFINITY;
        let (st, x) = solve(&[1.0, 1.0], &[0.0, 0.0], &[inf, inf], &rows);
        assert_eq!(st, LpStatus::Optimal);
        assert!((x[0] + x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let inf = f64::INFINITY;
        let rows = [Row {
            terms: vec![(0, 1.0)],
            lo: 5.0,
            hi: inf,
        }];
        let (st, _) = solve(&[1.0], &[0.0], &[1.0], &rows);
        assert_eq!(st, LpStatus::Infeasible);
        let rows = [Row {
            terms: vec![(0, 1.0), (1, -1.0)],
            lo: -inf,
            hi: 1.0,
        }];
        let (st, _) = solve(&[0.0, -1.0], &[0.0, 0.0], &[inf, inf], &rows);
        assert_eq!(st, LpStatus::Unbounded);
    }
}
