//! Reference solvers: bounded revised simplex for LPs, an operator-splitting
//! method with active-set polishing for convex QPs, and best-bound
//! branch-and-bound for problems with binaries.

mod bnb;
mod linalg;
mod lu;
mod qp;
mod simplex;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optmodel::{Problem, Sense, VarRef};

pub use bnb::solve_milp;
pub use qp::solve_qp;

pub(crate) use simplex::{Basis, LpData, LpStatus, Limits, Row, Simplex};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("problem class not supported by this solver: {0}")]
    WrongClass(&'static str),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot write branch-and-bound trace: {0}")]
    Trace(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Relative optimality gap at which branch-and-bound stops.
    pub mip_rel_gap: f64,
    /// Absolute gap accepted when the objective is close to zero.
    pub mip_abs_gap: f64,
    pub lp_feas_tol: f64,
    pub qp_primal_tol: f64,
    pub qp_dual_tol: f64,
    /// Cap on simplex pivots / splitting iterations per continuous solve.
    pub max_iterations: usize,
    /// Cap on branch-and-bound nodes.
    pub max_nodes: usize,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    /// Branch-and-bound tree log, one line per node.
    pub trace: Option<PathBuf>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            mip_rel_gap: 1e-3,
            mip_abs_gap: 1e-6,
            lp_feas_tol: 1e-8,
            qp_primal_tol: 1e-8,
            qp_dual_tol: 1e-8,
            max_iterations: 1_000_000,
            max_nodes: 1_000_000,
            time_limit: None,
            trace: None,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let tols = [
            ("mip_rel_gap", self.mip_rel_gap),
            ("mip_abs_gap", self.mip_abs_gap),
            ("lp_feas_tol", self.lp_feas_tol),
            ("qp_primal_tol", self.qp_primal_tol),
            ("qp_dual_tol", self.qp_dual_tol),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if self.max_iterations == 0 || self.max_nodes == 0 {
            return Err(SolverError::InvalidConfig("limits must be >= 1".into()));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(SolverError::InvalidConfig("time_limit must be > 0".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_limit
            .map(|t| start + Duration::from_secs_f64(t.min(1e9)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    LimitReached,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::LimitReached => "limit-reached",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(Status::Optimal),
            "infeasible" => Ok(Status::Infeasible),
            "unbounded" => Ok(Status::Unbounded),
            "limit-reached" => Ok(Status::LimitReached),
            _ => Err(format!("unknown status `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    /// Variable values indexed by `VarRef::index`.
    pub values: Vec<f64>,
    pub runtime_ms: f64,
    /// Relative gap; branch-and-bound only.
    pub gap: Option<f64>,
    /// Proven lower bound; branch-and-bound only.
    pub best_bound: Option<f64>,
    /// Row multipliers `y` with `∇f(x) − Aᵀy` equal to the variable bound
    /// multipliers: `y ≥ 0` on active `>=` rows, `y ≤ 0` on active `<=`
    /// rows. Continuous solves only.
    pub duals: Option<Vec<f64>>,
    pub iterations: usize,
    pub nodes: usize,
}

impl Solution {
    pub fn value(&self, v: VarRef) -> f64 {
        self.values[v.index()]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub(crate) fn empty(status: Status, n: usize) -> Solution {
        Solution {
            status,
            objective: f64::NAN,
            values: vec![0.0; n],
            runtime_ms: 0.0,
            gap: None,
            best_bound: None,
            duals: None,
            iterations: 0,
            nodes: 0,
        }
    }
}

/// Dispatches on problem class.
pub fn solve(p: &Problem, cfg: &SolveConfig) -> Result<Solution, SolverError> {
    if p.is_mip() {
        solve_milp(p, cfg)
    } else if p.objective().is_quadratic() {
        solve_qp(p, cfg)
    } else {
        solve_lp(p, cfg)
    }
}

/// Row bounds `[lo, hi]` of a constraint.
pub(crate) fn row_bounds(sense: Sense, rhs: f64) -> (f64, f64) {
    match sense {
        Sense::Le => (f64::NEG_INFINITY, rhs),
        Sense::Ge => (rhs, f64::INFINITY),
        Sense::Eq => (rhs, rhs),
    }
}

pub(crate) fn lp_data(p: &Problem) -> LpData {
    let n = p.num_vars();
    let mut cost = vec![0.0; n];
    for &(v, c) in &p.objective().linear.terms {
        cost[v.index()] += c;
    }
    let lower: Vec<f64> = p.variables().iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = p.variables().iter().map(|v| v.upper).collect();
    let rows: Vec<Row> = p
        .constraints()
        .iter()
        .map(|c| {
            let (lo, hi) = row_bounds(c.sense, c.rhs);
            Row {
                terms: c.expr.terms.iter().map(|&(v, a)| (v.index(), a)).collect(),
                lo,
                hi,
            }
        })
        .collect();
    LpData::new(&cost, &lower, &upper, &rows)
}

/// Solves a linear program (no binaries, no quadratic objective) with the
/// bounded revised simplex. Optimal solutions are basic.
pub fn solve_lp(p: &Problem, cfg: &SolveConfig) -> Result<Solution, SolverError> {
    cfg.validate()?;
    if p.is_mip() {
        return Err(SolverError::WrongClass("solve_lp does not accept binaries"));
    }
    if p.objective().is_quadratic() {
        return Err(SolverError::WrongClass(
            "solve_lp does not accept a quadratic objective",
        ));
    }
    let start = Instant::now();
    let lp = lp_data(p);
    let (lo, hi) = lp.bounds_with(&[]);
    let mut s = Simplex::new(&lp, lo, hi, None);
    let status = s.run(&Limits {
        max_iterations: cfg.max_iterations,
        deadline: cfg.deadline(start),
    });
    let values = s.structural_values();
    let mut sol = Solution::empty(map_status(status), p.num_vars());
    sol.objective = p.evaluate_objective(&values);
    if status == LpStatus::Optimal {
        sol.duals = Some(s.row_duals());
    }
    sol.values = values;
    sol.iterations = s.iterations;
    sol.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(sol)
}

pub(crate) fn map_status(s: LpStatus) -> Status {
    match s {
        LpStatus::Optimal => Status::Optimal,
        LpStatus::Infeasible => Status::Infeasible,
        LpStatus::Unbounded => Status::Unbounded,
        LpStatus::LimitReached => Status::LimitReached,
    }
}
