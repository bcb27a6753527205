//! Best-bound branch-and-bound over binary variables, branching on the
//! most fractional binary (those with objective cost first).
//!
//! Each node carries the binary fixings along its path and a warm start
//! from its parent (a simplex basis for linear objectives, the splitting
//! iterate for quadratic ones). The bound of a child is never below the
//! bound of its parent, so the popped bounds never decrease.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::rc::Rc;
use std::time::Instant;

use super::qp::{AdmmWorkspace, QpData, QpParams};
use super::{lp_data, map_status, row_bounds, Basis, Limits, LpData, Simplex};
use super::{Solution, SolveConfig, SolverError, Status};
use crate::optmodel::Problem;

const INT_TOL: f64 = 1e-6;
const NODE_QP_EPS: f64 = 1e-6;
const HEURISTIC_EVERY: usize = 10;
const ROUNDED_FEAS_TOL: f64 = 1e-7;
const DIVE_EVERY: usize = 50;
const DIVE_ROUNDS: usize = 40;

type Iterate = (Vec<f64>, Vec<f64>, Vec<f64>);

#[derive(Clone)]
enum Warm {
    Cold,
    Lp(Rc<Basis>),
    Qp(Rc<Iterate>),
}

struct Relaxation {
    status: Status,
    x: Vec<f64>,
    objective: f64,
    iterations: usize,
    warm: Warm,
}

enum Engine {
    Lp(LpData),
    Qp {
        ws: Box<AdmmWorkspace>,
        l: Vec<f64>,
        u: Vec<f64>,
    },
}

impl Engine {
    fn new(p: &Problem) -> Engine {
        if p.objective().is_quadratic() {
            let data = QpData::from_problem(p);
            let (l, u) = (data.l.clone(), data.u.clone());
            Engine::Qp {
                ws: Box::new(AdmmWorkspace::new(data)),
                l,
                u,
            }
        } else {
            Engine::Lp(lp_data(p))
        }
    }

    fn solve(
        &mut self,
        p: &Problem,
        fixings: &[(usize, f64, f64)],
        warm: &Warm,
        cfg: &SolveConfig,
        deadline: Option<Instant>,
        exact: bool,
    ) -> Relaxation {
        match self {
            Engine::Lp(lp) => {
                let (lo, hi) = lp.bounds_with(fixings);
                let basis = match warm {
                    Warm::Lp(b) => Some(b.as_ref()),
                    _ => None,
                };
                let mut s = Simplex::new(lp, lo, hi, basis);
                let st = s.run(&Limits {
                    max_iterations: cfg.max_iterations,
                    deadline,
                });
                let x = s.structural_values();
                Relaxation {
                    status: map_status(st),
                    objective: p.evaluate_objective(&x),
                    x,
                    iterations: s.iterations,
                    warm: Warm::Lp(Rc::new(s.basis())),
                }
            }
            Engine::Qp { ws, l, u } => {
                let data = ws.data();
                let mut nl = l.clone();
                let mut nu = u.clone();
                for &(j, lo, hi) in fixings {
                    let k = data.bound_row(j).expect("binaries have bound rows");
                    nl[k] = lo;
                    nu[k] = hi;
                }
                if let Warm::Qp(it) = warm {
                    ws.set_iterate(it);
                }
                let params = QpParams {
                    eps: NODE_QP_EPS,
                    primal_tol: cfg.qp_primal_tol,
                    dual_tol: cfg.qp_dual_tol,
                    max_iterations: cfg.max_iterations,
                    deadline,
                    single_polish: !exact,
                };
                let out = ws.solve(&nl, &nu, &params);
                let status = match out.status {
                    Status::LimitReached if !exact => Status::Optimal,
                    s => s,
                };
                Relaxation {
                    status,
                    objective: out.objective,
                    x: out.x,
                    iterations: out.iterations,
                    warm: Warm::Qp(Rc::new(ws.iterate())),
                }
            }
        }
    }
}

struct Node {
    id: usize,
    parent: usize,
    depth: usize,
    bound: f64,
    fixings: Vec<(usize, f64, f64)>,
    warm: Warm,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap order: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

/// Rows of the problem indexed by column, for rounding.
struct RowView {
    lo: Vec<f64>,
    hi: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
    /// Rows over binaries only.
    pure: Vec<bool>,
}

impl RowView {
    fn new(p: &Problem) -> RowView {
        let mut cols = vec![Vec::new(); p.num_vars()];
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut rows = Vec::new();
        for (k, c) in p.constraints().iter().enumerate() {
            let (l, h) = row_bounds(c.sense, c.rhs);
            lo.push(l);
            hi.push(h);
            let r: Vec<(usize, f64)> = c.expr.terms.iter().map(|&(v, a)| (v.index(), a)).collect();
            for &(j, a) in &r {
                cols[j].push((k, a));
            }
            rows.push(r);
        }
        let pure = rows
            .iter()
            .map(|r| r.iter().all(|&(j, _)| p.variables()[j].is_binary()))
            .collect();
        RowView {
            lo,
            hi,
            rows,
            cols,
            pure,
        }
    }

    /// A full binary assignment guided by `x`: binaries are raised to one
    /// in decreasing order of their relaxed value while the rows over
    /// binaries alone stay within their upper bounds; the rest are zero.
    fn assign_binaries(&self, x: &[f64], binaries: &[usize]) -> Vec<(usize, f64, f64)> {
        let mut order: Vec<usize> = binaries.to_vec();
        order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
        let mut act = vec![0.0; self.rows.len()];
        let mut val = vec![0.0; x.len()];
        for &j in &order {
            if x[j] <= INT_TOL {
                break;
            }
            let fits = self.cols[j]
                .iter()
                .all(|&(k, a)| !self.pure[k] || act[k] + a <= self.hi[k] + INT_TOL);
            if fits {
                val[j] = 1.0;
                for &(k, a) in &self.cols[j] {
                    act[k] += a;
                }
            }
        }
        binaries.iter().map(|&j| (j, val[j], val[j])).collect()
    }

    /// Rounds the fractional binaries of `x` one at a time, each toward the
    /// nearer integer if the rows stay satisfied and otherwise toward the
    /// farther one.
    fn round(&self, x: &[f64], binaries: &[usize], tol: f64) -> Option<Vec<f64>> {
        let mut x = x.to_vec();
        let mut act: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|&(j, a)| a * x[j]).sum())
            .collect();
        for &j in binaries {
            let v = x[j];
            let near = v.round().clamp(0.0, 1.0);
            let mut done = false;
            for t in [near, 1.0 - near] {
                let delta = t - v;
                let ok = self.cols[j].iter().all(|&(k, a)| {
                    let na = act[k] + a * delta;
                    let scale = [self.lo[k], self.hi[k]]
                        .iter()
                        .filter(|b| b.is_finite())
                        .fold(1.0f64, |m, b| m.max(b.abs()));
                    let slack = tol * scale;
                    na >= self.lo[k] - slack && na <= self.hi[k] + slack
                });
                if ok {
                    for &(k, a) in &self.cols[j] {
                        act[k] += a * delta;
                    }
                    x[j] = t;
                    done = true;
                    break;
                }
            }
            if !done {
                return None;
            }
        }
        Some(x)
    }
}

struct Trace(Option<BufWriter<File>>);

impl Trace {
    fn line(&mut self, args: std::fmt::Arguments) -> Result<(), SolverError> {
        if let Some(w) = &mut self.0 {
            w.write_fmt(args)
                .and_then(|_| w.write_all(b"\n"))
                .map_err(|e| SolverError::Trace(e.to_string()))?;
        }
        Ok(())
    }
}

fn gap_of(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1e-10)).max(0.0)
}

fn closed(incumbent: f64, bound: f64, cfg: &SolveConfig) -> bool {
    incumbent.is_finite()
        && (incumbent - bound <= cfg.mip_abs_gap || gap_of(incumbent, bound) <= cfg.mip_rel_gap)
}

/// Solves a problem with binary variables (linear or convex quadratic
/// objective) to within `mip_rel_gap`.
pub fn solve_milp(p: &Problem, cfg: &SolveConfig) -> Result<Solution, SolverError> {
    cfg.validate()?;
    let start = Instant::now();
    let deadline = cfg.deadline(start);
    let mut trace = Trace(match &cfg.trace {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|e| SolverError::Trace(e.to_string()))?,
        )),
        None => None,
    });
    trace.line(format_args!("node parent depth bound global_bound incumbent event"))?;

    let binaries: Vec<usize> = (0..p.num_vars())
        .filter(|&j| p.variables()[j].is_binary())
        .collect();
    let view = RowView::new(p);
    // Binaries that carry objective cost are branched on before the rest.
    let mut costed = vec![false; p.num_vars()];
    for &(v, _) in &p.objective().linear.terms {
        costed[v.index()] = true;
    }
    for &(a, b, _) in &p.objective().quadratic {
        costed[a.index()] = true;
        costed[b.index()] = true;
    }
    let mut engine = Engine::new(p);
    let mut iterations = 0usize;
    let mut incumbent = f64::INFINITY;
    let mut best_x: Option<Vec<f64>> = None;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        parent: 0,
        depth: 0,
        bound: f64::NEG_INFINITY,
        fixings: Vec::new(),
        warm: Warm::Cold,
    });
    let mut next_id = 1usize;
    let mut nodes = 0usize;
    let mut global_bound = f64::NEG_INFINITY;
    let mut limit_hit = false;
    let mut unbounded = false;

    while let Some(node) = heap.pop() {
        if closed(incumbent, node.bound, cfg) {
            global_bound = global_bound.max(node.bound);
            heap.clear();
            break;
        }
        if nodes >= cfg.max_nodes || deadline.is_some_and(|d| Instant::now() >= d) {
            global_bound = global_bound.max(node.bound);
            heap.push(node);
            limit_hit = true;
            break;
        }
        global_bound = global_bound.max(node.bound);
        nodes += 1;
        let r = engine.solve(p, &node.fixings, &node.warm, cfg, deadline, false);
        iterations += r.iterations;
        let bound = r.objective.max(node.bound);
        let event = match r.status {
            Status::Infeasible => "infeasible",
            Status::Unbounded => {
                unbounded = true;
                "unbounded"
            }
            Status::LimitReached => {
                limit_hit = true;
                "limit"
            }
            Status::Optimal => "solved",
        };
        if r.status != Status::Optimal {
            trace.line(format_args!(
                "{} {} {} {:?} {:?} {:?} {}",
                node.id, node.parent, node.depth, node.bound, global_bound, incumbent, event
            ))?;
            if r.status == Status::LimitReached {
                heap.push(node);
            }
            if r.status == Status::Infeasible {
                continue;
            }
            break;
        }

        if nodes == 1 || nodes % HEURISTIC_EVERY == 0 {
            let fix = view.assign_binaries(&r.x, &binaries);
            let h = engine.solve(p, &fix, &r.warm, cfg, deadline, false);
            iterations += h.iterations;
            if h.status == Status::Optimal {
                let mut x = h.x;
                for &(j, v, _) in &fix {
                    x[j] = v;
                }
                let obj = p.evaluate_objective(&x);
                if obj < incumbent && p.max_violation(&x) <= ROUNDED_FEAS_TOL {
                    incumbent = obj;
                    best_x = Some(x);
                }
            }
        }

        if nodes == 1 || nodes % DIVE_EVERY == 0 {
            let mut fixings = node.fixings.clone();
            let mut warm = r.warm.clone();
            let mut x = r.x.clone();
            for _ in 0..DIVE_ROUNDS {
                let mut frac: Vec<(f64, usize)> = binaries
                    .iter()
                    .filter(|&&j| (x[j] - x[j].round()).abs() > INT_TOL)
                    .map(|&j| ((x[j] - x[j].round()).abs(), j))
                    .collect();
                if frac.is_empty() {
                    for &b in &binaries {
                        x[b] = x[b].round().clamp(0.0, 1.0);
                    }
                    let obj = p.evaluate_objective(&x);
                    if obj < incumbent && p.max_violation(&x) <= ROUNDED_FEAS_TOL {
                        incumbent = obj;
                        best_x = Some(x);
                    }
                    break;
                }
                frac.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let take = frac.len().div_ceil(4);
                for &(_, j) in &frac[..take] {
                    let v = x[j].round().clamp(0.0, 1.0);
                    fixings.push((j, v, v));
                }
                let d = engine.solve(p, &fixings, &warm, cfg, deadline, false);
                iterations += d.iterations;
                if d.status != Status::Optimal || closed(incumbent, d.objective, cfg) {
                    break;
                }
                x = d.x;
                warm = d.warm;
            }
        }

        let fractional: Vec<usize> = binaries
            .iter()
            .copied()
            .filter(|&j| {
                let f = r.x[j] - r.x[j].floor();
                f > INT_TOL && f < 1.0 - INT_TOL
            })
            .collect();
        let costed_first = fractional.iter().any(|&j| costed[j]);
        let branch = fractional
            .iter()
            .copied()
            .filter(|&j| !costed_first || costed[j])
            .max_by(|&a, &b| {
                let fa = (r.x[a] - r.x[a].floor()).min(r.x[a].ceil() - r.x[a]);
                let fb = (r.x[b] - r.x[b].floor()).min(r.x[b].ceil() - r.x[b]);
                fa.total_cmp(&fb).then(b.cmp(&a))
            });

        let mut x = r.x.clone();
        for &b in &binaries {
            x[b] = x[b].round().clamp(0.0, 1.0);
        }
        // A point integral only up to INT_TOL can still violate rows once
        // rounded; branch on its least integral binary instead.
        let branch = branch.or_else(|| {
            if p.max_violation(&x) <= ROUNDED_FEAS_TOL {
                return None;
            }
            binaries
                .iter()
                .copied()
                .filter(|&j| r.x[j] != x[j])
                .max_by(|&a, &b| (r.x[a] - x[a]).abs().total_cmp(&(r.x[b] - x[b]).abs()).then(b.cmp(&a)))
        });
        let Some(j) = branch else {
            let obj = p.evaluate_objective(&x);
            if obj < incumbent {
                incumbent = obj;
                best_x = Some(x);
            }
            trace.line(format_args!(
                "{} {} {} {:?} {:?} {:?} integral",
                node.id, node.parent, node.depth, bound, global_bound, incumbent
            ))?;
            continue;
        };

        if let Some(x) = view.round(&r.x, &binaries, cfg.lp_feas_tol) {
            let obj = p.evaluate_objective(&x);
            if obj < incumbent {
                incumbent = obj;
                best_x = Some(x);
            }
        }
        trace.line(format_args!(
            "{} {} {} {:?} {:?} {:?} branch:{}",
            node.id, node.parent, node.depth, bound, global_bound, incumbent, j
        ))?;
        if closed(incumbent, bound, cfg) {
            continue;
        }
        for v in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((j, v, v));
            heap.push(Node {
                id: next_id,
                parent: node.id,
                depth: node.depth + 1,
                bound,
                fixings,
                warm: r.warm.clone(),
            });
            next_id += 1;
        }
    }
    if !limit_hit && !unbounded {
        global_bound = match heap.peek() {
            Some(n) => global_bound.max(n.bound.min(incumbent)),
            None => incumbent.max(global_bound),
        };
    }

    let mut sol = Solution::empty(Status::Infeasible, p.num_vars());
    sol.nodes = nodes;
    if unbounded {
        sol.status = Status::Unbounded;
        sol.objective = f64::NEG_INFINITY;
    } else if let Some(x) = best_x {
        // Re-solve the continuous part with the binaries fixed.
        let fix: Vec<(usize, f64, f64)> = binaries.iter().map(|&j| (j, x[j], x[j])).collect();
        let fin = engine.solve(p, &fix, &Warm::Cold, cfg, None, true);
        iterations += fin.iterations;
        let mut values = x;
        if fin.status == Status::Optimal {
            let mut fx = fin.x;
            for &(j, v, _) in &fix {
                fx[j] = v;
            }
            if p.evaluate_objective(&fx) <= p.evaluate_objective(&values) + 1e-9 {
                values = fx;
            }
        }
        sol.objective = p.evaluate_objective(&values);
        sol.values = values;
        let bound = global_bound.min(sol.objective);
        sol.best_bound = Some(bound);
        sol.gap = Some(gap_of(sol.objective, bound));
        sol.status = if limit_hit {
            Status::LimitReached
        } else {
            Status::Optimal
        };
    } else if limit_hit {
        sol.status = Status::LimitReached;
        sol.best_bound = Some(global_bound);
    } else {
        sol.objective = f64::INFINITY;
    }
    sol.iterations = iterations;
    sol.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(w) = &mut trace.0 {
        w.flush().map_err(|e| SolverError::Trace(e.to_string()))?;
    }
    Ok(sol)
}
