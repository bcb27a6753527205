//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use linbess::optmodel::{Constraint, LinearExpr, Problem, Variable};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense LP `min cᵀx` over `lo ≤ Ax ≤ hi`, `xl ≤ x ≤ xu` (all finite boxes).
#[derive(Debug, Clone)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, f64, f64)>,
    pub xl: Vec<f64>,
    pub xu: Vec<f64>,
}

impl DenseLp {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DenseLp {
        let c = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let xl: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
        let xu: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
        let rows = (0..m)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let kind = rng.random_range(0..5);
                let b = rng.random_range(-2.0..4.0);
                match kind {
                    0 => (a, b, b),
                    1 => (a, f64::NEG_INFINITY, b),
                    2 => (a, b, f64::INFINITY),
                    _ => (a, b - rng.random_range(0.5..3.0), b),
                }
            })
            .collect();
        DenseLp { c, rows, xl, xu }
    }

    pub fn problem(&self) -> Problem {
        let mut p = Problem::new();
        let vars: Vec<_> = (0..self.c.len())
            .map(|j| {
                p.add_variable(Variable::continuous(format!("x{j}"), self.xl[j], self.xu[j]))
                    .unwrap()
            })
            .collect();
        for (k, (a, lo, hi)) in self.rows.iter().enumerate() {
            let mut e = LinearExpr::new();
            for (j, &v) in vars.iter().enumerate() {
                e.add_term(v, a[j]);
            }
            if lo == hi {
                p.add_constraint(Constraint::eq(format!("r{k}"), e, *lo)).unwrap();
            } else {
                if lo.is_finite() {
                    p.add_constraint(Constraint::ge(format!("r{k}l"), e.clone(), *lo))
                        .unwrap();
                }
                if hi.is_finite() {
                    p.add_constraint(Constraint::le(format!("r{k}u"), e, *hi)).unwrap();
                }
            }
        }
        let mut obj = LinearExpr::new();
        for (j, &v) in vars.iter().enumerate() {
            obj.add_term(v, self.c[j]);
        }
        p.add_linear_objective(&obj).unwrap();
        p
    }

    pub fn feasible(&self, x: &[f64], tol: f64) -> bool {
        let n = self.c.len();
        (0..n).all(|j| x[j] >= self.xl[j] - tol && x[j] <= self.xu[j] + tol)
            && self.rows.iter().all(|(a, lo, hi)| {
                let ax: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
                ax >= lo - tol && ax <= hi + tol
            })
    }
}

/// Minimum of a bounded LP by enumerating every vertex: each choice of `n`
/// linearly independent active hyperplanes. `None` when infeasible.
pub fn vertex_enumeration(lp: &DenseLp) -> Option<f64> {
    let n = lp.c.len();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.xl[j]));
        planes.push((e, lp.xu[j]));
    }
    for (a, lo, hi) in &lp.rows {
        if lo.is_finite() {
            planes.push((a.clone(), *lo));
        }
        if hi.is_finite() && hi != lo {
            planes.push((a.clone(), *hi));
        }
    }
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(n);
    combos(planes.len(), n, 0, &mut pick, &mut |idx| {
        let m = DMatrix::from_fn(n, n, |r, c| planes[idx[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| planes[idx[r]].1);
        let lu = m.lu();
        if lu.determinant().abs() < 1e-10 {
            return;
        }
        if let Some(x) = lu.solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            if lp.feasible(&x, 1e-9) {
                let v: f64 = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    });
    best
}

fn combos(total: usize, k: usize, from: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in from..total {
        if total - i < k - pick.len() {
            break;
        }
        pick.push(i);
        combos(total, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Box QP `min ½xᵀMᵀMx + qᵀx` over `l ≤ x ≤ u`, stored densely.
#[derive(Debug, Clone)]
pub struct BoxQp {
    pub m: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl BoxQp {
    pub fn random(rng: &mut ChaCha8Rng, n: usize) -> BoxQp {
        let k = rng.random_range(1..=n + 1);
        let m = (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let q = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let l = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
        let u = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        BoxQp { m, q, l, u }
    }

    /// The same QP through the modelling layer: `½‖Mx‖²` is written as
    /// the sum of squares of `Mx/√2`.
    pub fn problem(&self) -> Problem {
        let mut p = Problem::new();
        let n = self.q.len();
        let vars: Vec<_> = (0..n)
            .map(|j| {
                p.add_variable(Variable::continuous(format!("x{j}"), self.l[j], self.u[j]))
                    .unwrap()
            })
            .collect();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rows: Vec<LinearExpr> = self
            .m
            .iter()
            .map(|r| {
                let mut e = LinearExpr::new();
                for (j, &v) in vars.iter().enumerate() {
                    e.add_term(v, s * r[j]);
                }
                e
            })
            .collect();
        p.add_sum_of_squares(&rows).unwrap();
        let mut lin = LinearExpr::new();
        for (j, &v) in vars.iter().enumerate() {
            lin.add_term(v, self.q[j]);
        }
        p.add_linear_objective(&lin).unwrap();
        p
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.q.len();
        let mut g = self.q.clone();
        for r in &self.m {
            let rx: f64 = r.iter().zip(x).map(|(a, b)| a * b).sum();
            for j in 0..n {
                g[j] += r[j] * rx;
            }
        }
        g
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let quad: f64 = self
            .m
            .iter()
            .map(|r| {
                let rx: f64 = r.iter().zip(x).map(|(a, b)| a * b).sum();
                rx * rx
            })
            .sum();
        0.5 * quad + self.q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `‖x − Π(x − ∇f(x))‖∞`, zero exactly at KKT points.
    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        (0..x.len())
            .map(|j| (x[j] - (x[j] - g[j]).clamp(self.l[j], self.u[j])).abs())
            .fold(0.0, f64::max)
    }

    /// Accelerated projected gradient run to stationarity.
    pub fn projected_gradient(&self) -> Vec<f64> {
        let n = self.q.len();
        let lip: f64 = self
            .m
            .iter()
            .map(|r| r.iter().map(|a| a * a).sum::<f64>())
            .sum::<f64>()
            .max(1e-12);
        let step = 1.0 / lip;
        let mut x: Vec<f64> = (0..n).map(|j| 0.0f64.clamp(self.l[j], self.u[j])).collect();
        let mut yk = x.clone();
        let mut t = 1.0f64;
        for _ in 0..200_000 {
            let g = self.gradient(&yk);
            let xn: Vec<f64> = (0..n)
                .map(|j| (yk[j] - step * g[j]).clamp(self.l[j], self.u[j]))
                .collect();
            let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            for j in 0..n {
                yk[j] = xn[j] + (t - 1.0) / tn * (xn[j] - x[j]);
            }
            // Restart when the momentum points uphill.
            if self.value(&xn) > self.value(&x) {
                yk.clone_from(&xn);
                t = 1.0;
            } else {
                t = tn;
            }
            x = xn;
            if self.kkt_residual(&x) < 1e-12 {
                break;
            }
        }
        x
    }
}

/// Mixed binary program: binaries `b`, continuous `x` in a box, dense
/// linear rows over `(b, x)` and a linear cost.
#[derive(Debug, Clone)]
pub struct DenseMilp {
    pub nb: usize,
    pub lp: DenseLp,
}

impl DenseMilp {
    pub fn random(rng: &mut ChaCha8Rng, nb: usize, nx: usize, m: usize) -> DenseMilp {
        let mut lp = DenseLp::random(rng, nb + nx, m);
        for j in 0..nb {
            lp.xl[j] = 0.0;
            lp.xu[j] = 1.0;
        }
        DenseMilp { nb, lp }
    }

    pub fn problem(&self) -> Problem {
        let mut p = self.lp.problem();
        let mut q = Problem::new();
        for (j, v) in p.variables().iter().enumerate() {
            let nv = if j < self.nb {
                Variable::binary(v.name.clone())
            } else {
                v.clone()
            };
            q.add_variable(nv).unwrap();
        }
        for c in p.constraints() {
            let mut e = LinearExpr::new();
            for &(v, a) in &c.expr.terms {
                e.add_term(q.var_ref(v.index()), a);
            }
            q.add_constraint(Constraint::new(c.name.clone(), e, c.sense, c.rhs))
                .unwrap();
        }
        let mut obj = LinearExpr::new();
        for &(v, a) in &p.objective().linear.terms {
            obj.add_term(q.var_ref(v.index()), a);
        }
        q.add_linear_objective(&obj).unwrap();
        p = q;
        p
    }

    /// Enumerates all binary assignments; the continuous part of each is
    /// solved by vertex enumeration.
    pub fn exhaustive(&self) -> Option<f64> {
        let nx = self.lp.c.len() - self.nb;
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << self.nb) {
            let bits: Vec<f64> = (0..self.nb).map(|j| ((mask >> j) & 1) as f64).collect();
            let fixed: f64 = (0..self.nb).map(|j| self.lp.c[j] * bits[j]).sum();
            let sub = DenseLp {
                c: self.lp.c[self.nb..].to_vec(),
                rows: self
                    .lp
                    .rows
                    .iter()
                    .map(|(a, lo, hi)| {
                        let shift: f64 = (0..self.nb).map(|j| a[j] * bits[j]).sum();
                        (a[self.nb..].to_vec(), lo - shift, hi - shift)
                    })
                    .collect(),
                xl: self.lp.xl[self.nb..].to_vec(),
                xu: self.lp.xu[self.nb..].to_vec(),
            };
            let v = if nx == 0 {
                sub.feasible(&[], 1e-9).then_some(0.0)
            } else {
                vertex_enumeration(&sub)
            };
            if let Some(v) = v {
                best = Some(best.map_or(v + fixed, |b: f64| b.min(v + fixed)));
            }
        }
        best
    }
}
