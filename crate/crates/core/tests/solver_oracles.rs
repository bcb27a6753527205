mod common;

use common::{vertex_enumeration, BoxQp, DenseLp, DenseMilp};
use linbess::optmodel::{Constraint, LinearExpr, Problem, Sense, Variable};
use linbess::solver::{solve, solve_lp, solve_milp, solve_qp, SolveConfig, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = SolveConfig::default();
    for case in 0..120 {
        let n = rng.random_range(1..=5);
        let m = rng.random_range(0..=4);
        let lp = DenseLp::random(&mut rng, n, m);
        let s = solve_lp(&lp.problem(), &cfg).unwrap();
        match vertex_enumeration(&lp) {
            Some(v) => {
                assert_eq!(s.status, Status::Optimal, "case {case}");
                assert!((s.objective - v).abs() <= 1e-8 * v.abs().max(1.0), "case {case}: {} vs {v}", s.objective);
                assert!(lp.feasible(&s.values, 1e-8));
            }
            None => assert_eq!(s.status, Status::Infeasible, "case {case}"),
        }
    }
}

#[test]
fn lp_duals_certify_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = SolveConfig::default();
    let mut checked = 0;
    while checked < 60 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=5);
        let lp = DenseLp::random(&mut rng, n, m);
        let p = lp.problem();
        let s = solve_lp(&p, &cfg).unwrap();
        if s.status != Status::Optimal {
            continue;
        }
        checked += 1;
        let y = s.duals.as_ref().unwrap();
        // d = c − Aᵀy must be a valid bound multiplier at x.
        let mut d = lp.c.clone();
        for (k, c) in p.constraints().iter().enumerate() {
            let act = c.expr.evaluate(&s.values);
            let tight = (act - c.rhs).abs() <= 1e-7 * c.rhs.abs().max(1.0);
            match c.sense {
                Sense::Ge => assert!(y[k] >= -1e-8 && (tight || y[k].abs() <= 1e-8)),
                Sense::Le => assert!(y[k] <= 1e-8 && (tight || y[k].abs() <= 1e-8)),
                Sense::Eq => {}
            }
            for &(v, a) in &c.expr.terms {
                d[v.index()] -= a * y[k];
            }
        }
        for j in 0..n {
            let at_lo = (s.values[j] - lp.xl[j]).abs() <= 1e-7;
            let at_hi = (s.values[j] - lp.xu[j]).abs() <= 1e-7;
            let tol = 1e-7;
            assert!(
                d[j].abs() <= tol || (d[j] > 0.0 && at_lo) || (d[j] < 0.0 && at_hi),
                "reduced cost {} at x={} in [{}, {}]",
                d[j],
                s.values[j],
                lp.xl[j],
                lp.xu[j]
            );
        }
    }
}

#[test]
fn box_qp_reaches_kkt_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = SolveConfig::default();
    for case in 0..80 {
        let n = rng.random_range(1..=8);
        let qp = BoxQp::random(&mut rng, n);
        let s = solve_qp(&qp.problem(), &cfg).unwrap();
        assert_eq!(s.status, Status::Optimal, "case {case}");
        assert!(qp.kkt_residual(&s.values) <= 1e-6, "case {case}");
        let x = qp.projected_gradient();
        let v = qp.value(&x);
        assert!(s.objective <= v + 1e-7 * v.abs().max(1.0), "case {case}: {} vs {v}", s.objective);
    }
}

#[test]
fn constrained_qp_matches_lp_when_quadratic_vanishes() {
    // The QP path on an LP must agree with the simplex.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = SolveConfig::default();
    for case in 0..40 {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(1..=4);
        let lp = DenseLp::random(&mut rng, n, m);
        let p = lp.problem();
        let a = solve_lp(&p, &cfg).unwrap();
        let b = solve_qp(&p, &cfg).unwrap();
        assert_eq!(a.status, b.status, "case {case}");
        if a.is_optimal() {
            assert!((a.objective - b.objective).abs() <= 1e-6 * a.objective.abs().max(1.0), "case {case}");
        }
    }
}

#[test]
fn milp_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cfg = SolveConfig::default();
    for case in 0..60 {
        let nb = rng.random_range(1..=8);
        let nx = rng.random_range(0..=2);
        let m = rng.random_range(1..=4);
        let milp = DenseMilp::random(&mut rng, nb, nx, m);
        let s = solve_milp(&milp.problem(), &cfg).unwrap();
        match milp.exhaustive() {
            Some(v) => {
                assert_eq!(s.status, Status::Optimal, "case {case}");
                let tol = cfg.mip_rel_gap * v.abs() + 1e-8;
                assert!(s.objective >= v - 1e-8 && s.objective <= v + tol, "case {case}: {} vs {v}", s.objective);
            }
            None => assert_eq!(s.status, Status::Infeasible, "case {case}"),
        }
    }
}

#[test]
fn relaxation_never_exceeds_integer_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cfg = SolveConfig::default();
    for _ in 0..30 {
        let milp = DenseMilp::random(&mut rng, 5, 2, 3);
        let p = milp.problem();
        let s = solve_milp(&p, &cfg).unwrap();
        let r = solve(&p.relaxed(), &cfg).unwrap();
        if s.is_optimal() {
            assert!(r.objective <= s.objective + 1e-9);
        }
    }
}

fn tracking_mip() -> Problem {
    // Two storage-like units with on/off switches tracking a signal.
    let mut p = Problem::new();
    let target = [0.5, -0.3, 1.1, 0.2, -0.9, 0.4];
    let mut residuals = Vec::new();
    for (t, &g) in target.iter().enumerate() {
        let mut net = LinearExpr::constant(-g);
        for u in 0..2 {
            let pc = p.add_variable(Variable::continuous(format!("pc{u}_{t}"), 0.0, 0.8)).unwrap();
            let pd = p.add_variable(Variable::continuous(format!("pd{u}_{t}"), 0.0, 0.7)).unwrap();
            let z = p.add_variable(Variable::binary(format!("z{u}_{t}"))).unwrap();
            p.add_constraint(Constraint::le("c", LinearExpr::from(pc) - LinearExpr::term(z, 0.8), 0.0)).unwrap();
            p.add_constraint(Constraint::le("d", LinearExpr::from(pd) + LinearExpr::term(z, 0.7), 0.7)).unwrap();
            net = net + LinearExpr::from(pd) - LinearExpr::from(pc);
        }
        residuals.push(net);
    }
    p.add_sum_of_squares(&residuals).unwrap();
    p
}

#[test]
fn trace_bounds_never_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.log");
    let cfg = SolveConfig {
        trace: Some(path.clone()),
        mip_rel_gap: 1e-6,
        ..SolveConfig::default()
    };
    let s = solve_milp(&tracking_mip(), &cfg).unwrap();
    assert!(s.is_optimal());
    let text = std::fs::read_to_string(path).unwrap();
    let mut last = f64::NEG_INFINITY;
    let mut lines = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let global: f64 = f[4].parse().unwrap();
        assert!(global >= last);
        last = global;
        lines += 1;
    }
    assert!(lines >= 1);
    assert!(s.best_bound.unwrap() <= s.objective + 1e-12);
}

#[test]
fn solves_are_deterministic() {
    let p = tracking_mip();
    let cfg = SolveConfig::default();
    let a = solve_milp(&p, &cfg).unwrap();
    let b = solve_milp(&p, &cfg).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.nodes, b.nodes);
}
