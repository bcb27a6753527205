use linbess::bess::ModelKind;
use linbess::instances::{
    digest, make_spt_instance, make_tep_instance, sample_bess, synthetic_pool, synthetic_wind_pool, Rng,
    TepInstance, HOURS, TEP_NODES,
};
use linbess::metrics::tep_metrics;
use linbess::optmodel::Problem;
use linbess::problems::{assemble_spt, assemble_tep, TepAssembly};
use linbess::solver::{solve, SolveConfig, Status};

#[test]
fn seeded_instances_match_golden_digests() {
    let mut r = Rng::new(42);
    let draws: Vec<_> = (0..3).map(|_| sample_bess(&mut r)).collect();
    assert_eq!(
        digest(&draws),
        "a6ef4bf4b9579675feffa12f808f6f18108c1d98fa31af21efdb8e6d8a9b27be"
    );
    let pool = synthetic_pool(42, 1450);
    assert_eq!(
        digest(&pool),
        "4fa59ee96a058664cb558bf055341af551230c26ed40300d70c3972e27280410"
    );
    let spt = make_spt_instance(&mut Rng::derive(42, 0, "spt/1"), 1, &pool).unwrap();
    assert_eq!(
        digest(&spt),
        "6c196c8a0a5b682d5fadb944a600967ebb157b8bc2345200777929d8564d62d6"
    );
    let wind = synthetic_wind_pool(42, 1450);
    let tep = make_tep_instance(&mut Rng::derive(42, 0, "tep/1"), 1, 5, &wind).unwrap();
    assert_eq!(
        digest(&tep),
        "ce3cd3e3898c8d4546d9855f4c6d58a886fbb667dfa663ca28232ec0f64577d0"
    );
}

#[test]
fn sampled_means_sit_at_range_midpoints() {
    let mut r = Rng::new(3);
    let n = 10_000;
    let mut sums = [0.0; 6];
    for _ in 0..n {
        let (p, init) = sample_bess(&mut r);
        assert!(p.e_min > 0.0 && p.e_min < 30.0 && p.e_max > 40.0 && p.e_max < 80.0);
        assert!(p.p_c_max > 10.0 && p.p_c_max < 20.0 && p.p_d_max > 10.0 && p.p_d_max < 20.0);
        assert!(p.eta_c > 0.75 && p.eta_c < 1.0 && p.eta_d > 0.75 && p.eta_d < 1.0);
        assert_eq!(init.e0, 0.5 * (p.e_min + p.e_max));
        for (s, v) in sums.iter_mut().zip([p.e_min, p.e_max, p.p_c_max, p.p_d_max, p.eta_c, p.eta_d]) {
            *s += v;
        }
    }
    let mids = [15.0, 60.0, 15.0, 15.0, 0.875, 0.875];
    for (s, m) in sums.iter().zip(mids) {
        let mean = s / n as f64;
        assert!((mean - m).abs() <= 0.02 * m, "mean {mean} vs {m}");
    }
}

#[test]
fn default_signal_changes_sign() {
    let pool = synthetic_pool(42, 1450);
    for i in 0..100 {
        let s = make_spt_instance(&mut Rng::derive(42, i, "spt/1"), 1, &pool).unwrap();
        assert!(s.signal.iter().any(|&v| v > 0.0), "instance {i}");
        assert!(s.signal.iter().any(|&v| v < 0.0), "instance {i}");
    }
}

#[test]
fn tracking_objective_matches_recomputation() {
    let pool = synthetic_pool(5, 40);
    for i in 0..6 {
        let inst = make_spt_instance(&mut Rng::derive(5, i, "spt"), 2, &pool).unwrap();
        for kind in [ModelKind::Lp, ModelKind::Na, ModelKind::RelYZ, ModelKind::ExtLP] {
            let asm = assemble_spt(&inst, kind).unwrap();
            let s = solve(&asm.problem, &SolveConfig::default()).unwrap();
            assert_eq!(s.status, Status::Optimal);
            let direct = asm.tracking_error(&s.values);
            assert!((s.objective - direct).abs() <= 1e-8 * direct.max(1.0), "{kind:?}: {} vs {direct}", s.objective);
        }
    }
}

fn small_tep() -> TepInstance {
    let wind = synthetic_wind_pool(8, 30);
    make_tep_instance(&mut Rng::derive(8, 0, "tep"), 1, 1, &wind).unwrap()
}

/// Worst nodal balance residual of a TEP solution.
fn balance_residual(inst: &TepInstance, asm: &TepAssembly, v: &[f64]) -> f64 {
    let d = &inst.data;
    let mut worst: f64 = 0.0;
    for day in &asm.days {
        for t in 0..HOURS {
            let mut net = [0.0; TEP_NODES];
            for (c, cor) in d.corridors.iter().enumerate() {
                let f = v[day.flow[t][c].index()];
                net[cor.from - 1] -= f;
                net[cor.to - 1] += f;
            }
            for (g, gen) in d.generators.iter().enumerate() {
                net[gen.node - 1] += v[day.gen[t][g].index()];
            }
            for (w, site) in d.wind.iter().enumerate() {
                net[site.node - 1] += day.wind_available[t][w] - v[day.spill[t][w].index()];
            }
            net[d.demand_node - 1] += v[day.shed[t].index()];
            for b in &day.bess {
                net[d.storage_node - 1] += v[b.p_d[t].index()] - v[b.p_c[t].index()];
            }
            for (n, x) in net.iter().enumerate() {
                worst = worst.max((x - inst.demand[n][t]).abs());
            }
        }
    }
    worst
}

/// Fixes the first `k[c]` candidate lines of each corridor and removes the rest.
fn with_builds(asm: &TepAssembly, k: &[usize]) -> Problem {
    let mut p = asm.problem.clone();
    for (lines, &kc) in asm.build.iter().zip(k) {
        for (j, &b) in lines.iter().enumerate() {
            let x = if j < kc { 1.0 } else { 0.0 };
            p = p.with_bounds(b, x, x).unwrap();
        }
    }
    p.relaxed()
}

#[test]
fn expansion_optimum_matches_enumeration() {
    let inst = small_tep();
    let asm = assemble_tep(&inst, ModelKind::Lp).unwrap();
    assert_eq!(asm.problem.num_binaries(), 9);
    let cfg = SolveConfig::default();
    let mut best = f64::INFINITY;
    for a in 0..=3 {
        for b in 0..=3 {
            for c in 0..=3 {
                let s = solve(&with_builds(&asm, &[a, b, c]), &cfg).unwrap();
                if s.status == Status::Optimal {
                    best = best.min(s.objective);
                }
            }
        }
    }
    let s = solve(&asm.problem, &cfg).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.objective - best).abs() <= 1e-6 * best.abs(), "{} vs {best}", s.objective);
    assert!(balance_residual(&inst, &asm, &s.values) <= 1e-6);
}

#[test]
fn full_build_needs_no_shedding() {
    let inst = small_tep();
    let asm = assemble_tep(&inst, ModelKind::Lp).unwrap();
    let s = solve(&with_builds(&asm, &[3, 3, 3]), &SolveConfig::default()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!(balance_residual(&inst, &asm, &s.values) <= 1e-6);
    let m = tep_metrics(&s, &asm);
    assert!(m.load_shed <= 1e-9);
    assert!((m.capacity_invested - 270.0).abs() < 1e-9);
    let spilled: f64 = asm.days[0].spill.iter().flatten().map(|v| s.value(*v)).sum();
    assert!((m.curtailment - spilled).abs() <= 1e-12);
    let available: f64 = asm.days[0].wind_available.iter().flatten().sum();
    assert!(m.curtailment >= -1e-9 && m.curtailment <= available + 1e-9);
}
