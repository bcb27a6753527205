//! Assembly of the set-point tracking and transmission expansion problems
//! for any battery formulation.

use thiserror::Error;

use crate::bess::{build_with, BessError, BessVars, BuildOptions, ModelKind};
use crate::instances::{SptInstance, TepInstance, HOURS, TEP_NODES};
use crate::optmodel::{Constraint, LinearExpr, ModelError, Problem, VarRef, Variable};

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Bess(#[from] BessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("instance is inconsistent: {0}")]
    Instance(String),
}

#[derive(Debug, Clone)]
pub struct SptAssembly {
    pub problem: Problem,
    pub bess: Vec<BessVars>,
    pub signal: Vec<f64>,
}

impl SptAssembly {
    /// `Σₜ (Σₙ (pd − pc) − sig)²` recomputed from a value vector.
    pub fn tracking_error(&self, values: &[f64]) -> f64 {
        (0..self.signal.len())
            .map(|t| {
                let net: f64 = self
                    .bess
                    .iter()
                    .map(|b| values[b.p_d[t].index()] - values[b.p_c[t].index()])
                    .sum();
                (net - self.signal[t]).powi(2)
            })
            .sum()
    }
}

pub fn assemble_spt(inst: &SptInstance, kind: ModelKind) -> Result<SptAssembly, AssemblyError> {
    if inst.fleet.is_empty() || inst.signal.len() != inst.horizon {
        return Err(AssemblyError::Instance(
            "fleet must be nonempty and the signal must span the horizon".into(),
        ));
    }
    let mut p = Problem::new();
    let mut bess = Vec::with_capacity(inst.fleet.len());
    for (n, (params, init)) in inst.fleet.iter().enumerate() {
        let opts = BuildOptions {
            prefix: format!("b{n}_"),
            ..BuildOptions::default()
        };
        bess.push(build_with(kind, params, init, inst.horizon, &mut p, &opts)?);
    }
    let residuals: Vec<LinearExpr> = (0..inst.horizon)
        .map(|t| {
            let mut e = LinearExpr::constant(-inst.signal[t]);
            for b in &bess {
                e += b.net(t);
            }
            e
        })
        .collect();
    p.add_sum_of_squares(&residuals)?;
    Ok(SptAssembly {
        problem: p,
        bess,
        signal: inst.signal.clone(),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TepOptions {
    /// Build duplicate candidates of a corridor in order (`b[k] ≥ b[k+1]`).
    pub symmetry_cuts: bool,
}

/// Operating variables of one represented day, indexed by hour first.
#[derive(Debug, Clone)]
pub struct TepDay {
    pub flow: Vec<Vec<VarRef>>,
    pub gen: Vec<Vec<VarRef>>,
    pub spill: Vec<Vec<VarRef>>,
    pub shed: Vec<VarRef>,
    /// Available wind per hour and site.
    pub wind_available: Vec<Vec<f64>>,
    pub bess: Vec<BessVars>,
}

#[derive(Debug, Clone)]
pub struct TepAssembly {
    pub problem: Problem,
    /// `build[corridor][candidate]`.
    pub build: Vec<Vec<VarRef>>,
    pub days: Vec<TepDay>,
    /// Investment cost of one line of each corridor over the represented days.
    pub line_cost: Vec<f64>,
    pub candidate_capacity: Vec<f64>,
}

impl TepAssembly {
    pub fn capex(&self, values: &[f64]) -> f64 {
        self.build
            .iter()
            .zip(&self.line_cost)
            .map(|(lines, c)| lines.iter().map(|b| values[b.index()]).sum::<f64>() * c)
            .sum()
    }
}

pub fn assemble_tep(inst: &TepInstance, kind: ModelKind) -> Result<TepAssembly, AssemblyError> {
    assemble_tep_with(inst, kind, &TepOptions::default())
}

pub fn assemble_tep_with(
    inst: &TepInstance,
    kind: ModelKind,
    opts: &TepOptions,
) -> Result<TepAssembly, AssemblyError> {
    let d = &inst.data;
    if inst.demand.len() != TEP_NODES
        || inst.wind_profiles.len() != d.wind.len()
        || inst.wind_profiles.iter().any(|w| w.len() != inst.days)
    {
        return Err(AssemblyError::Instance(
            "demand or wind profiles do not match the dataset".into(),
        ));
    }
    let mut p = Problem::new();
    let days = inst.days as f64;
    let mut build = Vec::with_capacity(d.corridors.len());
    let mut objective = LinearExpr::new();
    for (c, cor) in d.corridors.iter().enumerate() {
        let lines: Vec<VarRef> = (0..cor.count)
            .map(|k| p.add_variable(Variable::binary(format!("build_{c}_{k}"))))
            .collect::<Result<_, _>>()?;
        for &b in &lines {
            objective.add_term(b, cor.capex * days);
        }
        if opts.symmetry_cuts {
            for k in 1..lines.len() {
                p.add_constraint(Constraint::ge(
                    format!("sym_{c}_{k}"),
                    LinearExpr::from(lines[k - 1]) - LinearExpr::from(lines[k]),
                    0.0,
                ))?;
            }
        }
        build.push(lines);
    }

    let mut day_vars = Vec::with_capacity(inst.days);
    for day in 0..inst.days {
        let mut bess = Vec::with_capacity(inst.fleet.len());
        for (n, (params, init)) in inst.fleet.iter().enumerate() {
            let o = BuildOptions {
                prefix: format!("d{day}_b{n}_"),
                ..BuildOptions::default()
            };
            bess.push(build_with(kind, params, init, HOURS, &mut p, &o)?);
        }
        let mut dv = TepDay {
            flow: Vec::with_capacity(HOURS),
            gen: Vec::with_capacity(HOURS),
            spill: Vec::with_capacity(HOURS),
            shed: Vec::with_capacity(HOURS),
            wind_available: Vec::with_capacity(HOURS),
            bess,
        };
        for t in 0..HOURS {
            let mut balance: Vec<LinearExpr> = vec![LinearExpr::new(); TEP_NODES];
            let mut flows = Vec::with_capacity(d.corridors.len());
            for (c, cor) in d.corridors.iter().enumerate() {
                let cap = cor.existing + cor.candidate * cor.count as f64;
                let f = p.add_variable(Variable::continuous(format!("d{day}_f{c}_{t}"), -cap, cap))?;
                let mut built = LinearExpr::new();
                for &b in &build[c] {
                    built.add_term(b, cor.candidate);
                }
                p.add_constraint(Constraint::le(
                    format!("d{day}_fmax{c}_{t}"),
                    LinearExpr::from(f) - built.clone(),
                    cor.existing,
                ))?;
                p.add_constraint(Constraint::le(
                    format!("d{day}_fmin{c}_{t}"),
                    -LinearExpr::from(f) - built,
                    cor.existing,
                ))?;
                balance[cor.from - 1].add_term(f, -1.0);
                balance[cor.to - 1].add_term(f, 1.0);
                flows.push(f);
            }
            let mut gens = Vec::with_capacity(d.generators.len());
            for (g, gen) in d.generators.iter().enumerate() {
                let v = p.add_variable(Variable::continuous(format!("d{day}_g{g}_{t}"), 0.0, gen.capacity))?;
                objective.add_term(v, gen.cost);
                balance[gen.node - 1].add_term(v, 1.0);
                gens.push(v);
            }
            let mut spills = Vec::with_capacity(d.wind.len());
            let mut avail = Vec::with_capacity(d.wind.len());
            for (w, site) in d.wind.iter().enumerate() {
                let a = site.capacity * inst.wind_profiles[w][day].values()[t];
                let s = p.add_variable(Variable::continuous(format!("d{day}_spill{w}_{t}"), 0.0, a))?;
                balance[site.node - 1].add_term(s, -1.0);
                balance[site.node - 1].add_constant(a);
                spills.push(s);
                avail.push(a);
            }
            let dn = d.demand_node - 1;
            let shed = p.add_variable(Variable::continuous(
                format!("d{day}_shed_{t}"),
                0.0,
                inst.demand[dn][t],
            ))?;
            objective.add_term(shed, d.shed_penalty);
            balance[dn].add_term(shed, 1.0);
            for b in &dv.bess {
                balance[d.storage_node - 1] += b.net(t);
            }
            for (n, e) in balance.into_iter().enumerate() {
                p.add_constraint(Constraint::eq(format!("d{day}_bal{n}_{t}"), e, inst.demand[n][t]))?;
            }
            dv.flow.push(flows);
            dv.gen.push(gens);
            dv.spill.push(spills);
            dv.shed.push(shed);
            dv.wind_available.push(avail);
        }
        day_vars.push(dv);
    }
    p.add_linear_objective(&objective)?;
    Ok(TepAssembly {
        problem: p,
        build,
        days: day_vars,
        line_cost: d.corridors.iter().map(|c| c.capex * days).collect(),
        candidate_capacity: d.corridors.iter().map(|c| c.candidate).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_spt_instance, make_tep_instance, synthetic_wind_pool, Profile, Rng};
    use crate::solver::{solve, SolveConfig};

    fn spt(n: usize) -> SptInstance {
        let pool = vec![Profile::new(vec![0.3; 24]).unwrap()];
        make_spt_instance(&mut Rng::new(9), n, &pool).unwrap()
    }

    #[test]
    fn spt_variable_counts() {
        let a = assemble_spt(&spt(1), ModelKind::Lp).unwrap();
        assert_eq!(a.problem.num_vars(), 72);
        assert_eq!(a.problem.num_binaries(), 0);
        let a = assemble_spt(&spt(2), ModelKind::Exc).unwrap();
        assert_eq!(a.problem.num_binaries(), 96);
    }

    #[test]
    fn zero_signal_is_tracked_exactly() {
        let mut inst = spt(2);
        inst.signal = vec![0.0; 24];
        for k in ModelKind::ALL {
            let a = assemble_spt(&inst, k).unwrap();
            let s = solve(&a.problem, &SolveConfig::default()).unwrap();
            assert!(s.is_optimal(), "{k}");
            assert!(s.objective.abs() < 1e-9, "{k}: {}", s.objective);
        }
    }

    #[test]
    fn tep_binary_count() {
        let pool = synthetic_wind_pool(3, 10);
        let inst = make_tep_instance(&mut Rng::new(1), 3, 50, &pool).unwrap();
        let a = assemble_tep(&inst, ModelKind::Exc).unwrap();
        assert_eq!(a.problem.num_binaries(), 7200 + 9);
        let a = assemble_tep(&inst, ModelKind::Lp).unwrap();
        assert_eq!(a.problem.num_binaries(), 9);
    }

    #[test]
    fn zero_demand_builds_nothing() {
        let pool = synthetic_wind_pool(3, 10);
        let mut inst = make_tep_instance(&mut Rng::new(1), 1, 1, &pool).unwrap();
        inst.demand = vec![vec![0.0; 24]; 3];
        let a = assemble_tep(&inst, ModelKind::Lp).unwrap();
        let s = solve(&a.problem, &SolveConfig::default()).unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.objective, 0.0);
        assert_eq!(a.capex(&s.values), 0.0);
    }
}
