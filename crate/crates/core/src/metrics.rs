//! Reported quantities: simultaneity, tracking error, TEP cost breakdown and
//! performance curves.

use serde::{Deserialize, Serialize};

use crate::bess::BessVars;
use crate::problems::{SptAssembly, TepAssembly};
use crate::solver::Solution;

/// Products `pc·pd` above this count as simultaneous charge and discharge.
pub const SIMULTANEITY_THRESHOLD: f64 = 1e-4;

/// Percentage of unit-periods with `pc·pd > 10⁻⁴`.
pub fn simultaneity_rate(values: &[f64], bess: &[BessVars]) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for b in bess {
        for (pc, pd) in b.p_c.iter().zip(&b.p_d) {
            total += 1;
            if (values[pc.index()] * values[pd.index()]).abs() > SIMULTANEITY_THRESHOLD {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return 0.0;
    }
    100.0 * hits as f64 / total as f64
}

/// `sqrt(objective / T)`; tiny negative objectives from round-off read as 0.
pub fn rmse(objective: f64, horizon: usize) -> f64 {
    (objective.max(0.0) / horizon as f64).sqrt()
}

/// `value / reference`, with `0/0 = 1`. `None` when the reference is zero
/// and the value is not.
pub fn ratio(value: f64, reference: f64) -> Option<f64> {
    if reference != 0.0 {
        Some(value / reference)
    } else if value.abs() <= 1e-12 {
        Some(1.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SptMetrics {
    pub simult_pct: f64,
    pub rmse: f64,
    /// Filled in once the Exc solve of the same instance is known.
    pub rmse_rel: Option<f64>,
    pub runtime_ms: f64,
}

pub fn spt_metrics(sol: &Solution, asm: &SptAssembly) -> SptMetrics {
    SptMetrics {
        simult_pct: simultaneity_rate(&sol.values, &asm.bess),
        rmse: rmse(sol.objective, asm.signal.len()),
        rmse_rel: None,
        runtime_ms: sol.runtime_ms,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TepMetrics {
    pub simult_pct: f64,
    pub total_cost_rel: Option<f64>,
    /// Shed energy summed over the represented day-hours.
    pub load_shed: f64,
    /// Spilled renewable energy summed over the represented day-hours.
    pub curtailment: f64,
    /// New line capacity.
    pub capacity_invested: f64,
    pub runtime_ms: f64,
}

pub fn tep_metrics(sol: &Solution, asm: &TepAssembly) -> TepMetrics {
    let v = &sol.values;
    let bess: Vec<BessVars> = asm.days.iter().flat_map(|d| d.bess.iter().cloned()).collect();
    let load_shed = asm.days.iter().flat_map(|d| &d.shed).map(|s| v[s.index()]).sum();
    let curtailment = asm
        .days
        .iter()
        .flat_map(|d| d.spill.iter().flatten())
        .map(|s| v[s.index()])
        .sum();
    let capacity_invested = asm
        .build
        .iter()
        .zip(&asm.candidate_capacity)
        .map(|(lines, cap)| lines.iter().map(|b| v[b.index()].round()).sum::<f64>() * cap)
        .sum();
    TepMetrics {
        simult_pct: simultaneity_rate(v, &bess),
        total_cost_rel: None,
        load_shed,
        curtailment,
        capacity_invested,
        runtime_ms: sol.runtime_ms,
    }
}

/// Cumulative fraction of instances solved within each runtime.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerfCurve {
    /// `(runtime_ms, frac_solved)`, strictly increasing in runtime.
    pub points: Vec<(f64, f64)>,
}

impl PerfCurve {
    pub fn final_fraction(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

/// Builds the curve from per-instance runtimes; unsolved instances count
/// toward the total only.
pub fn perf_curve(runtimes: &[f64], solved: &[bool]) -> PerfCurve {
    let total = runtimes.len();
    let mut times: Vec<f64> = runtimes
        .iter()
        .zip(solved)
        .filter(|(_, &s)| s)
        .map(|(&t, _)| t)
        .collect();
    times.sort_by(f64::total_cmp);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let frac = (k + 1) as f64 / total as f64;
        match points.last_mut() {
            Some(last) if last.0 == t => last.1 = frac,
            _ => points.push((t, frac)),
        }
    }
    PerfCurve { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bess::{build, BessInitial, BessParams, ModelKind};
    use crate::optmodel::Problem;

    fn unit(horizon: usize) -> (Problem, BessVars) {
        let mut p = Problem::new();
        let b = build(ModelKind::Lp, &BessParams::example(), &BessInitial::example(), horizon, &mut p).unwrap();
        (p, b)
    }

    #[test]
    fn one_simultaneous_period_of_24() {
        let (p, b) = unit(24);
        let mut v = vec![0.0; p.num_vars()];
        v[b.p_c[5].index()] = 0.5;
        v[b.p_d[5].index()] = 0.5;
        assert!((simultaneity_rate(&v, &[b.clone()]) - 100.0 / 24.0).abs() < 1e-12);
        v[b.p_c[5].index()] = 1e-3;
        v[b.p_d[5].index()] = 1e-2;
        assert_eq!(simultaneity_rate(&v, &[b]), 0.0);
    }

    #[test]
    fn rmse_of_constant_offset() {
        let c: f64 = 0.7;
        assert!((rmse(24.0 * c * c, 24) - c).abs() < 1e-15);
        assert_eq!(rmse(-1e-14, 24), 0.0);
    }

    #[test]
    fn ratio_handles_zero_reference() {
        assert_eq!(ratio(0.0, 0.0), Some(1.0));
        assert_eq!(ratio(1.0, 0.0), None);
        assert_eq!(ratio(1.0, 2.0), Some(0.5));
    }

    #[test]
    fn equal_runtimes_give_one_step() {
        let c = perf_curve(&[3.0; 4], &[true; 4]);
        assert_eq!(c.points, vec![(3.0, 1.0)]);
        assert!(perf_curve(&[], &[]).points.is_empty());
    }

    #[test]
    fn unsolved_cap_the_final_fraction() {
        let c = perf_curve(&[5.0, 1.0, 9.0, 2.0], &[true, true, false, true]);
        assert_eq!(c.points, vec![(1.0, 0.25), (2.0, 0.5), (5.0, 0.75)]);
        assert_eq!(c.final_fraction(), 0.75);
    }
}
