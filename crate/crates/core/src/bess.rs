//! The five battery formulations as constraint builders, and the
//! single-period operating-region geometry in `(pc, pd)` space.
//!
//! Time step is one hour throughout.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optmodel::{Constraint, LinearExpr, ModelError, Problem, VarRef, Variable};

/// Feasibility tolerance of [`region_contains`].
pub const REGION_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BessError {
    #[error("invalid battery parameters: {0}")]
    InvalidParams(String),
    #[error("initial energy {e0} outside [{e_min}, {e_max}]")]
    InvalidInitial { e0: f64, e_min: f64, e_max: f64 },
    #[error("horizon must contain at least one period")]
    EmptyHorizon,
    #[error("ExtLP needs a positive charging power rating (division by p_c_max)")]
    DivisionGuard,
    #[error("power must be nonnegative, got pc={pc}, pd={pd}")]
    NegativePower { pc: f64, pd: f64 },
    #[error("unknown battery model `{0}`")]
    UnknownModel(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BessParams {
    pub e_min: f64,
    pub e_max: f64,
    pub p_c_max: f64,
    pub p_d_max: f64,
    pub eta_c: f64,
    pub eta_d: f64,
}

impl BessParams {
    /// The illustrative battery of the two-period example.
    pub fn example() -> BessParams {
        BessParams {
            e_min: 0.7,
            e_max: 2.0,
            p_c_max: 0.8,
            p_d_max: 1.0,
            eta_c: 0.85,
            eta_d: 0.9,
        }
    }

    pub fn validate(&self) -> Result<(), BessError> {
        let bad = |m: &str| Err(BessError::InvalidParams(m.to_string()));
        let all = [
            self.e_min,
            self.e_max,
            self.p_c_max,
            self.p_d_max,
            self.eta_c,
            self.eta_d,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all values must be finite");
        }
        if !(0.0 <= self.e_min && self.e_min < self.e_max) {
            return bad("need 0 <= e_min < e_max");
        }
        if !(self.p_c_max > 0.0 && self.p_d_max > 0.0) {
            return bad("power ratings must be positive");
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0 && self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return bad("efficiencies must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BessInitial {
    pub e0: f64,
}

impl BessInitial {
    pub fn example() -> BessInitial {
        BessInitial { e0: 1.5 }
    }

    pub fn validate(&self, params: &BessParams) -> Result<(), BessError> {
        if !(self.e0 >= params.e_min && self.e0 <= params.e_max) {
            return Err(BessError::InvalidInitial {
                e0: self.e0,
                e_min: params.e_min,
                e_max: params.e_max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Exc,
    #[serde(rename = "LP")]
    Lp,
    #[serde(rename = "NA")]
    Na,
    RelYZ,
    ExtLP,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Exc,
        ModelKind::Lp,
        ModelKind::Na,
        ModelKind::RelYZ,
        ModelKind::ExtLP,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Exc => "Exc",
            ModelKind::Lp => "LP",
            ModelKind::Na => "NA",
            ModelKind::RelYZ => "RelYZ",
            ModelKind::ExtLP => "ExtLP",
        }
    }

    /// Whether the formulation carries binaries.
    pub fn is_mixed_integer(self) -> bool {
        self == ModelKind::Exc
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = BessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| BessError::UnknownModel(s.to_string()))
    }
}

/// Single net efficiency and net power rating of the NA formulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaDerived {
    pub eta_single: f64,
    pub p_max_single: f64,
}

pub fn na_derived(params: &BessParams, override_pmax: Option<f64>) -> NaDerived {
    NaDerived {
        eta_single: 0.5 * (1.0 / params.eta_d + params.eta_c),
        p_max_single: override_pmax.unwrap_or(params.p_c_max.max(params.p_d_max)),
    }
}

/// Handles of one battery's variables over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct BessVars {
    pub kind: ModelKind,
    pub p_c: Vec<VarRef>,
    pub p_d: Vec<VarRef>,
    /// State of energy after each period; empty for NA.
    pub e: Vec<VarRef>,
    /// Charging and discharging indicators; empty unless Exc or RelYZ.
    pub z: Vec<VarRef>,
    pub y: Vec<VarRef>,
}

impl BessVars {
    pub fn horizon(&self) -> usize {
        self.p_c.len()
    }

    /// Net injection `pd − pc` in period `t`.
    pub fn net(&self, t: usize) -> LinearExpr {
        LinearExpr::from(self.p_d[t]) - LinearExpr::from(self.p_c[t])
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOptions {
    /// Prefix for variable and row names.
    pub prefix: String,
    /// Require the final state of energy to be at least `e0`.
    pub terminal_soe: bool,
    /// NA net power rating in place of `max(p_c_max, p_d_max)`.
    pub na_pmax: Option<f64>,
}

/// Adds one battery under formulation `kind` to `p` with default options.
pub fn build(
    kind: ModelKind,
    params: &BessParams,
    init: &BessInitial,
    horizon: usize,
    p: &mut Problem,
) -> Result<BessVars, BessError> {
    build_with(kind, params, init, horizon, p, &BuildOptions::default())
}

pub fn build_with(
    kind: ModelKind,
    params: &BessParams,
    init: &BessInitial,
    horizon: usize,
    p: &mut Problem,
    opts: &BuildOptions,
) -> Result<BessVars, BessError> {
    if horizon == 0 {
        return Err(BessError::EmptyHorizon);
    }
    if kind == ModelKind::ExtLP && params.p_c_max == 0.0 {
        return Err(BessError::DivisionGuard);
    }
    params.validate()?;
    init.validate(params)?;
    let pre = &opts.prefix;
    let prm = params;
    let e0 = init.e0;
    let mut vars = BessVars {
        kind,
        p_c: Vec::with_capacity(horizon),
        p_d: Vec::with_capacity(horizon),
        e: Vec::new(),
        z: Vec::new(),
        y: Vec::new(),
    };
    let na = na_derived(prm, opts.na_pmax);
    // Running NA energy expressions (upper window with η, lower with ηc/ηd).
    let mut na_hi = LinearExpr::constant(e0);
    let mut na_lo = LinearExpr::constant(e0);

    for t in 0..horizon {
        let pc = p.add_variable(Variable::continuous(format!("{pre}pc_{t}"), 0.0, prm.p_c_max))?;
        let pd = p.add_variable(Variable::continuous(format!("{pre}pd_{t}"), 0.0, prm.p_d_max))?;
        vars.p_c.push(pc);
        vars.p_d.push(pd);
        // SoE at the start of the period.
        let prev = match vars.e.last() {
            Some(&e) => LinearExpr::from(e),
            None => LinearExpr::constant(e0),
        };

        if kind == ModelKind::Na {
            na_hi = na_hi + LinearExpr::term(pc, na.eta_single) - LinearExpr::term(pd, na.eta_single);
            na_lo = na_lo + LinearExpr::term(pc, prm.eta_c) - LinearExpr::term(pd, 1.0 / prm.eta_d);
            p.add_constraint(Constraint::le(format!("{pre}na_emax_{t}"), na_hi.clone(), prm.e_max))?;
            p.add_constraint(Constraint::ge(format!("{pre}na_emin_{t}"), na_lo.clone(), prm.e_min))?;
            p.add_constraint(Constraint::le(
                format!("{pre}na_pmax_{t}"),
                LinearExpr::from(pc) + LinearExpr::from(pd),
                na.p_max_single,
            ))?;
            continue;
        }

        let e = p.add_variable(Variable::continuous(format!("{pre}e_{t}"), prm.e_min, prm.e_max))?;
        p.add_constraint(Constraint::eq(
            format!("{pre}soe_{t}"),
            LinearExpr::from(e) - prev.clone() - LinearExpr::term(pc, prm.eta_c)
                + LinearExpr::term(pd, 1.0 / prm.eta_d),
            0.0,
        ))?;
        vars.e.push(e);

        match kind {
            ModelKind::Exc | ModelKind::RelYZ => {
                let (z, y) = if kind == ModelKind::Exc {
                    (Variable::binary(format!("{pre}z_{t}")), Variable::binary(format!("{pre}y_{t}")))
                } else {
                    (
                        Variable::continuous(format!("{pre}z_{t}"), 0.0, 1.0),
                        Variable::continuous(format!("{pre}y_{t}"), 0.0, 1.0),
                    )
                };
                let z = p.add_variable(z)?;
                let y = p.add_variable(y)?;
                p.add_constraint(Constraint::le(
                    format!("{pre}pc_on_{t}"),
                    LinearExpr::from(pc) - LinearExpr::term(z, prm.p_c_max),
                    0.0,
                ))?;
                p.add_constraint(Constraint::le(
                    format!("{pre}pd_on_{t}"),
                    LinearExpr::from(pd) - LinearExpr::term(y, prm.p_d_max),
                    0.0,
                ))?;
                p.add_constraint(Constraint::le(
                    format!("{pre}excl_{t}"),
                    LinearExpr::from(z) + LinearExpr::from(y),
                    1.0,
                ))?;
                vars.z.push(z);
                vars.y.push(y);
            }
            ModelKind::ExtLP => {
                // pc ≤ (Ē − e_prev)/ηc
                p.add_constraint(Constraint::le(
                    format!("{pre}ext_c_{t}"),
                    LinearExpr::term(pc, prm.eta_c) + prev.clone(),
                    prm.e_max,
                ))?;
                // pd ≤ (e_prev − E̲)ηd
                p.add_constraint(Constraint::le(
                    format!("{pre}ext_d_{t}"),
                    LinearExpr::from(pd) - prev * prm.eta_d,
                    -prm.e_min * prm.eta_d,
                ))?;
                p.add_constraint(Constraint::le(
                    format!("{pre}ext_cd_{t}"),
                    LinearExpr::from(pd) + LinearExpr::term(pc, prm.p_d_max / prm.p_c_max),
                    prm.p_d_max,
                ))?;
            }
            ModelKind::Lp | ModelKind::Na => {}
        }
    }

    if opts.terminal_soe {
        let last = match vars.e.last() {
            Some(&e) => LinearExpr::from(e),
            None => na_lo,
        };
        p.add_constraint(Constraint::ge(format!("{pre}terminal"), last, e0))?;
    }
    Ok(vars)
}

/// Point A: the largest charging power the battery can actually absorb.
pub fn actual_charge_limit(params: &BessParams, init: &BessInitial) -> f64 {
    params.p_c_max.min((params.e_max - init.e0) / params.eta_c)
}

/// Point B: the largest discharging power the battery can actually deliver.
pub fn actual_discharge_limit(params: &BessParams, init: &BessInitial) -> f64 {
    params.p_d_max.min((init.e0 - params.e_min) * params.eta_d)
}

/// The facet `pd ≤ b − (b/a)·pc` joining points A and B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullFacet {
    pub a: f64,
    pub b: f64,
    /// A or B is zero and the region collapses onto an axis segment.
    pub degenerate: bool,
}

impl HullFacet {
    /// `-b/a`, or `None` when degenerate.
    pub fn slope(&self) -> Option<f64> {
        (!self.degenerate).then(|| -self.b / self.a)
    }

    pub fn satisfied(&self, pc: f64, pd: f64, tol: f64) -> bool {
        if self.degenerate {
            let pc_ok = if self.a <= 0.0 { pc <= tol } else { pc <= self.a + tol };
            let pd_ok = if self.b <= 0.0 { pd <= tol } else { pd <= self.b + tol };
            return pc_ok && pd_ok;
        }
        pd * self.a + self.b * pc <= self.a * self.b + tol * self.a
    }
}

pub fn hull_facet(params: &BessParams, init: &BessInitial) -> HullFacet {
    let a = actual_charge_limit(params, init);
    let b = actual_discharge_limit(params, init);
    HullFacet {
        a,
        b,
        degenerate: a <= 0.0 || b <= 0.0,
    }
}

/// Single-period membership of `(pc, pd)` in the region of `kind`, with
/// tolerance [`REGION_TOL`]. For Exc, membership means some binary
/// assignment satisfies every row.
pub fn region_contains(
    kind: ModelKind,
    params: &BessParams,
    init: &BessInitial,
    pc: f64,
    pd: f64,
) -> Result<bool, BessError> {
    if pc < 0.0 || pd < 0.0 || pc.is_nan() || pd.is_nan() {
        return Err(BessError::NegativePower { pc, pd });
    }
    let prm = params;
    let e0 = init.e0;
    let tol = REGION_TOL;
    let boxed = pc <= prm.p_c_max + tol && pd <= prm.p_d_max + tol;
    let e = e0 + prm.eta_c * pc - pd / prm.eta_d;
    let window = e >= prm.e_min - tol && e <= prm.e_max + tol;
    let lp = boxed && window;
    Ok(match kind {
        ModelKind::Lp => lp,
        ModelKind::Exc => lp && (pc <= tol || pd <= tol),
        ModelKind::RelYZ => lp && pc / prm.p_c_max + pd / prm.p_d_max <= 1.0 + tol,
        ModelKind::ExtLP => {
            lp && prm.eta_c * pc + e0 <= prm.e_max + tol
                && pd - e0 * prm.eta_d <= -prm.e_min * prm.eta_d + tol
                && pd + pc * prm.p_d_max / prm.p_c_max <= prm.p_d_max + tol
        }
        ModelKind::Na => {
            let na = na_derived(prm, None);
            boxed
                && e0 + na.eta_single * (pc - pd) <= prm.e_max + tol
                && e >= prm.e_min - tol
                && pc + pd <= na.p_max_single + tol
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub model: ModelKind,
    pub pc: f64,
    pub pd: f64,
    pub feasible: bool,
}

/// Membership over an `n × n` grid spanning `[0, p_c_max] × [0, p_d_max]`.
pub fn region_grid(
    kind: ModelKind,
    params: &BessParams,
    init: &BessInitial,
    n: usize,
) -> Result<Vec<RegionPoint>, BessError> {
    let steps = n.max(2) - 1;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..=steps {
        let pc = params.p_c_max * i as f64 / steps as f64;
        for j in 0..=steps {
            let pd = params.p_d_max * j as f64 / steps as f64;
            out.push(RegionPoint {
                model: kind,
                pc,
                pd,
                feasible: region_contains(kind, params, init, pc, pd)?,
            });
        }
    }
    Ok(out)
}

/// Writes `model,pc,pd,feasible` rows.
pub fn write_region_csv<W: Write>(w: W, points: &[RegionPoint]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["model", "pc", "pd", "feasible"])?;
    for pt in points {
        wr.write_record([
            pt.model.as_str().to_string(),
            pt.pc.to_string(),
            pt.pd.to_string(),
            pt.feasible.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
