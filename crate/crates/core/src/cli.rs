//! Experiment harness behind the `linbess` binary: instance generation,
//! the five-formulation solve matrix, CSV reports, summaries, performance
//! curves and feasible-region grids.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bess::{region_grid, write_region_csv, BessError, BessInitial, BessParams, ModelKind};
use crate::instances::{
    load_profiles, make_spt_instance, make_tep_instance_with, synthetic_pool, synthetic_wind_pool,
    InstanceError, Profile, Rng, TepDataset,
};
use crate::metrics::{perf_curve, ratio, spt_metrics, tep_metrics, PerfCurve};
use crate::problems::{assemble_spt, assemble_tep, AssemblyError};
use crate::solver::{solve, Solution, SolveConfig, Status};

/// Days in the synthetic profile pool.
pub const SYNTHETIC_POOL_DAYS: usize = 1450;

pub const SPT_HEADER: [&str; 11] = [
    "problem",
    "model",
    "n_bess",
    "instance",
    "status",
    "objective",
    "runtime_ms",
    "gap",
    "simult_pct",
    "rmse",
    "rmse_rel",
];
pub const TEP_EXTRA: [&str; 4] = ["total_cost_rel", "load_shed", "curtailment", "capacity_invested"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Bess(#[from] BessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cannot parse {0}: {1}")]
    Parse(PathBuf, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Spt,
    Tep,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Spt => "spt",
            ProblemKind::Tep => "tep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    Synthetic,
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub n_instances: usize,
    pub bess_counts: Vec<usize>,
    pub models: Vec<ModelKind>,
    /// Represented days per TEP instance.
    pub days: usize,
    pub profiles: ProfileSource,
    /// TEP network; the built-in default when absent.
    pub dataset: Option<PathBuf>,
    pub solve: SolveConfig,
    /// Worker threads; rayon's default when absent.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            n_instances: 100,
            bess_counts: (1..=5).collect(),
            models: ModelKind::ALL.to_vec(),
            days: 50,
            profiles: ProfileSource::Synthetic,
            dataset: None,
            solve: SolveConfig::default(),
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_instances == 0 {
            return Err(CliError::Config("instances must be >= 1".into()));
        }
        if self.models.is_empty() {
            return Err(CliError::Config("at least one model is required".into()));
        }
        if self.bess_counts.is_empty() || self.bess_counts.contains(&0) {
            return Err(CliError::Config("bess counts must be nonempty and >= 1".into()));
        }
        if self.days == 0 {
            return Err(CliError::Config("days must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be >= 1".into()));
        }
        if self.solve.trace.is_some() {
            return Err(CliError::Config("tree traces are per solve, not per experiment".into()));
        }
        self.solve
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    fn pool(&self, synthetic: fn(u64, usize) -> Vec<Profile>) -> Result<Vec<Profile>, CliError> {
        Ok(match &self.profiles {
            ProfileSource::Synthetic => synthetic(self.seed, SYNTHETIC_POOL_DAYS),
            ProfileSource::File(path) => load_profiles(path)?,
        })
    }

    fn tasks(&self) -> Vec<(usize, u64)> {
        let mut counts = self.bess_counts.clone();
        counts.sort_unstable();
        counts.dedup();
        counts
            .iter()
            .flat_map(|&n| (0..self.n_instances as u64).map(move |i| (n, i)))
            .collect()
    }

    fn run_parallel<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = self.workers {
            b = b.num_threads(w);
        }
        let pool = b.build().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(pool.install(job))
    }
}

/// Parses `3`, `1,2,4` or `1..5` (inclusive).
pub fn parse_counts(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Config(format!("bad bess count list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a == 0 || b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
        .collect()
}

/// Parses a comma list of model names, or `all`.
pub fn parse_models(s: &str) -> Result<Vec<ModelKind>, CliError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelKind::ALL.to_vec());
    }
    s.split(',')
        .map(|t| t.trim().parse::<ModelKind>().map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

/// One `(model, n_bess, instance)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub problem: ProblemKind,
    pub model: ModelKind,
    pub n_bess: usize,
    pub instance: u64,
    /// A solver status, or `error`.
    pub status: String,
    pub objective: Option<f64>,
    pub runtime_ms: f64,
    pub gap: Option<f64>,
    pub simult_pct: Option<f64>,
    #[serde(default)]
    pub rmse: Option<f64>,
    #[serde(default)]
    pub rmse_rel: Option<f64>,
    #[serde(default)]
    pub total_cost_rel: Option<f64>,
    #[serde(default)]
    pub load_shed: Option<f64>,
    #[serde(default)]
    pub curtailment: Option<f64>,
    #[serde(default)]
    pub capacity_invested: Option<f64>,
}

impl ReportRow {
    fn new(problem: ProblemKind, model: ModelKind, n_bess: usize, instance: u64) -> ReportRow {
        ReportRow {
            problem,
            model,
            n_bess,
            instance,
            status: String::new(),
            objective: None,
            runtime_ms: 0.0,
            gap: None,
            simult_pct: None,
            rmse: None,
            rmse_rel: None,
            total_cost_rel: None,
            load_shed: None,
            curtailment: None,
            capacity_invested: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal.as_str()
    }

    fn sort_key(&self) -> (ProblemKind, usize, u64, usize) {
        let m = ModelKind::ALL.iter().position(|&k| k == self.model).unwrap_or(usize::MAX);
        (self.problem, self.n_bess, self.instance, m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub problem: ProblemKind,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    fn new(problem: ProblemKind, mut rows: Vec<ReportRow>) -> ExperimentReport {
        rows.sort_by_key(ReportRow::sort_key);
        ExperimentReport { problem, rows }
    }

    /// Rows whose solve did not reach proven optimality.
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_optimal()).count()
    }

    pub fn header(&self) -> Vec<&'static str> {
        let mut h = SPT_HEADER.to_vec();
        if self.problem == ProblemKind::Tep {
            h.extend(TEP_EXTRA);
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.problem.as_str().to_string(),
                r.model.as_str().to_string(),
                r.n_bess.to_string(),
                r.instance.to_string(),
                r.status.clone(),
                fmt_opt(r.objective),
                r.runtime_ms.to_string(),
                fmt_opt(r.gap),
                fmt_opt(r.simult_pct),
                fmt_opt(r.rmse),
                fmt_opt(r.rmse_rel),
            ];
            if self.problem == ProblemKind::Tep {
                for v in [r.total_cost_rel, r.load_shed, r.curtailment, r.capacity_invested] {
                    rec.push(fmt_opt(v));
                }
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<ExperimentReport, CliError> {
        let mut rd = csv::Reader::from_reader(r);
        let tep = rd.headers()?.iter().any(|h| h == TEP_EXTRA[0]);
        let rows: Vec<ReportRow> = rd.deserialize().collect::<Result<_, _>>()?;
        let problem = if tep { ProblemKind::Tep } else { ProblemKind::Spt };
        Ok(ExperimentReport::new(problem, rows))
    }

    pub fn load(path: &Path) -> Result<ExperimentReport, CliError> {
        ExperimentReport::read_csv(std::fs::File::open(path)?)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => String::new(),
    }
}

/// Objective of a solve that carries a usable point.
fn usable(sol: &Solution) -> Option<f64> {
    match sol.status {
        Status::Optimal | Status::LimitReached if sol.objective.is_finite() => Some(sol.objective),
        _ => None,
    }
}

fn timed_solve(p: &crate::optmodel::Problem, cfg: &SolveConfig) -> (Result<Solution, String>, f64) {
    let t = Instant::now();
    let res = solve(p, cfg).map_err(|e| e.to_string());
    (res, t.elapsed().as_secs_f64() * 1e3)
}

fn fill_status(row: &mut ReportRow, res: &Result<Solution, String>) {
    match res {
        Ok(s) => {
            row.status = s.status.as_str().to_string();
            row.objective = usable(s);
            row.gap = s.gap;
        }
        Err(e) => {
            log::warn!("{} {} n={} #{}: {e}", row.problem.as_str(), row.model, row.n_bess, row.instance);
            row.status = "error".into();
        }
    }
}

fn spt_task(cfg: &RunConfig, pool: &[Profile], n: usize, i: u64) -> Result<Vec<ReportRow>, CliError> {
    let inst = make_spt_instance(&mut Rng::derive(cfg.seed, i, &format!("spt/{n}")), n, pool)?;
    let mut rows = Vec::with_capacity(cfg.models.len());
    for &kind in &cfg.models {
        let asm = assemble_spt(&inst, kind)?;
        let (res, ms) = timed_solve(&asm.problem, &cfg.solve);
        let mut row = ReportRow::new(ProblemKind::Spt, kind, n, i);
        fill_status(&mut row, &res);
        row.runtime_ms = ms;
        if let (Ok(sol), Some(_)) = (&res, row.objective) {
            let m = spt_metrics(sol, &asm);
            row.simult_pct = Some(m.simult_pct);
            row.rmse = Some(m.rmse);
        }
        rows.push(row);
    }
    let exc = rows
        .iter()
        .find(|r| r.model == ModelKind::Exc)
        .and_then(|r| r.rmse);
    if let Some(base) = exc {
        for r in &mut rows {
            r.rmse_rel = r.rmse.and_then(|v| ratio(v, base));
        }
    }
    Ok(rows)
}

/// Set-point tracking over every requested fleet size, instance and model.
pub fn run_spt(cfg: &RunConfig) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let pool = cfg.pool(synthetic_pool)?;
    let tasks = cfg.tasks();
    let rows = cfg.run_parallel(|| {
        tasks
            .par_iter()
            .map(|&(n, i)| spt_task(cfg, &pool, n, i))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(ExperimentReport::new(ProblemKind::Spt, rows.into_iter().flatten().collect()))
}

fn tep_task(
    cfg: &RunConfig,
    data: &TepDataset,
    pool: &[Profile],
    n: usize,
    i: u64,
) -> Result<Vec<ReportRow>, CliError> {
    let mut rng = Rng::derive(cfg.seed, i, &format!("tep/{n}"));
    let inst = make_tep_instance_with(&mut rng, n, cfg.days, pool, data)?;
    let mut rows = Vec::with_capacity(cfg.models.len());
    for &kind in &cfg.models {
        let asm = assemble_tep(&inst, kind)?;
        let (res, ms) = timed_solve(&asm.problem, &cfg.solve);
        let mut row = ReportRow::new(ProblemKind::Tep, kind, n, i);
        fill_status(&mut row, &res);
        row.runtime_ms = ms;
        if let (Ok(sol), Some(_)) = (&res, row.objective) {
            let m = tep_metrics(sol, &asm);
            row.simult_pct = Some(m.simult_pct);
            row.load_shed = Some(m.load_shed);
            row.curtailment = Some(m.curtailment);
            row.capacity_invested = Some(m.capacity_invested);
        }
        rows.push(row);
    }
    let exc = rows
        .iter()
        .find(|r| r.model == ModelKind::Exc)
        .and_then(|r| r.objective);
    if let Some(base) = exc {
        for r in &mut rows {
            r.total_cost_rel = r.objective.and_then(|v| ratio(v, base));
        }
    }
    Ok(rows)
}

/// Transmission expansion over every requested fleet size, instance and
/// model.
pub fn run_tep(cfg: &RunConfig) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let data = match &cfg.dataset {
        Some(path) => TepDataset::load(path)?,
        None => TepDataset::default_dataset(),
    };
    let pool = cfg.pool(synthetic_wind_pool)?;
    let tasks = cfg.tasks();
    let rows = cfg.run_parallel(|| {
        tasks
            .par_iter()
            .map(|&(n, i)| tep_task(cfg, &data, &pool, n, i))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(ExperimentReport::new(ProblemKind::Tep, rows.into_iter().flatten().collect()))
}

/// Per-`(model, n_bess)` averages over the optimal rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub problem: ProblemKind,
    pub model: ModelKind,
    pub n_bess: usize,
    pub solved: usize,
    pub total: usize,
    pub objective: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub simult_pct: Option<f64>,
    pub rmse: Option<f64>,
    pub rmse_rel: Option<f64>,
    pub total_cost_rel: Option<f64>,
    pub load_shed: Option<f64>,
    pub curtailment: Option<f64>,
    pub capacity_invested: Option<f64>,
}

fn mean(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = vals.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn summarize(report: &ExperimentReport) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(ProblemKind, usize, usize), Vec<&ReportRow>> = BTreeMap::new();
    for r in &report.rows {
        let m = ModelKind::ALL.iter().position(|&k| k == r.model).unwrap_or(usize::MAX);
        groups.entry((r.problem, r.n_bess, m)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rows| {
            let ok: Vec<&ReportRow> = rows.iter().copied().filter(|r| r.is_optimal()).collect();
            let avg = |f: fn(&ReportRow) -> Option<f64>| mean(ok.iter().map(|r| f(r)));
            SummaryRow {
                problem: rows[0].problem,
                model: rows[0].model,
                n_bess: rows[0].n_bess,
                solved: ok.len(),
                total: rows.len(),
                objective: avg(|r| r.objective),
                runtime_ms: avg(|r| Some(r.runtime_ms)),
                simult_pct: avg(|r| r.simult_pct),
                rmse: avg(|r| r.rmse),
                rmse_rel: avg(|r| r.rmse_rel),
                total_cost_rel: avg(|r| r.total_cost_rel),
                load_shed: avg(|r| r.load_shed),
                curtailment: avg(|r| r.curtailment),
                capacity_invested: avg(|r| r.capacity_invested),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "problem",
        "model",
        "n_bess",
        "solved",
        "total",
        "objective",
        "runtime_ms",
        "simult_pct",
        "rmse",
        "rmse_rel",
        "total_cost_rel",
        "load_shed",
        "curtailment",
        "capacity_invested",
    ])?;
    for r in rows {
        let mut rec = vec![
            r.problem.as_str().to_string(),
            r.model.as_str().to_string(),
            r.n_bess.to_string(),
            r.solved.to_string(),
            r.total.to_string(),
        ];
        for v in [
            r.objective,
            r.runtime_ms,
            r.simult_pct,
            r.rmse,
            r.rmse_rel,
            r.total_cost_rel,
            r.load_shed,
            r.curtailment,
            r.capacity_invested,
        ] {
            rec.push(fmt_opt(v));
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Curve over the report rows matching the optional filters.
pub fn report_curve(report: &ExperimentReport, model: Option<ModelKind>, n_bess: Option<usize>) -> PerfCurve {
    let rows: Vec<&ReportRow> = report
        .rows
        .iter()
        .filter(|r| model.is_none_or(|m| m == r.model) && n_bess.is_none_or(|n| n == r.n_bess))
        .collect();
    let runtimes: Vec<f64> = rows.iter().map(|r| r.runtime_ms).collect();
    let solved: Vec<bool> = rows.iter().map(|r| r.is_optimal()).collect();
    perf_curve(&runtimes, &solved)
}

pub fn write_perf_curve<W: Write>(w: W, curve: &PerfCurve) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["runtime_ms", "frac_solved"])?;
    for (t, f) in &curve.points {
        wr.write_record([t.to_string(), f.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Battery description read by the `region` subcommand: the parameter
/// fields plus `e0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    #[serde(flatten)]
    pub params: BessParams,
    pub e0: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec {
            params: BessParams::example(),
            e0: BessInitial::example().e0,
        }
    }
}

impl RegionSpec {
    pub fn load(path: &Path) -> Result<RegionSpec, CliError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Parse(path.to_path_buf(), e.to_string()))
    }
}

pub fn emit_region<W: Write>(spec: &RegionSpec, models: &[ModelKind], grid_n: usize, w: W) -> Result<(), CliError> {
    if grid_n < 2 {
        return Err(CliError::Config("grid must be at least 2 x 2".into()));
    }
    let init = BessInitial { e0: spec.e0 };
    let mut points = Vec::new();
    for &k in models {
        points.extend(region_grid(k, &spec.params, &init, grid_n)?);
    }
    write_region_csv(w, &points)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_lists() {
        assert_eq!(parse_counts("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_counts("2,4").unwrap(), vec![2, 4]);
        assert_eq!(parse_counts("3").unwrap(), vec![3]);
        assert!(parse_counts("5..1").is_err());
        assert!(parse_counts("x").is_err());
    }

    #[test]
    fn model_lists() {
        assert_eq!(parse_models("all").unwrap().len(), 5);
        assert_eq!(parse_models("exc,LP").unwrap(), vec![ModelKind::Exc, ModelKind::Lp]);
        assert!(parse_models("foo").is_err());
    }

    #[test]
    fn single_exc_instance() {
        let cfg = RunConfig {
            n_instances: 1,
            bess_counts: vec![1],
            models: vec![ModelKind::Exc],
            solve: SolveConfig {
                max_nodes: 200,
                ..SolveConfig::default()
            },
            ..RunConfig::default()
        };
        let rep = run_spt(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].simult_pct, Some(0.0));
        assert_eq!(rep.rows[0].rmse_rel, Some(1.0));
    }

    #[test]
    fn report_round_trip() {
        let mut a = ReportRow::new(ProblemKind::Tep, ModelKind::Lp, 2, 7);
        a.status = "optimal".into();
        a.objective = Some(1.5);
        a.load_shed = Some(0.0);
        let mut b = ReportRow::new(ProblemKind::Tep, ModelKind::Exc, 2, 7);
        b.status = "limit-reached".into();
        let rep = ExperimentReport::new(ProblemKind::Tep, vec![a, b]);
        assert_eq!(rep.rows[0].model, ModelKind::Exc);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let back = ExperimentReport::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rep);
        assert_eq!(rep.failures(), 1);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            RunConfig { n_instances: 0, ..RunConfig::default() },
            RunConfig { models: vec![], ..RunConfig::default() },
            RunConfig { bess_counts: vec![0], ..RunConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(run_spt(&cfg), Err(CliError::Config(_))));
        }
    }
}
