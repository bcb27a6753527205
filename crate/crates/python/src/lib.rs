//! Python bindings: battery regions, seeded instances, single solves and
//! whole experiments.

use linbess::bess::{self, BessInitial, ModelKind};
use linbess::cli::{self, ExperimentReport, ReportRow, RunConfig};
use linbess::instances::{self, Rng, SptInstance};
use linbess::metrics::spt_metrics;
use linbess::optmodel::VarRef;
use linbess::problems::assemble_spt;
use linbess::solver::{self, SolveConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model(name: &str) -> PyResult<ModelKind> {
    name.parse().map_err(err)
}

#[pyclass(name = "BessParams", get_all, set_all)]
#[derive(Clone)]
struct PyBessParams {
    e_min: f64,
    e_max: f64,
    p_c_max: f64,
    p_d_max: f64,
    eta_c: f64,
    eta_d: f64,
}

impl PyBessParams {
    fn inner(&self) -> PyResult<bess::BessParams> {
        let p = bess::BessParams {
            e_min: self.e_min,
            e_max: self.e_max,
            p_c_max: self.p_c_max,
            p_d_max: self.p_d_max,
            eta_c: self.eta_c,
            eta_d: self.eta_d,
        };
        p.validate().map_err(err)?;
        Ok(p)
    }

    fn initial(&self, e0: f64) -> PyResult<(bess::BessParams, BessInitial)> {
        let p = self.inner()?;
        let init = BessInitial { e0 };
        init.validate(&p).map_err(err)?;
        Ok((p, init))
    }
}

impl From<bess::BessParams> for PyBessParams {
    fn from(p: bess::BessParams) -> Self {
        PyBessParams {
            e_min: p.e_min,
            e_max: p.e_max,
            p_c_max: p.p_c_max,
            p_d_max: p.p_d_max,
            eta_c: p.eta_c,
            eta_d: p.eta_d,
        }
    }
}

#[pymethods]
impl PyBessParams {
    #[new]
    fn new(e_min: f64, e_max: f64, p_c_max: f64, p_d_max: f64, eta_c: f64, eta_d: f64) -> PyResult<Self> {
        let p = PyBessParams {
            e_min,
            e_max,
            p_c_max,
            p_d_max,
            eta_c,
            eta_d,
        };
        p.inner()?;
        Ok(p)
    }

    /// The two-period example battery (start it at e0 = 1.5).
    #[staticmethod]
    fn example() -> Self {
        bess::BessParams::example().into()
    }

    /// Point A: largest charging power actually absorbable from `e0`.
    fn charge_limit(&self, e0: f64) -> PyResult<f64> {
        let (p, i) = self.initial(e0)?;
        Ok(bess::actual_charge_limit(&p, &i))
    }

    /// Point B: largest discharging power actually deliverable from `e0`.
    fn discharge_limit(&self, e0: f64) -> PyResult<f64> {
        let (p, i) = self.initial(e0)?;
        Ok(bess::actual_discharge_limit(&p, &i))
    }

    fn contains(&self, model_name: &str, e0: f64, pc: f64, pd: f64) -> PyResult<bool> {
        let (p, i) = self.initial(e0)?;
        bess::region_contains(model(model_name)?, &p, &i, pc, pd).map_err(err)
    }

    /// `(pc, pd, feasible)` over an `n × n` grid of the power box.
    #[pyo3(signature = (model_name, e0, n=101))]
    fn region(&self, model_name: &str, e0: f64, n: usize) -> PyResult<Vec<(f64, f64, bool)>> {
        let (p, i) = self.initial(e0)?;
        let pts = bess::region_grid(model(model_name)?, &p, &i, n).map_err(err)?;
        Ok(pts.into_iter().map(|r| (r.pc, r.pd, r.feasible)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "BessParams(e_min={}, e_max={}, p_c_max={}, p_d_max={}, eta_c={}, eta_d={})",
            self.e_min, self.e_max, self.p_c_max, self.p_d_max, self.eta_c, self.eta_d
        )
    }
}

/// Seeded set-point tracking instance.
#[pyclass(name = "SptInstance")]
struct PySptInstance(SptInstance);

#[pymethods]
impl PySptInstance {
    /// Same instance the experiment runner uses for `(seed, index, n_bess)`.
    #[new]
    #[pyo3(signature = (seed, index, n_bess, pool_days=cli::SYNTHETIC_POOL_DAYS))]
    fn new(seed: u64, index: u64, n_bess: usize, pool_days: usize) -> PyResult<Self> {
        let pool = instances::synthetic_pool(seed, pool_days);
        let mut rng = Rng::derive(seed, index, &format!("spt/{n_bess}"));
        instances::make_spt_instance(&mut rng, n_bess, &pool)
            .map(PySptInstance)
            .map_err(err)
    }

    #[getter]
    fn signal(&self) -> Vec<f64> {
        self.0.signal.clone()
    }

    /// `(params, e0)` per battery.
    #[getter]
    fn fleet(&self) -> Vec<(PyBessParams, f64)> {
        self.0.fleet.iter().map(|(p, i)| ((*p).into(), i.e0)).collect()
    }

    fn digest(&self) -> String {
        instances::digest(&self.0)
    }

    /// Solves under one battery model. Returns status, objective, runtime,
    /// simultaneity, RMSE and the per-battery power schedules.
    #[pyo3(signature = (model_name, max_nodes=None, time_limit=None, mip_gap=1e-3))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        model_name: &str,
        max_nodes: Option<usize>,
        time_limit: Option<f64>,
        mip_gap: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let asm = assemble_spt(&self.0, model(model_name)?).map_err(err)?;
        let cfg = solve_config(max_nodes, time_limit, mip_gap);
        let sol = py.detach(|| solver::solve(&asm.problem, &cfg)).map_err(err)?;
        let m = spt_metrics(&sol, &asm);
        let d = PyDict::new(py);
        d.set_item("status", sol.status.as_str())?;
        d.set_item("objective", sol.objective)?;
        d.set_item("runtime_ms", sol.runtime_ms)?;
        d.set_item("nodes", sol.nodes)?;
        d.set_item("simult_pct", m.simult_pct)?;
        d.set_item("rmse", m.rmse)?;
        let sched = |f: fn(&bess::BessVars) -> &Vec<VarRef>| -> Vec<Vec<f64>> {
            asm.bess.iter().map(|b| f(b).iter().map(|v| sol.value(*v)).collect()).collect()
        };
        d.set_item("p_c", sched(|b| &b.p_c))?;
        d.set_item("p_d", sched(|b| &b.p_d))?;
        Ok(d)
    }
}

fn solve_config(max_nodes: Option<usize>, time_limit: Option<f64>, mip_gap: f64) -> SolveConfig {
    let d = SolveConfig::default();
    SolveConfig {
        mip_rel_gap: mip_gap,
        time_limit,
        max_nodes: max_nodes.unwrap_or(d.max_nodes),
        ..d
    }
}

/// Experiment results, one row per (fleet size, instance, model).
#[pyclass(name = "Report")]
struct PyReport(ExperimentReport);

fn row_dict<'py>(py: Python<'py>, r: &ReportRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("problem", r.problem.as_str())?;
    d.set_item("model", r.model.as_str())?;
    d.set_item("n_bess", r.n_bess)?;
    d.set_item("instance", r.instance)?;
    d.set_item("status", &r.status)?;
    d.set_item("objective", r.objective)?;
    d.set_item("runtime_ms", r.runtime_ms)?;
    d.set_item("gap", r.gap)?;
    d.set_item("simult_pct", r.simult_pct)?;
    d.set_item("rmse", r.rmse)?;
    d.set_item("rmse_rel", r.rmse_rel)?;
    d.set_item("total_cost_rel", r.total_cost_rel)?;
    d.set_item("load_shed", r.load_shed)?;
    d.set_item("curtailment", r.curtailment)?;
    d.set_item("capacity_invested", r.capacity_invested)?;
    Ok(d)
}

#[pymethods]
impl PyReport {
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0.rows.iter().map(|r| row_dict(py, r)).collect()
    }

    fn failures(&self) -> usize {
        self.0.failures()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write_csv(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }

    /// Per-model averages over optimal rows, as CSV.
    fn summary_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        cli::write_summary(&mut buf, &cli::summarize(&self.0)).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }

    /// `(runtime_ms, frac_solved)` points.
    #[pyo3(signature = (model_name=None, n_bess=None))]
    fn perf_curve(&self, model_name: Option<&str>, n_bess: Option<usize>) -> PyResult<Vec<(f64, f64)>> {
        let m = model_name.map(model).transpose()?;
        Ok(cli::report_curve(&self.0, m, n_bess).points)
    }

    fn __len__(&self) -> usize {
        self.0.rows.len()
    }
}

#[allow(clippy::too_many_arguments)]
fn run_config(
    seed: u64,
    instances: usize,
    bess_counts: Vec<usize>,
    models: &str,
    days: usize,
    workers: Option<usize>,
    max_nodes: Option<usize>,
    time_limit: Option<f64>,
) -> PyResult<RunConfig> {
    Ok(RunConfig {
        seed,
        n_instances: instances,
        bess_counts,
        models: cli::parse_models(models).map_err(err)?,
        days,
        workers,
        solve: solve_config(max_nodes, time_limit, 1e-3),
        ..RunConfig::default()
    })
}

#[pyfunction]
#[pyo3(signature = (seed=42, instances=10, bess_counts=vec![1], models="all", workers=None, max_nodes=None, time_limit=None))]
#[allow(clippy::too_many_arguments)]
fn run_spt(
    py: Python<'_>,
    seed: u64,
    instances: usize,
    bess_counts: Vec<usize>,
    models: &str,
    workers: Option<usize>,
    max_nodes: Option<usize>,
    time_limit: Option<f64>,
) -> PyResult<PyReport> {
    let cfg = run_config(seed, instances, bess_counts, models, 1, workers, max_nodes, time_limit)?;
    py.detach(|| cli::run_spt(&cfg)).map(PyReport).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (seed=42, instances=1, bess_counts=vec![1], models="all", days=5, workers=None, max_nodes=None, time_limit=None))]
#[allow(clippy::too_many_arguments)]
fn run_tep(
    py: Python<'_>,
    seed: u64,
    instances: usize,
    bess_counts: Vec<usize>,
    models: &str,
    days: usize,
    workers: Option<usize>,
    max_nodes: Option<usize>,
    time_limit: Option<f64>,
) -> PyResult<PyReport> {
    let cfg = run_config(seed, instances, bess_counts, models, days, workers, max_nodes, time_limit)?;
    py.detach(|| cli::run_tep(&cfg)).map(PyReport).map_err(err)
}

#[pymodule]
fn linbess_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBessParams>()?;
    m.add_class::<PySptInstance>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run_spt, m)?)?;
    m.add_function(wrap_pyfunction!(run_tep, m)?)?;
    m.add("MODELS", ModelKind::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
