use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use haptosim::config::{load_config, parse_config, serialize_config, SimulationConfig, Solver};
use haptosim::integrate::{self, NullSink, RunConfig};
use haptosim::mms::{convergence_study, MmsCase, MmsConfig, FIELDS};
use haptosim::model::validate_params;
use haptosim::monitor::compute_bounds;
use haptosim::output::OutputSink;
use haptosim::{EmtRateSpec, Error, Field, Formulation, Grid2D, ModelParameters, State};

create_exception!(haptosim, HaptosimError, PyException);
create_exception!(haptosim, ConfigError, HaptosimError);
create_exception!(haptosim, MonitorViolation, HaptosimError);

fn is_config(e: &Error) -> bool {
    match e {
        Error::Config(_)
        | Error::InvalidParameters(_)
        | Error::InvalidGrid(_)
        | Error::InvalidRunConfig(_)
        | Error::InvalidEmtRate(_)
        | Error::Format { .. } => true,
        Error::AtTime { source, .. }
        | Error::Window { source, .. }
        | Error::Refinement { source, .. } => is_config(source),
        _ => false,
    }
}

fn is_monitor(e: &Error) -> bool {
    match e {
        Error::MonitorViolation { .. } => true,
        Error::AtTime { source, .. } | Error::Window { source, .. } => is_monitor(source),
        _ => false,
    }
}

pub fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    if is_config(&e) {
        ConfigError::new_err(msg)
    } else if is_monitor(&e) {
        MonitorViolation::new_err(msg)
    } else {
        HaptosimError::new_err(msg)
    }
}

fn parse_formulation(s: &str) -> PyResult<Formulation> {
    match s {
        "original" => Ok(Formulation::Original),
        "transformed" => Ok(Formulation::Transformed),
        _ => Err(ConfigError::new_err(format!(
            "formulation: expected \"original\" or \"transformed\", got {s:?}"
        ))),
    }
}

fn formulation_name(f: Formulation) -> &'static str {
    match f {
        Formulation::Original => "original",
        Formulation::Transformed => "transformed",
    }
}

/// Rectangular cell-centred grid.
#[pyclass(name = "Grid", frozen)]
#[derive(Clone, Copy)]
pub struct PyGrid {
    pub inner: Grid2D,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (nx, ny, lx = 1.0, ly = 1.0))]
    fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> PyResult<Self> {
        Grid2D::new(nx, ny, lx, ly)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx()
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.ny()
    }

    #[getter]
    fn lx(&self) -> f64 {
        self.inner.lx()
    }

    #[getter]
    fn ly(&self) -> f64 {
        self.inner.ly()
    }

    #[getter]
    fn hx(&self) -> f64 {
        self.inner.hx()
    }

    #[getter]
    fn hy(&self) -> f64 {
        self.inner.hy()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(nx={}, ny={}, lx={}, ly={})",
            self.inner.nx(),
            self.inner.ny(),
            self.inner.lx(),
            self.inner.ly()
        )
    }
}

/// Model coefficients. The EMT rate is saturating unless `emt_value` is given.
#[pyclass(name = "Params")]
#[derive(Clone, Copy)]
pub struct PyParams {
    pub inner: ModelParameters,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (*, chi_d = 0.5, chi_s = 1.0, mu_d = 0.5, mu_s = 1.0, mu_v = 0.5, mu_max = 0.1, emt_scale = 1.0, emt_value = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        chi_d: f64,
        chi_s: f64,
        mu_d: f64,
        mu_s: f64,
        mu_v: f64,
        mu_max: f64,
        emt_scale: f64,
        emt_value: Option<f64>,
    ) -> Self {
        let emt = match emt_value {
            Some(value) => EmtRateSpec::Constant { value },
            None => EmtRateSpec::Saturating { scale: emt_scale },
        };
        Self {
            inner: ModelParameters {
                chi_d,
                chi_s,
                mu_d,
                mu_s,
                mu_v,
                mu_max,
                emt,
            },
        }
    }

    /// Messages for every violated constraint; empty when admissible.
    fn problems(&self) -> Vec<String> {
        validate_params(&self.inner)
            .iter()
            .map(|v| v.to_string())
            .collect()
    }

    #[pyo3(signature = (allow_unproven = false))]
    fn validate(&self, allow_unproven: bool) -> PyResult<()> {
        self.inner
            .validated(allow_unproven)
            .map(|_| ())
            .map_err(to_py)
    }

    fn mu_emt(&self, cd: f64, cs: f64, v: f64, m: f64) -> f64 {
        self.inner.mu_emt(cd, cs, v, m)
    }

    #[getter]
    fn chi_d(&self) -> f64 {
        self.inner.chi_d
    }

    #[getter]
    fn chi_s(&self) -> f64 {
        self.inner.chi_s
    }

    #[getter]
    fn mu_d(&self) -> f64 {
        self.inner.mu_d
    }

    #[getter]
    fn mu_s(&self) -> f64 {
        self.inner.mu_s
    }

    #[getter]
    fn mu_v(&self) -> f64 {
        self.inner.mu_v
    }

    #[getter]
    fn mu_max(&self) -> f64 {
        self.inner.mu_max
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

fn field_from_rows(grid: Grid2D, rows: Vec<Vec<f64>>, name: &str) -> PyResult<Field> {
    if rows.len() != grid.ny() || rows.iter().any(|r| r.len() != grid.nx()) {
        return Err(ConfigError::new_err(format!(
            "{name}: expected {} rows of {} values",
            grid.ny(),
            grid.nx()
        )));
    }
    Field::from_values(grid, rows.concat()).map_err(to_py)
}

fn rows(f: &Field) -> Vec<Vec<f64>> {
    f.values()
        .chunks(f.grid().nx())
        .map(<[f64]>::to_vec)
        .collect()
}

/// The four unknowns at one time. Fields are lists of `ny` rows of `nx`
/// values, row 0 at the bottom.
#[pyclass(name = "State")]
#[derive(Clone)]
pub struct PyState {
    pub inner: State,
}

#[pymethods]
impl PyState {
    #[new]
    #[pyo3(signature = (grid, cd, cs, v, m, time = 0.0))]
    fn new(
        grid: &PyGrid,
        cd: Vec<Vec<f64>>,
        cs: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        m: Vec<Vec<f64>>,
        time: f64,
    ) -> PyResult<Self> {
        let g = grid.inner;
        let s = State::new(
            Formulation::Original,
            time,
            field_from_rows(g, cd, "cd")?,
            field_from_rows(g, cs, "cs")?,
            field_from_rows(g, v, "v")?,
            field_from_rows(g, m, "m")?,
        )
        .map_err(to_py)?;
        s.check_invariants().map_err(to_py)?;
        Ok(Self { inner: s })
    }

    #[staticmethod]
    fn uniform(grid: &PyGrid, cd: f64, cs: f64, v: f64, m: f64) -> PyResult<Self> {
        let s = State::uniform(grid.inner, cd, cs, v, m);
        s.check_invariants().map_err(to_py)?;
        Ok(Self { inner: s })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    #[getter]
    fn formulation(&self) -> &'static str {
        formulation_name(self.inner.formulation)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: *self.inner.grid(),
        }
    }

    /// Field by label (`cd`, `cs`, `v`, `m`, or `ad`, `as` when transformed).
    fn field(&self, name: &str) -> PyResult<Vec<Vec<f64>>> {
        let labels = self.inner.labels();
        let k = labels
            .iter()
            .position(|l| *l == name)
            .ok_or_else(|| ConfigError::new_err(format!("no field {name:?}; have {labels:?}")))?;
        Ok(rows(self.inner.fields()[k]))
    }

    fn to_original(&self, params: &PyParams) -> PyResult<Self> {
        self.inner
            .to_original(&params.inner)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn to_transformed(&self, params: &PyParams) -> PyResult<Self> {
        self.inner
            .to_transformed(&params.inner)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn sup_distance(&self, other: &PyState) -> PyResult<f64> {
        self.inner.sup_distance(&other.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let g = self.inner.grid();
        format!(
            "State(t={}, {}x{}, {})",
            self.inner.time,
            g.nx(),
            g.ny(),
            formulation_name(self.inner.formulation)
        )
    }
}

/// A full run configuration, read from TOML.
#[pyclass(name = "Config")]
#[derive(Clone)]
pub struct PyConfig {
    pub inner: SimulationConfig,
}

#[pymethods]
impl PyConfig {
    /// Default configuration.
    #[new]
    fn new() -> Self {
        Self {
            inner: SimulationConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        parse_config(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_config(&path)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn to_toml(&self) -> PyResult<String> {
        serialize_config(&self.inner).map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn grid(&self) -> PyResult<PyGrid> {
        self.inner
            .grid()
            .map(|inner| PyGrid { inner })
            .map_err(to_py)
    }

    #[getter]
    fn params(&self) -> PyParams {
        PyParams {
            inner: self.inner.params,
        }
    }

    #[setter]
    fn set_params(&mut self, p: &PyParams) {
        self.inner.params = p.inner;
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.run.t_end
    }

    #[setter]
    fn set_t_end(&mut self, t: f64) {
        self.inner.run.t_end = t;
    }

    #[getter]
    fn solver(&self) -> &'static str {
        match self.inner.run.solver {
            Solver::Direct => "direct",
            Solver::Picard => "picard",
        }
    }

    #[setter]
    fn set_solver(&mut self, s: &str) -> PyResult<()> {
        self.inner.run.solver = s.parse().map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn formulation(&self) -> &'static str {
        formulation_name(self.inner.run.formulation)
    }

    #[setter]
    fn set_formulation(&mut self, s: &str) -> PyResult<()> {
        self.inner.run.formulation = parse_formulation(s)?;
        Ok(())
    }

    fn set_grid(&mut self, nx: usize, ny: usize) {
        self.inner.grid.nx = nx;
        self.inner.grid.ny = ny;
    }

    fn initial_state(&self) -> PyResult<PyState> {
        haptosim::sim::initial_state(&self.inner)
            .map(|s| PyState { inner: s.state })
            .map_err(to_py)
    }
}

/// Runs a configuration. Snapshots and the monitor series are written when
/// `output` is given.
#[pyfunction]
#[pyo3(signature = (config, output = None))]
fn simulate<'py>(
    py: Python<'py>,
    config: &PyConfig,
    output: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = &config.inner;
    cfg.validate().map_err(to_py)?;
    let report = py
        .allow_threads(|| match &output {
            Some(dir) => {
                let mut sink = OutputSink::create(dir, &cfg.output.formats)?;
                let r = haptosim::sim::simulate(cfg, &mut sink)?;
                sink.finish()?;
                Ok(r)
            }
            None => haptosim::sim::simulate(cfg, &mut NullSink),
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item(
        "state",
        PyState {
            inner: report.final_state,
        },
    )?;
    d.set_item("steps", report.summary.as_ref().map(|s| s.steps))?;
    d.set_item("windows", report.traces.len())?;
    d.set_item("soft_violations", report.soft_violations)?;
    d.set_item("hard_violations", report.hard_violations)?;
    d.set_item("initial_clipped", report.initial_clipped)?;
    Ok(d)
}

/// Advances `state` to `t_end` with the direct solver.
#[pyfunction]
#[pyo3(signature = (state, params, t_end, formulation = "original", cfl_safety = 0.9, dt_max = 0.01))]
fn run(
    py: Python<'_>,
    state: &PyState,
    params: &PyParams,
    t_end: f64,
    formulation: &str,
    cfl_safety: f64,
    dt_max: f64,
) -> PyResult<PyState> {
    let rc = RunConfig {
        t_end,
        cfl_safety,
        dt_max,
        formulation: parse_formulation(formulation)?,
        monitor_every: 0,
        ..RunConfig::default()
    };
    let p = params.inner;
    let init = state.inner.clone();
    let summary = py
        .allow_threads(|| integrate::run(init, &p, &rc, &mut NullSink))
        .map_err(to_py)?;
    Ok(PyState {
        inner: summary.final_state,
    })
}

#[pyfunction]
fn compare_solvers<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    cfg.validate().map_err(to_py)?;
    let c = py
        .allow_threads(|| haptosim::sim::compare_solvers(&cfg))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("discrepancy", c.discrepancy)?;
    d.set_item("tolerance", c.tolerance)?;
    d.set_item("within_tolerance", c.within_tolerance())?;
    d.set_item("max_ratio", c.max_ratio())?;
    d.set_item("iterations", c.iterations())?;
    d.set_item("windows", c.traces.len())?;
    Ok(d)
}

/// Manufactured-solution study; returns the levels and the fitted orders.
#[pyfunction]
#[pyo3(signature = (case, levels, t_end = 0.1))]
fn mms<'py>(
    py: Python<'py>,
    case: &str,
    levels: Vec<usize>,
    t_end: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let case: MmsCase = case.parse().map_err(to_py)?;
    let cfg = MmsConfig {
        t_end,
        ..MmsConfig::default()
    };
    let table = py
        .allow_threads(|| convergence_study(case, &levels, &cfg))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    let errors: Vec<Vec<f64>> = table.levels.iter().map(|l| l.err_linf.to_vec()).collect();
    d.set_item("levels", levels)?;
    d.set_item("errors", errors)?;
    let orders = PyDict::new(py);
    for (k, name) in FIELDS.iter().enumerate() {
        orders.set_item(*name, table.fitted_order(k))?;
    }
    d.set_item("orders", orders)?;
    d.set_item("csv", table.to_csv())?;
    Ok(d)
}

#[pyfunction]
fn bounds<'py>(
    py: Python<'py>,
    state: &PyState,
    params: &PyParams,
) -> PyResult<Bound<'py, PyDict>> {
    let b = compute_bounds(&state.inner, &params.inner).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("cd", b.cd_l1_bound)?;
    d.set_item("cs", b.cs_l1_bound)?;
    d.set_item("m", b.m_l1_bound)?;
    d.set_item("cs_max", b.cs_max)?;
    d.set_item("area", b.omega_area)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "haptosim")]
pub fn haptosim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HaptosimError", m.py().get_type::<HaptosimError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("MonitorViolation", m.py().get_type::<MonitorViolation>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compare_solvers, m)?)?;
    m.add_function(wrap_pyfunction!(mms, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    Ok(())
}
