use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ksnbc::grid::{self, Field as CoreField, Grid as CoreGrid};
use ksnbc::inequality_lab::{self, EnsembleSpec, FieldEnsemble, Samples};
use ksnbc::model::{self, ModelParams as CoreParams, NbcParams as CoreNbc, RawModelParams};
use ksnbc::monitors::{self, Functional, VerdictOptions};
use ksnbc::operators::{SolverBackend, SolverOptions};
use ksnbc::stepper::{self, Problem, RunPlan, SimState, StepOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Converts anything serializable into plain Python objects via `json`.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Uniform cell-centered grid on `[0, Lx]` or `[0, Lx] x [0, Ly]`.
#[pyclass(module = "ksnbc_py", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct Grid(CoreGrid);

#[pymethods]
impl Grid {
    #[new]
    #[pyo3(signature = (cells, extents=None))]
    fn new(cells: Vec<usize>, extents: Option<Vec<f64>>) -> PyResult<Self> {
        let extents = extents.unwrap_or_else(|| vec![1.0; cells.len()]);
        CoreGrid::new(&cells, &extents).map(Grid).map_err(value_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn cells(&self) -> Vec<usize> {
        self.0.cells()[..self.0.dim()].to_vec()
    }

    #[getter]
    fn extents(&self) -> Vec<f64> {
        self.0.extents()[..self.0.dim()].to_vec()
    }

    #[getter]
    fn h_min(&self) -> f64 {
        self.0.h_min()
    }

    fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.0.len()).map(|c| self.0.center(c)[..self.0.dim()].to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid({})", self.0)
    }
}

/// Cell values on a grid, storage order `j * nx + i`.
#[pyclass(module = "ksnbc_py", skip_from_py_object)]
#[derive(Clone)]
struct Field(CoreField);

#[pymethods]
impl Field {
    #[new]
    fn new(grid: &Grid, values: Vec<f64>) -> PyResult<Self> {
        CoreField::from_values(grid.0, values).map(Field).map_err(value_err)
    }

    #[staticmethod]
    fn constant(grid: &Grid, value: f64) -> Self {
        Field(CoreField::constant(grid.0, value))
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid(*self.0.grid())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn min(&self) -> f64 {
        self.0.min()
    }

    fn max(&self) -> f64 {
        self.0.max()
    }

    fn integral(&self) -> PyResult<f64> {
        grid::integrate(&self.0).map_err(value_err)
    }

    fn lp_norm(&self, r: f64) -> PyResult<f64> {
        grid::lp_norm(&self.0, r).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }
}

/// Validated coefficients of the chemotaxis system.
#[pyclass(module = "ksnbc_py", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct ModelParams(CoreParams);

#[pymethods]
impl ModelParams {
    /// Raises `ValueError` listing every violated constraint.
    #[new]
    #[pyo3(signature = (chi, a, mu, alpha, beta, tau, p, dim, exploration=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(chi: f64, a: f64, mu: f64, alpha: f64, beta: f64, tau: f64, p: f64, dim: usize, exploration: bool) -> PyResult<Self> {
        let raw = RawModelParams { chi, a, mu, alpha, beta, tau, p, dim, exploration };
        model::validate(&raw).map(ModelParams).map_err(value_err)
    }

    #[getter]
    fn chi(&self) -> f64 {
        self.0.chi
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn tau(&self) -> u8 {
        self.0.regime.tau()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn classify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &model::classify_regime(&self.0))
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.to_raw())
    }
}

/// Coefficients of the scalar problem `U_t = ΔU − μU^Q`, `∂U/∂ν = U^P`.
#[pyclass(module = "ksnbc_py", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct NbcParams(CoreNbc);

#[pymethods]
impl NbcParams {
    #[new]
    fn new(mu: f64, q: f64, p: f64) -> PyResult<Self> {
        CoreNbc::new(mu, q, p).map(NbcParams).map_err(value_err)
    }

    #[getter]
    fn critical_p(&self) -> f64 {
        self.0.critical_p()
    }
}

fn problem_of(problem: &Bound<'_, PyAny>) -> PyResult<Problem> {
    if let Ok(p) = problem.extract::<ModelParams>() {
        Ok(Problem::Chemotaxis(p.0))
    } else if let Ok(p) = problem.extract::<NbcParams>() {
        Ok(Problem::Nbc(p.0))
    } else {
        Err(PyValueError::new_err("problem must be ModelParams or NbcParams"))
    }
}

fn functional(name: &str) -> PyResult<Functional> {
    Functional::parse(name).map_err(value_err)
}

/// Result of [`Stepper::run`].
#[pyclass(module = "ksnbc_py")]
struct RunResult {
    inner: stepper::RunResult,
    blowup_cap: f64,
}

#[pymethods]
impl RunResult {
    /// `Completed`, `BlowUp`, `NegativityFailure` or `SolverFailure`.
    #[getter]
    fn status(&self) -> &'static str {
        self.inner.outcome.status.name()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.outcome.steps
    }

    #[getter]
    fn wall_time(&self) -> f64 {
        self.inner.outcome.wall_time
    }

    fn outcome<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.outcome)
    }

    /// Monitor columns keyed by name.
    fn series<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        out.set_item("t", self.inner.series.times())?;
        for f in Functional::ALL {
            out.set_item(f.name(), self.inner.series.values(f))?;
        }
        out.set_item("dt", self.inner.series.records.iter().map(|r| r.dt).collect::<Vec<_>>())?;
        Ok(out)
    }

    #[pyo3(signature = (functional, window=0.5, slope_tol=1e-3))]
    fn verdict<'py>(&self, py: Python<'py>, functional: &str, window: f64, slope_tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let opts = VerdictOptions { window, slope_tol, blowup_cap: self.blowup_cap };
        let v = monitors::verdict(&self.inner.series, self::functional(functional)?, &opts).map_err(value_err)?;
        to_py(py, &v)
    }

    fn final_u(&self) -> Field {
        Field(self.inner.final_state.u.clone())
    }

    fn final_v(&self) -> Field {
        Field(self.inner.final_state.v.clone())
    }

    fn balance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.balance)
    }

    fn write_series_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(runtime_err)?;
        self.inner.series.write_csv(file).map_err(runtime_err)
    }
}

/// IMEX integrator bound to one grid.
#[pyclass(module = "ksnbc_py")]
struct Stepper(stepper::Stepper);

#[pymethods]
impl Stepper {
    #[new]
    #[pyo3(signature = (grid, boundary_flux=true, backend="cg", dt_max=1e-2, dt_min=1e-12, blowup_cap=1e6))]
    fn new(grid: &Grid, boundary_flux: bool, backend: &str, dt_max: f64, dt_min: f64, blowup_cap: f64) -> PyResult<Self> {
        let backend = match backend {
            "cg" => SolverBackend::Cg,
            "spectral" => SolverBackend::Spectral,
            other => return Err(PyValueError::new_err(format!("unknown backend {other:?}, expected \"cg\" or \"spectral\""))),
        };
        let opts = StepOptions {
            boundary_flux,
            solver: SolverOptions { backend, ..SolverOptions::default() },
            dt_max,
            dt_min,
            blowup_cap,
            ..StepOptions::default()
        };
        Ok(Stepper(stepper::Stepper::new(grid.0, opts)))
    }

    /// One step of size `dt`; returns `(u, v)`.
    fn step(&self, problem: &Bound<'_, PyAny>, u: &Field, v: &Field, dt: f64) -> PyResult<(Field, Field)> {
        let problem = problem_of(problem)?;
        let state = SimState::new(u.0.clone(), v.0.clone());
        let step = self.0.step(&problem, &state, dt).map_err(runtime_err)?;
        Ok((Field(step.state.u), Field(step.state.v)))
    }

    /// Integrates to `horizon` with adaptive steps, releasing the GIL.
    #[pyo3(signature = (problem, u0, v0, horizon, cadence=10, snapshot_times=None))]
    fn run(
        &self,
        py: Python<'_>,
        problem: &Bound<'_, PyAny>,
        u0: &Field,
        v0: &Field,
        horizon: f64,
        cadence: usize,
        snapshot_times: Option<Vec<f64>>,
    ) -> PyResult<RunResult> {
        let problem = problem_of(problem)?;
        let plan = RunPlan { cadence, snapshot_times: snapshot_times.unwrap_or_default(), ..RunPlan::new(horizon) };
        let initial = (u0.0.clone(), v0.0.clone());
        let stepper = &self.0;
        let inner = py.detach(|| stepper.run(&problem, initial, &plan));
        Ok(RunResult { inner, blowup_cap: self.0.options().blowup_cap })
    }
}

#[pyfunction]
fn mu_critical_pe(n: usize, chi: f64, alpha: f64) -> f64 {
    model::mu_critical_pe(n, chi, alpha)
}

#[pyfunction]
fn mu0_3d(chi: f64, a: f64, alpha: f64) -> PyResult<f64> {
    model::mu0_3d(chi, a, alpha).map_err(value_err)
}

/// All monitored functionals of `(u, v)` as a dict.
#[pyfunction]
#[pyo3(signature = (u, v, boundary_p=None))]
fn sample<'py>(py: Python<'py>, u: &Field, v: &Field, boundary_p: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let flux = match boundary_p {
        Some(p) => ksnbc::operators::FluxSpec::power_law(p).map_err(value_err)?,
        None => ksnbc::operators::FluxSpec::Homogeneous,
    };
    let record = monitors::sample(&u.0, &v.0, 0.0, 0.0, flux).map_err(value_err)?;
    to_py(py, &record)
}

#[pyfunction]
#[pyo3(signature = (u, r0=2.0, levels=6))]
fn moser_ladder(u: &Field, r0: f64, levels: usize) -> PyResult<Vec<f64>> {
    monitors::moser_ladder(&u.0, r0, levels).map_err(value_err)
}

#[pyfunction]
fn check_convexity_sign(f: &Field) -> f64 {
    inequality_lab::check_convexity_sign(&f.0)
}

/// Fits one inequality on a seeded ensemble over square grids of the given sizes.
///
/// `kind` is one of `gny`, `boundary_trace`, `boundary_reg`, `unif_gn_2d`;
/// `eta` doubles as `eps` for the trace inequality.
#[pyfunction]
#[pyo3(signature = (kind, eta, seed=2024, count=200, cells=vec![64, 128], r=1.0, p=1.25))]
#[allow(clippy::too_many_arguments)]
fn fit_inequality<'py>(
    py: Python<'py>,
    kind: &str,
    eta: f64,
    seed: u64,
    count: usize,
    cells: Vec<usize>,
    r: f64,
    p: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let instance = match kind {
        "gny" => inequality_lab::Instance::gny(eta),
        "boundary_trace" => inequality_lab::Instance::boundary_trace(r, p, eta),
        "boundary_reg" => inequality_lab::Instance::boundary_reg(r, p, eta),
        "unif_gn_2d" => inequality_lab::Instance::unif_gn_2d(r, p, eta),
        other => return Err(PyValueError::new_err(format!("unknown inequality {other:?}"))),
    }
    .map_err(value_err)?;
    let report = py
        .detach(|| {
            let ensemble = FieldEnsemble::generate(seed, count, EnsembleSpec::default());
            let grids = cells.iter().map(|&n| CoreGrid::unit(2, n)).collect::<Result<Vec<_>, _>>()?;
            let samples = Samples::new(&ensemble, &grids)?;
            inequality_lab::fit(&instance, &samples)
        })
        .map_err(value_err)?;
    to_py(py, &report)
}

/// Runs the `ksnbc` command line with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("ksnbc".to_string()).chain(args).collect();
    py.detach(|| ksnbc::harness::cli(argv).code())
}

#[pymodule]
fn ksnbc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Field>()?;
    m.add_class::<ModelParams>()?;
    m.add_class::<NbcParams>()?;
    m.add_class::<Stepper>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(mu_critical_pe, m)?)?;
    m.add_function(wrap_pyfunction!(mu0_3d, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(moser_ladder, m)?)?;
    m.add_function(wrap_pyfunction!(check_convexity_sign, m)?)?;
    m.add_function(wrap_pyfunction!(fit_inequality, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
