//! TOML experiment files.
//!
//! One schema covers every subcommand; which sections are required depends
//! on the command. Unknown keys are found by comparing the parsed document
//! with the re-serialized configuration, so a typo never silently falls back
//! to a default.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grid::{Field, Grid};
use crate::model::{validate, ModelParams, NbcParams, RawModelParams, ValidationError};
use crate::operators::SolverOptions;
use crate::stepper::{Problem, StepOptions};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub chi: f64,
    pub a: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub p: f64,
    /// Defaults to the grid dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub exploration: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbcSection {
    pub mu: f64,
    pub q: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cells: Vec<usize>,
    /// Defaults to unit length per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, HarnessError> {
        let extents = self.extents.clone().unwrap_or_else(|| vec![1.0; self.cells.len()]);
        Grid::new(&self.cells, &extents).map_err(|e| HarnessError::Invalid(format!("grid: {e}")))
    }
}

/// Initial data of one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Constant {
        value: f64,
    },
    /// `background + amplitude·exp(−|x − center|²/width²)`.
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        background: f64,
    },
    /// `mean + amplitude·Π cos(kπx_i/L_i)`.
    Cosine {
        k: usize,
        amplitude: f64,
        #[serde(default = "one")]
        mean: f64,
    },
    /// Snapshot CSV; relative paths resolve against the config file.
    File {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self::Constant { value: 1.0 }
    }
}

impl InitialSpec {
    pub fn build(&self, grid: Grid, base_dir: &Path) -> Result<Field, HarnessError> {
        let ext = grid.extents();
        let field = match self {
            Self::Constant { value } => Field::constant(grid, *value),
            Self::Gaussian { center, width, amplitude, background } => {
                let c = match center {
                    Some(c) if c.len() == grid.dim() => [c[0], c.get(1).copied().unwrap_or(0.0)],
                    Some(c) => {
                        return Err(HarnessError::Invalid(format!(
                            "gaussian center has {} coordinates on a {}-dimensional grid",
                            c.len(),
                            grid.dim()
                        )))
                    }
                    None => [ext[0] / 2.0, if grid.dim() == 2 { ext[1] / 2.0 } else { 0.0 }],
                };
                if !(*width > 0.0) {
                    return Err(HarnessError::Invalid(format!("gaussian width must be positive, got {width}")));
                }
                let dim = grid.dim();
                Field::from_fn(grid, |x, y| {
                    let dy = if dim == 2 { y - c[1] } else { 0.0 };
                    background + amplitude * (-((x - c[0]).powi(2) + dy * dy) / (width * width)).exp()
                })
            }
            Self::Cosine { k, amplitude, mean } => {
                let dim = grid.dim();
                let k = *k as f64;
                Field::from_fn(grid, |x, y| {
                    let cy = if dim == 2 { (k * std::f64::consts::PI * y / ext[1]).cos() } else { 1.0 };
                    mean + amplitude * (k * std::f64::consts::PI * x / ext[0]).cos() * cy
                })
            }
            Self::File { path } => {
                let full = base_dir.join(path);
                let file = fs::File::open(&full).map_err(|e| HarnessError::io(&full, e))?;
                Field::read_csv(grid, file).map_err(|e| HarnessError::Invalid(format!("{}: {e}", full.display())))?
            }
        };
        field.check_finite().map_err(|e| HarnessError::Invalid(format!("initial data: {e}")))?;
        if field.min() < 0.0 {
            return Err(HarnessError::Invalid(format!("initial data must be nonnegative, found {}", field.min())));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSpec {
    pub horizon: f64,
    #[serde(default = "dt_min")]
    pub dt_min: f64,
    #[serde(default = "dt_max")]
    pub dt_max: f64,
    #[serde(default = "safety")]
    pub safety: f64,
}

fn dt_min() -> f64 {
    StepOptions::default().dt_min
}

fn dt_max() -> f64 {
    StepOptions::default().dt_max
}

fn safety() -> f64 {
    StepOptions::default().safety
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    #[serde(default = "cadence")]
    pub cadence: usize,
    /// Defaults to `[0, T/2, T]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
}

fn cadence() -> usize {
    10
}

impl Default for MonitorSpec {
    fn default() -> Self {
        Self { cadence: cadence(), snapshot_times: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    #[serde(default = "blowup_cap")]
    pub blowup_cap: f64,
    /// `false` switches the power-law boundary flux off.
    #[serde(default = "yes")]
    pub boundary_flux: bool,
    #[serde(default = "negativity_tol")]
    pub negativity_tol: f64,
    #[serde(default = "pinned_steps")]
    pub pinned_steps: usize,
}

fn blowup_cap() -> f64 {
    StepOptions::default().blowup_cap
}

fn yes() -> bool {
    true
}

fn negativity_tol() -> f64 {
    StepOptions::default().negativity_tol
}

fn pinned_steps() -> usize {
    StepOptions::default().pinned_steps
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self { blowup_cap: blowup_cap(), boundary_flux: true, negativity_tol: negativity_tol(), pinned_steps: pinned_steps() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<Vec<f64>>,
    /// Per-cell horizon; defaults to `time.horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "max_runs")]
    pub max_runs: usize,
}

fn max_runs() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "p_lab")]
    pub p: f64,
    #[serde(default = "eps_lab")]
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegSpec {
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "p_lab")]
    pub p: f64,
    #[serde(default = "reg_etas")]
    pub etas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifSpec {
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "half")]
    pub eta: f64,
}

fn p_lab() -> f64 {
    1.25
}

fn eps_lab() -> f64 {
    0.1
}

fn two() -> f64 {
    2.0
}

fn half() -> f64 {
    0.5
}

fn reg_etas() -> Vec<f64> {
    crate::inequality_lab::BOUNDARY_REG_ETAS.to_vec()
}

fn gny_etas() -> Vec<f64> {
    crate::inequality_lab::GNY_ETAS.to_vec()
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self { r: 1.0, p: p_lab(), eps: eps_lab() }
    }
}

impl Default for RegSpec {
    fn default() -> Self {
        Self { r: 1.0, p: p_lab(), etas: reg_etas() }
    }
}

impl Default for UnifSpec {
    fn default() -> Self {
        Self { r: 1.0, p: 2.0, eta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IneqSection {
    #[serde(default = "ensemble_count")]
    pub count: usize,
    /// Cells per axis of each square test grid.
    #[serde(default = "lab_cells")]
    pub cells: Vec<usize>,
    #[serde(default = "max_wavenumber")]
    pub max_wavenumber: usize,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "bump_fraction")]
    pub bump_fraction: f64,
    #[serde(default = "gny_etas")]
    pub gny_etas: Vec<f64>,
    #[serde(default)]
    pub trace: TraceSpec,
    #[serde(default)]
    pub reg: RegSpec,
    #[serde(default)]
    pub unif: UnifSpec,
}

fn ensemble_count() -> usize {
    200
}

fn lab_cells() -> Vec<usize> {
    vec![64, 128]
}

fn max_wavenumber() -> usize {
    4
}

fn bump_fraction() -> f64 {
    0.25
}

/// Everything a config file may contain.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbc: Option<NbcSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_v: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSpec>,
    #[serde(default)]
    pub monitor: MonitorSpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ineq: Option<IneqSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// Field reference of every schema section, printed on usage errors.
pub const SCHEMA: &str = "\
top level   output = \"dir\" (optional), seed = u64 (default 0)
[model]     chi, a, mu, alpha, beta, tau (0|1), p, dim (optional), exploration (default false)
[nbc]       mu, q, p
[grid]      cells = [nx] | [nx, ny], extents = [lx] | [lx, ly] (default unit)
[initial]   kind = constant {value} | gaussian {width, amplitude, center?, background = 0}
            | cosine {k, amplitude, mean = 1} | file {path}   (default constant 1)
[initial_v] same kinds as [initial] (default constant 0)
[time]      horizon, dt_min = 1e-12, dt_max = 1e-2, safety = 0.9
[monitor]   cadence = 10, snapshot_times (default [0, T/2, T])
[control]   blowup_cap = 1e6, boundary_flux = true, negativity_tol = 1e-8, pinned_steps = 100
[solver]    tol = 1e-10, max_iter = 10000, backend = \"cg\" | \"spectral\"
[sweep]     p = [..], mu = [..], chi = [..] (optional), horizon, workers, max_runs = 400
[ineq]      count = 200, cells = [64, 128], max_wavenumber = 4, amplitude = 1, bump_fraction = 0.25,
            gny_etas, [ineq.trace] {r, p, eps}, [ineq.reg] {r, p, etas}, [ineq.unif] {r, p, eta}
";

/// Dotted paths present in `input` but absent from `known`.
fn unknown_keys(input: &toml::Value, known: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
    let (toml::Value::Table(a), toml::Value::Table(b)) = (input, known) else { return };
    for (k, v) in a {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match b.get(k) {
            None => {
                out.insert(path);
            }
            Some(kv) => unknown_keys(v, kv, &path, out),
        }
    }
}

/// A parsed file plus the keys that did not match the schema.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub file: ConfigFile,
    pub unknown: Vec<String>,
    pub base_dir: PathBuf,
    pub path: PathBuf,
}

/// Parses `text`; unknown keys are an error when `strict`.
pub fn parse_config(text: &str, strict: bool) -> Result<(ConfigFile, Vec<String>), HarnessError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    let file: ConfigFile = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    let echoed = toml::Value::try_from(&file).map_err(|e| HarnessError::Parse(e.to_string()))?;
    let mut unknown = BTreeSet::new();
    unknown_keys(&value, &echoed, "", &mut unknown);
    let unknown: Vec<String> = unknown.into_iter().collect();
    if strict && !unknown.is_empty() {
        return Err(HarnessError::Parse(format!("unknown key `{}`", unknown.join("`, `"))));
    }
    Ok((file, unknown))
}

pub fn load_config(path: &Path, strict: bool) -> Result<Loaded, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let (file, unknown) =
        parse_config(&text, strict).map_err(|e| HarnessError::Parse(format!("{}: {}", path.display(), e.detail())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { file, unknown, base_dir, path: path.to_path_buf() })
}

/// A fully resolved single run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub grid: Grid,
    pub initial: (Field, Field),
    pub horizon: f64,
    pub step: StepOptions,
    pub cadence: usize,
    pub snapshot_times: Vec<f64>,
    /// Configuration with every default filled in, for the manifest.
    pub echo: ConfigFile,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub model: ModelSection,
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
    pub chi: Vec<f64>,
    pub horizon: f64,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct IneqConfig {
    pub section: IneqSection,
    pub seed: u64,
    pub echo: ConfigFile,
}

pub fn model_params(section: &ModelSection, grid_dim: usize) -> Result<ModelParams, ValidationError> {
    validate(&RawModelParams {
        chi: section.chi,
        a: section.a,
        mu: section.mu,
        alpha: section.alpha,
        beta: section.beta,
        tau: section.tau,
        p: section.p,
        dim: section.dim.unwrap_or(grid_dim),
        exploration: section.exploration,
    })
}

fn step_options(file: &ConfigFile, time: &TimeSpec) -> Result<StepOptions, HarnessError> {
    let c = &file.control;
    let opts = StepOptions {
        boundary_flux: c.boundary_flux,
        solver: file.solver,
        dt_min: time.dt_min,
        dt_max: time.dt_max,
        safety: time.safety,
        blowup_cap: c.blowup_cap,
        negativity_tol: c.negativity_tol,
        pinned_steps: c.pinned_steps,
    };
    let mut bad = Vec::new();
    if !(opts.dt_min > 0.0 && opts.dt_max >= opts.dt_min && opts.dt_max.is_finite()) {
        bad.push(format!("need 0 < dt_min <= dt_max, got {} and {}", opts.dt_min, opts.dt_max));
    }
    if !(opts.safety > 0.0 && opts.safety <= 1.0) {
        bad.push(format!("safety must lie in (0, 1], got {}", opts.safety));
    }
    if !(opts.blowup_cap > 0.0) {
        bad.push(format!("blowup_cap must be positive, got {}", opts.blowup_cap));
    }
    if !(opts.negativity_tol >= 0.0) {
        bad.push(format!("negativity_tol must be nonnegative, got {}", opts.negativity_tol));
    }
    if !(opts.solver.tol > 0.0) || opts.solver.max_iter == 0 {
        bad.push("solver needs tol > 0 and max_iter > 0".to_string());
    }
    if file.monitor.cadence == 0 {
        bad.push("monitor cadence must be at least 1".to_string());
    }
    if bad.is_empty() {
        Ok(opts)
    } else {
        Err(HarnessError::Invalid(bad.join("; ")))
    }
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, HarnessError> {
    section.as_ref().ok_or_else(|| HarnessError::Invalid(format!("missing [{name}] section")))
}

/// Which equation a run config integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Chemotaxis,
    Nbc,
}

pub fn resolve_run(loaded: &Loaded, kind: RunKind) -> Result<RunConfig, HarnessError> {
    let file = &loaded.file;
    let grid = require(&file.grid, "grid")?.build()?;
    let time = require(&file.time, "time")?.clone();
    if !(time.horizon >= 0.0 && time.horizon.is_finite()) {
        return Err(HarnessError::Invalid(format!("horizon must be finite and nonnegative, got {}", time.horizon)));
    }
    let mut echo = file.clone();
    let problem = match kind {
        RunKind::Chemotaxis => {
            let section = require(&file.model, "model")?;
            let params = model_params(section, grid.dim())?;
            if params.dim != grid.dim() {
                return Err(HarnessError::Invalid(format!(
                    "model dim {} does not match the {}-dimensional grid",
                    params.dim,
                    grid.dim()
                )));
            }
            echo.model.as_mut().map(|m| m.dim = Some(grid.dim()));
            Problem::Chemotaxis(params)
        }
        RunKind::Nbc => {
            let s = require(&file.nbc, "nbc")?;
            Problem::Nbc(NbcParams::new(s.mu, s.q, s.p)?)
        }
    };
    let step = step_options(file, &time)?;
    let initial_u = file.initial.clone().unwrap_or_default();
    let initial_v = file.initial_v.clone().unwrap_or(InitialSpec::Constant { value: 0.0 });
    let u0 = initial_u.build(grid, &loaded.base_dir)?;
    let v0 = initial_v.build(grid, &loaded.base_dir)?;
    let snapshot_times = file
        .monitor
        .snapshot_times
        .clone()
        .unwrap_or_else(|| vec![0.0, time.horizon / 2.0, time.horizon]);
    if snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= time.horizon)) {
        return Err(HarnessError::Invalid("snapshot times must lie in [0, horizon]".into()));
    }
    echo.initial = Some(initial_u);
    echo.initial_v = Some(initial_v);
    echo.time = Some(time.clone());
    echo.monitor.snapshot_times = Some(snapshot_times.clone());
    Ok(RunConfig {
        problem,
        grid,
        initial: (u0, v0),
        horizon: time.horizon,
        step,
        cadence: file.monitor.cadence,
        snapshot_times,
        echo,
    })
}

pub fn resolve_sweep(loaded: &Loaded) -> Result<SweepConfig, HarnessError> {
    let sweep = require(&loaded.file.sweep, "sweep")?.clone();
    let model = require(&loaded.file.model, "model")?.clone();
    if sweep.p.is_empty() || sweep.mu.is_empty() || sweep.chi.as_ref().is_some_and(Vec::is_empty) {
        return Err(HarnessError::Invalid("sweep axes must be non-empty".into()));
    }
    let chi = sweep.chi.clone().unwrap_or_else(|| vec![model.chi]);
    let runs = sweep.p.len() * sweep.mu.len() * chi.len();
    if runs > sweep.max_runs {
        return Err(HarnessError::Invalid(format!("sweep has {runs} runs, above max_runs = {}", sweep.max_runs)));
    }
    // the base run carries the grid, data and controls; its own parameters
    // may be outside the validated range, so validate a representative cell
    let mut probe = loaded.clone();
    if let Some(m) = probe.file.model.as_mut() {
        m.p = sweep.p[0];
        m.mu = sweep.mu[0];
        m.chi = chi[0];
        m.exploration = true;
    }
    let mut base = match resolve_run(&probe, RunKind::Chemotaxis) {
        Ok(b) => b,
        Err(HarnessError::Validation(_)) => {
            return Err(HarnessError::Invalid("base model parameters are invalid for every sweep cell".into()))
        }
        Err(e) => return Err(e),
    };
    base.echo.model = loaded.file.model.clone();
    let horizon = sweep.horizon.unwrap_or(base.horizon);
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(HarnessError::Invalid(format!("sweep horizon must be finite and nonnegative, got {horizon}")));
    }
    match &loaded.file.monitor.snapshot_times {
        Some(times) if times.iter().any(|&t| t > horizon) => {
            return Err(HarnessError::Invalid("snapshot times must lie in [0, sweep horizon]".into()))
        }
        Some(_) => {}
        None => {
            base.snapshot_times = vec![0.0, horizon / 2.0, horizon];
            base.echo.monitor.snapshot_times = Some(base.snapshot_times.clone());
        }
    }
    base.horizon = horizon;
    Ok(SweepConfig { base, model, p: sweep.p, mu: sweep.mu, chi, horizon, workers: sweep.workers })
}

pub fn resolve_ineq(loaded: &Loaded) -> Result<IneqConfig, HarnessError> {
    let section = require(&loaded.file.ineq, "ineq")?.clone();
    if section.count == 0 || section.cells.is_empty() {
        return Err(HarnessError::Invalid("ineq needs count > 0 and at least one grid".into()));
    }
    Ok(IneqConfig { section, seed: loaded.file.seed, echo: loaded.file.clone() })
}
