//! Single runs, sweeps and inequality-lab campaigns.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::grid::{Field, Grid};
use crate::inequality_lab::{
    check_boundary_reg, check_boundary_trace, check_convexity_sign, check_gny, check_unif_gn_2d, count_violations,
    write_reports_csv, ConstantFitReport, EnsembleSpec, FieldEnsemble, Member, Samples,
};
use crate::model::classify_regime;
use crate::monitors::{verdict, Functional, VerdictOptions};
use crate::stepper::{Problem, RunPlan, RunResult, RunStatus, Stepper};

use super::config::{model_params, InitialSpec, IneqConfig, RunConfig, SweepConfig};
use super::output::{compatibility_residual, now, OutputDir, RunManifest, VerdictEntry, MANIFEST};
use super::HarnessError;

/// Where a command came from, for the manifest.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub unknown_keys: Vec<String>,
}

impl Invocation {
    fn manifest(&self, config: super::ConfigFile) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started: now(),
            finished: String::new(),
            config_path: self.config_path.as_ref().map(|p| p.display().to_string()),
            config,
            unknown_keys: self.unknown_keys.clone(),
            outcome: None,
            classification: None,
            compatibility_residual: None,
            balance: None,
            verdicts: BTreeMap::new(),
            summary: serde_json::Value::Null,
            files: Vec::new(),
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub result: RunResult,
}

fn absolute_file_ic(spec: &mut Option<InitialSpec>, base: &Path) {
    if let Some(InitialSpec::File { path }) = spec {
        let joined = base.join(&*path);
        *path = std::path::absolute(&joined).unwrap_or(joined);
    }
}

/// Integrates one configuration and writes series, snapshots and manifest.
pub fn run_single(cfg: &RunConfig, out: &Path, inv: &Invocation) -> Result<RunReport, HarnessError> {
    let mut echo = cfg.echo.clone();
    let base = inv.config_path.as_ref().and_then(|p| p.parent()).unwrap_or(Path::new(""));
    absolute_file_ic(&mut echo.initial, base);
    absolute_file_ic(&mut echo.initial_v, base);
    let mut manifest = inv.manifest(echo.clone());
    let mut dir = OutputDir::create(out)?;

    let stepper = Stepper::new(cfg.grid, cfg.step);
    let plan = RunPlan {
        horizon: cfg.horizon,
        cadence: cfg.cadence,
        snapshot_times: cfg.snapshot_times.clone(),
        record_balance: false,
    };
    let result = stepper.run(&cfg.problem, cfg.initial.clone(), &plan);

    let mut series = Vec::new();
    result.series.write_csv(&mut series)?;
    dir.write("series.csv", &series)?;
    let mut snaps = Vec::new();
    for (k, snap) in result.snapshots.iter().enumerate() {
        dir.write_field(&format!("snapshots/u_{k:04}.csv"), &snap.u)?;
        dir.write_field(&format!("snapshots/v_{k:04}.csv"), &snap.v)?;
        snaps.push(json!({ "index": k, "t": snap.t, "terminal": snap.terminal }));
    }
    let echo_toml = toml::to_string(&echo).map_err(|e| HarnessError::Output(e.to_string()))?;
    dir.write("config.toml", echo_toml.as_bytes())?;

    let opts = VerdictOptions { blowup_cap: cfg.step.blowup_cap, ..VerdictOptions::default() };
    for f in Functional::ALL {
        let entry = match verdict(&result.series, f, &opts) {
            Ok(v) => VerdictEntry::Verdict(v),
            Err(e) => VerdictEntry::Unavailable { error: e.to_string() },
        };
        manifest.verdicts.insert(f.name().to_string(), entry);
    }
    let flux = cfg.problem.flux(cfg.step.boundary_flux);
    manifest.compatibility_residual = Some(compatibility_residual(&cfg.initial.0, flux));
    manifest.balance = Some(result.balance);
    manifest.outcome = Some(result.outcome.clone());
    manifest.summary = match &cfg.problem {
        Problem::Chemotaxis(params) => {
            manifest.classification = Some(classify_regime(params));
            json!({ "snapshots": snaps })
        }
        Problem::Nbc(nbc) => json!({ "snapshots": snaps, "critical_p": nbc.critical_p() }),
    };
    let manifest = dir.finish(manifest)?;
    Ok(RunReport { manifest, result })
}

/// Columns of `sweep.csv`.
pub const SWEEP_COLUMNS: [&str; 17] = [
    "index",
    "p",
    "mu",
    "chi",
    "outcome",
    "verdict_sup_u",
    "verdict_llogl",
    "verdict_phi",
    "sup_u",
    "sup_llogl",
    "sup_phi",
    "wall_time",
    "steps",
    "classification",
    "citation",
    "dir",
    "error",
];

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub p: f64,
    pub mu: f64,
    pub chi: f64,
    /// Terminal status, or `Invalid` / `Error` when the cell did not run.
    pub outcome: String,
    pub verdict_sup_u: String,
    pub verdict_llogl: String,
    pub verdict_phi: String,
    pub sup_u: Option<f64>,
    pub sup_llogl: Option<f64>,
    pub sup_phi: Option<f64>,
    pub wall_time: Option<f64>,
    pub steps: Option<usize>,
    pub classification: String,
    pub citation: String,
    pub dir: String,
    pub error: String,
}

impl SweepRow {
    fn empty(index: usize, p: f64, mu: f64, chi: f64) -> Self {
        Self {
            index,
            p,
            mu,
            chi,
            outcome: String::new(),
            verdict_sup_u: String::new(),
            verdict_llogl: String::new(),
            verdict_phi: String::new(),
            sup_u: None,
            sup_llogl: None,
            sup_phi: None,
            wall_time: None,
            steps: None,
            classification: String::new(),
            citation: String::new(),
            dir: String::new(),
            error: String::new(),
        }
    }
}

fn verdict_cell(manifest: &RunManifest, f: Functional) -> (String, Option<f64>) {
    match manifest.verdicts.get(f.name()) {
        Some(VerdictEntry::Verdict(v)) => (v.status.to_string(), Some(v.sup)),
        Some(VerdictEntry::Unavailable { .. }) | None => ("Unavailable".to_string(), None),
    }
}

fn sweep_cell(cfg: &SweepConfig, index: usize, p: f64, mu: f64, chi: f64, out: &Path, inv: &Invocation) -> SweepRow {
    let mut row = SweepRow::empty(index, p, mu, chi);
    let mut section = cfg.model.clone();
    section.p = p;
    section.mu = mu;
    section.chi = chi;
    let params = match model_params(&section, cfg.base.grid.dim()) {
        Ok(params) => params,
        Err(e) => {
            row.outcome = "Invalid".into();
            row.error = e.to_string();
            return row;
        }
    };
    let class = classify_regime(&params);
    row.classification = class.verdict.to_string();
    row.citation = class.citation.map(|c| c.label().to_string()).unwrap_or_default();

    let mut run = cfg.base.clone();
    run.problem = Problem::Chemotaxis(params);
    run.echo.model = Some(section);
    run.echo.sweep = None;
    if let Some(time) = run.echo.time.as_mut() {
        time.horizon = cfg.horizon;
    }
    let rel = format!("cells/cell_{index:04}");
    row.dir = rel.clone();
    let cell_inv = Invocation { command: "sweep-cell".into(), ..inv.clone() };
    let outcome = catch_unwind(AssertUnwindSafe(|| run_single(&run, &out.join(&rel), &cell_inv)));
    match outcome {
        Ok(Ok(report)) => {
            let m = &report.manifest;
            let status = &report.result.outcome.status;
            row.outcome = status.name().to_string();
            if let RunStatus::SolverFailure { detail, .. } = status {
                row.error = detail.clone();
            }
            (row.verdict_sup_u, row.sup_u) = verdict_cell(m, Functional::SupU);
            (row.verdict_llogl, row.sup_llogl) = verdict_cell(m, Functional::Llogl);
            (row.verdict_phi, row.sup_phi) = verdict_cell(m, Functional::Phi);
            row.wall_time = Some(report.result.outcome.wall_time);
            row.steps = Some(report.result.outcome.steps);
        }
        Ok(Err(e)) => {
            row.outcome = "Error".into();
            row.error = e.to_string();
        }
        Err(_) => {
            row.outcome = "Error".into();
            row.error = "cell panicked".into();
        }
    }
    row
}

#[derive(Debug)]
pub struct SweepReport {
    pub manifest: RunManifest,
    pub rows: Vec<SweepRow>,
}

/// Runs every `(p, μ, χ)` cell on a pool of `workers` threads; cell failures
/// become rows, never errors.
pub fn run_sweep(cfg: &SweepConfig, out: &Path, inv: &Invocation, workers: Option<usize>) -> Result<SweepReport, HarnessError> {
    let mut manifest = inv.manifest(cfg.base.echo.clone());
    let mut dir = OutputDir::create(out)?;
    let mut cells = Vec::new();
    for &p in &cfg.p {
        for &mu in &cfg.mu {
            for &chi in &cfg.chi {
                cells.push((cells.len(), p, mu, chi));
            }
        }
    }
    let width = workers.or(cfg.workers).unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .map_err(|e| HarnessError::Output(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells.par_iter().map(|&(index, p, mu, chi)| sweep_cell(cfg, index, p, mu, chi, out, inv)).collect()
    });

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in &rows {
            w.serialize(row).map_err(|e| HarnessError::Output(format!("sweep.csv: {e}")))?;
        }
        w.flush().map_err(|e| HarnessError::Output(format!("sweep.csv: {e}")))?;
    }
    dir.write("sweep.csv", &buf)?;
    for row in &rows {
        if out.join(&row.dir).join(MANIFEST).exists() {
            dir.adopt(&format!("{}/{MANIFEST}", row.dir));
        }
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for row in &rows {
        *counts.entry(row.outcome.clone()).or_default() += 1;
    }
    manifest.summary = json!({ "cells": rows.len(), "workers": width, "horizon": cfg.horizon, "outcomes": counts });
    let manifest = dir.finish(manifest)?;
    Ok(SweepReport { manifest, rows })
}

/// Lab summary of one fitted inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub lemma: String,
    pub parameters: String,
    pub constants: Vec<f64>,
    pub spread: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexitySummary {
    pub cells: [usize; 2],
    /// Largest value over the cosine members.
    pub max_cosine: f64,
    pub bound: f64,
    pub constant_field: f64,
}

#[derive(Debug)]
pub struct IneqReport {
    pub manifest: RunManifest,
    pub reports: Vec<ConstantFitReport>,
    pub fits: Vec<FitSummary>,
    pub convexity: Vec<ConvexitySummary>,
}

/// Generates the ensemble, fits every configured instance and writes `ineq.csv`.
pub fn run_ineq(cfg: &IneqConfig, out: &Path, inv: &Invocation) -> Result<IneqReport, HarnessError> {
    let s = &cfg.section;
    let mut manifest = inv.manifest(cfg.echo.clone());
    let mut dir = OutputDir::create(out)?;
    let spec = EnsembleSpec { max_wavenumber: s.max_wavenumber, amplitude: s.amplitude, bump_fraction: s.bump_fraction };
    let ensemble = FieldEnsemble::generate(cfg.seed, s.count, spec);
    let grids = s.cells.iter().map(|&n| Grid::unit(2, n)).collect::<Result<Vec<_>, _>>()?;
    let samples = Samples::new(&ensemble, &grids)?;

    let mut reports = Vec::new();
    for &eta in &s.gny_etas {
        reports.push(check_gny(&samples, eta)?);
    }
    reports.push(check_boundary_trace(&samples, s.trace.r, s.trace.p, s.trace.eps)?);
    for &eta in &s.reg.etas {
        reports.push(check_boundary_reg(&samples, s.reg.r, s.reg.p, eta)?);
    }
    reports.push(check_unif_gn_2d(&samples, s.unif.r, s.unif.p, s.unif.eta)?);

    let mut fits = Vec::new();
    for rep in &reports {
        fits.push(FitSummary {
            lemma: rep.instance.inequality.name().to_string(),
            parameters: rep.instance.describe(),
            constants: rep.resolutions.iter().map(|r| r.constant).collect(),
            spread: rep.spread(),
            violations: count_violations(rep, &samples)?,
        });
    }

    let mut convexity = Vec::new();
    for (grid, fields) in &samples.grids {
        let max_cosine = ensemble
            .members
            .iter()
            .zip(fields)
            .filter(|(m, _)| matches!(m, Member::Cosine { .. }))
            .map(|(_, f)| check_convexity_sign(f))
            .fold(f64::NEG_INFINITY, f64::max);
        convexity.push(ConvexitySummary {
            cells: grid.cells(),
            max_cosine,
            bound: 10.0 * grid.h_min(),
            constant_field: check_convexity_sign(&Field::constant(*grid, 1.0)),
        });
    }

    let mut buf = Vec::new();
    write_reports_csv(&reports, &mut buf)?;
    dir.write("ineq.csv", &buf)?;
    manifest.summary = json!({ "members": samples.members, "fits": fits, "convexity": convexity });
    let manifest = dir.finish(manifest)?;
    Ok(IneqReport { manifest, reports, fits, convexity })
}
