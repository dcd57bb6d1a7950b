//! First-order IMEX time integration.
//!
//! Diffusion and the linear signal terms are implicit; chemotaxis, the
//! reaction terms and the boundary flux are explicit. Each step therefore
//! costs at most two SPD Helmholtz solves. The implicit diffusion integrates
//! to zero under the homogeneous stencil, so the change of mass over a step is
//! exactly `dt` times the explicit sources plus solver residual.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{compensated_sum, integrate, Field, Grid};
use crate::model::{ModelParams, NbcParams, SignalRegime};
use crate::monitors::{sample, MonitorSeries};
use crate::operators::{
    add_boundary_source, boundary_flux_total, chemotactic_divergence, homogeneous_laplacian_into,
    max_face_gradient, FluxSpec, HelmholtzSolver, LinearSolveReport, OperatorError, SolverOptions,
};

/// The system being integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Problem {
    Chemotaxis(ModelParams),
    Nbc(NbcParams),
}

impl Problem {
    pub fn boundary_exponent(&self) -> f64 {
        match self {
            Self::Chemotaxis(m) => m.p,
            Self::Nbc(n) => n.p,
        }
    }

    /// Boundary data of the `u` equation.
    pub fn flux(&self, enabled: bool) -> FluxSpec {
        if enabled {
            FluxSpec::PowerLaw(self.boundary_exponent())
        } else {
            FluxSpec::Homogeneous
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    /// `false` replaces the power-law boundary flux by `∂u/∂ν = 0`.
    pub boundary_flux: bool,
    pub solver: SolverOptions,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub blowup_cap: f64,
    /// Undershoot tolerance relative to `max|u|`.
    pub negativity_tol: f64,
    /// Consecutive pinned steps with growing `max u` that count as blow-up.
    pub pinned_steps: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            boundary_flux: true,
            solver: SolverOptions::default(),
            dt_min: 1e-12,
            dt_max: 1e-2,
            safety: 0.9,
            blowup_cap: 1e6,
            negativity_tol: 1e-8,
            pinned_steps: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveReports {
    pub u: LinearSolveReport,
    pub v: Option<LinearSolveReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: Field,
    pub v: Field,
    pub t: f64,
    /// Size of the step that produced this state (0 initially).
    pub dt: f64,
    pub step_count: usize,
    pub reports: SolveReports,
}

impl SimState {
    pub fn new(u: Field, v: Field) -> Self {
        Self { u, v, t: 0.0, dt: 0.0, step_count: 0, reports: SolveReports::default() }
    }
}

/// Mass bookkeeping of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MassBalance {
    pub dt: f64,
    pub mass_before: f64,
    pub mass_after: f64,
    /// `∫` of the explicit reaction term at the old state.
    pub reaction: f64,
    /// `∫_∂Ω` of the boundary flux at the old state.
    pub influx: f64,
    /// `|∫χ∇·(u∇v)| + |∫Δ_h u_new|`, zero up to roundoff.
    pub telescoping: f64,
    /// `|∫u_new − ∫u − dt(reaction + influx)|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: SimState,
    pub balance: MassBalance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("linear solve failed at t = {t}: {source}")]
    Solver { t: f64, source: OperatorError },
    #[error("u undershoots to {min_u} at t = {t}")]
    Negativity { t: f64, min_u: f64 },
    #[error("non-finite field at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size {0} is not positive")]
    BadStep(f64),
}

/// Step size chosen by [`Stepper::adapt_dt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtChoice {
    pub dt: f64,
    /// Before clamping.
    pub raw: f64,
}

impl DtChoice {
    pub fn pinned(&self, dt_min: f64) -> bool {
        self.raw < dt_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum RunStatus {
    Completed,
    BlowUp { t: f64, max_u: f64 },
    NegativityFailure { t: f64, min_u: f64 },
    SolverFailure { t: f64, detail: String },
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Completed => "Completed",
            Self::BlowUp { .. } => "BlowUp",
            Self::NegativityFailure { .. } => "NegativityFailure",
            Self::SolverFailure { .. } => "SolverFailure",
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, Self::BlowUp { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub wall_time: f64,
    pub steps: usize,
}

/// What a run records besides the terminal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub horizon: f64,
    /// Monitor sample every `cadence` steps (plus first and last state).
    pub cadence: usize,
    /// Times at which field snapshots are kept; steps are shortened to hit them.
    pub snapshot_times: Vec<f64>,
    /// Keep the per-step [`MassBalance`] records.
    pub record_balance: bool,
}

impl RunPlan {
    pub fn new(horizon: f64) -> Self {
        Self { horizon, cadence: 10, snapshot_times: Vec::new(), record_balance: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    /// Taken at a terminal event rather than a scheduled time.
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub max_telescoping: f64,
    pub max_residual: f64,
    /// Largest `residual / dt²` over the steps.
    pub max_residual_over_dt2: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub series: MonitorSeries,
    pub final_state: SimState,
    pub snapshots: Vec<Snapshot>,
    pub balance: BalanceSummary,
    pub balances: Vec<MassBalance>,
}

/// Integrator bound to one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    options: StepOptions,
    solver: HelmholtzSolver,
}

impl Stepper {
    pub fn new(grid: Grid, options: StepOptions) -> Self {
        Self { grid, options, solver: HelmholtzSolver::new(grid, options.solver) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn options(&self) -> &StepOptions {
        &self.options
    }

    /// `(σI − Δ_h) w = rhs`, warm-started from `guess`.
    fn implicit_solve(&self, rhs: Vec<f64>, sigma: f64, guess: &Field, t: f64) -> Result<(Field, LinearSolveReport), StepError> {
        let rhs = Field::from_values(self.grid, rhs).map_err(|e| StepError::Solver { t, source: e.into() })?;
        self.solver
            .solve_from(&rhs, sigma, Some(guess))
            .map_err(|source| match source {
                OperatorError::Grid(_) => StepError::NonFinite { t },
                source => StepError::Solver { t, source },
            })
    }

    /// Quasi-static signal `(βI − Δ_h) v = αu`.
    pub fn elliptic_signal(&self, u: &Field, params: &ModelParams, guess: &Field, t: f64) -> Result<(Field, LinearSolveReport), StepError> {
        let rhs = u.values().iter().map(|x| params.alpha * x).collect();
        self.implicit_solve(rhs, params.beta, guess, t)
    }

    /// `(I − dtΔ_h) u_new = u + dt(E + B)` where `E` holds the explicit
    /// interior terms and `B` the boundary flux on boundary cells.
    fn advance_u(
        &self,
        state: &SimState,
        explicit: Vec<f64>,
        reaction: f64,
        chemo_integral: f64,
        flux: FluxSpec,
        dt: f64,
    ) -> Result<(Field, LinearSolveReport, MassBalance), StepError> {
        let u = &state.u;
        let mut source = explicit;
        add_boundary_source(u, flux, 1.0, &mut source);
        let sigma = 1.0 / dt;
        // the explicit Euler predictor is exact on spatial constants
        let predictor: Vec<f64> = u.values().iter().zip(&source).map(|(x, s)| x + dt * s).collect();
        let rhs = predictor.iter().map(|x| x * sigma).collect();
        let guess = Field::from_values(self.grid, predictor).map_err(|_| StepError::NonFinite { t: state.t })?;
        let t_new = state.t + dt;
        let (u_new, report) = self.implicit_solve(rhs, sigma, &guess, t_new)?;
        if u_new.check_finite().is_err() {
            return Err(StepError::NonFinite { t: t_new });
        }
        let tol = self.options.negativity_tol * u.max_abs();
        let min_u = u_new.min();
        if min_u < -tol {
            return Err(StepError::Negativity { t: t_new, min_u });
        }

        let mut lap = vec![0.0; self.grid.len()];
        homogeneous_laplacian_into(&self.grid, u_new.values(), &mut lap);
        let vol = self.grid.cell_volume();
        let telescoping = chemo_integral.abs() + (compensated_sum(lap.iter().copied()) * vol).abs();
        let mass_before = integrate(u).map_err(|_| StepError::NonFinite { t: state.t })?;
        let mass_after = integrate(&u_new).map_err(|_| StepError::NonFinite { t: t_new })?;
        let influx = boundary_flux_total(u, flux);
        let residual = (mass_after - mass_before - dt * (reaction + influx)).abs();
        let balance = MassBalance { dt, mass_before, mass_after, reaction, influx, telescoping, residual };
        Ok((u_new, report, balance))
    }

    /// Explicit chemotaxis and logistic terms, with their integrals.
    fn chemotaxis_terms(&self, u: &Field, v: &Field, params: &ModelParams, t: f64) -> Result<(Vec<f64>, f64, f64), StepError> {
        let vol = self.grid.cell_volume();
        let mut explicit = vec![0.0; self.grid.len()];
        let mut chemo_integral = 0.0;
        if params.chi != 0.0 {
            let div = chemotactic_divergence(u, v, params.chi).map_err(|_| StepError::NonFinite { t })?;
            chemo_integral = params.chi * compensated_sum(div.values().iter().copied()) * vol;
            for (e, d) in explicit.iter_mut().zip(div.values()) {
                *e = -params.chi * d;
            }
        }
        let logistic: Vec<f64> = u.values().iter().map(|&x| params.a * x - params.mu * x * x).collect();
        let reaction = compensated_sum(logistic.iter().copied()) * vol;
        for (e, l) in explicit.iter_mut().zip(&logistic) {
            *e += l;
        }
        Ok((explicit, reaction, chemo_integral))
    }

    /// One step of the τ = 0 system. The returned state carries the signal
    /// slaved to the new density.
    pub fn step_parabolic_elliptic(&self, state: &SimState, params: &ModelParams, dt: f64) -> Result<Step, StepError> {
        check_dt(dt)?;
        let (v, _) = self.elliptic_signal(&state.u, params, &state.v, state.t)?;
        let (explicit, reaction, chemo) = self.chemotaxis_terms(&state.u, &v, params, state.t)?;
        let flux = self.flux(params.p);
        let (u_new, ur, balance) = self.advance_u(state, explicit, reaction, chemo, flux, dt)?;
        let guess = v.combine(1.0, &u_new.combine(1.0, &state.u, -1.0), params.alpha / params.beta);
        let (v_new, vr) = self.elliptic_signal(&u_new, params, &guess, state.t + dt)?;
        Ok(Step { state: self.next(state, u_new, v_new, dt, ur, Some(vr)), balance })
    }

    /// One step of the τ = 1 system: implicit signal update, then the density.
    pub fn step_parabolic_parabolic(&self, state: &SimState, params: &ModelParams, dt: f64) -> Result<Step, StepError> {
        check_dt(dt)?;
        // (I + dtβ − dtΔ_h) v_new = v + dtαu, scaled by 1/dt
        let sigma = 1.0 / dt + params.beta;
        let rhs: Vec<f64> = state.v.values().iter().zip(state.u.values()).map(|(v, u)| v / dt + params.alpha * u).collect();
        let guess = Field::from_values(self.grid, rhs.iter().map(|r| r / sigma).collect())
            .map_err(|_| StepError::NonFinite { t: state.t })?;
        let (v_new, vr) = self.implicit_solve(rhs, sigma, &guess, state.t + dt)?;
        let (explicit, reaction, chemo) = self.chemotaxis_terms(&state.u, &v_new, params, state.t)?;
        let flux = self.flux(params.p);
        let (u_new, ur, balance) = self.advance_u(state, explicit, reaction, chemo, flux, dt)?;
        Ok(Step { state: self.next(state, u_new, v_new, dt, ur, Some(vr)), balance })
    }

    /// One step of `U_t = ΔU − μU^Q`, `∂U/∂ν = U^P`.
    pub fn step_nbc(&self, state: &SimState, nbc: &NbcParams, dt: f64) -> Result<Step, StepError> {
        check_dt(dt)?;
        let explicit: Vec<f64> = state.u.values().iter().map(|&x| -nbc.mu * x.abs().powf(nbc.q - 1.0) * x).collect();
        let reaction = compensated_sum(explicit.iter().copied()) * self.grid.cell_volume();
        let flux = self.flux(nbc.p);
        let (u_new, ur, balance) = self.advance_u(state, explicit, reaction, 0.0, flux, dt)?;
        Ok(Step { state: self.next(state, u_new, state.v.clone(), dt, ur, None), balance })
    }

    pub fn step(&self, problem: &Problem, state: &SimState, dt: f64) -> Result<Step, StepError> {
        match problem {
            Problem::Chemotaxis(m) => match m.regime {
                SignalRegime::ParabolicElliptic => self.step_parabolic_elliptic(state, m, dt),
                SignalRegime::ParabolicParabolic => self.step_parabolic_parabolic(state, m, dt),
            },
            Problem::Nbc(n) => self.step_nbc(state, n, dt),
        }
    }

    fn flux(&self, p: f64) -> FluxSpec {
        if self.options.boundary_flux {
            FluxSpec::PowerLaw(p)
        } else {
            FluxSpec::Homogeneous
        }
    }

    fn next(&self, old: &SimState, u: Field, v: Field, dt: f64, ur: LinearSolveReport, vr: Option<LinearSolveReport>) -> SimState {
        SimState { u, v, t: old.t + dt, dt, step_count: old.step_count + 1, reports: SolveReports { u: ur, v: vr } }
    }

    /// Step size from the explicit rates, clamped to `[dt_min, dt_max]`.
    ///
    /// The diffusion limit `10·h²/(2n)` guards truncation error of the
    /// splitting; it only applies while the fields vary in space, since every
    /// stencil annihilates constants.
    pub fn adapt_dt(&self, state: &SimState, problem: &Problem) -> DtChoice {
        let g = &self.grid;
        let max_u = state.u.max().max(0.0);
        let inv_h = 1.0 / g.h_min();
        // boundary face area per cell volume in a corner cell
        let boundary_factor: f64 = (0..g.dim()).map(|a| 1.0 / g.h(a)).sum();
        let (transport, reaction, p) = match problem {
            Problem::Chemotaxis(m) => (m.chi.abs() * max_face_gradient(&state.v) * inv_h, m.a.max(0.0) + m.mu * max_u, m.p),
            Problem::Nbc(n) => (0.0, n.mu * n.q * max_u.powf(n.q - 1.0), n.p),
        };
        let boundary = if self.options.boundary_flux { p * max_u.powf(p - 1.0) * boundary_factor } else { 0.0 };
        let rate = transport + reaction + boundary;
        let mut limit = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
        if varies(&state.u) || varies(&state.v) {
            limit = limit.min(10.0 * g.h_min() * g.h_min() / (2.0 * g.dim() as f64));
        }
        let raw = self.options.safety * limit;
        DtChoice { dt: raw.clamp(self.options.dt_min, self.options.dt_max), raw }
    }

    /// Integrates `problem` from `initial` to `plan.horizon` or a terminal event.
    /// For τ = 0 the supplied signal only seeds the first elliptic solve.
    pub fn run(&self, problem: &Problem, initial: (Field, Field), plan: &RunPlan) -> RunResult {
        let clock = Instant::now();
        let (u0, v0) = initial;
        let flux = problem.flux(self.options.boundary_flux);
        let mut state = SimState::new(u0, v0);
        let mut series = MonitorSeries::default();
        let mut snapshots = Vec::new();
        let mut balance = BalanceSummary::default();
        let mut balances = Vec::new();

        let finish = |status: RunStatus, state: SimState, series: MonitorSeries, snapshots, balance, balances| {
            let mut series: MonitorSeries = series;
            series.blown_up = status.is_blow_up();
            RunResult {
                outcome: RunOutcome { status, wall_time: clock.elapsed().as_secs_f64(), steps: state.step_count },
                series,
                final_state: state,
                snapshots,
                balance,
                balances,
            }
        };

        if state.u.check_finite().is_err() || state.v.check_finite().is_err() {
            let status = RunStatus::SolverFailure { t: 0.0, detail: "non-finite initial data".into() };
            return finish(status, state, series, snapshots, balance, balances);
        }
        if state.u.min() < -self.options.negativity_tol * state.u.max_abs() {
            let status = RunStatus::NegativityFailure { t: 0.0, min_u: state.u.min() };
            return finish(status, state, series, snapshots, balance, balances);
        }
        match problem {
            Problem::Chemotaxis(m) if m.regime == SignalRegime::ParabolicElliptic => {
                match self.elliptic_signal(&state.u, m, &Field::zeros(self.grid), 0.0) {
                    Ok((v, r)) => {
                        state.v = v;
                        state.reports.v = Some(r);
                    }
                    Err(e) => {
                        let status = RunStatus::SolverFailure { t: 0.0, detail: e.to_string() };
                        return finish(status, state, series, snapshots, balance, balances);
                    }
                }
            }
            Problem::Nbc(_) => state.v = Field::zeros(self.grid),
            Problem::Chemotaxis(_) => {}
        }

        let record = |state: &SimState, series: &mut MonitorSeries| -> Result<(), String> {
            let r = sample(&state.u, &state.v, state.t, state.dt, flux).map_err(|e| e.to_string())?;
            series.push(r);
            Ok(())
        };
        if let Err(detail) = record(&state, &mut series) {
            return finish(RunStatus::SolverFailure { t: 0.0, detail }, state, series, snapshots, balance, balances);
        }

        let horizon = plan.horizon.max(0.0);
        let mut targets: Vec<f64> = plan.snapshot_times.iter().copied().filter(|&t| t > 0.0 && t < horizon).collect();
        targets.push(horizon);
        targets.sort_by(f64::total_cmp);
        targets.dedup();
        if plan.snapshot_times.iter().any(|&t| t == 0.0) {
            snapshots.push(Snapshot { t: 0.0, u: state.u.clone(), v: state.v.clone(), terminal: false });
        }
        let is_snapshot = |t: f64| plan.snapshot_times.iter().any(|&s| s == t);

        let cadence = plan.cadence.max(1);
        let mut next_target = 0;
        let mut pinned_run = 0usize;
        let mut status = RunStatus::Completed;
        while state.t < horizon {
            while targets[next_target] <= state.t {
                next_target += 1;
            }
            let target = targets[next_target];
            let choice = self.adapt_dt(&state, problem);
            let remaining = target - state.t;
            // land on the target within roundoff, and split a short remainder
            // evenly instead of leaving a sliver step
            let landing = remaining <= choice.dt * (1.0 + 1e-10);
            let dt = if landing {
                remaining
            } else if remaining < 2.0 * choice.dt {
                0.5 * remaining
            } else {
                choice.dt
            };

            let step = match self.step(problem, &state, dt) {
                Ok(s) => s,
                Err(e) => {
                    status = match e {
                        StepError::Negativity { t, min_u } => RunStatus::NegativityFailure { t, min_u },
                        StepError::Solver { t, .. } | StepError::NonFinite { t } => {
                            RunStatus::SolverFailure { t, detail: e.to_string() }
                        }
                        StepError::BadStep(_) => RunStatus::SolverFailure { t: state.t, detail: e.to_string() },
                    };
                    break;
                }
            };
            let previous_max = state.u.max();
            state = step.state;
            if landing {
                state.t = target;
            }
            let b = step.balance;
            balance.max_telescoping = balance.max_telescoping.max(b.telescoping);
            balance.max_residual = balance.max_residual.max(b.residual);
            balance.max_residual_over_dt2 = balance.max_residual_over_dt2.max(b.residual / (b.dt * b.dt));
            if plan.record_balance {
                balances.push(b);
            }

            let max_u = state.u.max();
            pinned_run = if choice.pinned(self.options.dt_min) && max_u > previous_max { pinned_run + 1 } else { 0 };
            let blown = max_u > self.options.blowup_cap || pinned_run >= self.options.pinned_steps;
            let done = state.t >= horizon;
            if state.step_count % cadence == 0 || done || blown {
                if let Err(detail) = record(&state, &mut series) {
                    status = RunStatus::SolverFailure { t: state.t, detail };
                    break;
                }
            }
            if blown {
                status = RunStatus::BlowUp { t: state.t, max_u };
                snapshots.push(Snapshot { t: state.t, u: state.u.clone(), v: state.v.clone(), terminal: true });
                break;
            }
            if landing && is_snapshot(state.t) {
                snapshots.push(Snapshot { t: state.t, u: state.u.clone(), v: state.v.clone(), terminal: false });
            }
        }
        if !matches!(status, RunStatus::Completed | RunStatus::BlowUp { .. }) {
            snapshots.push(Snapshot { t: state.t, u: state.u.clone(), v: state.v.clone(), terminal: true });
        }
        finish(status, state, series, snapshots, balance, balances)
    }
}

fn check_dt(dt: f64) -> Result<(), StepError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(StepError::BadStep(dt))
    }
}

fn varies(f: &Field) -> bool {
    f.max() > f.min()
}
