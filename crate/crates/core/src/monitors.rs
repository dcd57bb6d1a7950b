//! Functionals tracked along trajectories, and the diagnostics built on them.
//!
//! The a priori estimates for this system bound, uniformly in time,
//! `∫(u+1)ln(u+1) + ∫|∇v|²`, `∫u² + ∫|∇v|⁴` and every `L^r` norm of `u`. Their
//! constants are existential, so nothing here compares against a constant:
//! [`verdict`] fits the tail log-slope of a series, [`gronwall_report`]
//! reconstructs the forcing of a linear differential inequality, and
//! [`moser_ladder`] evaluates the `L^{2^k r₀}` norms that bootstrap an `L^r`
//! bound to `L^∞`.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    boundary_integral_pow, cell_gradient, compensated_sum, grad_sq_integral, integrate, lp_norm, Field,
    GridError,
};
use crate::operators::FluxSpec;

/// Guard inside the logarithm of [`verdict`].
pub const LOG_GUARD: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("need at least {needed} samples, have {have}")]
    InsufficientSamples { needed: usize, have: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("moser ladder: {0}")]
    Ladder(String),
    #[error("ladder rung {rung} overflows f64 (log value {log_value})")]
    Overflow { rung: usize, log_value: f64 },
    #[error("unknown functional {0:?}")]
    UnknownFunctional(String),
    #[error("series csv: {0}")]
    Csv(String),
}

/// A tracked scalar functional; names match the series CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Mass,
    L1,
    L2,
    L4,
    Llogl,
    Gradv2,
    Gradv4,
    Phi,
    Psi,
    SupU,
    BoundaryInflux,
}

impl Functional {
    pub const ALL: [Functional; 11] = [
        Self::Mass,
        Self::L1,
        Self::L2,
        Self::L4,
        Self::Llogl,
        Self::Gradv2,
        Self::Gradv4,
        Self::Phi,
        Self::Psi,
        Self::SupU,
        Self::BoundaryInflux,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mass => "mass",
            Self::L1 => "l1",
            Self::L2 => "l2",
            Self::L4 => "l4",
            Self::Llogl => "llogl",
            Self::Gradv2 => "gradv2",
            Self::Gradv4 => "gradv4",
            Self::Phi => "phi",
            Self::Psi => "psi",
            Self::SupU => "sup_u",
            Self::BoundaryInflux => "boundary_influx",
        }
    }

    pub fn parse(name: &str) -> Result<Self, MonitorError> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| MonitorError::UnknownFunctional(name.to_string()))
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Column order of the series CSV.
pub const SERIES_COLUMNS: [&str; 13] = [
    "t",
    "mass",
    "l1",
    "l2",
    "l4",
    "llogl",
    "gradv2",
    "gradv4",
    "phi",
    "psi",
    "sup_u",
    "boundary_influx",
    "dt",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub l4: f64,
    /// `∫(u+1)ln(u+1)`.
    pub llogl: f64,
    /// `∫|∇v|²`, face quadrature.
    pub gradv2: f64,
    /// `∫|∇v|⁴`, cell-reconstructed gradient.
    pub gradv4: f64,
    /// `½∫u² + ¼∫|∇v|⁴`.
    pub phi: f64,
    /// `∫u² + ∫|∇v|⁴ + ⅓∫u|∇v|²`.
    pub psi: f64,
    pub sup_u: f64,
    /// `∫_∂Ω` of the prescribed boundary flux of `u`.
    pub boundary_influx: f64,
    /// Step size that produced this state (0 for the initial sample).
    pub dt: f64,
}

impl MonitorRecord {
    pub fn get(&self, functional: Functional) -> f64 {
        match functional {
            Functional::Mass => self.mass,
            Functional::L1 => self.l1,
            Functional::L2 => self.l2,
            Functional::L4 => self.l4,
            Functional::Llogl => self.llogl,
            Functional::Gradv2 => self.gradv2,
            Functional::Gradv4 => self.gradv4,
            Functional::Phi => self.phi,
            Functional::Psi => self.psi,
            Functional::SupU => self.sup_u,
            Functional::BoundaryInflux => self.boundary_influx,
        }
    }

    fn row(&self) -> [f64; 13] {
        [
            self.t,
            self.mass,
            self.l1,
            self.l2,
            self.l4,
            self.llogl,
            self.gradv2,
            self.gradv4,
            self.phi,
            self.psi,
            self.sup_u,
            self.boundary_influx,
            self.dt,
        ]
    }

    fn is_finite(&self) -> bool {
        self.row().iter().all(|v| v.is_finite())
    }
}

/// Evaluates every functional on the current fields. `flux` is the boundary
/// data of the `u` equation and only affects `boundary_influx`.
pub fn sample(u: &Field, v: &Field, t: f64, dt: f64, flux: FluxSpec) -> Result<MonitorRecord, MonitorError> {
    u.check_finite()?;
    v.check_finite()?;
    let vol = u.grid().cell_volume();
    let mass = integrate(u)?;
    let l1 = lp_norm(u, 1.0)?;
    let l2 = lp_norm(u, 2.0)?;
    let l4 = lp_norm(u, 4.0)?;
    let llogl = compensated_sum(u.values().iter().map(|&x| (x + 1.0) * x.ln_1p())) * vol;
    let gradv2 = grad_sq_integral(v)?;
    let grads = cell_gradient(v);
    let gradv4 = compensated_sum(grads.iter().map(|[gx, gy]| (gx * gx + gy * gy).powi(2))) * vol;
    let cross = compensated_sum(u.values().iter().zip(&grads).map(|(x, [gx, gy])| x * (gx * gx + gy * gy))) * vol;
    let u2 = l2 * l2;
    let boundary_influx = match flux {
        FluxSpec::Homogeneous => 0.0,
        FluxSpec::PowerLaw(p) => boundary_integral_pow(u, p)?,
    };
    let record = MonitorRecord {
        t,
        mass,
        l1,
        l2,
        l4,
        llogl,
        gradv2,
        gradv4,
        phi: 0.5 * u2 + 0.25 * gradv4,
        psi: u2 + gradv4 + cross / 3.0,
        sup_u: u.max(),
        boundary_influx,
        dt,
    };
    if record.is_finite() {
        Ok(record)
    } else {
        Err(MonitorError::Grid(GridError::NonFinite { cell: 0, value: f64::NAN }))
    }
}

/// Time-stamped functional values of one trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub records: Vec<MonitorRecord>,
    /// Set when the producing run ended in blow-up.
    pub blown_up: bool,
}

impl MonitorSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record; times must strictly increase.
    pub fn push(&mut self, record: MonitorRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(record.t > last.t, "monitor times must increase");
            if record.t <= last.t {
                return;
            }
        }
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&MonitorRecord> {
        self.records.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn values(&self, functional: Functional) -> Vec<f64> {
        self.records.iter().map(|r| r.get(functional)).collect()
    }

    pub fn sup(&self, functional: Functional) -> f64 {
        self.records.iter().map(|r| r.get(functional)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MonitorError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| MonitorError::Csv(e.to_string());
        w.write_record(SERIES_COLUMNS).map_err(err)?;
        for r in &self.records {
            w.write_record(r.row().iter().map(|v| v.to_string())).map_err(err)?;
        }
        w.flush().map_err(|e| MonitorError::Csv(e.to_string()))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, MonitorError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| MonitorError::Csv(e.to_string()))?.clone();
        for (k, want) in SERIES_COLUMNS.iter().enumerate() {
            if headers.get(k) != Some(want) {
                return Err(MonitorError::Csv(format!("missing column {want:?}")));
            }
        }
        let mut series = Self::default();
        for rec in r.records() {
            let rec = rec.map_err(|e| MonitorError::Csv(e.to_string()))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| MonitorError::Csv(format!("bad number {s:?}"))))
                .collect::<Result<_, _>>()?;
            if v.len() != SERIES_COLUMNS.len() {
                return Err(MonitorError::Csv(format!("row has {} fields", v.len())));
            }
            series.records.push(MonitorRecord {
                t: v[0],
                mass: v[1],
                l1: v[2],
                l2: v[3],
                l4: v[4],
                llogl: v[5],
                gradv2: v[6],
                gradv4: v[7],
                phi: v[8],
                psi: v[9],
                sup_u: v[10],
                boundary_influx: v[11],
                dt: v[12],
            });
        }
        Ok(series)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictStatus {
    Bounded,
    Growing,
    BlownUp,
}

impl fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bounded => "Bounded",
            Self::Growing => "Growing",
            Self::BlownUp => "BlownUp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    /// Supremum over the whole series.
    pub sup: f64,
    /// Supremum over the fitted window.
    pub window_sup: f64,
    /// Least-squares slope of `ln(value + ε₀)` against `t` on the window.
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictOptions {
    /// Trailing fraction of the time span used for the fit.
    pub window: f64,
    pub slope_tol: f64,
    pub blowup_cap: f64,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        Self { window: 0.5, slope_tol: 1e-3, blowup_cap: 1e6 }
    }
}

/// Minimum series length accepted by [`verdict`].
pub const MIN_VERDICT_SAMPLES: usize = 16;

/// Tail log-slope verdict. A blown-up series is `BlownUp` whatever its length.
pub fn verdict(
    series: &MonitorSeries,
    functional: Functional,
    options: &VerdictOptions,
) -> Result<Verdict, MonitorError> {
    let n = series.len();
    if series.blown_up && n > 0 {
        // no fit needed, but report the slope when there is something to fit
        let sup = series.sup(functional);
        let points: Vec<(f64, f64)> = series.records.iter().map(|r| (r.t, r.get(functional))).collect();
        let slope = if n >= 2 { log_slope(&points) } else { 0.0 };
        return Ok(Verdict { status: VerdictStatus::BlownUp, sup, window_sup: sup, slope });
    }
    if n < MIN_VERDICT_SAMPLES {
        return Err(MonitorError::InsufficientSamples { needed: MIN_VERDICT_SAMPLES, have: n });
    }
    let t0 = series.records[0].t;
    let t1 = series.records[n - 1].t;
    let start = t1 - options.window * (t1 - t0);
    let window: Vec<(f64, f64)> = series
        .records
        .iter()
        .filter(|r| r.t >= start)
        .map(|r| (r.t, r.get(functional)))
        .collect();
    if window.len() < 2 {
        return Err(MonitorError::InsufficientSamples { needed: 2, have: window.len() });
    }
    let sup = series.sup(functional);
    let window_sup = window.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
    let slope = log_slope(&window);
    let status = if series.blown_up {
        VerdictStatus::BlownUp
    } else if slope <= options.slope_tol && sup < options.blowup_cap {
        VerdictStatus::Bounded
    } else {
        VerdictStatus::Growing
    };
    Ok(Verdict { status, sup, window_sup, slope })
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let ys: Vec<f64> = points.iter().map(|&(_, y)| (y + LOG_GUARD).ln()).collect();
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&(t, _), y) in points.iter().zip(&ys) {
        num += (t - tm) * (y - ym);
        den += (t - tm) * (t - tm);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Largest number of doublings accepted by [`moser_ladder`].
pub const MAX_LADDER_LEVELS: usize = 8;

/// `‖u‖_{L^{2^k r₀}}` for `k = 0..=levels` on the domain rescaled to unit
/// measure, evaluated in the log domain. The rungs are non-decreasing and
/// tend to `max|u|`.
pub fn moser_ladder(u: &Field, r0: f64, levels: usize) -> Result<Vec<f64>, MonitorError> {
    let dim = u.grid().dim() as f64;
    if !(r0 > dim / 2.0) {
        return Err(MonitorError::Ladder(format!("base exponent {r0} must exceed n/2 = {}", dim / 2.0)));
    }
    if levels > MAX_LADDER_LEVELS {
        return Err(MonitorError::Ladder(format!("at most {MAX_LADDER_LEVELS} levels, asked for {levels}")));
    }
    u.check_finite()?;
    let logs: Vec<f64> = u.values().iter().map(|v| v.abs().ln()).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(vec![0.0; levels + 1]);
    }
    let count = logs.len() as f64;
    let mut rungs = Vec::with_capacity(levels + 1);
    for k in 0..=levels {
        let r = r0 * f64::powi(2.0, k as i32);
        // ln ‖u‖_r = peak + ln(mean exp(r (ln|u| − peak))) / r
        let mean = compensated_sum(logs.iter().map(|&l| (r * (l - peak)).exp())) / count;
        let log_norm = peak + mean.ln() / r;
        let value = log_norm.exp();
        if !value.is_finite() {
            return Err(MonitorError::Overflow { rung: k, log_value: log_norm });
        }
        rungs.push(value);
    }
    Ok(rungs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub rate: f64,
    /// Reconstructed forcing `y' + λy` at each sample.
    pub forcing: Vec<f64>,
    pub sup_forcing: f64,
    /// Sample indices where `y` exceeds the envelope by more than the tolerance.
    pub violations: Vec<usize>,
    /// Largest `y − envelope` over the samples.
    pub max_excess: f64,
}

impl GronwallReport {
    pub fn envelope_holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reconstructs `c(t) = y'(t) + λy(t)` by centered differences (one-sided at
/// the ends) and checks `y(t) ≤ e^{−λt}y(0) + (sup c/λ)(1 − e^{−λt}) + tol`.
pub fn gronwall_report(times: &[f64], values: &[f64], rate: f64, envelope_tol: f64) -> Result<GronwallReport, MonitorError> {
    let n = times.len().min(values.len());
    if n < 3 {
        return Err(MonitorError::InsufficientSamples { needed: 3, have: n });
    }
    if !(rate > 0.0) {
        return Err(MonitorError::Ladder(format!("Gronwall rate must be positive, got {rate}")));
    }
    let derivative = |i: usize| -> f64 {
        let (a, b) = match i {
            0 => (0, 1),
            i if i == n - 1 => (n - 2, n - 1),
            i => (i - 1, i + 1),
        };
        (values[b] - values[a]) / (times[b] - times[a])
    };
    let forcing: Vec<f64> = (0..n).map(|i| derivative(i) + rate * values[i]).collect();
    let sup_forcing = forcing.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t0 = times[0];
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..n {
        let decay = (-rate * (times[i] - t0)).exp();
        let envelope = decay * values[0] + sup_forcing / rate * (1.0 - decay);
        let excess = values[i] - envelope;
        max_excess = max_excess.max(excess);
        if excess > envelope_tol {
            violations.push(i);
        }
    }
    Ok(GronwallReport { rate, forcing, sup_forcing, violations, max_excess })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn synthetic(f: impl Fn(f64) -> f64, n: usize, dt: f64) -> MonitorSeries {
        let mut s = MonitorSeries::default();
        for k in 0..n {
            let t = k as f64 * dt;
            let y = f(t);
            s.push(MonitorRecord {
                t,
                mass: y,
                l1: y,
                l2: y,
                l4: y,
                llogl: y,
                gradv2: y,
                gradv4: y,
                phi: y,
                psi: y,
                sup_u: y,
                boundary_influx: y,
                dt,
            });
        }
        s
    }

    #[test]
    fn sample_examples() {
        let g = Grid::unit(2, 8).unwrap();
        let zero = sample(&Field::zeros(g), &Field::zeros(g), 0.0, 0.0, FluxSpec::PowerLaw(1.3)).unwrap();
        assert_eq!(zero.llogl, 0.0);
        assert_eq!((zero.l1, zero.l2, zero.l4, zero.gradv2, zero.boundary_influx), (0.0, 0.0, 0.0, 0.0, 0.0));

        let r = sample(&Field::constant(g, E - 1.0), &Field::zeros(g), 0.0, 0.0, FluxSpec::Homogeneous).unwrap();
        assert!((r.llogl - E).abs() < 1e-14);

        let r = sample(&Field::constant(g, 2.0), &Field::constant(g, 0.3), 0.0, 0.0, FluxSpec::Homogeneous).unwrap();
        assert!((r.phi - 2.0).abs() < 1e-14);
        assert_eq!(r.gradv4, 0.0);
        assert!((r.psi - 4.0).abs() < 1e-13);
    }

    #[test]
    fn sample_is_reflection_invariant() {
        let g = Grid::rectangle(12, 9, 1.0, 0.75).unwrap();
        let u = Field::from_fn(g, |x, y| 1.0 + x * x + (3.0 * y).sin().abs());
        let v = Field::from_fn(g, |x, y| (2.0 * x).cos() * y);
        let base = sample(&u, &v, 0.0, 0.0, FluxSpec::PowerLaw(1.3)).unwrap();
        for axis in 0..2 {
            let r = sample(&u.reflected(axis), &v.reflected(axis), 0.0, 0.0, FluxSpec::PowerLaw(1.3)).unwrap();
            for f in Functional::ALL {
                let (a, b) = (base.get(f), r.get(f));
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{f}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn verdict_examples() {
        let opts = VerdictOptions::default();
        let flat = synthetic(|_| 3.0, 40, 0.5);
        let v = verdict(&flat, Functional::Phi, &opts).unwrap();
        assert_eq!(v.status, VerdictStatus::Bounded);
        assert_eq!(v.slope, 0.0);

        let grow = synthetic(|t| 2.0 * (0.1 * t).exp(), 40, 0.5);
        let v = verdict(&grow, Functional::Phi, &opts).unwrap();
        assert_eq!(v.status, VerdictStatus::Growing);
        assert!((v.slope - 0.1).abs() < 1e-10);

        let mut blown = flat.clone();
        blown.blown_up = true;
        assert_eq!(verdict(&blown, Functional::SupU, &opts).unwrap().status, VerdictStatus::BlownUp);

        let short = synthetic(|_| 1.0, 10, 0.1);
        let mut short_blown = short.clone();
        short_blown.blown_up = true;
        assert_eq!(verdict(&short_blown, Functional::Mass, &opts).unwrap().status, VerdictStatus::BlownUp);
        assert!(matches!(
            verdict(&short, Functional::Mass, &opts),
            Err(MonitorError::InsufficientSamples { needed: 16, have: 10 })
        ));

        let huge = synthetic(|_| 2e6, 40, 0.5);
        assert_eq!(verdict(&huge, Functional::SupU, &opts).unwrap().status, VerdictStatus::Growing);
    }

    #[test]
    fn ladder_examples() {
        let g = Grid::unit(2, 16).unwrap();
        let rungs = moser_ladder(&Field::constant(g, 2.5), 2.0, 6).unwrap();
        assert!(rungs.iter().all(|&r| (r - 2.5).abs() < 1e-14), "{rungs:?}");
        assert_eq!(moser_ladder(&Field::zeros(g), 2.0, 3).unwrap(), vec![0.0; 4]);
        assert!(moser_ladder(&Field::constant(g, 1.0), 1.0, 3).is_err());
        assert!(moser_ladder(&Field::constant(g, 1.0), 2.0, 9).is_err());

        // smooth bump on 64²: K = 6 rung within 5% of the maximum
        let g = Grid::unit(2, 64).unwrap();
        let bump = Field::from_fn(g, |x, y| 1.0 + 4.0 * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.1).exp());
        let rungs = moser_ladder(&bump, 2.0, 6).unwrap();
        assert!((rungs[6] - bump.max()).abs() <= 0.05 * bump.max(), "{rungs:?}");
    }

    #[test]
    fn ladder_uses_normalized_measure() {
        let g = Grid::rectangle(8, 8, 3.0, 2.0).unwrap();
        let rungs = moser_ladder(&Field::constant(g, 0.4), 1.5, 4).unwrap();
        assert!(rungs.iter().all(|&r| (r - 0.4).abs() < 1e-15));
    }

    #[test]
    fn gronwall_examples() {
        let lambda = 0.7;
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
        let decay: Vec<f64> = times.iter().map(|t| 3.0 * (-lambda * t).exp()).collect();
        let rep = gronwall_report(&times, &decay, lambda, 1e-9).unwrap();
        assert!(rep.envelope_holds());
        // interior centered differences are O(dt²), end points O(dt)
        assert!(rep.forcing[1..199].iter().all(|c| c.abs() < 1e-4), "{:?}", &rep.forcing[..3]);
        assert!(rep.sup_forcing < 2e-2);

        let flat = vec![2.0; 50];
        let rep = gronwall_report(&times[..50], &flat, lambda, 1e-12).unwrap();
        assert!(rep.forcing.iter().all(|c| (c - lambda * 2.0).abs() < 1e-14));
        assert!(rep.envelope_holds());
        assert!(rep.max_excess.abs() < 1e-12);

        // a one-sample spike is missed by the centered stencil at its own
        // sample, so the envelope built from sup c cannot cover it
        let coarse: Vec<f64> = (0..12).map(|k| k as f64).collect();
        let mut spiky = vec![0.5; 12];
        spiky[6] = 20.0;
        let rep = gronwall_report(&coarse, &spiky, 1.0, 1e-6).unwrap();
        assert_eq!(rep.violations, vec![6]);

        assert!(gronwall_report(&times[..2], &decay[..2], 1.0, 0.0).is_err());
    }

    #[test]
    fn series_csv_round_trip() {
        let s = synthetic(|t| 1.0 + t, 5, 0.25);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,mass,l1,l2,l4,llogl,gradv2,gradv4,phi,psi,sup_u,boundary_influx,dt\n"));
        assert_eq!(MonitorSeries::read_csv(buf.as_slice()).unwrap().records, s.records);
        assert!(MonitorSeries::read_csv("t,mass\n0,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn ladder_is_monotone(vals in prop::collection::vec(0.0f64..10.0, 36), r0 in 1.01f64..4.0) {
            let g = Grid::rectangle(6, 6, 1.0, 2.0).unwrap();
            let f = Field::from_values(g, vals).unwrap();
            let rungs = moser_ladder(&f, r0, 8).unwrap();
            for w in rungs.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert!(rungs[8] <= f.max_abs() * (1.0 + 1e-15));
        }

        #[test]
        fn influx_nonnegative(vals in prop::collection::vec(0.0f64..5.0, 25), p in 1.01f64..2.9) {
            let g = Grid::unit(2, 5).unwrap();
            let u = Field::from_values(g, vals).unwrap();
            let r = sample(&u, &Field::zeros(g), 0.0, 0.0, FluxSpec::PowerLaw(p)).unwrap();
            prop_assert!(r.boundary_influx >= 0.0);
        }
    }
}
