//! Spatial discretizations on [`Grid`]: diffusion with homogeneous or power-law
//! Neumann data, the chemotactic divergence `∇·(u∇v)`, and Helmholtz solves
//! `(σI − Δ_h) w = rhs` with homogeneous Neumann boundary.
//!
//! Every operator is written as a sum of face fluxes, so integrating an
//! operator output telescopes to the boundary contributions exactly.

mod cg;
mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{compensated_sum, Field, Grid, GridError};

pub use cg::conjugate_gradient;
pub use spectral::CosineTransform;

/// Normal-derivative data for a diffusion operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FluxSpec {
    Homogeneous,
    /// Outward normal derivative equals `|trace|^p`, i.e. boundary inflow.
    PowerLaw(f64),
}

impl FluxSpec {
    pub fn power_law(p: f64) -> Result<Self, OperatorError> {
        if p > 1.0 && p.is_finite() {
            Ok(Self::PowerLaw(p))
        } else {
            Err(OperatorError::BadExponent(p))
        }
    }

    /// Prescribed outward normal derivative for a given face trace.
    #[inline]
    pub fn normal_derivative(&self, trace: f64) -> f64 {
        match *self {
            Self::Homogeneous => 0.0,
            Self::PowerLaw(p) => trace.abs().powf(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearSolveReport {
    pub iterations: usize,
    /// `‖rhs − A w‖₂ / ‖rhs‖₂`.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("linear solve did not converge: {report:?}")]
    NoConvergence { report: LinearSolveReport },
    #[error("Helmholtz shift must be positive, got {0}")]
    BadShift(f64),
    #[error("power-law exponent must exceed 1, got {0}")]
    BadExponent(f64),
}

/// Discrete Laplacian with the given boundary data.
pub fn laplacian(f: &Field, flux: FluxSpec) -> Result<Field, OperatorError> {
    f.check_finite()?;
    let grid = *f.grid();
    let mut out = vec![0.0; grid.len()];
    homogeneous_laplacian_into(&grid, f.values(), &mut out);
    if let FluxSpec::PowerLaw(_) = flux {
        add_boundary_source(f, flux, 1.0, &mut out);
    }
    Ok(Field::from_values(grid, out)?)
}

/// `out = Δ_h f` with zero normal derivative on every boundary face.
pub(crate) fn homogeneous_laplacian_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let [nx, ny] = grid.cells();
    let cx = 1.0 / (grid.h(0) * grid.h(0));
    let cy = if grid.dim() == 2 { 1.0 / (grid.h(1) * grid.h(1)) } else { 0.0 };
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let c = row + i;
            let fc = f[c];
            let mut acc = 0.0;
            if i > 0 {
                acc += (f[c - 1] - fc) * cx;
            }
            if i + 1 < nx {
                acc += (f[c + 1] - fc) * cx;
            }
            if grid.dim() == 2 {
                if j > 0 {
                    acc += (f[c - nx] - fc) * cy;
                }
                if j + 1 < ny {
                    acc += (f[c + nx] - fc) * cy;
                }
            }
            out[c] = acc;
        }
    }
}

/// Adds `scale * (prescribed flux × area / volume)` to each boundary cell.
pub(crate) fn add_boundary_source(f: &Field, flux: FluxSpec, scale: f64, out: &mut [f64]) {
    let grid = f.grid();
    let vol = grid.cell_volume();
    for face in grid.boundary_faces() {
        out[face.cell] += scale * flux.normal_derivative(f.face_trace(&face)) * face.area / vol;
    }
}

/// `∫_∂Ω` of the prescribed normal derivative, i.e. the exact integral of
/// [`laplacian`] under the discrete divergence theorem.
pub fn boundary_flux_total(f: &Field, flux: FluxSpec) -> f64 {
    let faces = f.grid().boundary_faces();
    compensated_sum(faces.iter().map(|face| flux.normal_derivative(f.face_trace(face)) * face.area))
}

/// `∇·(u∇v)` with central face gradients of `v` and `u` upwinded along `∇v`.
/// The boundary faces carry no flux because `∂v/∂ν = 0`.
pub fn chemo_divergence(u: &Field, v: &Field) -> Result<Field, OperatorError> {
    chemotactic_divergence(u, v, 1.0)
}

/// `∇·(u∇v)` with `u` upwinded along the transport velocity `χ∇v`, which
/// reverses the upwind cell for repulsive sensitivity `χ < 0`.
pub fn chemotactic_divergence(u: &Field, v: &Field, chi: f64) -> Result<Field, OperatorError> {
    u.check_finite()?;
    v.check_finite()?;
    let grid = *u.grid();
    if *v.grid() != grid {
        return Err(GridError::SizeMismatch { expected: grid.len(), got: v.grid().len() }.into());
    }
    let (uv, vv) = (u.values(), v.values());
    let mut out = vec![0.0; grid.len()];
    let scale = [1.0 / grid.h(0), 1.0 / grid.h(1)];
    let orientation = if chi < 0.0 { -1.0 } else { 1.0 };
    for (l, r, axis) in grid.interior_faces() {
        let g = (vv[r] - vv[l]) * scale[axis];
        let up = if orientation * g > 0.0 { uv[l] } else { uv[r] };
        // face flux × area / volume = flux / h along the face normal
        let f = up * g * scale[axis];
        out[l] += f;
        out[r] -= f;
    }
    Ok(Field::from_values(grid, out)?)
}

/// Largest face-difference gradient magnitude `max |Δv/h|`.
pub fn max_face_gradient(v: &Field) -> f64 {
    let grid = v.grid();
    let vals = v.values();
    grid.interior_faces()
        .map(|(l, r, axis)| ((vals[r] - vals[l]) / grid.h(axis)).abs())
        .fold(0.0, f64::max)
}

/// Solver selection for [`HelmholtzSolver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverBackend {
    /// Jacobi-preconditioned conjugate gradients.
    #[default]
    Cg,
    /// Direct solve in the discrete cosine eigenbasis of the Neumann Laplacian.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub backend: SolverBackend,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    10_000
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter(), backend: SolverBackend::Cg }
    }
}

/// Reusable solver for `(σI − Δ_h) w = rhs` on one grid.
#[derive(Debug, Clone)]
pub struct HelmholtzSolver {
    grid: Grid,
    options: SolverOptions,
    transform: Option<CosineTransform>,
}

impl HelmholtzSolver {
    pub fn new(grid: Grid, options: SolverOptions) -> Self {
        let transform = match options.backend {
            SolverBackend::Spectral => Some(CosineTransform::new(&grid)),
            SolverBackend::Cg => None,
        };
        Self { grid, options, transform }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn solve(&self, rhs: &Field, sigma: f64) -> Result<(Field, LinearSolveReport), OperatorError> {
        self.solve_from(rhs, sigma, None)
    }

    /// Solve starting from `guess`. A guess that already meets the tolerance
    /// is returned as is; otherwise only conjugate gradients use it.
    pub fn solve_from(
        &self,
        rhs: &Field,
        sigma: f64,
        guess: Option<&Field>,
    ) -> Result<(Field, LinearSolveReport), OperatorError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(OperatorError::BadShift(sigma));
        }
        rhs.check_finite()?;
        let grid = self.grid;
        if let Some(g) = guess {
            let residual = relative_residual(&grid, sigma, rhs.values(), g.values());
            if residual <= self.options.tol {
                return Ok((g.clone(), LinearSolveReport { iterations: 0, residual, converged: true }));
            }
        }
        let (w, report) = match &self.transform {
            None => {
                let x0 = guess.map(|g| g.values().to_vec()).unwrap_or_else(|| vec![0.0; grid.len()]);
                conjugate_gradient(&grid, sigma, rhs.values(), x0, self.options.tol, self.options.max_iter)
            }
            Some(t) => {
                let mut w = t.solve_shifted(rhs.values(), sigma);
                let mut residual = relative_residual(&grid, sigma, rhs.values(), &w);
                let mut sweeps = 1;
                // iterative refinement for nearly singular shifts
                while residual > self.options.tol && sweeps < 3 {
                    let mut aw = vec![0.0; w.len()];
                    apply_shifted(&grid, sigma, &w, &mut aw);
                    let r: Vec<f64> = rhs.values().iter().zip(&aw).map(|(b, a)| b - a).collect();
                    for (wi, ci) in w.iter_mut().zip(t.solve_shifted(&r, sigma)) {
                        *wi += ci;
                    }
                    residual = relative_residual(&grid, sigma, rhs.values(), &w);
                    sweeps += 1;
                }
                let report = LinearSolveReport { iterations: sweeps, residual, converged: residual <= self.options.tol };
                (w, report)
            }
        };
        if !report.converged {
            return Err(OperatorError::NoConvergence { report });
        }
        Ok((Field::from_values(grid, w)?, report))
    }
}

/// `out = (σI − Δ_h) x`.
pub(crate) fn apply_shifted(grid: &Grid, sigma: f64, x: &[f64], out: &mut [f64]) {
    homogeneous_laplacian_into(grid, x, out);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = sigma * xi - *o;
    }
}

pub(crate) fn relative_residual(grid: &Grid, sigma: f64, rhs: &[f64], w: &[f64]) -> f64 {
    let mut aw = vec![0.0; w.len()];
    apply_shifted(grid, sigma, w, &mut aw);
    let rr: f64 = rhs.iter().zip(&aw).map(|(b, a)| (b - a) * (b - a)).sum();
    let bb: f64 = rhs.iter().map(|b| b * b).sum();
    if bb == 0.0 {
        rr.sqrt()
    } else {
        (rr / bb).sqrt()
    }
}

/// Solves `(σI − Δ_h) w = rhs` with homogeneous Neumann boundary and the
/// default options (conjugate gradients, relative residual 1e-10).
pub fn helmholtz_solve(rhs: &Field, sigma: f64) -> Result<(Field, LinearSolveReport), OperatorError> {
    HelmholtzSolver::new(*rhs.grid(), SolverOptions::default()).solve(rhs, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{boundary_integral_pow, integrate};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn inner(f: &Field, g: &Field) -> f64 {
        compensated_sum(f.values().iter().zip(g.values()).map(|(a, b)| a * b)) * f.grid().cell_volume()
    }

    #[test]
    fn laplacian_of_constant() {
        let g = Grid::rectangle(6, 5, 1.0, 2.0).unwrap();
        let c = 1.7f64;
        let lap = laplacian(&Field::constant(g, c), FluxSpec::Homogeneous).unwrap();
        assert!(lap.values().iter().all(|&x| x == 0.0));

        let p = 1.4;
        let lap = laplacian(&Field::constant(g, c), FluxSpec::PowerLaw(p)).unwrap();
        for cell in 0..g.len() {
            let (i, j) = g.coords(cell);
            let mut expect = 0.0;
            if i == 0 || i == 5 {
                expect += c.powf(p) * g.face_area(0) / g.cell_volume();
            }
            if j == 0 || j == 4 {
                expect += c.powf(p) * g.face_area(1) / g.cell_volume();
            }
            assert!((lap.values()[cell] - expect).abs() < 1e-12 * (1.0 + expect), "cell {cell}");
        }
    }

    #[test]
    fn laplacian_of_cosine_is_second_order() {
        let mut errs = vec![];
        for n in [32usize, 64, 128] {
            let g = Grid::interval(n, 1.0).unwrap();
            let f = Field::from_fn(g, |x, _| (PI * x).cos());
            let lap = laplacian(&f, FluxSpec::Homogeneous).unwrap();
            let err = lap.values().iter().zip(f.values()).map(|(l, v)| (l + PI * PI * v).abs()).fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.8 && errs[1] / errs[2] > 3.8, "{errs:?}");
    }

    #[test]
    fn chemo_divergence_examples() {
        let g = Grid::rectangle(16, 12, 1.0, 1.0).unwrap();
        let u = Field::from_fn(g, |x, y| 1.0 + x * y);
        let div = chemo_divergence(&u, &Field::constant(g, 3.0)).unwrap();
        assert!(div.values().iter().all(|&x| x == 0.0));

        let line = Grid::interval(64, 1.0).unwrap();
        let c = 2.5;
        let v = Field::from_fn(line, |x, _| (PI * x).cos());
        let div = chemo_divergence(&Field::constant(line, c), &v).unwrap();
        let lap = laplacian(&v, FluxSpec::Homogeneous).unwrap();
        for (d, l) in div.values().iter().zip(lap.values()) {
            assert!((d - c * l).abs() < 1e-10);
        }
        let err = div.values().iter().zip(v.values()).map(|(d, vv)| (d + c * PI * PI * vv).abs()).fold(0.0, f64::max);
        assert!(err < 0.01, "{err}");
    }

    #[test]
    fn helmholtz_examples() {
        let g = Grid::rectangle(12, 10, 1.0, 1.0).unwrap();
        let sigma = 3.0;
        let (w, rep) = helmholtz_solve(&Field::constant(g, sigma * 0.7), sigma).unwrap();
        assert!(rep.converged);
        assert!(w.values().iter().all(|x| (x - 0.7).abs() < 1e-10));

        // elliptic signal solve: (β − Δ)v = αu with u ≡ c gives v ≡ αc/β
        let c = 1.3;
        let (v, _) = helmholtz_solve(&Field::constant(g, 2.0 * c), 4.0).unwrap();
        assert!(v.values().iter().all(|x| (x - c / 2.0).abs() < 1e-10));

        let rhs = Field::from_fn(g, |x, y| (x - 0.5).powi(2) + y);
        for backend in [SolverBackend::Cg, SolverBackend::Spectral] {
            let solver = HelmholtzSolver::new(g, SolverOptions { backend, ..Default::default() });
            let (w, _) = solver.solve(&rhs, 0.5).unwrap();
            let diff = w.combine(1.0, &w.reflected(0), -1.0).max_abs();
            assert!(diff < 1e-9 * w.max_abs(), "{backend:?}: {diff}");
        }
    }

    #[test]
    fn backends_agree() {
        let g = Grid::rectangle(20, 14, 2.0, 1.0).unwrap();
        let rhs = Field::from_fn(g, |x, y| (3.0 * x).sin() + y * y + 1.0);
        let cg = HelmholtzSolver::new(g, SolverOptions { tol: 1e-13, ..Default::default() });
        let sp = HelmholtzSolver::new(g, SolverOptions { backend: SolverBackend::Spectral, ..Default::default() });
        for sigma in [1e-3, 1.0, 1e4] {
            let (a, ra) = cg.solve(&rhs, sigma).unwrap();
            let (b, rb) = sp.solve(&rhs, sigma).unwrap();
            assert!(ra.residual < 1e-13 && rb.residual <= 1e-10, "{ra:?} {rb:?}");
            assert!(a.combine(1.0, &b, -1.0).max_abs() < 1e-9 * a.max_abs(), "sigma {sigma}");
        }
    }

    #[test]
    fn cg_reports_iteration_cap() {
        let g = Grid::rectangle(32, 32, 1.0, 1.0).unwrap();
        let rhs = Field::from_fn(g, |x, y| x * y);
        let solver = HelmholtzSolver::new(g, SolverOptions { max_iter: 3, ..Default::default() });
        match solver.solve(&rhs, 1e-2) {
            Err(OperatorError::NoConvergence { report }) => {
                assert_eq!(report.iterations, 3);
                assert!(!report.converged);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
        assert!(matches!(solver.solve(&rhs, 0.0), Err(OperatorError::BadShift(_))));
    }

    fn random_field(g: Grid, lo: f64) -> impl Strategy<Value = Field> {
        prop::collection::vec(lo..4.0, g.len()).prop_map(move |v| Field::from_values(g, v).unwrap())
    }

    fn grid_2d() -> Grid {
        Grid::rectangle(7, 5, 1.0, 0.6).unwrap()
    }

    proptest! {
        #[test]
        fn divergence_theorem(f in random_field(grid_2d(), 0.0), p in 1.01f64..2.5) {
            for flux in [FluxSpec::Homogeneous, FluxSpec::PowerLaw(p)] {
                let total = integrate(&laplacian(&f, flux).unwrap()).unwrap();
                let boundary = boundary_flux_total(&f, flux);
                prop_assert!((total - boundary).abs() <= 1e-12 * (1.0 + boundary.abs()), "{total} vs {boundary}");
            }
            let b = boundary_integral_pow(&f, p).unwrap();
            prop_assert!((boundary_flux_total(&f, FluxSpec::PowerLaw(p)) - b).abs() <= 1e-12 * (1.0 + b));
        }

        #[test]
        fn laplacian_symmetric_negative(f in random_field(grid_2d(), -4.0), g in random_field(grid_2d(), -4.0)) {
            let lf = laplacian(&f, FluxSpec::Homogeneous).unwrap();
            let lg = laplacian(&g, FluxSpec::Homogeneous).unwrap();
            let (a, b) = (inner(&lf, &g), inner(&f, &lg));
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            prop_assert!(inner(&lf, &f) <= 1e-12);
        }

        #[test]
        fn helmholtz_round_trip(f in random_field(grid_2d(), -4.0), sigma in 0.05f64..50.0) {
            let lap = laplacian(&f, FluxSpec::Homogeneous).unwrap();
            let rhs = f.combine(sigma, &lap, -1.0);
            let (w, _) = helmholtz_solve(&rhs, sigma).unwrap();
            let err = w.combine(1.0, &f, -1.0).max_abs();
            prop_assert!(err <= 1e-7 * (1.0 + f.max_abs()), "err {err}");
        }

        #[test]
        fn chemo_conserves_mass(u in random_field(grid_2d(), 0.0), v in random_field(grid_2d(), -4.0), chi in -3.0f64..3.0) {
            let total = integrate(&chemotactic_divergence(&u, &v, chi).unwrap()).unwrap();
            prop_assert!(total.abs() <= 1e-12);
        }
    }
}
