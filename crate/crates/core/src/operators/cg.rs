use crate::grid::Grid;

use super::{apply_shifted, LinearSolveReport};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Diagonal of `σI − Δ_h` with Neumann rows.
fn jacobi_diagonal(grid: &Grid, sigma: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|c| {
            let mut d = sigma;
            for axis in 0..grid.dim() {
                let w = 1.0 / (grid.h(axis) * grid.h(axis));
                for sign in [-1i8, 1] {
                    if grid.neighbor(c, axis, sign).is_some() {
                        d += w;
                    }
                }
            }
            d
        })
        .collect()
}

/// Jacobi-preconditioned conjugate gradients for `(σI − Δ_h) x = b`.
///
/// Stops when `‖b − Ax‖₂ ≤ tol · ‖b‖₂`; a zero right-hand side returns zero.
pub fn conjugate_gradient(
    grid: &Grid,
    sigma: f64,
    b: &[f64],
    mut x: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, LinearSolveReport) {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return (vec![0.0; n], LinearSolveReport { iterations: 0, residual: 0.0, converged: true });
    }
    let inv_diag: Vec<f64> = jacobi_diagonal(grid, sigma).into_iter().map(|d| 1.0 / d).collect();

    let mut r = vec![0.0; n];
    apply_shifted(grid, sigma, &x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    if rel <= tol {
        return (x, LinearSolveReport { iterations: 0, residual: rel, converged: true });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        apply_shifted(grid, sigma, &p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= tol {
            return (x, LinearSolveReport { iterations: it, residual: rel, converged: true });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, LinearSolveReport { iterations: max_iter, residual: rel, converged: false })
}
