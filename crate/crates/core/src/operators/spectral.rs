use crate::grid::Grid;

/// Orthonormal cosine basis of one axis: eigenvectors of the cell-centered
/// Neumann second difference, `cos(kπ(i + 1/2)/n)`.
#[derive(Debug, Clone)]
struct AxisBasis {
    n: usize,
    /// `forward[k * n + i]`.
    forward: Vec<f64>,
    /// `backward[i * n + k]`, the transpose of `forward`.
    backward: Vec<f64>,
    /// Eigenvalues of `−Δ_h` along this axis.
    eigen: Vec<f64>,
}

impl AxisBasis {
    fn new(n: usize, h: f64) -> Self {
        let nf = n as f64;
        let mut forward = vec![0.0; n * n];
        let mut backward = vec![0.0; n * n];
        let mut eigen = vec![0.0; n];
        for k in 0..n {
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                let v = scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / nf).cos();
                forward[k * n + i] = v;
                backward[i * n + k] = v;
            }
            let s = (std::f64::consts::PI * k as f64 / (2.0 * nf)).sin();
            eigen[k] = 4.0 * s * s / (h * h);
        }
        Self { n, forward, backward, eigen }
    }
}

/// Direct solver for `(σI − Δ_h) w = rhs` with homogeneous Neumann data via
/// separable cosine transforms; exact up to roundoff.
#[derive(Debug, Clone)]
pub struct CosineTransform {
    x: AxisBasis,
    y: Option<AxisBasis>,
}

impl CosineTransform {
    pub fn new(grid: &Grid) -> Self {
        let x = AxisBasis::new(grid.nx(), grid.h(0));
        let y = (grid.dim() == 2).then(|| AxisBasis::new(grid.ny(), grid.h(1)));
        Self { x, y }
    }

    pub fn solve_shifted(&self, rhs: &[f64], sigma: f64) -> Vec<f64> {
        let nx = self.x.n;
        let ny = self.y.as_ref().map_or(1, |b| b.n);
        debug_assert_eq!(rhs.len(), nx * ny);

        // x transform, row by row
        let mut t = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &rhs[j * nx..(j + 1) * nx];
            for k in 0..nx {
                let basis = &self.x.forward[k * nx..(k + 1) * nx];
                t[j * nx + k] = basis.iter().zip(row).map(|(a, b)| a * b).sum();
            }
        }
        let Some(ybasis) = &self.y else {
            for (k, v) in t.iter_mut().enumerate() {
                *v /= sigma + self.x.eigen[k];
            }
            return (0..nx)
                .map(|i| {
                    let basis = &self.x.backward[i * nx..(i + 1) * nx];
                    basis.iter().zip(&t).map(|(a, b)| a * b).sum()
                })
                .collect();
        };

        // y transform as row axpys, then divide by the eigenvalues
        let mut hat = vec![0.0; nx * ny];
        for l in 0..ny {
            let out = &mut hat[l * nx..(l + 1) * nx];
            for j in 0..ny {
                let q = ybasis.forward[l * ny + j];
                for (o, v) in out.iter_mut().zip(&t[j * nx..(j + 1) * nx]) {
                    *o += q * v;
                }
            }
            let shift = sigma + ybasis.eigen[l];
            for (o, ex) in out.iter_mut().zip(&self.x.eigen) {
                *o /= shift + ex;
            }
        }

        // inverse y transform
        let mut back = vec![0.0; nx * ny];
        for j in 0..ny {
            let out = &mut back[j * nx..(j + 1) * nx];
            for l in 0..ny {
                let q = ybasis.backward[j * ny + l];
                for (o, v) in out.iter_mut().zip(&hat[l * nx..(l + 1) * nx]) {
                    *o += q * v;
                }
            }
        }

        // inverse x transform
        let mut w = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &back[j * nx..(j + 1) * nx];
            for i in 0..nx {
                let basis = &self.x.backward[i * nx..(i + 1) * nx];
                w[j * nx + i] = basis.iter().zip(row).map(|(a, b)| a * b).sum();
            }
        }
        w
    }
}
