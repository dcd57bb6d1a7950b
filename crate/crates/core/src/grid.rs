//! Structured cell-centered meshes on intervals and rectangles, scalar fields
//! living on them, and the discrete integral calculus used everywhere else.
//!
//! Cells are stored with the x index running fastest: cell `(i, j)` lives at
//! `j * nx + i`. In 1D `ny == 1` and `j` is always 0.
//!
//! All reductions sum in a fixed order with Neumaier compensation, so results
//! are bit-reproducible and the telescoping identities of the finite-volume
//! operators hold to roundoff.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("axis {axis} needs at least {MIN_CELLS} cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis} extent must be positive and finite, got {extent}")]
    BadExtent { axis: usize, extent: f64 },
    #[error("field has {got} values but the grid has {expected} cells")]
    SizeMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} in cell {cell}")]
    NonFinite { cell: usize, value: f64 },
    #[error("exponent must satisfy {constraint}, got {value}")]
    BadExponent { constraint: &'static str, value: f64 },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// Uniform cell-centered mesh on `[0, lx]` or `[0, lx] x [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    extents: [f64; 2],
    h: [f64; 2],
}

impl Grid {
    pub fn interval(cells: usize, length: f64) -> Result<Self, GridError> {
        Self::new(&[cells], &[length])
    }

    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        Self::new(&[nx, ny], &[lx, ly])
    }

    /// Unit interval or unit square with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self, GridError> {
        match dim {
            1 => Self::interval(n, 1.0),
            2 => Self::rectangle(n, n, 1.0, 1.0),
            d => Err(GridError::BadDimension(d)),
        }
    }

    pub fn new(cells: &[usize], extents: &[f64]) -> Result<Self, GridError> {
        let dim = cells.len();
        if !(1..=2).contains(&dim) || extents.len() != dim {
            return Err(GridError::BadDimension(dim.max(extents.len())));
        }
        let mut c = [1usize; 2];
        let mut e = [1.0f64; 2];
        let mut h = [1.0f64; 2];
        for axis in 0..dim {
            if cells[axis] < MIN_CELLS {
                return Err(GridError::TooFewCells { axis, cells: cells[axis] });
            }
            if !(extents[axis].is_finite() && extents[axis] > 0.0) {
                return Err(GridError::BadExtent { axis, extent: extents[axis] });
            }
            c[axis] = cells[axis];
            e[axis] = extents[axis];
            h[axis] = extents[axis] / cells[axis] as f64;
        }
        Ok(Self { dim, cells: c, extents: e, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cell counts per axis; the unused axis of a 1D grid reports 1.
    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn extents(&self) -> [f64; 2] {
        self.extents
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Smallest spacing over active axes.
    pub fn h_min(&self) -> f64 {
        self.h[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    /// Measure of the domain.
    pub fn volume(&self) -> f64 {
        self.extents[..self.dim].iter().product()
    }

    /// Measure of the boundary: perimeter in 2D, endpoint count in 1D.
    pub fn boundary_measure(&self) -> f64 {
        match self.dim {
            1 => 2.0,
            _ => 2.0 * (self.extents[0] + self.extents[1]),
        }
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        match self.dim {
            1 => 1.0,
            _ => self.h[1 - axis],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.cells[0], cell / self.cells[0])
    }

    /// Physical coordinates of a cell center.
    pub fn center(&self, cell: usize) -> [f64; 2] {
        let (i, j) = self.coords(cell);
        let x = (i as f64 + 0.5) * self.h[0];
        let y = if self.dim == 2 { (j as f64 + 0.5) * self.h[1] } else { 0.0 };
        [x, y]
    }

    /// Index of the neighbour of `cell` along `axis` in direction `sign`.
    #[inline]
    pub fn neighbor(&self, cell: usize, axis: usize, sign: i8) -> Option<usize> {
        let (i, j) = self.coords(cell);
        let idx = if axis == 0 { i } else { j };
        let n = self.cells[axis];
        let next = if sign > 0 {
            (idx + 1 < n).then_some(idx + 1)?
        } else {
            idx.checked_sub(1)?
        };
        Some(if axis == 0 { self.index(next, j) } else { self.index(i, next) })
    }

    /// Interior faces as `(left, right, axis)` with `right` the neighbour in
    /// the positive axis direction.
    pub fn interior_faces(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let [nx, ny] = self.cells;
        let x_faces = (0..ny).flat_map(move |j| {
            (0..nx - 1).map(move |i| (j * nx + i, j * nx + i + 1, 0usize))
        });
        let y_faces = (0..ny.saturating_sub(1)).flat_map(move |j| {
            (0..nx).map(move |i| (j * nx + i, (j + 1) * nx + i, 1usize))
        });
        x_faces.chain(y_faces.filter(move |_| self.dim == 2))
    }

    /// Every boundary face exactly once: x-min, x-max, then y-min, y-max.
    /// Corner cells own one face per touching side.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let [nx, ny] = self.cells;
        let mut faces = Vec::with_capacity(2 * (nx + ny));
        for axis in 0..self.dim {
            let area = self.face_area(axis);
            let (n_along, n_across) = if axis == 0 { (nx, ny) } else { (ny, nx) };
            for sign in [-1i8, 1] {
                let (edge, inner) = if sign < 0 { (0, 1) } else { (n_along - 1, n_along - 2) };
                for k in 0..n_across {
                    let (cell, inner) = if axis == 0 {
                        (self.index(edge, k), self.index(inner, k))
                    } else {
                        (self.index(k, edge), self.index(k, inner))
                    };
                    faces.push(BoundaryFace { cell, inner, axis, sign, area });
                }
            }
        }
        faces
    }

    /// Mirror cell index under `x -> lx - x` (and `y -> ly - y` when `both`).
    pub fn reflect(&self, cell: usize, axis: usize) -> usize {
        let (i, j) = self.coords(cell);
        if axis == 0 {
            self.index(self.cells[0] - 1 - i, j)
        } else {
            self.index(i, self.cells[1] - 1 - j)
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dim {
            1 => write!(f, "{} cells on [0, {}]", self.cells[0], self.extents[0]),
            _ => write!(
                f,
                "{}x{} cells on [0, {}]x[0, {}]",
                self.cells[0], self.cells[1], self.extents[0], self.extents[1]
            ),
        }
    }
}

/// A boundary face of a boundary cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    /// Cell owning the face.
    pub cell: usize,
    /// Next cell inward along the face normal.
    pub inner: usize,
    /// Axis of the outward normal.
    pub axis: usize,
    /// Orientation of the outward normal along `axis`.
    pub sign: i8,
    pub area: f64,
}

/// Neumaier-compensated sum, fixed left-to-right order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Scalar grid function, one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::SizeMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at cell centers (`y = 0` on 1D grids).
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|c| {
                let [x, y] = grid.center(c);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Field, b: f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self { grid: self.grid, values }
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(cell) => Err(GridError::NonFinite { cell, value: self.values[cell] }),
            None => Ok(()),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Field mirrored along `axis`.
    pub fn reflected(&self, axis: usize) -> Self {
        let values = (0..self.grid.len()).map(|c| self.values[self.grid.reflect(c, axis)]).collect();
        Self { grid: self.grid, values }
    }

    /// Trace on a boundary face by one-sided linear extrapolation from the
    /// owning cell and its inward neighbour. Floored at zero when both cells
    /// are nonnegative but the extrapolation dips below zero.
    #[inline]
    pub fn face_trace(&self, face: &BoundaryFace) -> f64 {
        let f0 = self.values[face.cell];
        let f1 = self.values[face.inner];
        let trace = 1.5 * f0 - 0.5 * f1;
        if trace < 0.0 && f0 >= 0.0 && f1 >= 0.0 {
            0.0
        } else {
            trace
        }
    }

    /// Writes the snapshot CSV (`i[,j],x[,y],value`, storage order).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GridError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| GridError::Snapshot(e.to_string());
        if self.grid.dim == 1 {
            w.write_record(["i", "x", "value"]).map_err(err)?;
        } else {
            w.write_record(["i", "j", "x", "y", "value"]).map_err(err)?;
        }
        for (c, v) in self.values.iter().enumerate() {
            let (i, j) = self.grid.coords(c);
            let [x, y] = self.grid.center(c);
            if self.grid.dim == 1 {
                w.write_record([i.to_string(), x.to_string(), v.to_string()]).map_err(err)?;
            } else {
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    x.to_string(),
                    y.to_string(),
                    v.to_string(),
                ])
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| GridError::Snapshot(e.to_string()))
    }

    /// Reads a snapshot CSV written by [`Field::write_csv`] onto `grid`.
    pub fn read_csv<R: Read>(grid: Grid, input: R) -> Result<Self, GridError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| GridError::Snapshot(e.to_string()))?.clone();
        let expected: &[&str] = if grid.dim == 1 { &["i", "x", "value"] } else { &["i", "j", "x", "y", "value"] };
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(GridError::Snapshot(format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut values = vec![f64::NAN; grid.len()];
        let mut seen = 0usize;
        for rec in r.records() {
            let rec = rec.map_err(|e| GridError::Snapshot(e.to_string()))?;
            let parse_idx = |k: usize| -> Result<usize, GridError> {
                rec[k].trim().parse().map_err(|_| GridError::Snapshot(format!("bad index {:?}", &rec[k])))
            };
            let i = parse_idx(0)?;
            let j = if grid.dim == 2 { parse_idx(1)? } else { 0 };
            if i >= grid.nx() || j >= grid.ny() {
                return Err(GridError::Snapshot(format!("cell ({i}, {j}) outside {grid}")));
            }
            let value: f64 = rec[rec.len() - 1]
                .trim()
                .parse()
                .map_err(|_| GridError::Snapshot(format!("bad value {:?}", &rec[rec.len() - 1])))?;
            values[grid.index(i, j)] = value;
            seen += 1;
        }
        if seen != grid.len() {
            return Err(GridError::SizeMismatch { expected: grid.len(), got: seen });
        }
        let field = Self { grid, values };
        field.check_finite()?;
        Ok(field)
    }
}

/// Discrete integral: sum of cell values times cell volume.
pub fn integrate(f: &Field) -> Result<f64, GridError> {
    f.check_finite()?;
    Ok(compensated_sum(f.values.iter().copied()) * f.grid.cell_volume())
}

/// `(∫|f|^r)^(1/r)` for `r >= 1`; `r = inf` gives `max|f|`.
pub fn lp_norm(f: &Field, r: f64) -> Result<f64, GridError> {
    if r.is_nan() || r < 1.0 {
        return Err(GridError::BadExponent { constraint: "r >= 1", value: r });
    }
    f.check_finite()?;
    if r.is_infinite() {
        return Ok(f.max_abs());
    }
    let s = compensated_sum(f.values.iter().map(|v| v.abs().powf(r))) * f.grid.cell_volume();
    Ok(s.powf(1.0 / r))
}

/// Face-difference quadrature of `∫|∇f|²` with zero normal derivative on the
/// boundary: each interior face contributes `(Δf/h)² * area * h`.
pub fn grad_sq_integral(f: &Field) -> Result<f64, GridError> {
    f.check_finite()?;
    let g = &f.grid;
    let vals = &f.values;
    let weights = [g.face_area(0) * g.h(0), g.face_area(1) * g.h(1)];
    let terms = g.interior_faces().map(|(l, r, axis)| {
        let d = (vals[r] - vals[l]) / g.h(axis);
        d * d * weights[axis]
    });
    Ok(compensated_sum(terms))
}

/// `Σ_faces |trace(f)|^q * area` over the boundary.
pub fn boundary_integral_pow(f: &Field, q: f64) -> Result<f64, GridError> {
    if q.is_nan() || q <= 0.0 {
        return Err(GridError::BadExponent { constraint: "q > 0", value: q });
    }
    f.check_finite()?;
    let faces = f.grid.boundary_faces();
    Ok(compensated_sum(faces.iter().map(|face| f.face_trace(face).abs().powf(q) * face.area)))
}

/// Cell-centered gradient reconstructed by averaging the two face differences
/// on each axis; boundary faces carry a zero normal difference.
pub fn cell_gradient(f: &Field) -> Vec<[f64; 2]> {
    let g = &f.grid;
    let vals = &f.values;
    (0..g.len())
        .map(|c| {
            let mut grad = [0.0; 2];
            for (axis, slot) in grad.iter_mut().enumerate().take(g.dim()) {
                let h = g.h(axis);
                let plus = g.neighbor(c, axis, 1).map_or(0.0, |n| (vals[n] - vals[c]) / h);
                let minus = g.neighbor(c, axis, -1).map_or(0.0, |n| (vals[c] - vals[n]) / h);
                *slot = 0.5 * (plus + minus);
            }
            grad
        })
        .collect()
}

/// Reconstructed `|∇f|²` at cell centers.
pub fn cell_grad_sq(f: &Field) -> Field {
    let values = cell_gradient(f).into_iter().map(|[gx, gy]| gx * gx + gy * gy).collect();
    Field { grid: f.grid, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit_square(n: usize) -> Grid {
        Grid::unit(2, n).unwrap()
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert_eq!(Grid::interval(3, 1.0), Err(GridError::TooFewCells { axis: 0, cells: 3 }));
        assert!(matches!(Grid::interval(8, 0.0), Err(GridError::BadExtent { .. })));
        assert!(matches!(Grid::new(&[4, 4, 4], &[1.0; 3]), Err(GridError::BadDimension(3))));
    }

    #[test]
    fn boundary_faces_cover_each_face_once() {
        let g = Grid::rectangle(5, 7, 1.0, 2.0).unwrap();
        let faces = g.boundary_faces();
        assert_eq!(faces.len(), 2 * (5 + 7));
        let total: f64 = faces.iter().map(|f| f.area).sum();
        assert!((total - g.boundary_measure()).abs() < 1e-14);
        let mut keys: Vec<_> = faces.iter().map(|f| (f.cell, f.axis, f.sign)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), faces.len());
        assert_eq!(Grid::interval(6, 1.0).unwrap().boundary_faces().len(), 2);
    }

    #[test]
    fn interior_face_count() {
        let g = Grid::rectangle(5, 7, 1.0, 1.0).unwrap();
        assert_eq!(g.interior_faces().count(), 4 * 7 + 5 * 6);
        assert_eq!(Grid::interval(9, 1.0).unwrap().interior_faces().count(), 8);
    }

    #[test]
    fn integrate_examples() {
        let g = unit_square(8);
        assert_eq!(integrate(&Field::constant(g, 2.0)).unwrap(), 2.0);
        assert_eq!(integrate(&Field::zeros(g)).unwrap(), 0.0);
        for n in [4, 7, 32, 101] {
            let line = Grid::interval(n, 1.0).unwrap();
            let f = Field::from_fn(line, |x, _| x);
            assert!((integrate(&f).unwrap() - 0.5).abs() < 1e-15, "n = {n}");
        }
        let mut bad = Field::zeros(g);
        bad.values_mut()[3] = f64::NAN;
        assert!(matches!(integrate(&bad), Err(GridError::NonFinite { cell: 3, .. })));
    }

    #[test]
    fn lp_norm_examples() {
        assert_eq!(lp_norm(&Field::constant(unit_square(8), 3.0), 2.0).unwrap(), 3.0);
        let two = Grid::interval(16, 2.0).unwrap();
        assert_eq!(lp_norm(&Field::constant(two, 3.0), 1.0).unwrap(), 6.0);
        let line = Grid::interval(64, 1.0).unwrap();
        let f = Field::from_fn(line, |x, _| x);
        assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 0.9921875);
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn grad_sq_examples() {
        assert_eq!(grad_sq_integral(&Field::constant(unit_square(8), 4.2)).unwrap(), 0.0);
        for n in [8usize, 32, 128] {
            let line = Grid::interval(n, 1.0).unwrap();
            let f = Field::from_fn(line, |x, _| x);
            let expect = (n as f64 - 1.0) / n as f64;
            assert!((grad_sq_integral(&f).unwrap() - expect).abs() < 1e-12);
        }
        // ∫₀¹ π² sin²(πx) dx = π²/2, error O(h²)
        let mut errs = vec![];
        for n in [32usize, 64, 128] {
            let line = Grid::interval(n, 1.0).unwrap();
            let f = Field::from_fn(line, |x, _| (PI * x).cos());
            errs.push((grad_sq_integral(&f).unwrap() - PI * PI / 2.0).abs());
        }
        assert!(errs[0] < 1e-2);
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn boundary_integral_examples() {
        let c: f64 = 1.7;
        let p = 1.3;
        let got = boundary_integral_pow(&Field::constant(unit_square(16), c), p).unwrap();
        assert!((got - 4.0 * c.powf(p)).abs() < 1e-13);
        let line = Grid::interval(10, 1.0).unwrap();
        assert_eq!(boundary_integral_pow(&Field::constant(line, 1.0), 2.5).unwrap(), 2.0);
        let f = Field::from_fn(line, |x, _| x);
        assert!((boundary_integral_pow(&f, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(boundary_integral_pow(&f, 0.0).is_err());
    }

    #[test]
    fn trace_floor_only_for_nonnegative_data() {
        let line = Grid::interval(4, 1.0).unwrap();
        let f = Field::from_values(line, vec![0.1, 1.0, 1.0, 1.0]).unwrap();
        let faces = line.boundary_faces();
        assert_eq!(f.face_trace(&faces[0]), 0.0);
        let g = Field::from_values(line, vec![-0.1, 1.0, 1.0, 1.0]).unwrap();
        assert!((g.face_trace(&faces[0]) + 0.65).abs() < 1e-15);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = Grid::rectangle(5, 4, 1.0, 0.5).unwrap();
        let f = Field::from_fn(g, |x, y| x * 3.0 + y * y);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,x,y,value\n0,0,"));
        assert_eq!(Field::read_csv(g, buf.as_slice()).unwrap(), f);
        let other = Grid::rectangle(4, 4, 1.0, 0.5).unwrap();
        assert!(Field::read_csv(other, buf.as_slice()).is_err());
    }

    fn random_field(g: Grid) -> impl Strategy<Value = Field> {
        prop::collection::vec(-5.0f64..5.0, g.len())
            .prop_map(move |v| Field::from_values(g, v).unwrap())
    }

    proptest! {
        #[test]
        fn integrate_is_linear(
            (f, g) in (random_field(unit_square(6)), random_field(unit_square(6))),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
        ) {
            let lhs = integrate(&f.combine(a, &g, b)).unwrap();
            let rhs = a * integrate(&f).unwrap() + b * integrate(&g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn lp_norm_monotone_on_unit_volume(f in random_field(unit_square(6))) {
            let norms: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&r| lp_norm(&f, r).unwrap()).collect();
            for w in norms.windows(2) {
                prop_assert!(w[0] <= w[1] * (1.0 + 1e-12));
            }
        }

        #[test]
        fn grad_sq_nonnegative_zero_iff_constant(f in random_field(unit_square(5)), c in -2.0f64..2.0) {
            prop_assert!(grad_sq_integral(&f).unwrap() > 0.0);
            prop_assert_eq!(grad_sq_integral(&Field::constant(*f.grid(), c)).unwrap(), 0.0);
        }

        #[test]
        fn boundary_pow_of_constant(c in 0.0f64..4.0, q in 0.1f64..4.0, n in 4usize..12) {
            let g = Grid::rectangle(n, n + 1, 1.5, 0.5).unwrap();
            let got = boundary_integral_pow(&Field::constant(g, c), q).unwrap();
            let expect = c.powf(q) * g.boundary_measure();
            prop_assert!((got - expect).abs() <= 1e-12 * (1.0 + expect));
        }
    }
}
