//! Structured grids and the nodal fields living on them.
//!
//! Nodes are stored row-major: the node `(i, j)` (column `i` along x, row `j`
//! along y) lives at index `j * (nx + 1) + i`. Space-time fields stack one
//! spatial slice per time knot, time-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the plane, `[x, y]`.
pub type Point = [f64; 2];

/// Snap tolerance (in cell units) used when locating a point in the grid, so
/// that sampling exactly at a node reproduces the nodal value bitwise.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    hx: f64,
    hy: f64,
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    nx: usize,
    ny: usize,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl TryFrom<GridSpec> for Grid2D {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        Grid2D::new(s.nx, s.ny, [s.x_min, s.x_max], [s.y_min, s.y_max])
    }
}

impl From<Grid2D> for GridSpec {
    fn from(g: Grid2D) -> Self {
        GridSpec {
            nx: g.nx,
            ny: g.ny,
            x_min: g.x_min,
            x_max: g.x_max,
            y_min: g.y_min,
            y_max: g.y_max,
        }
    }
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, x_range: [f64; 2], y_range: [f64; 2]) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!(
                "element counts must be at least 1, got {nx}x{ny}"
            )));
        }
        let [x_min, x_max] = x_range;
        let [y_min, y_max] = y_range;
        if !(x_min.is_finite() && x_max.is_finite() && y_min.is_finite() && y_max.is_finite()) {
            return Err(Error::InvalidGrid("domain bounds must be finite".into()));
        }
        if x_max <= x_min || y_max <= y_min {
            return Err(Error::InvalidGrid(format!(
                "empty domain [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Grid2D {
            nx,
            ny,
            x_min,
            x_max,
            y_min,
            y_max,
            hx: (x_max - x_min) / nx as f64,
            hy: (y_max - y_min) / ny as f64,
        })
    }

    /// `n x n` elements on the image square `[-1, 1]^2`.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, [-1.0, 1.0], [-1.0, 1.0])
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn x_range(&self) -> [f64; 2] {
        [self.x_min, self.x_max]
    }

    pub fn y_range(&self) -> [f64; 2] {
        [self.y_min, self.y_max]
    }

    pub fn nodes_x(&self) -> usize {
        self.nx + 1
    }

    pub fn nodes_y(&self) -> usize {
        self.ny + 1
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.x_max - self.x_min) + (self.y_max - self.y_min))
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn ij(&self, index: usize) -> (usize, usize) {
        (index % (self.nx + 1), index / (self.nx + 1))
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.hx
        }
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        if j == self.ny {
            self.y_max
        } else {
            self.y_min + j as f64 * self.hy
        }
    }

    #[inline]
    pub fn node(&self, index: usize) -> Point {
        let (i, j) = self.ij(index);
        [self.x(i), self.y(j)]
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let (i, j) = self.ij(index);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Trapezoidal quadrature weight of a node (equal to the lumped Q1 mass).
    #[inline]
    pub fn node_weight(&self, index: usize) -> f64 {
        let (i, j) = self.ij(index);
        let wx = if i == 0 || i == self.nx { 0.5 * self.hx } else { self.hx };
        let wy = if j == 0 || j == self.ny { 0.5 * self.hy } else { self.hy };
        wx * wy
    }

    pub fn node_weights(&self) -> Vec<f64> {
        (0..self.num_nodes()).map(|k| self.node_weight(k)).collect()
    }

    /// Lumped boundary measure of each node: half the length of each boundary
    /// edge touching it. Interior nodes get zero.
    pub fn boundary_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.num_nodes()];
        for i in 0..self.nx {
            for j in [0, self.ny] {
                w[self.index(i, j)] += 0.5 * self.hx;
                w[self.index(i + 1, j)] += 0.5 * self.hx;
            }
        }
        for j in 0..self.ny {
            for i in [0, self.nx] {
                w[self.index(i, j)] += 0.5 * self.hy;
                w[self.index(i, j + 1)] += 0.5 * self.hy;
            }
        }
        w
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn clamp(&self, p: Point) -> Point {
        [
            p[0].clamp(self.x_min, self.x_max),
            p[1].clamp(self.y_min, self.y_max),
        ]
    }

    /// Cell containing `p` and the local coordinates in `[0, 1]^2`.
    /// `p` must lie in the closed domain.
    #[inline]
    pub(crate) fn locate(&self, p: Point) -> (usize, usize, f64, f64) {
        let (i, fx) = locate_axis(p[0], self.x_min, self.hx, self.nx);
        let (j, fy) = locate_axis(p[1], self.y_min, self.hy, self.ny);
        (i, j, fx, fy)
    }

    pub fn same_as(&self, other: &Grid2D) -> bool {
        self == other
    }

    pub(crate) fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} on [{}, {}]x[{}, {}] vs {}x{} on [{}, {}]x[{}, {}]",
                self.nx,
                self.ny,
                self.x_min,
                self.x_max,
                self.y_min,
                self.y_max,
                other.nx,
                other.ny,
                other.x_min,
                other.x_max,
                other.y_min,
                other.y_max
            )))
        }
    }
}

#[inline]
fn locate_axis(x: f64, min: f64, h: f64, n: usize) -> (usize, f64) {
    let mut u = (x - min) / h;
    let r = u.round();
    if (u - r).abs() < SNAP {
        u = r;
    }
    let u = u.clamp(0.0, n as f64);
    let cell = (u.floor() as usize).min(n - 1);
    (cell, u - cell as f64)
}

/// Nodal values of a scalar function on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::GridMismatch(format!(
                "expected {} nodal values, got {}",
                grid.num_nodes(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.num_nodes()],
        }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Nodal interpolant of `f(x, y)`.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.num_nodes())
            .map(|k| {
                let [x, y] = grid.node(k);
                f(x, y)
            })
            .collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation on the cell containing `p`.
    pub fn sample(&self, p: Point) -> Result<f64> {
        if !self.grid.contains(p) {
            return Err(Error::OutsideDomain { x: p[0], y: p[1] });
        }
        Ok(self.sample_unchecked(p))
    }

    /// Bilinear sample after clamping `p` into the closed domain.
    pub fn sample_clamped(&self, p: Point) -> f64 {
        self.sample_unchecked(self.grid.clamp(p))
    }

    #[inline]
    pub(crate) fn sample_unchecked(&self, p: Point) -> f64 {
        bilinear(&self.grid, &self.values, p)
    }

    /// Recovered nodal gradient: central differences inside, second-order
    /// one-sided differences on the boundary (first order when an axis has a
    /// single element).
    pub fn gradient(&self) -> VelocityField {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let f = |i: usize, j: usize| self.values[g.index(i, j)];
        let mut vx = vec![0.0; g.num_nodes()];
        let mut vy = vec![0.0; g.num_nodes()];
        for j in 0..=ny {
            for i in 0..=nx {
                let k = g.index(i, j);
                vx[k] = diff(nx, g.hx, i, |m| f(m, j));
                vy[k] = diff(ny, g.hy, j, |m| f(i, m));
            }
        }
        VelocityField { grid: *g, vx, vy }
    }

    /// Tensor trapezoidal rule.
    pub fn integrate(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.grid.node_weight(k))
            .sum()
    }

    /// Nodewise `(1 - t) * r0 + t * r1`.
    pub fn linear_blend(r0: &ScalarField, r1: &ScalarField, t: f64) -> Result<ScalarField> {
        r0.grid.check_same(&r1.grid)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!("blend time {t} outside [0, 1]")));
        }
        let values = r0
            .values
            .iter()
            .zip(&r1.values)
            .map(|(&a, &b)| blend(a, b, t))
            .collect();
        Ok(ScalarField {
            grid: r0.grid,
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

#[inline]
fn diff(n: usize, h: f64, i: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n == 1 {
        (f(1) - f(0)) / h
    } else if i == 0 {
        // written in differences so constant data gives exactly zero
        (4.0 * (f(1) - f(0)) - (f(2) - f(0))) / (2.0 * h)
    } else if i == n {
        (4.0 * (f(n) - f(n - 1)) - (f(n) - f(n - 2))) / (2.0 * h)
    } else {
        (f(i + 1) - f(i - 1)) / (2.0 * h)
    }
}

/// `(1 - t) a + t b`, returning `a` or `b` exactly at the ends and when
/// they are equal, and never leaving `[min(a, b), max(a, b)]`.
#[inline]
pub(crate) fn blend(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        (a + t * (b - a)).clamp(a.min(b), a.max(b))
    }
}

#[inline]
pub(crate) fn bilinear(grid: &Grid2D, values: &[f64], p: Point) -> f64 {
    let (i, j, fx, fy) = grid.locate(p);
    let k = grid.index(i, j);
    let row = grid.nx + 1;
    let (f00, f10, f01, f11) = (values[k], values[k + 1], values[k + row], values[k + row + 1]);
    let lower = (1.0 - fx) * f00 + fx * f10;
    let upper = (1.0 - fx) * f01 + fx * f11;
    (1.0 - fy) * lower + fy * upper
}

/// A nodal vector field `(vx, vy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: Grid2D,
    vx: Vec<f64>,
    vy: Vec<f64>,
}

impl VelocityField {
    pub fn new(grid: Grid2D, vx: Vec<f64>, vy: Vec<f64>) -> Result<Self> {
        let n = grid.num_nodes();
        if vx.len() != n || vy.len() != n {
            return Err(Error::GridMismatch(format!(
                "expected {n} nodal vectors, got {} / {}",
                vx.len(),
                vy.len()
            )));
        }
        if let Some(k) = vx.iter().chain(&vy).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k % n));
        }
        Ok(VelocityField { grid, vx, vy })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        let n = grid.num_nodes();
        VelocityField {
            grid,
            vx: vec![0.0; n],
            vy: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> Point) -> Self {
        let (vx, vy) = (0..grid.num_nodes())
            .map(|k| {
                let [x, y] = grid.node(k);
                let [a, b] = f(x, y);
                (a, b)
            })
            .unzip();
        VelocityField { grid, vx, vy }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn vx(&self) -> &[f64] {
        &self.vx
    }

    pub fn vy(&self) -> &[f64] {
        &self.vy
    }

    pub fn at(&self, index: usize) -> Point {
        [self.vx[index], self.vy[index]]
    }

    #[inline]
    pub fn sample_clamped(&self, p: Point) -> Point {
        let p = self.grid.clamp(p);
        [
            bilinear(&self.grid, &self.vx, p),
            bilinear(&self.grid, &self.vy, p),
        ]
    }

    /// Zero the normal component on every boundary node: `vx` on the
    /// vertical sides, `vy` on the horizontal ones.
    pub fn with_zero_normal(mut self) -> Self {
        let g = self.grid;
        for j in 0..=g.ny {
            for i in [0, g.nx] {
                self.vx[g.index(i, j)] = 0.0;
            }
        }
        for i in 0..=g.nx {
            for j in [0, g.ny] {
                self.vy[g.index(i, j)] = 0.0;
            }
        }
        self
    }

    /// Divide every vector by the matching nodal value of `rho`.
    pub fn divided_by(&self, rho: &ScalarField) -> Result<VelocityField> {
        self.grid.check_same(rho.grid())?;
        let r = rho.values();
        Ok(VelocityField {
            grid: self.grid,
            vx: self.vx.iter().zip(r).map(|(v, r)| v / r).collect(),
            vy: self.vy.iter().zip(r).map(|(v, r)| v / r).collect(),
        })
    }

    pub fn max_norm(&self) -> f64 {
        self.vx
            .iter()
            .zip(&self.vy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// Largest normal component over the boundary nodes.
    pub fn max_boundary_normal(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for j in 0..=g.ny {
            for i in [0, g.nx] {
                m = m.max(self.vx[g.index(i, j)].abs());
            }
        }
        for i in 0..=g.nx {
            for j in [0, g.ny] {
                m = m.max(self.vy[g.index(i, j)].abs());
            }
        }
        m
    }
}

/// Uniform partition of `[0, 1]` into `nt` time elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimeGridSpec", into = "TimeGridSpec")]
pub struct TimeGrid {
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TimeGridSpec {
    nt: usize,
}

impl TryFrom<TimeGridSpec> for TimeGrid {
    type Error = Error;

    fn try_from(s: TimeGridSpec) -> Result<Self> {
        TimeGrid::new(s.nt)
    }
}

impl From<TimeGrid> for TimeGridSpec {
    fn from(t: TimeGrid) -> Self {
        TimeGridSpec { nt: t.nt() }
    }
}

impl TimeGrid {
    pub fn new(nt: usize) -> Result<Self> {
        if nt == 0 {
            return Err(Error::InvalidParameter("need at least one time element".into()));
        }
        let knots = (0..=nt).map(|k| k as f64 / nt as f64).collect();
        Ok(TimeGrid { knots })
    }

    pub fn nt(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.nt() as f64
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn knot(&self, k: usize) -> f64 {
        self.knots[k]
    }

    /// Trapezoidal weight of knot `k`.
    pub fn weight(&self, k: usize) -> f64 {
        let nt = self.nt();
        if k == 0 || k == nt {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }

    /// Element index containing `s` and the local coordinate in `[0, 1]`.
    #[inline]
    pub(crate) fn locate(&self, s: f64) -> (usize, f64) {
        locate_axis(s.clamp(0.0, 1.0), 0.0, self.dt(), self.nt())
    }
}

/// Nodal values on the tensor grid (time knots) x (spatial nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    tgrid: TimeGrid,
    grid: Grid2D,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(tgrid: TimeGrid, grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        let expected = (tgrid.nt() + 1) * grid.num_nodes();
        if values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "expected {expected} space-time values, got {}",
                values.len()
            )));
        }
        Ok(SpaceTimeField {
            tgrid,
            grid,
            values,
        })
    }

    pub fn from_slices(tgrid: TimeGrid, slices: &[ScalarField]) -> Result<Self> {
        if slices.len() != tgrid.nt() + 1 {
            return Err(Error::GridMismatch(format!(
                "expected {} slices, got {}",
                tgrid.nt() + 1,
                slices.len()
            )));
        }
        let grid = *slices[0].grid();
        let mut values = Vec::with_capacity(slices.len() * grid.num_nodes());
        for s in slices {
            grid.check_same(s.grid())?;
            values.extend_from_slice(s.values());
        }
        Ok(SpaceTimeField {
            tgrid,
            grid,
            values,
        })
    }

    /// Nodewise linear blend of `r0` and `r1` at every knot.
    pub fn linear_blend(tgrid: TimeGrid, r0: &ScalarField, r1: &ScalarField) -> Result<Self> {
        let slices = tgrid
            .knots()
            .iter()
            .map(|&t| ScalarField::linear_blend(r0, r1, t))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slices(tgrid, &slices)
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.num_nodes();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slice_field(&self, k: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.slice(k).to_vec(),
        }
    }

    pub fn slices(&self) -> Vec<ScalarField> {
        (0..=self.tgrid.nt()).map(|k| self.slice_field(k)).collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Time derivative at every knot: central differences inside, second-order
    /// one-sided differences at `t = 0` and `t = 1` (first order when `nt = 1`).
    pub fn time_derivative(&self) -> Vec<ScalarField> {
        let nt = self.tgrid.nt();
        let dt = self.tgrid.dt();
        (0..=nt)
            .map(|k| {
                let values = (0..self.grid.num_nodes())
                    .map(|node| diff(nt, dt, k, |m| self.slice(m)[node]))
                    .collect();
                ScalarField {
                    grid: self.grid,
                    values,
                }
            })
            .collect()
    }
}
