//! Space-time least-squares transport on trilinear (Q1) bricks.
//!
//! With `w = (1, v1, v2)` and `grad~ = (d_t, d_x, d_y)`, the density is
//! `rho = c + theta`, where `theta` interpolates the linear blend of the end
//! images and the correction `c` vanishes on the `t = 0` and `t = 1` layers.
//! `c` minimises
//!
//! `J(c) = 1/2 int_Q (w . grad~ (c + theta))^2`
//!
//! over the box `lower <= c + theta <= upper`. Unknowns are the nodal values
//! of `c` on the interior time layers, numbered time-major.

use serde::{Deserialize, Serialize};

use crate::characteristics::VelocityTimeline;
use crate::error::{Error, Result};
use crate::field::{Grid2D, SpaceTimeField, TimeGrid};
use crate::pcg::{pcg, DEFAULT_MAX_ITER};
use crate::sparse::{dot, norm, CsrMatrix};

/// Density bounds `[lower, upper]` with `0 < lower < upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstraints {
    pub lower: f64,
    pub upper: f64,
}

impl BoundConstraints {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let b = BoundConstraints { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bounds must satisfy 0 < lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// The streamline form `a_v(phi, psi) = int_Q (w . grad~ phi)(w . grad~ psi)`
/// restricted to the interior time layers.
#[derive(Debug, Clone)]
pub struct SpaceTimeMatrix {
    tgrid: TimeGrid,
    grid: Grid2D,
    csr: CsrMatrix,
}

impl SpaceTimeMatrix {
    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn dim(&self) -> usize {
        self.csr.dim()
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.csr.mul_vec(x)
    }
}

/// Trilinear basis gradients `(d/dt, d/dx, d/dy)` at the 2x2x2 Gauss points
/// of a `dt x hx x hy` brick, local nodes `a = ax + 2 ay + 4 at`.
struct BrickBasis {
    grads: [[[f64; 3]; 8]; 8],
    weight: f64,
}

impl BrickBasis {
    fn new(dt: f64, hx: f64, hy: f64) -> Self {
        let g = 0.5 / 3f64.sqrt();
        let pts = [0.5 - g, 0.5 + g];
        // 1D shape functions on [0, 1] and their derivatives
        let l = |n: usize, s: f64| if n == 0 { 1.0 - s } else { s };
        let dl = |n: usize| if n == 0 { -1.0 } else { 1.0 };
        let mut grads = [[[0.0; 3]; 8]; 8];
        for (q, gq) in grads.iter_mut().enumerate() {
            let (qx, qy, qt) = (pts[q & 1], pts[(q >> 1) & 1], pts[q >> 2]);
            for (a, gr) in gq.iter_mut().enumerate() {
                let (ax, ay, at) = (a & 1, (a >> 1) & 1, a >> 2);
                gr[0] = dl(at) / dt * l(ax, qx) * l(ay, qy);
                gr[1] = l(at, qt) * dl(ax) / hx * l(ay, qy);
                gr[2] = l(at, qt) * l(ax, qx) * dl(ay) / hy;
            }
        }
        BrickBasis {
            grads,
            weight: 0.125 * dt * hx * hy,
        }
    }

    /// `G[c][d][a][b] = int dN_a/dz_c dN_b/dz_d`, exact for the trilinear
    /// basis.
    fn integrals(&self) -> BrickIntegrals {
        let mut out = [[[[0.0; 8]; 8]; 3]; 3];
        for gq in &self.grads {
            for c in 0..3 {
                for d in 0..3 {
                    for a in 0..8 {
                        for b in 0..8 {
                            out[c][d][a][b] += self.weight * gq[a][c] * gq[b][d];
                        }
                    }
                }
            }
        }
        out
    }
}

type BrickIntegrals = [[[[f64; 8]; 8]; 3]; 3];

/// Element matrix for a constant streamline direction `w`; only the upper
/// triangle is summed, then mirrored, so it is bitwise symmetric.
fn brick_matrix(g: &BrickIntegrals, w: [f64; 3]) -> [[f64; 8]; 8] {
    let mut k = [[0.0; 8]; 8];
    for a in 0..8 {
        for b in a..8 {
            let mut s = 0.0;
            for c in 0..3 {
                for d in 0..3 {
                    s += w[c] * w[d] * g[c][d][a][b];
                }
            }
            k[a][b] = s;
            k[b][a] = s;
        }
    }
    k
}

/// Visit every brick with its global node numbers (time-major over all
/// knots) and its streamline direction `(1, v)`, `v` the mean of the eight
/// nodal velocities.
fn for_each_brick(v: &VelocityTimeline, mut f: impl FnMut(&[usize; 8], [f64; 3])) {
    let grid = *v.grid();
    let tgrid = v.tgrid();
    let nn = grid.num_nodes();
    for k in 0..tgrid.nt() {
        let (s0, s1) = (v.slice(k), v.slice(k + 1));
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let mut nodes = [0usize; 8];
                let (mut vx, mut vy) = (0.0, 0.0);
                for (a, n) in nodes.iter_mut().enumerate() {
                    let (ax, ay, at) = (a & 1, (a >> 1) & 1, a >> 2);
                    let node = grid.index(i + ax, j + ay);
                    *n = (k + at) * nn + node;
                    let s = if at == 0 { s0 } else { s1 };
                    vx += s.vx()[node];
                    vy += s.vy()[node];
                }
                f(&nodes, [1.0, 0.125 * vx, 0.125 * vy]);
            }
        }
    }
}

fn basis_of(v: &VelocityTimeline) -> BrickBasis {
    let grid = v.grid();
    BrickBasis::new(v.tgrid().dt(), grid.hx(), grid.hy())
}

/// Assemble the streamline form on the interior time layers, with the
/// velocity taken constant per brick (mean of its eight nodal values).
pub fn assemble_av(v: &VelocityTimeline) -> SpaceTimeMatrix {
    let grid = *v.grid();
    let tgrid = v.tgrid().clone();
    let nt = tgrid.nt();
    let nn = grid.num_nodes();
    let layers = nt.saturating_sub(1);
    let mut csr = CsrMatrix::tensor_stencil(&[grid.nodes_x(), grid.nodes_y(), layers]);
    if layers > 0 {
        let g = basis_of(v).integrals();
        let interior = |g: usize| {
            let k = g / nn;
            (k >= 1 && k < nt).then(|| g - nn)
        };
        for_each_brick(v, |nodes, w| {
            let km = brick_matrix(&g, w);
            for a in 0..8 {
                let Some(ia) = interior(nodes[a]) else { continue };
                for b in 0..8 {
                    if let Some(ib) = interior(nodes[b]) {
                        csr.add(ia, ib, km[a][b]);
                    }
                }
            }
        });
    }
    SpaceTimeMatrix { tgrid, grid, csr }
}

/// Load vector `-a_v(theta, psi_i)` for every interior test function,
/// integrated point by point. The time derivative of `theta` is formed from
/// differences of paired nodes, so a `theta` constant in time and a zero
/// velocity give an exactly zero load.
pub fn assemble_lsq_rhs(v: &VelocityTimeline, theta: &SpaceTimeField) -> Result<Vec<f64>> {
    let grid = *v.grid();
    grid.check_same(theta.grid())?;
    if theta.tgrid() != v.tgrid() {
        return Err(Error::GridMismatch("time grids differ".into()));
    }
    let nt = v.tgrid().nt();
    let nn = grid.num_nodes();
    let mut rhs = vec![0.0; nt.saturating_sub(1) * nn];
    if nt < 2 {
        return Ok(rhs);
    }
    let basis = basis_of(v);
    let th = theta.values();
    for_each_brick(v, |nodes, w| {
        let vals: [f64; 8] = std::array::from_fn(|a| th[nodes[a]]);
        for gq in &basis.grads {
            let mut s = 0.0;
            for a in 0..4 {
                s += gq[a + 4][0] * (vals[a + 4] - vals[a]);
            }
            for a in 0..8 {
                s += (w[1] * gq[a][1] + w[2] * gq[a][2]) * vals[a];
            }
            if s == 0.0 {
                continue;
            }
            for a in 0..8 {
                let k = nodes[a] / nn;
                if k == 0 || k == nt {
                    continue;
                }
                let dir = w[0] * gq[a][0] + w[1] * gq[a][1] + w[2] * gq[a][2];
                rhs[nodes[a] - nn] -= basis.weight * dir * s;
            }
        }
    });
    Ok(rhs)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LsqReport {
    /// Warm-start CG iterations.
    pub cg_iterations: usize,
    /// Projected-gradient iterations after the warm start.
    pub iterations: usize,
    /// `||c - P(c - grad J)||` at exit.
    pub projected_gradient_norm: f64,
    pub converged: bool,
    /// Number of unknowns sitting on a bound at exit.
    pub active_constraints: usize,
    /// `J(c) - J(0)` at every accepted projected-gradient iterate, starting
    /// with the warm start.
    pub objective: Vec<f64>,
}

pub const DEFAULT_MAX_PG_ITER: usize = 50_000;

/// Unconstrained minimiser of `J` by Jacobi-PCG (relative residual `tol`).
pub fn solve_unconstrained(a: &SpaceTimeMatrix, b: &[f64], tol: f64) -> Vec<f64> {
    let mut c = vec![0.0; b.len()];
    if !b.is_empty() {
        pcg(&a.csr, b, &mut c, tol, DEFAULT_MAX_ITER, None);
    }
    c
}

/// Minimise `J` over the box `lower <= c + theta <= upper` and return
/// `rho = c + theta` on all knots.
///
/// The iteration starts from the clipped unconstrained CG solution and
/// continues with Jacobi-scaled projected gradient steps, Barzilai-Borwein
/// step lengths and an exact line search along the projected direction, so
/// `J` never increases. It stops once `||c - P(c - (A c - b))|| <= tol ||b||`.
pub fn solve_constrained(
    a: &SpaceTimeMatrix,
    b: &[f64],
    theta: &SpaceTimeField,
    bounds: &BoundConstraints,
    tol: f64,
) -> Result<(SpaceTimeField, LsqReport)> {
    solve_constrained_from(a, b, theta, bounds, tol, None, DEFAULT_MAX_PG_ITER)
}

pub fn solve_constrained_from(
    a: &SpaceTimeMatrix,
    b: &[f64],
    theta: &SpaceTimeField,
    bounds: &BoundConstraints,
    tol: f64,
    initial: Option<&[f64]>,
    max_iter: usize,
) -> Result<(SpaceTimeField, LsqReport)> {
    bounds.validate()?;
    let grid = a.grid;
    grid.check_same(theta.grid())?;
    let nn = grid.num_nodes();
    let nt = a.tgrid.nt();
    let n = a.dim();
    if b.len() != n || theta.len() != (nt + 1) * nn {
        return Err(Error::GridMismatch(format!(
            "space-time system of size {n} with load {} and theta {}",
            b.len(),
            theta.len()
        )));
    }
    let th = &theta.values()[nn..nn * nt];
    let lo: Vec<f64> = th.iter().map(|t| bounds.lower - t).collect();
    let hi: Vec<f64> = th.iter().map(|t| bounds.upper - t).collect();
    let project = |c: &mut [f64]| {
        for i in 0..c.len() {
            c[i] = c[i].clamp(lo[i], hi[i]);
        }
    };

    let mut report = LsqReport::default();
    let mut c = match initial {
        Some(c0) if c0.len() == n => c0.to_vec(),
        _ => vec![0.0; n],
    };
    let b_norm = norm(b);
    if n > 0 && b_norm > 0.0 {
        let warm = pcg(&a.csr, b, &mut c, 0.1 * tol, DEFAULT_MAX_ITER, None);
        report.cg_iterations = warm.iterations;
    }
    project(&mut c);

    let inv_diag: Vec<f64> = a.csr.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut ac = a.mul_vec(&c);
    let objective = |c: &[f64], ac: &[f64]| 0.5 * dot(c, ac) - dot(b, c);
    let mut g: Vec<f64> = ac.iter().zip(b).map(|(x, y)| x - y).collect();
    report.objective.push(objective(&c, &ac));

    let pg_norm = |c: &[f64], g: &[f64]| {
        let mut s = 0.0;
        for i in 0..c.len() {
            let d = c[i] - (c[i] - g[i]).clamp(lo[i], hi[i]);
            s += d * d;
        }
        s.sqrt()
    };
    let stop = tol * b_norm;
    let mut alpha = 1.0;
    let mut d = vec![0.0; n];
    let mut ad = vec![0.0; n];
    let mut res = pg_norm(&c, &g);
    while res > stop && report.iterations < max_iter {
        for i in 0..n {
            d[i] = (c[i] - alpha * inv_diag[i] * g[i]).clamp(lo[i], hi[i]) - c[i];
        }
        a.csr.mul_vec_into(&d, &mut ad);
        let gd = dot(&g, &d);
        let dad = dot(&d, &ad);
        if !(gd < 0.0) || !(dad > 0.0) {
            // no descent left at this step length: retry with the plain
            // diagonal step before giving up
            if alpha != 1.0 {
                alpha = 1.0;
                continue;
            }
            break;
        }
        let tau = (-gd / dad).min(1.0);
        let mut sds = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = tau * d[i];
            let y = tau * ad[i];
            c[i] += s;
            ac[i] += y;
            g[i] += y;
            sds += s * s / inv_diag[i];
            sy += s * y;
        }
        project(&mut c);
        report.objective.push(objective(&c, &ac));
        alpha = if sy > 0.0 { sds / sy } else { 1.0 };
        report.iterations += 1;
        res = pg_norm(&c, &g);
    }
    // clipping can move c by round-off; refresh the gradient for the report
    ac = a.mul_vec(&c);
    for i in 0..n {
        g[i] = ac[i] - b[i];
    }
    report.projected_gradient_norm = pg_norm(&c, &g);
    report.converged = report.projected_gradient_norm <= stop;
    report.active_constraints = (0..n).filter(|&i| c[i] <= lo[i] || c[i] >= hi[i]).count();

    let mut rho = theta.values().to_vec();
    for (k, ci) in c.iter().enumerate() {
        let r = rho[nn + k] + ci;
        rho[nn + k] = r.clamp(bounds.lower, bounds.upper);
    }
    Ok((SpaceTimeField::new(theta.tgrid().clone(), grid, rho)?, report))
}
