//! Flow of a time-dependent velocity and the least-squares transport blend.
//!
//! `X(s; t, x)` is the position at time `s` of the trajectory of `v` that
//! passes through `x` at time `t`. Along each trajectory the transport
//! equation reduces to `r'(s) = 0` with two end conditions, whose
//! least-squares solution is the linear blend
//! `rho(t, x) = (1 - t) rho0(X(0; t, x)) + t rho1(X(1; t, x))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{blend, Grid2D, Point, ScalarField, SpaceTimeField, TimeGrid, VelocityField};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// RK4 substeps per time element.
    pub ode_steps_per_slice: usize,
    /// Clamp trajectories and velocity queries to the closed domain instead
    /// of failing.
    pub clamp_to_domain: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            ode_steps_per_slice: 2,
            clamp_to_domain: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ode_steps_per_slice == 0 {
            return Err(Error::InvalidParameter("ode_steps_per_slice must be >= 1".into()));
        }
        Ok(())
    }
}

/// One velocity field per time knot, linear in time between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTimeline {
    tgrid: TimeGrid,
    slices: Vec<VelocityField>,
}

impl VelocityTimeline {
    pub fn new(tgrid: TimeGrid, slices: Vec<VelocityField>) -> Result<Self> {
        if slices.len() != tgrid.nt() + 1 {
            return Err(Error::GridMismatch(format!(
                "expected {} velocity slices, got {}",
                tgrid.nt() + 1,
                slices.len()
            )));
        }
        let grid = *slices[0].grid();
        for s in &slices[1..] {
            grid.check_same(s.grid())?;
        }
        Ok(VelocityTimeline { tgrid, slices })
    }

    pub fn zeros(tgrid: TimeGrid, grid: Grid2D) -> Self {
        let slices = vec![VelocityField::zeros(grid); tgrid.nt() + 1];
        VelocityTimeline { tgrid, slices }
    }

    /// The same field at every knot.
    pub fn steady(tgrid: TimeGrid, field: VelocityField) -> Self {
        let slices = vec![field; tgrid.nt() + 1];
        VelocityTimeline { tgrid, slices }
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn grid(&self) -> &Grid2D {
        self.slices[0].grid()
    }

    pub fn slices(&self) -> &[VelocityField] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &VelocityField {
        &self.slices[k]
    }

    pub fn max_norm(&self) -> f64 {
        self.slices.iter().map(|s| s.max_norm()).fold(0.0, f64::max)
    }

    /// Velocity at time `s` and position `p`: linear in time between the
    /// bracketing knots, bilinear in space.
    pub fn velocity_at(&self, s: f64, p: Point, clamp: bool) -> Result<Point> {
        if !clamp && !self.grid().contains(p) {
            return Err(Error::OutsideDomain { x: p[0], y: p[1] });
        }
        Ok(self.sample(s, p))
    }

    #[inline]
    fn sample(&self, s: f64, p: Point) -> Point {
        let grid = self.grid();
        let (k, w) = self.tgrid.locate(s);
        let (i, j, fx, fy) = grid.locate(grid.clamp(p));
        let n00 = grid.index(i, j);
        let row = grid.nodes_x();
        let nodes = [n00, n00 + 1, n00 + row, n00 + row + 1];
        let weights = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let at = |f: &VelocityField| {
            let (mut u, mut v) = (0.0, 0.0);
            for (&n, &c) in nodes.iter().zip(&weights) {
                u += c * f.vx()[n];
                v += c * f.vy()[n];
            }
            [u, v]
        };
        let a = at(&self.slices[k]);
        if w == 0.0 {
            return a;
        }
        let b = at(&self.slices[k + 1]);
        [(1.0 - w) * a[0] + w * b[0], (1.0 - w) * a[1] + w * b[1]]
    }
}

/// Integrate `dX/ds = v(s, X)` from `(t, x)` to time `s_target` with the
/// classical fourth-order Runge-Kutta scheme, using
/// `ceil(|s_target - t| nt) * ode_steps_per_slice` equal steps.
pub fn trace(v: &VelocityTimeline, s_target: f64, t: f64, x: Point, cfg: &FlowConfig) -> Result<Point> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&s_target) || !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "trace times ({t} -> {s_target}) outside [0, 1]"
        )));
    }
    if cfg.clamp_to_domain {
        Ok(trace_clamped(v, s_target, t, x, cfg.ode_steps_per_slice))
    } else {
        trace_strict(v, s_target, t, x, cfg.ode_steps_per_slice)
    }
}

fn substeps(v: &VelocityTimeline, s_target: f64, t: f64, steps_per_slice: usize) -> usize {
    let nt = v.tgrid.nt() as f64;
    // the epsilon keeps knot-to-knot spans from rounding up an extra element
    let elements = ((s_target - t).abs() * nt - 1e-9).ceil().max(1.0) as usize;
    elements * steps_per_slice
}

#[inline]
fn trace_clamped(v: &VelocityTimeline, s_target: f64, t: f64, x: Point, steps_per_slice: usize) -> Point {
    if s_target == t {
        return x;
    }
    let grid = *v.grid();
    let n = substeps(v, s_target, t, steps_per_slice);
    let h = (s_target - t) / n as f64;
    let mut p = grid.clamp(x);
    let mut s = t;
    let at = |s: f64, p: Point| v.sample(s, grid.clamp(p));
    for step in 0..n {
        let k1 = at(s, p);
        let k2 = at(s + 0.5 * h, [p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]]);
        let k3 = at(s + 0.5 * h, [p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]]);
        let s_next = if step + 1 == n { s_target } else { t + (step + 1) as f64 * h };
        let k4 = at(s_next, [p[0] + h * k3[0], p[1] + h * k3[1]]);
        p = grid.clamp([
            p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]);
        s = s_next;
    }
    p
}

fn trace_strict(v: &VelocityTimeline, s_target: f64, t: f64, x: Point, steps_per_slice: usize) -> Result<Point> {
    if s_target == t {
        return Ok(x);
    }
    let n = substeps(v, s_target, t, steps_per_slice);
    let h = (s_target - t) / n as f64;
    let mut p = x;
    let mut s = t;
    let at = |s: f64, p: Point| v.velocity_at(s, p, false);
    for step in 0..n {
        let k1 = at(s, p)?;
        let k2 = at(s + 0.5 * h, [p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]])?;
        let k3 = at(s + 0.5 * h, [p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]])?;
        let s_next = if step + 1 == n { s_target } else { t + (step + 1) as f64 * h };
        let k4 = at(s_next, [p[0] + h * k3[0], p[1] + h * k3[1]])?;
        p = [
            p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        s = s_next;
    }
    if v.grid().contains(p) {
        Ok(p)
    } else {
        Err(Error::OutsideDomain { x: p[0], y: p[1] })
    }
}

/// Evaluate the least-squares transport solution at every knot and node:
/// trace back to `s = 0`, forward to `s = 1`, sample the end images
/// bilinearly and blend with weights `(1 - t_k, t_k)`.
///
/// At `t = 0` and `t = 1` only one end is traced, and that trace is the
/// identity, so the end slices reproduce `r0` and `r1` bitwise.
pub fn transport_representation(
    v: &VelocityTimeline,
    r0: &ScalarField,
    r1: &ScalarField,
    cfg: &FlowConfig,
) -> Result<SpaceTimeField> {
    cfg.validate()?;
    let grid = *v.grid();
    grid.check_same(r0.grid())?;
    grid.check_same(r1.grid())?;
    let tgrid = v.tgrid.clone();
    let nn = grid.num_nodes();
    let steps = cfg.ode_steps_per_slice;
    // every trajectory of a zero field is a point
    let still = v.max_norm() == 0.0;
    let values = par::map_range((tgrid.nt() + 1) * nn, |idx| {
        let (k, node) = (idx / nn, idx % nn);
        let t = tgrid.knot(k);
        if still {
            return blend(r0.values()[node], r1.values()[node], t);
        }
        let x = grid.node(node);
        let a = if t < 1.0 {
            r0.sample_unchecked(trace_clamped(v, 0.0, t, x, steps))
        } else {
            0.0
        };
        let b = if t > 0.0 {
            r1.sample_unchecked(trace_clamped(v, 1.0, t, x, steps))
        } else {
            0.0
        };
        blend(a, b, t)
    });
    SpaceTimeField::new(tgrid, grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Grid2D {
        Grid2D::unit_square(n).unwrap()
    }

    #[test]
    fn velocity_time_blend() {
        let g = square(4);
        let tg = TimeGrid::new(1).unwrap();
        let v = VelocityTimeline::new(
            tg,
            vec![
                VelocityField::from_fn(g, |_, _| [1.0, 0.0]),
                VelocityField::from_fn(g, |_, _| [0.0, 1.0]),
            ],
        )
        .unwrap();
        let u = v.velocity_at(0.5, g.node(7), true).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-15 && (u[1] - 0.5).abs() < 1e-15);
        assert!(v.velocity_at(0.5, [2.0, 0.0], false).is_err());
        assert_eq!(v.velocity_at(0.5, [2.0, 0.0], true).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn zero_and_steady_timelines() {
        let g = square(3);
        let tg = TimeGrid::new(5).unwrap();
        let z = VelocityTimeline::zeros(tg.clone(), g);
        assert_eq!(z.velocity_at(0.37, [0.1, 0.2], true).unwrap(), [0.0, 0.0]);
        let f = VelocityField::from_fn(g, |x, y| [x * y, x - y]);
        let s = VelocityTimeline::steady(tg, f.clone());
        let p = [0.3, -0.6];
        let (a, b) = (s.velocity_at(0.81, p, true).unwrap(), f.sample_clamped(p));
        assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
    }

    #[test]
    fn trace_identity_and_constant_flow() {
        let g = square(4);
        let tg = TimeGrid::new(10).unwrap();
        let v = VelocityTimeline::steady(tg, VelocityField::from_fn(g, |_, _| [1.0, 0.0]));
        let cfg = FlowConfig::default();
        assert_eq!(trace(&v, 0.3, 0.3, [0.1, 0.2], &cfg).unwrap(), [0.1, 0.2]);
        let p = trace(&v, 0.7, 0.2, [-0.5, 0.25], &cfg).unwrap();
        assert!((p[0] - 0.0).abs() < 1e-14 && (p[1] - 0.25).abs() < 1e-15);
        let q = trace(&v, 0.0, 0.4, [0.1, 0.0], &cfg).unwrap();
        assert!((q[0] + 0.3).abs() < 1e-14);
    }

    #[test]
    fn strict_trace_reports_exit() {
        let g = square(4);
        let v = VelocityTimeline::steady(TimeGrid::new(4).unwrap(), VelocityField::from_fn(g, |_, _| [3.0, 0.0]));
        let strict = FlowConfig {
            clamp_to_domain: false,
            ..Default::default()
        };
        assert!(trace(&v, 1.0, 0.0, [0.0, 0.0], &strict).is_err());
        let p = trace(&v, 1.0, 0.0, [0.0, 0.0], &FlowConfig::default()).unwrap();
        assert_eq!(p, [1.0, 0.0]);
    }

    #[test]
    fn representation_with_zero_velocity_is_the_blend() {
        let g = square(6);
        let tg = TimeGrid::new(4).unwrap();
        let r0 = ScalarField::from_fn(g, |x, y| 1.0 + x * x + 0.5 * y);
        let r1 = ScalarField::from_fn(g, |x, y| 2.0 - x * y);
        let rho = transport_representation(&VelocityTimeline::zeros(tg.clone(), g), &r0, &r1, &FlowConfig::default())
            .unwrap();
        for (k, &t) in tg.knots().iter().enumerate() {
            let blend = ScalarField::linear_blend(&r0, &r1, t).unwrap();
            for (a, b) in rho.slice(k).iter().zip(blend.values()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert_eq!(rho.slice(0), r0.values());
        assert_eq!(rho.slice(4), r1.values());
    }

    #[test]
    fn representation_of_constants_is_constant() {
        let g = square(5);
        let tg = TimeGrid::new(3).unwrap();
        let v = VelocityTimeline::steady(tg, VelocityField::from_fn(g, |x, y| [-y, x]));
        let c = ScalarField::constant(g, 0.7);
        let rho = transport_representation(&v, &c, &c, &FlowConfig::default()).unwrap();
        assert!(rho.values().iter().all(|&r| (r - 0.7).abs() < 1e-15));
    }
}
