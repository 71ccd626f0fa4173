//! The outer fixed-point iteration and the Dacorogna-Moser baseline.
//!
//! One outer iteration, starting from a density `rho` known at every knot:
//!
//! 1. `d_t rho` at the knots by second-order differences in time;
//! 2. per knot, `-div(rho grad phi) = d_t rho` (homogeneous Neumann by
//!    default, or the Dirichlet variant `phi = C(t)` on the boundary);
//! 3. `v = grad phi`, with the normal component zeroed on the boundary in
//!    the Neumann case;
//! 4. the new density from the selected transport backend.
//!
//! The iteration starts from the linear blend and stops once the relative
//! `L2(Q)` change of the density drops below `tol_outer`.

use serde::{Deserialize, Serialize};

use crate::characteristics::{transport_representation, FlowConfig, VelocityTimeline};
use crate::diagnostics;
use crate::elliptic::{
    assemble_load, assemble_weighted_stiffness, compatibility_constant, solve_dirichlet, solve_neumann_from,
};
use crate::error::{Error, Result};
use crate::field::{ScalarField, SpaceTimeField, TimeGrid, VelocityField};
use crate::par;
use crate::spacetime_lsq::{assemble_av, assemble_lsq_rhs, solve_constrained_from, BoundConstraints, DEFAULT_MAX_PG_ITER};

/// Relative mass mismatch of the end images above which a warning is recorded.
pub const MASS_MISMATCH_WARNING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportBackend {
    Characteristics,
    SpacetimeLsq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// `d phi / dn = 0`.
    Neumann,
    /// `phi = C(t)` on the boundary with the compatibility constant.
    DirichletCompat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nt: usize,
    pub tol_outer: f64,
    pub max_outer: usize,
    pub tol_pcg: f64,
    /// Projected-gradient tolerance of the space-time backend, relative to
    /// the load norm.
    pub tol_lsq: f64,
    pub transport_backend: TransportBackend,
    /// Density bounds for the space-time backend; the extrema of the two
    /// images when absent.
    pub bounds: Option<BoundConstraints>,
    pub flow: FlowConfig,
    pub boundary: BoundaryMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nt: 60,
            tol_outer: 0.01,
            max_outer: 100,
            tol_pcg: 1e-8,
            tol_lsq: 1e-6,
            transport_backend: TransportBackend::Characteristics,
            bounds: None,
            flow: FlowConfig::default(),
            boundary: BoundaryMode::Neumann,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 {
            return Err(Error::InvalidParameter("nt must be >= 1".into()));
        }
        for (name, v) in [
            ("tol_outer", self.tol_outer),
            ("tol_pcg", self.tol_pcg),
            ("tol_lsq", self.tol_lsq),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        self.flow.validate()
    }
}

/// How a [`TransportSolution`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    FixedPoint {
        backend: TransportBackend,
        boundary: BoundaryMode,
    },
    DacorognaMoser,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationReport {
    pub outer_residuals: Vec<f64>,
    pub kinetic_energies: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest relative deviation of `int rho(t)` from `int rho0` over the
    /// knots of the returned density.
    pub mass_drift: f64,
    /// Total PCG iterations of the velocity step, per outer iteration.
    pub pcg_iterations: Vec<usize>,
    /// Projected-gradient iterations of the space-time backend, per outer
    /// iteration (empty for the characteristics backend).
    pub lsq_iterations: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub rho: SpaceTimeField,
    pub velocity: VelocityTimeline,
    /// Velocity potential at every knot.
    pub potential: Vec<ScalarField>,
    pub method: Method,
    pub report: IterationReport,
}

/// Relative `L2(Q)` distance `||a - b|| / max(||b||, eps)`, trapezoidal in
/// time and space.
pub fn residual(a: &SpaceTimeField, b: &SpaceTimeField) -> Result<f64> {
    if a.grid() != b.grid() || a.tgrid() != b.tgrid() {
        return Err(Error::GridMismatch("residual of fields on different space-time grids".into()));
    }
    let grid = a.grid();
    let tg = a.tgrid();
    let nn = grid.num_nodes();
    let (mut diff, mut base) = (0.0, 0.0);
    for k in 0..=tg.nt() {
        let wt = tg.weight(k);
        let (sa, sb) = (a.slice(k), b.slice(k));
        for node in 0..nn {
            let w = wt * grid.node_weight(node);
            let d = sa[node] - sb[node];
            diff += w * d * d;
            base += w * sb[node] * sb[node];
        }
    }
    Ok(diff.sqrt() / base.sqrt().max(f64::EPSILON))
}

fn check_inputs(r0: &ScalarField, r1: &ScalarField, cfg: &SolverConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    r0.grid().check_same(r1.grid())?;
    for (name, f) in [("rho0", r0), ("rho1", r1)] {
        if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be strictly positive, found {value} at node {node}"
            )));
        }
    }
    let (m0, m1) = (r0.integrate(), r1.integrate());
    let mut warnings = Vec::new();
    if ((m1 - m0) / m0).abs() > MASS_MISMATCH_WARNING {
        warnings.push(format!(
            "image masses differ by {:.3}%: the velocity loads are projected to zero mean",
            100.0 * ((m1 - m0) / m0).abs()
        ));
    }
    Ok(warnings)
}

fn default_bounds(r0: &ScalarField, r1: &ScalarField) -> BoundConstraints {
    let lower = r0.min().min(r1.min());
    let mut upper = r0.max().max(r1.max());
    if upper <= lower {
        upper = lower + (lower * 1e-6).max(1e-12);
    }
    BoundConstraints { lower, upper }
}

/// Velocity of a potential: nodal gradient, normal part removed on the
/// boundary for the Neumann problem.
pub fn potential_velocity(phi: &ScalarField, boundary: BoundaryMode) -> VelocityField {
    match boundary {
        BoundaryMode::Neumann => phi.gradient().with_zero_normal(),
        BoundaryMode::DirichletCompat => phi.gradient(),
    }
}

struct VelocityStep {
    potential: Vec<ScalarField>,
    velocity: VelocityTimeline,
    pcg_iterations: usize,
    incompatible: bool,
    stalled: bool,
}

fn velocity_step(rho: &SpaceTimeField, cfg: &SolverConfig, guess: Option<&[ScalarField]>) -> Result<VelocityStep> {
    let grid = *rho.grid();
    let tgrid = rho.tgrid().clone();
    let dt_rho = rho.time_derivative();
    let per_knot = par::map_range(tgrid.nt() + 1, |k| -> Result<_> {
        let coeff = rho.slice_field(k);
        let a = assemble_weighted_stiffness(&grid, &coeff)?;
        let b = assemble_load(&grid, &dt_rho[k])?;
        match cfg.boundary {
            BoundaryMode::Neumann => {
                let g = guess.map(|g| g[k].values());
                Ok(solve_neumann_from(&a, &b, cfg.tol_pcg, g))
            }
            BoundaryMode::DirichletCompat => {
                let (c, rep_c) = compatibility_constant(&grid, &coeff, &dt_rho[k], cfg.tol_pcg)?;
                let (phi, mut rep) = solve_dirichlet(&a, &b, c, cfg.tol_pcg);
                rep.iterations += rep_c.iterations;
                rep.converged &= rep_c.converged;
                Ok((phi, rep))
            }
        }
    });
    let mut potential = Vec::with_capacity(per_knot.len());
    let mut pcg_iterations = 0;
    let mut incompatible = false;
    let mut stalled = false;
    for r in per_knot {
        let (phi, rep) = r?;
        pcg_iterations += rep.iterations;
        incompatible |= rep.incompatible_rhs;
        stalled |= !rep.converged;
        potential.push(phi);
    }
    let slices = potential.iter().map(|p| potential_velocity(p, cfg.boundary)).collect();
    Ok(VelocityStep {
        potential,
        velocity: VelocityTimeline::new(tgrid, slices)?,
        pcg_iterations,
        incompatible,
        stalled,
    })
}

/// Alternate velocity and density steps from the linear blend until the
/// relative change of the density is at most `tol_outer`.
///
/// Without convergence after `max_outer` iterations the iterate with the
/// smallest change is returned with `converged = false`.
pub fn fixed_point_transport(r0: &ScalarField, r1: &ScalarField, cfg: &SolverConfig) -> Result<TransportSolution> {
    let mut warnings = check_inputs(r0, r1, cfg)?;
    let tgrid = TimeGrid::new(cfg.nt)?;
    let bounds = cfg.bounds.unwrap_or_else(|| default_bounds(r0, r1));
    let theta = SpaceTimeField::linear_blend(tgrid.clone(), r0, r1)?;
    let mut rho = theta.clone();
    let mut report = IterationReport::default();
    let mut best: Option<(f64, SpaceTimeField, VelocityStep)> = None;
    let mut last_potential: Option<Vec<ScalarField>> = None;
    let mut lsq_state: Option<Vec<f64>> = None;
    let mut flagged_incompatible = false;
    let mut flagged_stall = false;

    for _ in 0..cfg.max_outer {
        let step = velocity_step(&rho, cfg, last_potential.as_deref())?;
        if step.incompatible && !flagged_incompatible {
            flagged_incompatible = true;
            warnings.push("incompatible-rhs: velocity loads had a non-zero mean that was projected out".into());
        }
        if step.stalled && !flagged_stall {
            flagged_stall = true;
            warnings.push("a velocity solve stopped before reaching tol_pcg".into());
        }
        let next = match cfg.transport_backend {
            TransportBackend::Characteristics => transport_representation(&step.velocity, r0, r1, &cfg.flow)?,
            TransportBackend::SpacetimeLsq => {
                let a = assemble_av(&step.velocity);
                let b = assemble_lsq_rhs(&step.velocity, &theta)?;
                let (rho_h, lsq) = solve_constrained_from(
                    &a,
                    &b,
                    &theta,
                    &bounds,
                    cfg.tol_lsq,
                    lsq_state.as_deref(),
                    DEFAULT_MAX_PG_ITER,
                )?;
                let nn = theta.grid().num_nodes();
                lsq_state = Some(
                    rho_h.values()[nn..nn * cfg.nt]
                        .iter()
                        .zip(&theta.values()[nn..nn * cfg.nt])
                        .map(|(r, t)| r - t)
                        .collect(),
                );
                report.lsq_iterations.push(lsq.iterations);
                rho_h
            }
        };
        let res = residual(&next, &rho)?;
        report.outer_residuals.push(res);
        report.kinetic_energies.push(diagnostics::kinetic_energy_of(&next, &step.velocity));
        report.pcg_iterations.push(step.pcg_iterations);
        report.iterations += 1;
        last_potential = Some(step.potential.clone());
        rho = next;
        if best.as_ref().map_or(true, |(r, _, _)| res <= *r) {
            best = Some((res, rho.clone(), step));
        }
        if res <= cfg.tol_outer {
            report.converged = true;
            break;
        }
        if !res.is_finite() {
            warnings.push("outer residual is not finite; stopping".into());
            break;
        }
    }

    let (rho, step) = match best {
        Some((_, rho, step)) => (rho, step),
        None => {
            // max_outer == 0: report the initial blend with its velocity
            let step = velocity_step(&rho, cfg, None)?;
            (rho, step)
        }
    };
    report.mass_drift = diagnostics::mass_drift(&rho, r0);
    report.warnings = warnings;
    Ok(TransportSolution {
        rho,
        velocity: step.velocity,
        potential: step.potential,
        method: Method::FixedPoint {
            backend: cfg.transport_backend,
            boundary: cfg.boundary,
        },
        report,
    })
}

/// Dacorogna-Moser transport: linear blend density, one unweighted Neumann
/// solve `-lap phi = rho1 - rho0`, and `v(t) = grad phi / rho(t)`.
pub fn dacorogna_moser(r0: &ScalarField, r1: &ScalarField, cfg: &SolverConfig) -> Result<TransportSolution> {
    let warnings = check_inputs(r0, r1, cfg)?;
    let grid = *r0.grid();
    let tgrid = TimeGrid::new(cfg.nt)?;
    let rho = SpaceTimeField::linear_blend(tgrid.clone(), r0, r1)?;
    let a = assemble_weighted_stiffness(&grid, &ScalarField::constant(grid, 1.0))?;
    let dt_rho = r1.zip_with(r0, |a, b| a - b)?;
    let b = assemble_load(&grid, &dt_rho)?;
    let (phi, pcg) = solve_neumann_from(&a, &b, cfg.tol_pcg, None);
    let grad = potential_velocity(&phi, BoundaryMode::Neumann);
    let slices = (0..=tgrid.nt())
        .map(|k| grad.divided_by(&rho.slice_field(k)))
        .collect::<Result<Vec<_>>>()?;
    let velocity = VelocityTimeline::new(tgrid.clone(), slices)?;
    let mut report = IterationReport {
        converged: pcg.converged,
        pcg_iterations: vec![pcg.iterations],
        mass_drift: diagnostics::mass_drift(&rho, r0),
        warnings,
        ..Default::default()
    };
    if pcg.incompatible_rhs {
        report
            .warnings
            .push("incompatible-rhs: rho1 - rho0 had a non-zero mean that was projected out".into());
    }
    report.kinetic_energies.push(diagnostics::kinetic_energy_of(&rho, &velocity));
    Ok(TransportSolution {
        rho,
        velocity,
        potential: vec![phi; tgrid.nt() + 1],
        method: Method::DacorognaMoser,
        report,
    })
}
