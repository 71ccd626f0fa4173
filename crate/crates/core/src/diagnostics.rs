//! Energies and norms of a computed transport.

use serde::{Deserialize, Serialize};

use crate::characteristics::VelocityTimeline;
use crate::elliptic::{assemble_load, assemble_weighted_stiffness, solve_dirichlet};
use crate::error::Result;
use crate::field::{ScalarField, SpaceTimeField};
use crate::pipeline::{potential_velocity, BoundaryMode, Method, TransportSolution};

/// `int_0^1 int rho |v|^2`, trapezoidal in time and space.
pub fn kinetic_energy(sol: &TransportSolution) -> f64 {
    kinetic_energy_of(&sol.rho, &sol.velocity)
}

pub fn kinetic_energy_of(rho: &SpaceTimeField, v: &VelocityTimeline) -> f64 {
    let grid = rho.grid();
    let tg = rho.tgrid();
    (0..=tg.nt())
        .map(|k| {
            let r = rho.slice(k);
            let s = v.slice(k);
            let inner: f64 = (0..grid.num_nodes())
                .map(|n| grid.node_weight(n) * r[n] * (s.vx()[n].powi(2) + s.vy()[n].powi(2)))
                .sum();
            tg.weight(k) * inner
        })
        .sum()
}

fn potential_boundary(sol: &TransportSolution) -> BoundaryMode {
    match sol.method {
        Method::FixedPoint { boundary, .. } => boundary,
        Method::DacorognaMoser => BoundaryMode::Neumann,
    }
}

/// `int_0^1 int rho |grad phi|^2` with the same nodal gradient as the
/// velocity step; equal to [`kinetic_energy`] whenever `v = grad phi`.
pub fn weighted_dual_energy(sol: &TransportSolution) -> f64 {
    let boundary = potential_boundary(sol);
    let grid = sol.rho.grid();
    let tg = sol.rho.tgrid();
    (0..=tg.nt())
        .map(|k| {
            let g = potential_velocity(&sol.potential[k], boundary);
            let r = sol.rho.slice(k);
            let inner: f64 = (0..grid.num_nodes())
                .map(|n| grid.node_weight(n) * r[n] * (g.vx()[n].powi(2) + g.vy()[n].powi(2)))
                .sum();
            tg.weight(k) * inner
        })
        .sum()
}

/// `int_0^1 ||grad phi||^2_{L2} dt`, each slice evaluated exactly for the
/// bilinear interpolant as `phi^T K phi` with the unit-coefficient stiffness.
pub fn potential_energy(sol: &TransportSolution) -> Result<f64> {
    let grid = *sol.rho.grid();
    let k = assemble_weighted_stiffness(&grid, &ScalarField::constant(grid, 1.0))?;
    let tg = sol.rho.tgrid();
    Ok((0..=tg.nt())
        .map(|n| tg.weight(n) * k.energy(sol.potential[n].values()))
        .sum())
}

/// `||f||_{H^-1}`: solve `-lap w = f`, `w = 0` on the boundary, and return
/// `sqrt(w^T K w)`.
pub fn h_minus1_norm(f: &ScalarField, tol: f64) -> Result<f64> {
    let grid = *f.grid();
    let k = assemble_weighted_stiffness(&grid, &ScalarField::constant(grid, 1.0))?;
    let b = assemble_load(&grid, f)?;
    let (w, _) = solve_dirichlet(&k, &b, 0.0, tol);
    Ok(k.energy(w.values()).max(0.0).sqrt())
}

/// `max_t |int rho(t) - int rho0| / int rho0`.
pub fn mass_drift(rho: &SpaceTimeField, r0: &ScalarField) -> f64 {
    let m0 = r0.integrate();
    (0..=rho.tgrid().nt())
        .map(|k| ((rho.slice_field(k).integrate() - m0) / m0).abs())
        .fold(0.0, f64::max)
}

/// Energy budget of a transport, as printed by the `diagnose` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub kinetic_energy: f64,
    pub weighted_dual_energy: f64,
    /// `int_0^1 ||grad phi||^2 dt`.
    pub potential_energy: f64,
    /// `||rho1 - rho0||^2_{H^-1}`.
    pub h_minus1_sq: f64,
    /// `(1 - 5h) ||rho1 - rho0||^2_{H^-1}`.
    pub jensen_lower_bound: f64,
    pub jensen_holds: bool,
    /// `potential_energy / h_minus1_sq`.
    pub jensen_ratio: f64,
    pub mass_drift: f64,
}

pub fn diagnose(sol: &TransportSolution, tol: f64) -> Result<DiagnosticsReport> {
    let nt = sol.rho.tgrid().nt();
    let r0 = sol.rho.slice_field(0);
    let r1 = sol.rho.slice_field(nt);
    let h = sol.rho.grid().hx().max(sol.rho.grid().hy());
    let hm1 = h_minus1_norm(&r1.zip_with(&r0, |a, b| a - b)?, tol)?;
    let h_minus1_sq = hm1 * hm1;
    let potential_energy = potential_energy(sol)?;
    let jensen_lower_bound = (1.0 - 5.0 * h) * h_minus1_sq;
    Ok(DiagnosticsReport {
        kinetic_energy: kinetic_energy(sol),
        weighted_dual_energy: weighted_dual_energy(sol),
        potential_energy,
        h_minus1_sq,
        jensen_lower_bound,
        jensen_holds: potential_energy >= jensen_lower_bound,
        jensen_ratio: if h_minus1_sq > 0.0 {
            potential_energy / h_minus1_sq
        } else {
            1.0
        },
        mass_drift: mass_drift(&sol.rho, &r0),
    })
}
