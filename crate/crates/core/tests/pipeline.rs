mod common;

use optiflow::bump::{generate_bump_pair, BumpParams};
use optiflow::diagnostics::{kinetic_energy, weighted_dual_energy};
use optiflow::elliptic::{assemble_load, assemble_weighted_stiffness};
use optiflow::pipeline::*;
use optiflow::spacetime_lsq::BoundConstraints;
use optiflow::{Grid2D, ScalarField, SpaceTimeField, TimeGrid};
use rand::Rng;

fn small_bump(n: usize, beta: f64) -> (ScalarField, ScalarField) {
    generate_bump_pair(&Grid2D::unit_square(n).unwrap(), &BumpParams::with_beta(beta)).unwrap()
}

#[test]
fn equal_images_are_a_fixed_point() {
    let mut r = common::rng(9);
    let grid = Grid2D::unit_square(12).unwrap();
    let img = common::smooth_field(grid, &mut r, 1.0, 0.5);
    for backend in [TransportBackend::Characteristics, TransportBackend::SpacetimeLsq] {
        let cfg = SolverConfig { nt: 8, transport_backend: backend, ..Default::default() };
        let sol = fixed_point_transport(&img, &img, &cfg).unwrap();
        assert!(sol.report.converged, "{backend:?}");
        assert_eq!(sol.report.iterations, 1);
        assert_eq!(sol.report.outer_residuals, vec![0.0]);
        assert!(sol.velocity.max_norm() <= 1e-10);
        for k in 0..=8 {
            assert_eq!(sol.rho.slice(k), img.values());
        }
    }
}

#[test]
fn bump_run_invariants() {
    let (r0, r1) = small_bump(16, 1.0);
    let cfg = SolverConfig { nt: 12, ..Default::default() };
    let sol = fixed_point_transport(&r0, &r1, &cfg).unwrap();
    let rep = &sol.report;
    assert!(rep.converged, "{rep:?}");
    assert_eq!(rep.iterations, rep.outer_residuals.len());
    assert!(rep.outer_residuals.iter().all(|r| r.is_finite()));
    assert!(*rep.outer_residuals.last().unwrap() <= cfg.tol_outer);
    assert_eq!(rep.kinetic_energies.len(), rep.iterations);
    assert_eq!(sol.rho.slice(0), r0.values());
    assert_eq!(sol.rho.slice(12), r1.values());
    assert!(sol.rho.min() >= 1.0 && sol.rho.max() <= 2.0);
    for s in sol.velocity.slices() {
        assert_eq!(s.max_boundary_normal(), 0.0);
    }
    // v = grad phi at every knot, so the two energies coincide
    let (ke, wd) = (kinetic_energy(&sol), weighted_dual_energy(&sol));
    assert!((ke - wd).abs() <= 1e-12 * ke, "{ke} {wd}");
    assert!((ke - rep.kinetic_energies.last().unwrap()).abs() <= 1e-12 * ke);
}

#[test]
fn runs_are_bitwise_deterministic() {
    let (r0, r1) = small_bump(10, 0.5);
    let cfg = SolverConfig { nt: 6, ..Default::default() };
    let a = fixed_point_transport(&r0, &r1, &cfg).unwrap();
    let b = fixed_point_transport(&r0, &r1, &cfg).unwrap();
    assert_eq!(a.rho, b.rho);
    assert_eq!(a.report, b.report);
}

#[test]
fn lsq_backend_respects_bounds_and_endpoints() {
    let (r0, r1) = small_bump(10, 1.0);
    let bounds = BoundConstraints::new(1.0, 1.6).unwrap();
    let cfg = SolverConfig {
        nt: 8,
        transport_backend: TransportBackend::SpacetimeLsq,
        bounds: Some(bounds),
        ..Default::default()
    };
    let sol = fixed_point_transport(&r0, &r1, &cfg).unwrap();
    assert_eq!(sol.rho.slice(0), r0.values());
    assert_eq!(sol.rho.slice(8), r1.values());
    let nn = r0.grid().num_nodes();
    assert!(sol.rho.values()[nn..8 * nn].iter().all(|&r| (1.0..=1.6).contains(&r)));
    assert_eq!(sol.report.lsq_iterations.len(), sol.report.iterations);
}

#[test]
fn dirichlet_variant_runs_and_keeps_endpoints() {
    let (r0, r1) = small_bump(10, 1.0);
    let cfg = SolverConfig { nt: 6, boundary: BoundaryMode::DirichletCompat, ..Default::default() };
    let sol = fixed_point_transport(&r0, &r1, &cfg).unwrap();
    assert_eq!(sol.rho.slice(0), r0.values());
    assert!(sol.report.outer_residuals.iter().all(|r| r.is_finite()));
}

#[test]
fn mass_mismatch_is_a_warning() {
    let (r0, _) = small_bump(8, 1.0);
    let r1 = r0.map(|v| 1.05 * v);
    let sol = fixed_point_transport(&r0, &r1, &SolverConfig { nt: 4, ..Default::default() }).unwrap();
    assert!(sol.report.warnings.iter().any(|w| w.contains("mass")), "{:?}", sol.report.warnings);
}

#[test]
fn baseline_examples() {
    let (r0, r1) = small_bump(12, 0.5);
    let cfg = SolverConfig { nt: 10, ..Default::default() };
    let same = dacorogna_moser(&r0, &r0, &cfg).unwrap();
    assert!(same.velocity.max_norm() <= 1e-12);

    let sol = dacorogna_moser(&r0, &r1, &cfg).unwrap();
    assert_eq!(sol.report.iterations, 0);
    let mid = sol.rho.slice(5);
    for (k, m) in mid.iter().enumerate() {
        assert_eq!(*m, 0.5 * r0.values()[k] + 0.5 * r1.values()[k]);
    }
    // the flux rho v is the same potential gradient at every knot
    let flux0: Vec<f64> = sol.velocity.slice(0).vx().iter().zip(sol.rho.slice(0)).map(|(v, r)| v * r).collect();
    for k in 1..=10 {
        let fk: Vec<f64> = sol.velocity.slice(k).vx().iter().zip(sol.rho.slice(k)).map(|(v, r)| v * r).collect();
        for (a, b) in fk.iter().zip(&flux0) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn baseline_continuity_residual_in_weak_form() {
    let (r0, r1) = small_bump(20, 0.2);
    let grid = *r0.grid();
    let sol = dacorogna_moser(&r0, &r1, &SolverConfig { nt: 10, tol_pcg: 1e-10, ..Default::default() }).unwrap();
    let k = assemble_weighted_stiffness(&grid, &ScalarField::constant(grid, 1.0)).unwrap();
    let dt = r1.zip_with(&r0, |a, b| a - b).unwrap();
    let b = assemble_load(&grid, &dt).unwrap();
    let w = grid.node_weights();
    let m = b.iter().sum::<f64>() / w.iter().sum::<f64>();
    for phi in &sol.potential {
        // weak divergence of rho v = grad phi against every hat function
        let div = k.mul_vec(phi.values());
        let res: f64 = div.iter().zip(&b).zip(&w).map(|((d, bi), wi)| (d - (bi - m * wi)).powi(2)).sum::<f64>().sqrt();
        let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(res <= 1e-6 * scale, "{res} vs {scale}");
    }
}

#[test]
fn residual_matches_direct_quadrature() {
    let mut r = common::rng(4);
    let grid = Grid2D::new(5, 7, [0.0, 2.0], [-1.0, 0.5]).unwrap();
    let tg = TimeGrid::new(4).unwrap();
    let n = 5 * grid.num_nodes();
    let a = SpaceTimeField::new(tg.clone(), grid, (0..n).map(|_| r.gen_range(0.5..2.0)).collect()).unwrap();
    let b = SpaceTimeField::new(tg.clone(), grid, (0..n).map(|_| r.gen_range(0.5..2.0)).collect()).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..=4 {
        for i in 0..=5 {
            for j in 0..=7 {
                let wt = if k == 0 || k == 4 { 0.125 } else { 0.25 };
                let wx = if i == 0 || i == 5 { 0.2 } else { 0.4 };
                let wy = if j == 0 || j == 7 { 0.75 / 7.0 } else { 1.5 / 7.0 };
                let idx = k * grid.num_nodes() + j * 6 + i;
                num += wt * wx * wy * (a.values()[idx] - b.values()[idx]).powi(2);
                den += wt * wx * wy * b.values()[idx].powi(2);
            }
        }
    }
    let expected = (num / den).sqrt();
    assert!((residual(&a, &b).unwrap() - expected).abs() <= 1e-12 * expected);
}
