mod common;

use nalgebra::DVector;
use optiflow::spacetime_lsq::solve_constrained;

#[test]
fn projected_gradient_matches_exhaustive_box_minimum() {
    let mut active = 0;
    for seed in 0..6 {
        let toy = common::toy(seed);
        assert_eq!(toy.b.len(), 8);
        let a = common::dense(toy.a.csr());
        let b = DVector::from_column_slice(&toy.b);
        let (c_star, j_star) = common::box_qp_exhaustive(&a, &b, &toy.lo, &toy.hi);
        let (rho, rep) = solve_constrained(&toy.a, &toy.b, &toy.theta, &toy.bounds, 1e-12).unwrap();
        assert!(rep.converged, "seed {seed}: {rep:?}");
        let c = DVector::from_fn(8, |i, _| rho.values()[4 + i] - toy.theta.values()[4 + i]);
        let dc = (&c - &c_star).amax();
        assert!(dc <= 1e-4, "seed {seed}: |c - c*| = {dc}");
        let j = common::quad_objective(&a, &b, &c);
        assert!(j <= j_star + 1e-10, "seed {seed}: {j} vs {j_star}");
        active += rep.active_constraints;
    }
    assert!(active > 0, "the toy boxes never bind");
}

#[test]
fn no_sampled_point_beats_the_solver() {
    let toy = common::toy(1);
    let a = common::dense(toy.a.csr());
    let b = DVector::from_column_slice(&toy.b);
    let (rho, _) = solve_constrained(&toy.a, &toy.b, &toy.theta, &toy.bounds, 1e-12).unwrap();
    let c = DVector::from_fn(8, |i, _| rho.values()[4 + i] - toy.theta.values()[4 + i]);
    let j = common::quad_objective(&a, &b, &c);
    let sampled = common::box_qp_grid_search(&a, &b, &toy.lo, &toy.hi, 5);
    assert!(j <= sampled + 1e-12, "{j} vs {sampled}");
}

/// Quarter turn of a smooth bump under a divergence-free rotation, where
/// both backends target the same exact density.
fn rotation_errors(n: usize) -> (f64, f64, f64) {
    use optiflow::characteristics::{transport_representation, FlowConfig, VelocityTimeline};
    use optiflow::pipeline::residual;
    use optiflow::spacetime_lsq::{assemble_av, assemble_lsq_rhs, BoundConstraints};
    use optiflow::{Grid2D, ScalarField, SpaceTimeField, TimeGrid, VelocityField};
    use std::f64::consts::FRAC_PI_2;

    let grid = Grid2D::unit_square(n).unwrap();
    let tg = TimeGrid::new(3 * n / 2).unwrap();
    let bump = |x: f64, y: f64| {
        let r2 = (x - 0.4).powi(2) + y * y;
        if r2 < 0.35f64.powi(2) {
            1.0 + (-r2 / (0.35f64.powi(2) - r2)).exp()
        } else {
            1.0
        }
    };
    let exact_at = |t: f64| {
        let (s, c) = (FRAC_PI_2 * t).sin_cos();
        ScalarField::from_fn(grid, move |x, y| bump(c * x + s * y, -s * x + c * y))
    };
    let exact: Vec<_> = tg.knots().iter().map(|&t| exact_at(t)).collect();
    let exact = SpaceTimeField::from_slices(tg.clone(), &exact).unwrap();
    let v = VelocityTimeline::steady(
        tg.clone(),
        VelocityField::from_fn(grid, |x, y| [-FRAC_PI_2 * y, FRAC_PI_2 * x]),
    );
    let (r0, r1) = (exact.slice_field(0), exact.slice_field(tg.nt()));

    let chars = transport_representation(&v, &r0, &r1, &FlowConfig::default()).unwrap();
    let theta = SpaceTimeField::linear_blend(tg, &r0, &r1).unwrap();
    let a = assemble_av(&v);
    let b = assemble_lsq_rhs(&v, &theta).unwrap();
    let bounds = BoundConstraints { lower: 0.5, upper: 3.0 };
    let (lsq, rep) = solve_constrained(&a, &b, &theta, &bounds, 1e-8).unwrap();
    assert!(rep.converged);
    (
        residual(&chars, &lsq).unwrap(),
        residual(&chars, &exact).unwrap(),
        residual(&lsq, &exact).unwrap(),
    )
}

#[test]
fn backends_converge_together_for_divergence_free_flow() {
    let runs: Vec<_> = [10, 20, 40].into_iter().map(rotation_errors).collect();
    for w in runs.windows(2) {
        let ((gap0, c0, l0), (gap1, c1, l1)) = (w[0], w[1]);
        assert!(gap1 < gap0, "{runs:?}");
        assert!(c1 < c0 && l1 < l0, "{runs:?}");
    }
    assert!(runs[2].0 < 0.01, "{runs:?}");
}
