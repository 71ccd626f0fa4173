#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use optiflow::characteristics::VelocityTimeline;
use optiflow::spacetime_lsq::{assemble_av, assemble_lsq_rhs, BoundConstraints, SpaceTimeMatrix};
use optiflow::sparse::CsrMatrix;
use optiflow::{Grid2D, ScalarField, SpaceTimeField, TimeGrid, VelocityField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let n = a.dim();
    DMatrix::from_fn(n, n, |i, j| a.get(i, j))
}

/// Weighted L2 norm of a nodal vector with trapezoidal weights.
pub fn l2(grid: &Grid2D, v: &[f64]) -> f64 {
    v.iter()
        .enumerate()
        .map(|(k, x)| grid.node_weight(k) * x * x)
        .sum::<f64>()
        .sqrt()
}

/// Smooth random field `c0 + sum a_k sin(k1 x + k2 y + phase)` bounded by
/// `[c0 - amp, c0 + amp]`.
pub fn smooth_field(grid: Grid2D, rng: &mut ChaCha8Rng, c0: f64, amp: f64) -> ScalarField {
    let modes: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.0..6.3),
            )
        })
        .collect();
    ScalarField::from_fn(grid, |x, y| {
        c0 + amp / 3.0 * modes.iter().map(|(a, k1, k2, p)| a * (k1 * x + k2 * y + p).sin()).sum::<f64>()
    })
}

/// Smooth random velocity, affine in time between two random fields.
pub fn smooth_timeline(grid: Grid2D, nt: usize, rng: &mut ChaCha8Rng, scale: f64) -> VelocityTimeline {
    let tg = TimeGrid::new(nt).unwrap();
    let f0 = (smooth_field(grid, rng, 0.0, scale), smooth_field(grid, rng, 0.0, scale));
    let f1 = (smooth_field(grid, rng, 0.0, scale), smooth_field(grid, rng, 0.0, scale));
    let slices = (0..=nt)
        .map(|k| {
            let t = tg.knot(k);
            let vx = f0.0.values().iter().zip(f1.0.values()).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            let vy = f0.1.values().iter().zip(f1.1.values()).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            VelocityField::new(grid, vx, vy).unwrap()
        })
        .collect();
    VelocityTimeline::new(tg, slices).unwrap()
}

/// The small bound-constrained space-time problem: one spatial cell and
/// three time elements, so 8 unknowns on the two interior layers.
pub struct Toy {
    pub a: SpaceTimeMatrix,
    pub b: Vec<f64>,
    pub theta: SpaceTimeField,
    pub bounds: BoundConstraints,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn toy(seed: u64) -> Toy {
    let mut r = rng(seed);
    let grid = Grid2D::new(1, 1, [-1.0, 1.0], [-1.0, 1.0]).unwrap();
    let v = smooth_timeline(grid, 3, &mut r, 1.5);
    let r0 = ScalarField::new(grid, (0..4).map(|_| r.gen_range(0.5..1.5)).collect()).unwrap();
    let r1 = ScalarField::new(grid, (0..4).map(|_| r.gen_range(0.5..1.5)).collect()).unwrap();
    let theta = SpaceTimeField::linear_blend(v.tgrid().clone(), &r0, &r1).unwrap();
    let a = assemble_av(&v);
    let b = assemble_lsq_rhs(&v, &theta).unwrap();
    let bounds = BoundConstraints::new(0.85, 1.15).unwrap();
    let th = &theta.values()[4..12];
    let lo = th.iter().map(|t| bounds.lower - t).collect();
    let hi = th.iter().map(|t| bounds.upper - t).collect();
    Toy { a, b, theta, bounds, lo, hi }
}

pub fn quad_objective(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> f64 {
    0.5 * c.dot(&(a * c)) - b.dot(c)
}

/// Exact minimiser of `J(c) = c'Ac/2 - b'c` over a box by enumerating all
/// `3^n` lower/upper/free assignments and keeping the best feasible
/// stationary point.
pub fn box_qp_exhaustive(a: &DMatrix<f64>, b: &DVector<f64>, lo: &[f64], hi: &[f64]) -> (DVector<f64>, f64) {
    let n = b.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut x = DVector::zeros(n);
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        for i in 0..n {
            match state[i] {
                0 => x[i] = lo[i],
                1 => x[i] = hi[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            let m = free.len();
            let aff = DMatrix::from_fn(m, m, |p, q| a[(free[p], free[q])]);
            let ax = a * &x;
            let rhs = DVector::from_fn(m, |p, _| b[free[p]] - ax[free[p]]);
            let Some(sol) = aff.cholesky().map(|ch| ch.solve(&rhs)) else { continue };
            for (p, &i) in free.iter().enumerate() {
                x[i] = sol[p];
            }
        }
        if (0..n).any(|i| x[i] < lo[i] - 1e-13 || x[i] > hi[i] + 1e-13) {
            continue;
        }
        let j = quad_objective(a, b, &x);
        if best.as_ref().is_none_or(|(_, bj)| j < *bj) {
            best = Some((x, j));
        }
    }
    best.expect("the box is non-empty")
}

/// Smallest `J` over the tensor grid with `m` points per coordinate.
pub fn box_qp_grid_search(a: &DMatrix<f64>, b: &DVector<f64>, lo: &[f64], hi: &[f64], m: usize) -> f64 {
    let n = b.len();
    let mut idx = vec![0usize; n];
    let mut best = f64::INFINITY;
    let mut x = DVector::zeros(n);
    loop {
        for i in 0..n {
            x[i] = lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (m - 1) as f64;
        }
        best = best.min(quad_objective(a, b, &x));
        let mut d = 0;
        loop {
            if d == n {
                return best;
            }
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
