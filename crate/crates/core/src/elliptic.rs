//! Weighted Poisson problems `-div(rho grad u) = f` on one time slice,
//! discretised with bilinear (Q1) elements and solved by Jacobi-PCG.
//!
//! The pure Neumann operator is singular with the constants as kernel. Its
//! load is projected to zero mean before solving, residuals are deflated at
//! every CG step, and the returned solution has zero (trapezoidal) mean.

use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};
use crate::pcg::{pcg, PcgReport, DEFAULT_MAX_ITER};
use crate::sparse::{norm, CsrMatrix};

/// Relative size of the load mean above which a Neumann solve flags the
/// right-hand side as incompatible.
pub const INCOMPATIBLE_RHS_THRESHOLD: f64 = 1e-8;

/// Assembled symmetric Q1 form on a [`Grid2D`].
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    grid: Grid2D,
    csr: CsrMatrix,
}

impl SparseSymMatrix {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn dim(&self) -> usize {
        self.csr.dim()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.csr.mul_vec(x)
    }

    /// `x^T A x`
    pub fn energy(&self, x: &[f64]) -> f64 {
        crate::sparse::dot(x, &self.csr.mul_vec(x))
    }
}

/// Q1 element stiffness on an `hx x hy` cell for a unit coefficient, local
/// nodes ordered `(0,0), (1,0), (0,1), (1,1)`.
pub fn q1_element_stiffness(hx: f64, hy: f64) -> [[f64; 4]; 4] {
    let s = |h: f64, a: usize, b: usize| if a == b { 1.0 / h } else { -1.0 / h };
    let m = |h: f64, a: usize, b: usize| if a == b { h / 3.0 } else { h / 6.0 };
    let mut k = [[0.0; 4]; 4];
    for (a, row) in k.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (ax, ay, bx, by) = (a % 2, a / 2, b % 2, b / 2);
            *v = s(hx, ax, bx) * m(hy, ay, by) + m(hx, ax, bx) * s(hy, ay, by);
        }
    }
    k
}

/// Stiffness matrix of `(u, v) -> int coeff grad u . grad v`, with the
/// coefficient taken constant per element (mean of its four nodal values).
pub fn assemble_weighted_stiffness(grid: &Grid2D, coeff: &ScalarField) -> Result<SparseSymMatrix> {
    grid.check_same(coeff.grid())?;
    if let Some((node, &value)) = coeff.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::CoefficientNotPositive { node, value });
    }
    let mut csr = CsrMatrix::tensor_stencil(&[grid.nodes_x(), grid.nodes_y()]);
    let ke = q1_element_stiffness(grid.hx(), grid.hy());
    let c = coeff.values();
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let nodes = [
                grid.index(i, j),
                grid.index(i + 1, j),
                grid.index(i, j + 1),
                grid.index(i + 1, j + 1),
            ];
            let k = 0.25 * nodes.iter().map(|&n| c[n]).sum::<f64>();
            for a in 0..4 {
                for b in 0..4 {
                    csr.add(nodes[a], nodes[b], k * ke[a][b]);
                }
            }
        }
    }
    Ok(SparseSymMatrix { grid: *grid, csr })
}

/// Lumped load vector `b_i = f_i w_i` with trapezoidal node weights.
pub fn assemble_load(grid: &Grid2D, f: &ScalarField) -> Result<Vec<f64>> {
    grid.check_same(f.grid())?;
    Ok(f
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| v * grid.node_weight(k))
        .collect())
}

/// Zero-mean solution of `A x = P b`, where `P` removes the mean of the
/// load density.
pub fn solve_neumann(a: &SparseSymMatrix, b: &[f64], tol: f64) -> (ScalarField, PcgReport) {
    solve_neumann_from(a, b, tol, None)
}

/// [`solve_neumann`] with an optional initial guess.
pub fn solve_neumann_from(
    a: &SparseSymMatrix,
    b: &[f64],
    tol: f64,
    guess: Option<&[f64]>,
) -> (ScalarField, PcgReport) {
    let grid = a.grid;
    let w = grid.node_weights();
    let w_sum: f64 = w.iter().sum();
    let b_sum: f64 = b.iter().sum();
    let dropped_mean = b_sum / w_sum;
    let incompatible =
        (b_sum / b.len() as f64).abs() > INCOMPATIBLE_RHS_THRESHOLD * norm(b).max(f64::MIN_POSITIVE);
    let pb: Vec<f64> = b.iter().zip(&w).map(|(bi, wi)| bi - dropped_mean * wi).collect();

    let deflate = |r: &mut [f64]| {
        let m = r.iter().sum::<f64>() / w_sum;
        r.iter_mut().zip(&w).for_each(|(ri, wi)| *ri -= m * wi);
    };
    let mut x = match guess {
        Some(g) => g.to_vec(),
        None => vec![0.0; b.len()],
    };
    let mut report = pcg(&a.csr, &pb, &mut x, tol, DEFAULT_MAX_ITER, Some(&deflate));
    let mean = x.iter().zip(&w).map(|(xi, wi)| xi * wi).sum::<f64>() / w_sum;
    x.iter_mut().for_each(|v| *v -= mean);
    report.incompatible_rhs = incompatible;
    report.dropped_mean = dropped_mean;
    let field = ScalarField::new(grid, x).expect("solver output on the operator's grid");
    (field, report)
}

/// Solve with every boundary node pinned to `boundary_value`.
pub fn solve_dirichlet(
    a: &SparseSymMatrix,
    b: &[f64],
    boundary_value: f64,
    tol: f64,
) -> (ScalarField, PcgReport) {
    let grid = a.grid;
    let n = grid.num_nodes();
    let interior: Vec<bool> = (0..n).map(|k| !grid.is_boundary(k)).collect();
    let mut lifted = vec![0.0; n];
    for k in (0..n).filter(|&k| !interior[k]) {
        lifted[k] = boundary_value;
    }
    let a_lift = a.csr.mul_vec(&lifted);
    let rhs: Vec<f64> = (0..n)
        .filter(|&k| interior[k])
        .map(|k| b[k] - a_lift[k])
        .collect();
    let mut x = lifted;
    let report = if rhs.is_empty() {
        PcgReport {
            converged: true,
            ..Default::default()
        }
    } else {
        let sub = a.csr.principal_submatrix(&interior);
        let mut xi = vec![0.0; rhs.len()];
        let rep = pcg(&sub, &rhs, &mut xi, tol, DEFAULT_MAX_ITER, None);
        let mut it = xi.into_iter();
        for k in 0..n {
            if interior[k] {
                x[k] = it.next().unwrap();
            }
        }
        rep
    };
    let field = ScalarField::new(grid, x).expect("solver output on the operator's grid");
    (field, report)
}

/// The boundary constant of the Dirichlet variant of the velocity problem:
/// solve `-div(coeff grad eta) = 0` with `coeff d(eta)/dn = 1` on the
/// boundary (natural boundary term `+ int_boundary psi ds` in the load),
/// normalise `eta` to zero mean, and return
/// `C = int dtrho eta dx / |boundary|`.
///
/// The flux data is not compatible with a pure Neumann problem; the
/// projected (least-squares) `eta` is used, as for every Neumann solve.
pub fn compatibility_constant(
    grid: &Grid2D,
    coeff: &ScalarField,
    dtrho: &ScalarField,
    tol: f64,
) -> Result<(f64, PcgReport)> {
    grid.check_same(dtrho.grid())?;
    let a = assemble_weighted_stiffness(grid, coeff)?;
    let load = grid.boundary_weights();
    let (eta, report) = solve_neumann(&a, &load, tol);
    let product = dtrho.zip_with(&eta, |d, e| d * e)?;
    Ok((product.integrate() / grid.perimeter(), report))
}
