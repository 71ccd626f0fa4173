//! Jacobi-preconditioned conjugate gradient.

use serde::{Deserialize, Serialize};

use crate::sparse::{dot, norm, CsrMatrix};

pub const DEFAULT_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PcgReport {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` for the (projected) right-hand side.
    pub relative_residual: f64,
    pub converged: bool,
    /// The Neumann load had a non-negligible mean that was projected out.
    pub incompatible_rhs: bool,
    /// Mean of the load removed by the compatibility projection.
    pub dropped_mean: f64,
}

/// Solve `A x = b` starting from the content of `x`. When `deflate` is given
/// it is applied to every residual, which keeps the iteration inside a
/// complement of the kernel for consistent singular systems.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    deflate: Option<&dyn Fn(&mut [f64])>,
) -> PcgReport {
    let n = b.len();
    assert_eq!(a.dim(), n);
    assert_eq!(x.len(), n);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return PcgReport {
            converged: true,
            ..Default::default()
        };
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if let Some(p) = deflate {
        p(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / b_norm;
    let mut it = 0;
    while res > tol && it < max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if let Some(proj) = deflate {
            proj(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        res = norm(&r) / b_norm;
    }

    // recursive residuals drift; report the true one
    let mut r_true = a.mul_vec(x);
    for (ri, bi) in r_true.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if let Some(proj) = deflate {
        proj(&mut r_true);
    }
    let relative_residual = norm(&r_true) / b_norm;
    PcgReport {
        iterations: it,
        relative_residual,
        converged: relative_residual <= tol,
        incompatible_rhs: false,
        dropped_mean: 0.0,
    }
}
