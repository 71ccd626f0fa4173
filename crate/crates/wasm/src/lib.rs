//! Browser bindings: bump images, a transport between them, and particle
//! paths through the computed flow.
//!
//! Build with `wasm-pack build --target web crates/wasm` and serve
//! `crates/wasm/www` next to the generated `pkg/` directory.

use optiflow::bump::{generate_bump_pair, BumpParams};
use optiflow::characteristics::trace;
use optiflow::pipeline::{dacorogna_moser, fixed_point_transport, SolverConfig, TransportBackend, TransportSolution};
use optiflow::Grid2D;
use wasm_bindgen::prelude::*;

/// Largest grid the page accepts; the solve runs on the UI thread.
pub const MAX_NODES_PER_SIDE: usize = 64;

fn grid(n: usize) -> Result<Grid2D, String> {
    if n > MAX_NODES_PER_SIDE {
        return Err(format!("grid size {n} exceeds {MAX_NODES_PER_SIDE}"));
    }
    Grid2D::unit_square(n).map_err(|e| e.to_string())
}

/// Both bump images on an `n x n` grid of `[-1, 1]^2`, row-major and
/// concatenated.
pub fn bump_images_native(n: usize, beta: f64, alpha: f64) -> Result<Vec<f64>, String> {
    let g = grid(n)?;
    let p = BumpParams {
        beta,
        alpha,
        ..Default::default()
    };
    let (r0, r1) = generate_bump_pair(&g, &p).map_err(|e| e.to_string())?;
    Ok(r0.values().iter().chain(r1.values()).copied().collect())
}

#[wasm_bindgen]
pub fn bump_images(n: usize, beta: f64, alpha: f64) -> Result<Vec<f64>, JsError> {
    bump_images_native(n, beta, alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct Transport {
    sol: TransportSolution,
}

impl Transport {
    /// `method` is one of `characteristics`, `lsq` or `baseline`.
    pub fn solve(n: usize, nt: usize, beta: f64, method: &str) -> Result<Transport, String> {
        let g = grid(n)?;
        let (r0, r1) = generate_bump_pair(&g, &BumpParams::with_beta(beta)).map_err(|e| e.to_string())?;
        let mut cfg = SolverConfig {
            nt,
            ..Default::default()
        };
        let sol = match method {
            "characteristics" => fixed_point_transport(&r0, &r1, &cfg),
            "lsq" => {
                cfg.transport_backend = TransportBackend::SpacetimeLsq;
                fixed_point_transport(&r0, &r1, &cfg)
            }
            "baseline" => dacorogna_moser(&r0, &r1, &cfg),
            other => return Err(format!("unknown method '{other}'")),
        }
        .map_err(|e| e.to_string())?;
        Ok(Transport { sol })
    }

    /// Positions of the particle starting at `(x, y)` at every knot.
    pub fn path_native(&self, x: f64, y: f64) -> Result<Vec<f64>, String> {
        let tg = self.sol.rho.tgrid();
        let cfg = SolverConfig::default().flow;
        let mut out = Vec::with_capacity(2 * (tg.nt() + 1));
        for k in 0..=tg.nt() {
            let p = trace(&self.sol.velocity, tg.knot(k), 0.0, [x, y], &cfg).map_err(|e| e.to_string())?;
            out.extend(p);
        }
        Ok(out)
    }
}

#[wasm_bindgen]
impl Transport {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, nt: usize, beta: f64, method: &str) -> Result<Transport, JsError> {
        Transport::solve(n, nt, beta, method).map_err(|e| JsError::new(&e))
    }

    pub fn num_frames(&self) -> usize {
        self.sol.rho.tgrid().nt() + 1
    }

    /// Density at knot `k`, row-major.
    pub fn frame(&self, k: usize) -> Vec<f64> {
        self.sol.rho.slice(k.min(self.num_frames() - 1)).to_vec()
    }

    pub fn iterations(&self) -> usize {
        self.sol.report.iterations
    }

    pub fn converged(&self) -> bool {
        self.sol.report.converged
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.sol.report.outer_residuals.clone()
    }

    pub fn mass_drift(&self) -> f64 {
        self.sol.report.mass_drift
    }

    /// Interleaved `x, y` positions of a particle released at `(x, y)`.
    pub fn path(&self, x: f64, y: f64) -> Result<Vec<f64>, JsError> {
        self.path_native(x, y).map_err(|e| JsError::new(&e))
    }
}
