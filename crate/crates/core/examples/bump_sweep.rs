//! Iteration counts of the fixed-point solver on the bump pair across
//! background levels.
//!
//! `cargo run --release -p optiflow --example bump_sweep -- [n] [nt] [alpha]`

use std::time::Instant;

use optiflow::bump::{generate_bump_pair, BumpParams};
use optiflow::pipeline::{fixed_point_transport, SolverConfig};
use optiflow::Grid2D;

fn main() -> optiflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let nt: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let alpha: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let grid = Grid2D::unit_square(n)?;
    let betas: Vec<f64> = args.get(4).map(|s| s.split(',').map(|b| b.parse().unwrap()).collect()).unwrap_or(vec![1.0, 0.5, 0.2, 0.1, 0.05]);
    for beta in betas {
        let p = BumpParams { beta, alpha, ..Default::default() };
        let (r0, r1) = generate_bump_pair(&grid, &p)?;
        let cfg = SolverConfig { nt, ..Default::default() };
        let start = Instant::now();
        let sol = fixed_point_transport(&r0, &r1, &cfg)?;
        let r = &sol.report;
        println!(
            "beta {beta:<5} iterations {:>3} converged {} last residual {:.3e} drift {:.3e} time {:.1}s",
            r.iterations,
            r.converged,
            r.outer_residuals.last().copied().unwrap_or(0.0),
            r.mass_drift,
            start.elapsed().as_secs_f64()
        );
        println!("   residuals {:?}", r.outer_residuals.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>());
    }
    Ok(())
}
