//! Time-continuous transport between two positive grayscale images.
//!
//! The solver alternates a velocity step (a weighted Poisson problem per
//! time knot, `-div(rho grad phi) = d_t rho`, `v = grad phi`) with a density
//! step (the least-squares solution of `d_t rho + v . grad rho = 0` with both
//! end images imposed) until the density stops changing. Two density
//! backends are provided: the closed-form blend along characteristics and a
//! bound-constrained space-time least-squares finite element solve.

pub mod bump;
pub mod characteristics;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod io;
mod par;
pub mod pcg;
pub mod pipeline;
pub mod spacetime_lsq;
pub mod sparse;

pub use error::{Error, Result};
pub use field::{Grid2D, Point, ScalarField, SpaceTimeField, TimeGrid, VelocityField};
