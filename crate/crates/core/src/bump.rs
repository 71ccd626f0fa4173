//! Synthetic smooth-bump image pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};

/// A bump of amplitude `alpha` and radius `radius` over a background `beta`,
/// centred at `(0, y0)` in the first image and at `(0, -y0)` in the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpParams {
    pub beta: f64,
    pub alpha: f64,
    pub radius: f64,
    pub y0: f64,
}

impl Default for BumpParams {
    fn default() -> Self {
        BumpParams {
            beta: 1.0,
            alpha: 1.0,
            radius: 0.3,
            y0: 0.5,
        }
    }
}

impl BumpParams {
    pub fn with_beta(beta: f64) -> Self {
        BumpParams {
            beta,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > 0.0
            && self.alpha > 0.0
            && self.radius > 0.0
            && self.radius < 1.0
            && self.y0.abs() + self.radius < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "bump needs beta > 0, alpha > 0, 0 < radius < 1, |y0| + radius < 1; got {self:?}"
            )))
        }
    }

    /// `beta + alpha exp(-r^2 / (radius^2 - r^2))` inside the disc, `beta`
    /// outside, with `r` the distance to `(0, cy)`.
    pub fn value(&self, x: f64, y: f64, cy: f64) -> f64 {
        let r2 = x * x + (y - cy) * (y - cy);
        let r02 = self.radius * self.radius;
        if r02 > r2 {
            self.beta + self.alpha * (-r2 / (r02 - r2)).exp()
        } else {
            self.beta
        }
    }
}

/// Nodal bump images. On grids symmetric about `y = 0` the second image is
/// the exact row mirror of the first.
pub fn generate_bump_pair(grid: &Grid2D, p: &BumpParams) -> Result<(ScalarField, ScalarField)> {
    p.validate()?;
    let r0 = ScalarField::from_fn(*grid, |x, y| p.value(x, y, p.y0));
    let [y_min, y_max] = grid.y_range();
    let r1 = if y_min == -y_max {
        let ny = grid.ny();
        let values = (0..grid.num_nodes())
            .map(|k| {
                let (i, j) = grid.ij(k);
                r0.at(i, ny - j)
            })
            .collect();
        ScalarField::new(*grid, values)?
    } else {
        ScalarField::from_fn(*grid, |x, y| p.value(x, y, -p.y0))
    };
    Ok((r0, r1))
}
