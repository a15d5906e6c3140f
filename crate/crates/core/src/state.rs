//! Fluid state: density, velocity and the simulation clock.

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::thermo::NEGATIVE_DENSITY_TOL;

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub rho: ScalarField,
    pub u: VectorField,
    pub t: f64,
}

impl FluidState {
    pub fn new(rho: ScalarField, u: VectorField, t: f64) -> Result<Self> {
        if rho.grid != u.grid {
            return Err(Error::Shape("density and velocity grids differ".into()));
        }
        let s = Self { rho, u, t };
        s.validate()?;
        Ok(s)
    }

    /// Uniform density at rest.
    pub fn equilibrium(grid: Grid, rho_tilde: f64) -> Self {
        Self {
            rho: ScalarField::constant(grid, rho_tilde),
            u: VectorField::zeros(grid),
            t: 0.0,
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.rho.grid
    }

    pub fn validate(&self) -> Result<()> {
        self.rho.check_finite("density")?;
        self.u.check_finite("velocity")?;
        let n = self.grid().n();
        if let Some(k) = self.rho.data.iter().position(|&r| r < -NEGATIVE_DENSITY_TOL) {
            return Err(Error::NegativeDensity {
                i: k % n,
                j: k / n,
                value: self.rho.data[k],
            });
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.rho.integral()
    }

    /// `int rho u`
    pub fn momentum(&self) -> (f64, f64) {
        let w = self.grid().cell_area();
        let mx = self.rho.data.iter().zip(&self.u.x).map(|(r, v)| r * v).sum::<f64>();
        let my = self.rho.data.iter().zip(&self.u.y).map(|(r, v)| r * v).sum::<f64>();
        (w * mx, w * my)
    }

    pub fn momentum_field(&self) -> VectorField {
        self.u.mul_scalar(&self.rho)
    }
}
