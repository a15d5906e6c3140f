//! Simulation parameters as they appear in run configuration files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::thermo::{PressureLaw, PressureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub length: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.n, self.length)
    }
}

fn default_cfl() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_nu_min() -> f64 {
    1e-8
}
fn default_striated_p() -> f64 {
    4.0
}
fn default_h_orders() -> Vec<f64> {
    vec![1.0, 3.0]
}
fn default_solver_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridSpec,
    /// Shear viscosity.
    pub mu: f64,
    /// Second viscosity; the bulk viscosity is `nu = 2 mu + lambda`.
    pub lambda: f64,
    /// Lower bound the bulk viscosity must respect.
    #[serde(default = "default_nu_min")]
    pub nu_min: f64,
    pub pressure: PressureSpec,
    pub rho_tilde: f64,
    /// Upper end of the pressure operating range; defaults to `4 max(rho_0)`.
    #[serde(default)]
    pub rho_max: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl_advective: f64,
    #[serde(default = "default_cfl")]
    pub cfl_acoustic: f64,
    /// Use this time step instead of the CFL choice (it must not exceed it).
    #[serde(default)]
    pub fixed_dt: Option<f64>,
    #[serde(default = "default_true")]
    pub dealias: bool,
    /// When false the convective term is dropped and the density is frozen.
    #[serde(default = "default_true")]
    pub advection: bool,
    /// Time between diagnostic samples; every step when absent.
    #[serde(default)]
    pub diagnostic_interval: Option<f64>,
    #[serde(default)]
    pub snapshot_interval: Option<f64>,
    /// Density below which material derivatives are not resolved; `1e-6 rho_tilde` by default.
    #[serde(default)]
    pub rho_floor: Option<f64>,
    /// Lebesgue exponent for striated norms.
    #[serde(default = "default_striated_p")]
    pub striated_p: f64,
    /// Orders `l` of the monitored `H_l` balances.
    #[serde(default = "default_h_orders")]
    pub h_l_orders: Vec<f64>,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    /// Minimal configuration used by tests and examples.
    pub fn basic(n: usize, length: f64, mu: f64, lambda: f64, pressure: PressureSpec, rho_tilde: f64, t_end: f64) -> Self {
        Self {
            grid: GridSpec { n, length },
            mu,
            lambda,
            nu_min: default_nu_min(),
            pressure,
            rho_tilde,
            rho_max: None,
            t_end,
            cfl_advective: default_cfl(),
            cfl_acoustic: default_cfl(),
            fixed_dt: None,
            dealias: true,
            advection: true,
            diagnostic_interval: None,
            snapshot_interval: None,
            rho_floor: None,
            striated_p: default_striated_p(),
            h_l_orders: default_h_orders(),
            solver_tol: default_solver_tol(),
            seed: 0,
        }
    }

    #[inline]
    pub fn nu(&self) -> f64 {
        2.0 * self.mu + self.lambda
    }

    pub fn rho_floor(&self) -> f64 {
        self.rho_floor.unwrap_or(1e-6 * self.rho_tilde)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        self.grid.build()?;
        if !(self.mu > 0.0) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.nu_min > 0.0) || self.nu() < self.nu_min {
            return bad(format!("bulk viscosity {} is below the lower bound {}", self.nu(), self.nu_min));
        }
        for (name, c) in [("cfl_advective", self.cfl_advective), ("cfl_acoustic", self.cfl_acoustic)] {
            if !(c > 0.0 && c < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {c}"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and nonnegative, got {}", self.t_end));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0) {
                return bad(format!("fixed_dt must be positive, got {dt}"));
            }
        }
        for (name, v) in [("diagnostic_interval", self.diagnostic_interval), ("snapshot_interval", self.snapshot_interval)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if !(self.striated_p > 2.0) {
            return bad(format!("striated_p must exceed the dimension 2, got {}", self.striated_p));
        }
        if self.h_l_orders.iter().any(|&l| !(l >= 1.0)) {
            return bad("every H_l order must be >= 1".into());
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1e-3) {
            return bad(format!("solver_tol must lie in (0, 1e-3), got {}", self.solver_tol));
        }
        Ok(())
    }

    /// Pressure law over the operating range implied by the initial density maximum.
    pub fn pressure_law(&self, rho0_max: f64) -> Result<PressureLaw> {
        let rho_max = self.rho_max.unwrap_or(4.0 * rho0_max.max(self.rho_tilde));
        PressureLaw::new(&self.pressure, self.rho_tilde, rho_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SimConfig {
        SimConfig::basic(32, 1.0, 0.1, 1.0, PressureSpec::Gamma { a: 1.0, gamma: 2.0 }, 1.0, 1.0)
    }

    #[test]
    fn basic_config_is_valid() {
        cfg().validate().unwrap();
        assert!((cfg().nu() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_cfl() {
        let mut c = cfg();
        c.cfl_acoustic = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let mut c = cfg();
        c.lambda = 0.0;
        assert!(c.validate().is_err());
    }
}
