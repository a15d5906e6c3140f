//! Initial data and the run configuration file.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::thermo::PressureSpec;
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::patch::{build_patch_density, PatchSpec};
use crate::spectral::SpectralOps;
use crate::state::FluidState;

const REFERENCE_EDGE_WIDTH: f64 = 0.1875;

fn default_q() -> f64 {
    4.0
}

/// Gaussian vortex: `u = grad_perp(amplitude exp(-|x - center|^2 / (2 radius^2)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Swirl {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub radius: f64,
}

impl Swirl {
    pub fn velocity(&self, ops: &SpectralOps) -> Result<VectorField> {
        if !(self.radius > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!("bad swirl {self:?}")));
        }
        let [cx, cy] = self.center;
        let two_r2 = 2.0 * self.radius * self.radius;
        let psi = ScalarField::from_fn(ops.grid(), |x, y| {
            self.amplitude * (-((x - cx).powi(2) + (y - cy).powi(2)) / two_r2).exp()
        });
        ops.perp_grad(&psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `rho = rho_tilde`, `u = 0`.
    Equilibrium,
    /// `rho = rho_tilde + density_amplitude cos(k . x)` with `k = 2 pi mode / L`, and the
    /// cellular flow `u = swirl (sin k1 x1 cos k1 x2, -cos k1 x1 sin k1 x2)`, `k1 = 2 pi / L`.
    Smooth {
        density_amplitude: f64,
        #[serde(default = "unit_mode")]
        mode: [i32; 2],
        swirl: f64,
    },
    /// Mollified density patch, optionally with a vortex.
    Patch {
        patch: PatchSpec,
        #[serde(default)]
        swirl: Option<Swirl>,
    },
}

fn unit_mode() -> [i32; 2] {
    [1, 0]
}

impl InitialCondition {
    pub fn build(&self, grid: Grid, rho_tilde: f64) -> Result<FluidState> {
        let ops = SpectralOps::new(grid);
        match self {
            Self::Equilibrium => Ok(FluidState::equilibrium(grid, rho_tilde)),
            Self::Smooth {
                density_amplitude,
                mode,
                swirl,
            } => {
                let k = 2.0 * PI / grid.length();
                let (mx, my) = (mode[0] as f64 * k, mode[1] as f64 * k);
                let rho = ScalarField::from_fn(grid, |x, y| rho_tilde + density_amplitude * (mx * x + my * y).cos());
                let u = VectorField::from_fn(grid, |x, y| {
                    let (sx, cx) = (k * x).sin_cos();
                    let (sy, cy) = (k * y).sin_cos();
                    (swirl * sx * cy, -swirl * cx * sy)
                });
                FluidState::new(rho, u, 0.0)
            }
            Self::Patch { patch, swirl } => {
                if patch.rho_tilde != rho_tilde {
                    return Err(Error::InvalidParameter(format!(
                        "patch rho_tilde {} differs from the simulation's {rho_tilde}",
                        patch.rho_tilde
                    )));
                }
                let rho = build_patch_density(patch, &grid)?;
                let u = match swirl {
                    Some(s) => s.velocity(&ops)?,
                    None => VectorField::zeros(grid),
                };
                FluidState::new(rho, u, 0.0)
            }
        }
    }

    pub fn patch(&self) -> Option<&PatchSpec> {
        match self {
            Self::Patch { patch, .. } => Some(patch),
            _ => None,
        }
    }
}

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub simulation: SimConfig,
    pub initial: InitialCondition,
    /// Lebesgue exponent of the `||G||_q` term in the recorded log-Riesz ratio.
    #[serde(default = "default_q")]
    pub riesz_q: f64,
}

impl RunConfig {
    pub fn new(simulation: SimConfig, initial: InitialCondition) -> Self {
        Self {
            simulation,
            initial,
            riesz_q: default_q(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        if !(self.riesz_q > 1.0) {
            return Err(Error::InvalidParameter(format!("riesz_q must exceed 1, got {}", self.riesz_q)));
        }
        if let Some(p) = self.initial.patch() {
            p.validate(&self.simulation.grid.build()?)?;
        }
        Ok(())
    }

    /// Dense disc on a light background stirred by an off-center vortex, on
    /// the box `[0,16)^2` with `nu = 10`. The density ramp is three cells at
    /// n = 256 and keeps that physical width on other grids.
    pub fn reference_patch(n: usize, t_end: f64) -> Self {
        let mut patch = PatchSpec::disc(8.0, 8.0, 1.0, 2.0, 1.0);
        patch.edge_width = Some(REFERENCE_EDGE_WIDTH);
        let mut s = SimConfig::basic(n, 16.0, 1.0, 8.0, PressureSpec::Gamma { a: 1.0, gamma: 2.0 }, 1.0, t_end);
        s.diagnostic_interval = Some(0.05);
        Self::new(
            s,
            InitialCondition::Patch {
                patch,
                swirl: Some(Swirl {
                    center: [8.6, 8.3],
                    amplitude: 0.5,
                    radius: 1.0,
                }),
            },
        )
    }

    pub fn initial_state(&self) -> Result<FluidState> {
        self.validate()?;
        self.initial.build(self.simulation.grid.build()?, self.simulation.rho_tilde)
    }
}
