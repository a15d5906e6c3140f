//! Pseudo-spectral compressible Navier-Stokes on the periodic square with
//! density-patch data, striated-regularity tracking, and diagnostics for the
//! effective viscous flux and the large-bulk-viscosity limit.

pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod interp;
pub mod limit_lab;
pub mod linsolve;
pub mod patch;
pub mod quadrature;
pub mod record;
pub mod run;
pub mod scenario;
pub mod solver;
pub mod spectral;
pub mod spline;
pub mod state;
pub mod striated;
pub mod thermo;
pub mod transport;

pub use config::{GridSpec, SimConfig};
pub use error::{Error, Result};
pub use field::{Grid, ScalarField, TensorField, VectorField};
pub use solver::{Solver, StepReport};
pub use spectral::{SpectralOps, Spectrum};
pub use state::FluidState;
pub use thermo::{PressureLaw, PressureSpec};
