//! Time stepping for the compressible system
//!
//! ```text
//! d_t rho + div(rho u) = 0
//! d_t(rho u) + div(rho u (x) u) - mu Lap u - (mu + lambda) grad div u + grad P(rho) = 0
//! ```
//!
//! Density moves by finite-volume transport, momentum pseudo-spectrally. The
//! viscous operator and the pressure force are treated in the implicit column
//! of the ARS(2,2,2) IMEX pair, which is L-stable and stiffly accurate, so the
//! quasi-static balance `nu div u ~ G` that sets in for large bulk viscosity
//! holds at the end of every step without a diffusive step restriction. Each implicit stage solves
//! `(rho_s - c dt L) u_s = rhs` by conjugate gradients with a Fourier-diagonal
//! preconditioner.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::linsolve::{pcg, SolveStats};
use crate::spectral::{SpectralOps, Spectrum};
use crate::state::FluidState;
use crate::thermo::{g_field, PressureLaw};
use crate::transport::{check_positive, flux_divergence};

/// `1 - 1/sqrt(2)`
pub const ARS_GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
/// `1 - 1/(2 gamma)`
pub const ARS_DELTA: f64 = 1.0 - 1.0 / (2.0 * ARS_GAMMA);

const MAX_SOLVER_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CflLimit {
    Advective,
    Acoustic,
    Fixed,
    /// Shortened to land on a sample time.
    Clipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub dt: f64,
    pub max_speed: f64,
    pub min_rho: f64,
    pub binding: CflLimit,
    /// Largest share of convective-term energy cut by the 2/3 rule over the stages.
    pub dealias_removed: f64,
    pub solver_iterations: usize,
}

/// Fourier-side view of the viscous operator `L = mu Lap + (nu - mu) grad div`.
fn viscous_spectral(ops: &SpectralOps, mu: f64, nu: f64, sx: &Spectrum, sy: &Spectrum) -> (Spectrum, Spectrum) {
    let n = ops.grid().n();
    let mut ox = Spectrum::zeros(ops.grid());
    let mut oy = Spectrum::zeros(ops.grid());
    for j in 0..n {
        for i in 0..n {
            if ops.is_nyquist(i, j) {
                continue;
            }
            let idx = j * n + i;
            let (kx, ky) = (ops.wavenumber(i), ops.wavenumber(j));
            let k2 = kx * kx + ky * ky;
            let kdotu = sx.data[idx] * kx + sy.data[idx] * ky;
            ox.data[idx] = -mu * k2 * sx.data[idx] - (nu - mu) * kx * kdotu;
            oy.data[idx] = -mu * k2 * sy.data[idx] - (nu - mu) * ky * kdotu;
        }
    }
    (ox, oy)
}

/// Compressible solver bound to one configuration and pressure law.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: SimConfig,
    ops: SpectralOps,
    law: PressureLaw,
}

pub(crate) struct Explicit {
    pub(crate) mass: ScalarField,
    pub(crate) momentum: VectorField,
    pub(crate) dealias_removed: f64,
}

impl Solver {
    pub fn new(cfg: SimConfig, law: PressureLaw) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid.build()?;
        Ok(Self {
            ops: SpectralOps::new(grid),
            cfg,
            law,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn ops(&self) -> &SpectralOps {
        &self.ops
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    #[inline]
    fn mu(&self) -> f64 {
        self.cfg.mu
    }

    #[inline]
    fn nu(&self) -> f64 {
        self.cfg.nu()
    }

    /// `L u = mu Lap u + (mu + lambda) grad div u`
    pub fn viscous(&self, u: &VectorField) -> VectorField {
        let (sx, sy) = self.ops.forward_vector(u);
        let (ox, oy) = viscous_spectral(&self.ops, self.mu(), self.nu(), &sx, &sy);
        self.ops.inverse_vector(&ox, &oy)
    }

    /// `rho u_dot = L u - grad G`
    pub fn momentum_rhs(&self, state: &FluidState) -> Result<VectorField> {
        state.validate()?;
        let g = g_field(&state.rho, &self.law)?;
        let (sx, sy) = self.ops.forward_vector(&state.u);
        let (mut ox, mut oy) = viscous_spectral(&self.ops, self.mu(), self.nu(), &sx, &sy);
        let sg = self.ops.forward(&g);
        ox.add_assign(&self.ops.derivative_spectrum(&sg, 0), -1.0);
        oy.add_assign(&self.ops.derivative_spectrum(&sg, 1), -1.0);
        Ok(self.ops.inverse_vector(&ox, &oy))
    }

    /// `u_dot = rho u_dot / max(rho, floor)`, zero where `rho < floor`.
    ///
    /// Returns the field and the fraction of flagged cells.
    pub fn material_derivative(&self, state: &FluidState) -> Result<(VectorField, f64)> {
        let w = self.momentum_rhs(state)?;
        Ok(divide_by_density(&w, &state.rho, self.cfg.rho_floor()))
    }

    /// CFL-limited step for the current state.
    pub fn cfl_dt(&self, state: &FluidState) -> Result<(f64, CflLimit)> {
        state.u.check_finite("velocity")?;
        let h = self.ops.grid().h();
        let umax = state.u.linf();
        let c = self.law.max_sound_speed(&state.rho);
        let adv = if umax > 0.0 { self.cfg.cfl_advective * h / umax } else { f64::INFINITY };
        let ac = if c > 0.0 { self.cfg.cfl_acoustic * h / c } else { f64::INFINITY };
        let (dt, which) = if adv < ac { (adv, CflLimit::Advective) } else { (ac, CflLimit::Acoustic) };
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "no finite time step: max |u| = {umax}, sound speed = {c}"
            )));
        }
        Ok((dt, which))
    }

    /// Step size the run loop uses: the fixed step if configured, else CFL.
    pub fn step_size(&self, state: &FluidState) -> Result<(f64, CflLimit)> {
        match self.cfg.fixed_dt {
            Some(dt) => Ok((dt, CflLimit::Fixed)),
            None => self.cfl_dt(state),
        }
    }

    /// Mass flux divergence and convective momentum flux, both negated.
    pub(crate) fn explicit_terms(&self, rho: &ScalarField, u: &VectorField) -> Result<Explicit> {
        let grid = self.ops.grid();
        if !self.cfg.advection {
            return Ok(Explicit {
                mass: ScalarField::zeros(grid),
                momentum: VectorField::zeros(grid),
                dealias_removed: 0.0,
            });
        }
        let n = grid.len();
        let mut a11 = vec![0.0; n];
        let mut a12 = vec![0.0; n];
        let mut a22 = vec![0.0; n];
        for k in 0..n {
            let (vx, vy, r) = (u.x[k], u.y[k], rho.data[k]);
            a11[k] = r * vx * vx;
            a12[k] = r * vx * vy;
            a22[k] = r * vy * vy;
        }
        let (mut s11, mut s12) = self.ops.forward_pair(&a11, &a12);
        let mut s22 = self.ops.forward(&ScalarField { grid, data: a22 });
        let mut removed = 0.0;
        if self.cfg.dealias {
            removed = self
                .ops
                .dealias_spectrum(&mut s11)
                .max(self.ops.dealias_spectrum(&mut s12))
                .max(self.ops.dealias_spectrum(&mut s22));
        }
        let mut mx = self.ops.derivative_spectrum(&s11, 0);
        mx.add_assign(&self.ops.derivative_spectrum(&s12, 1), 1.0);
        let mut my = self.ops.derivative_spectrum(&s12, 0);
        my.add_assign(&self.ops.derivative_spectrum(&s22, 1), 1.0);
        mx.scale(-1.0);
        my.scale(-1.0);
        Ok(Explicit {
            mass: flux_divergence(rho, u).scale(-1.0),
            momentum: self.ops.inverse_vector(&mx, &my),
            dealias_removed: removed,
        })
    }

    /// `-grad G(rho)`
    pub(crate) fn pressure_force(&self, rho: &ScalarField) -> Result<VectorField> {
        let g = g_field(rho, &self.law)?;
        let sg = self.ops.forward(&g);
        let mut dx = self.ops.derivative_spectrum(&sg, 0);
        let mut dy = self.ops.derivative_spectrum(&sg, 1);
        dx.scale(-1.0);
        dy.scale(-1.0);
        Ok(self.ops.inverse_vector(&dx, &dy))
    }

    /// Solves `(rho - c L) u = rhs` for the stage velocity.
    pub fn implicit_solve(&self, rho: &ScalarField, c: f64, rhs: &VectorField, guess: &VectorField) -> Result<(VectorField, SolveStats)> {
        solve_stage(&self.ops, rho, c * self.mu(), c * self.nu(), rhs, guess, self.cfg.solver_tol)
    }

    /// One step with the CFL (or fixed) step size.
    pub fn step(&self, state: &FluidState) -> Result<(FluidState, StepReport)> {
        let (dt, which) = self.step_size(state)?;
        self.step_with(state, dt, which)
    }

    pub fn step_with(&self, state: &FluidState, dt: f64, binding: CflLimit) -> Result<(FluidState, StepReport)> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let (g, d) = (ARS_GAMMA, ARS_DELTA);
        let m0 = state.momentum_field();
        let e1 = self.explicit_terms(&state.rho, &state.u)?;

        // The pressure force sits in the implicit column: each stage density
        // is known before that stage's velocity solve.
        let rho2 = state.rho.zip_map(&e1.mass, |r, e| r + g * dt * e);
        check_positive(&rho2, 1e-12)?;
        let p2 = self.pressure_force(&rho2)?;
        let rhs2 = m0.axpy(g * dt, &e1.momentum).axpy(g * dt, &p2);
        let (u2, st2) = self.implicit_solve(&rho2, g * dt, &rhs2, &state.u)?;
        let i2 = self.viscous(&u2).add(&p2);

        let e2 = self.explicit_terms(&rho2, &u2)?;
        let rho3 = ScalarField {
            grid: state.grid(),
            data: state
                .rho
                .data
                .iter()
                .zip(&e1.mass.data)
                .zip(&e2.mass.data)
                .map(|((r, a), b)| r + dt * (d * a + (1.0 - d) * b))
                .collect(),
        };
        check_positive(&rho3, 1e-12)?;
        let p3 = self.pressure_force(&rho3)?;
        let rhs3 = m0
            .axpy(dt * d, &e1.momentum)
            .axpy(dt * (1.0 - d), &e2.momentum)
            .axpy(dt * (1.0 - g), &i2)
            .axpy(dt * g, &p3);
        let (u3, st3) = self.implicit_solve(&rho3, g * dt, &rhs3, &u2)?;

        let next = FluidState {
            rho: rho3,
            u: u3,
            t: state.t + dt,
        };
        next.rho.check_finite("density after step")?;
        next.u.check_finite("velocity after step")?;
        let report = StepReport {
            dt,
            max_speed: next.u.linf(),
            min_rho: next.rho.min(),
            binding,
            dealias_removed: e1.dealias_removed.max(e2.dealias_removed),
            solver_iterations: st2.iterations + st3.iterations,
        };
        Ok((next, report))
    }
}

pub(crate) fn divide_by_density(w: &VectorField, rho: &ScalarField, floor: f64) -> (VectorField, f64) {
    let mut out = VectorField::zeros(w.grid);
    let mut flagged = 0usize;
    for k in 0..rho.data.len() {
        let r = rho.data[k];
        if r < floor {
            flagged += 1;
        } else {
            out.x[k] = w.x[k] / r;
            out.y[k] = w.y[k] / r;
        }
    }
    (out, flagged as f64 / rho.data.len() as f64)
}

/// Solves `(rho - c_mu Lap - (c_nu - c_mu) grad div) u = rhs`.
pub(crate) fn solve_stage(
    ops: &SpectralOps,
    rho: &ScalarField,
    c_mu: f64,
    c_nu: f64,
    rhs: &VectorField,
    guess: &VectorField,
    tol: f64,
) -> Result<(VectorField, SolveStats)> {
    let grid = ops.grid();
    let n2 = grid.len();
    let rho_hi = rho.max();
    let rho_lo = rho.min().max(1e-3 * rho_hi);
    let rho_bar = 0.5 * (rho_hi + rho_lo);
    let split = |v: &[f64]| VectorField {
        grid,
        x: v[..n2].to_vec(),
        y: v[n2..].to_vec(),
    };
    let join = |v: VectorField| {
        let mut out = v.x;
        out.extend_from_slice(&v.y);
        out
    };
    let apply = |v: &[f64]| {
        let u = split(v);
        let (sx, sy) = ops.forward_vector(&u);
        let (lx, ly) = viscous_spectral(ops, c_mu, c_nu, &sx, &sy);
        let (lxr, lyr) = ops.inverse_pair(&lx, &ly);
        let mut out = vec![0.0; 2 * n2];
        for k in 0..n2 {
            out[k] = rho.data[k] * u.x[k] - lxr[k];
            out[n2 + k] = rho.data[k] * u.y[k] - lyr[k];
        }
        out
    };
    let n = grid.n();
    let precondition = |v: &[f64]| {
        let u = split(v);
        let (sx, sy) = ops.forward_vector(&u);
        let mut ox = Spectrum::zeros(grid);
        let mut oy = Spectrum::zeros(grid);
        for j in 0..n {
            for i in 0..n {
                let idx = j * n + i;
                let (kx, ky) = (ops.wavenumber(i), ops.wavenumber(j));
                let k2 = kx * kx + ky * ky;
                if ops.is_nyquist(i, j) || k2 == 0.0 {
                    ox.data[idx] = sx.data[idx] / rho_bar;
                    oy.data[idx] = sy.data[idx] / rho_bar;
                    continue;
                }
                let a_sol = 1.0 / (rho_bar + c_mu * k2);
                let a_grad = 1.0 / (rho_bar + c_nu * k2);
                let proj: Complex64 = (sx.data[idx] * kx + sy.data[idx] * ky) / k2;
                let (gx, gy) = (proj * kx, proj * ky);
                ox.data[idx] = (sx.data[idx] - gx) * a_sol + gx * a_grad;
                oy.data[idx] = (sy.data[idx] - gy) * a_sol + gy * a_grad;
            }
        }
        join(ops.inverse_vector(&ox, &oy))
    };
    let b = join(rhs.clone());
    let (x, stats) = pcg(
        "viscous stage solve",
        apply,
        precondition,
        &b,
        join(guess.clone()),
        tol,
        MAX_SOLVER_ITERATIONS,
    )?;
    Ok((split(&x), stats))
}
