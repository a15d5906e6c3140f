//! Large bulk viscosity study: sweeps over `nu = 2 mu + lambda` at fixed
//! `mu`, log-log scaling fits, and a variable-density incompressible
//! reference solver
//!
//! ```text
//! d_t rho + div(rho v) = 0
//! rho (d_t v + v . grad v) + grad Pi = mu Lap v,   div v = 0
//! ```

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::linsolve::{pcg, SolveStats};
use crate::record::DiagnosticsRecord;
use crate::run::{Event, Trajectory};
use crate::scenario::RunConfig;
use crate::solver::Solver;
use crate::spectral::{SpectralOps, Spectrum};
use crate::state::FluidState;
use crate::transport::{check_positive, flux_divergence};

const MAX_PROJECTION_ITERATIONS: usize = 1000;
/// Initial data with a larger spectral divergence are projected first.
pub const INITIAL_DIVERGENCE_TOL: f64 = 1e-12;
/// Real-axis stability limit used for the explicit viscous remainder.
const EXPLICIT_DIFFUSION_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStep {
    pub dt: f64,
    /// Grid max of the spectral divergence after the step.
    pub div_inf: f64,
    pub projection_iterations: usize,
}

/// Projection solver for the incompressible inhomogeneous system.
///
/// Viscosity splits as `(mu/rho_ref) Lap`, integrated exactly in Fourier
/// space, plus the explicit remainder `mu (1/rho - 1/rho_ref) Lap` with
/// `rho_ref = min rho_0`, which vanishes for constant density and is
/// anti-diffusive otherwise, so the exact factor bounds it. Advection is
/// explicit and each stage of the third-order Heun scheme is projected with
/// `div(grad phi / rho) = div w`.
#[derive(Debug, Clone)]
pub struct IncompressibleSolver {
    ops: SpectralOps,
    mu: f64,
    rho_ref: f64,
    cfl: f64,
    dealias: bool,
    tol: f64,
}

impl IncompressibleSolver {
    pub fn new(ops: SpectralOps, mu: f64, rho_ref: f64, cfl: f64, dealias: bool, tol: f64) -> Result<Self> {
        if !(mu > 0.0 && rho_ref > 0.0 && cfl > 0.0 && cfl < 1.0 && tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "incompressible solver needs mu, rho_ref, tol > 0 and cfl in (0,1); got {mu}, {rho_ref}, {tol}, {cfl}"
            )));
        }
        Ok(Self {
            ops,
            mu,
            rho_ref,
            cfl,
            dealias,
            tol,
        })
    }

    /// Same grid, viscosity and CFL factor as a compressible configuration.
    pub fn for_config(cfg: &RunConfig, rho0: &ScalarField) -> Result<Self> {
        let sim = &cfg.simulation;
        Self::new(
            SpectralOps::new(sim.grid.build()?),
            sim.mu,
            rho0.min(),
            sim.cfl_advective,
            sim.dealias,
            sim.solver_tol.min(1e-12),
        )
    }

    pub fn ops(&self) -> &SpectralOps {
        &self.ops
    }

    /// `w - grad phi / rho` with `div(grad phi / rho) = div w`.
    pub fn project(&self, rho: &ScalarField, w: &VectorField) -> Result<(VectorField, SolveStats)> {
        let ops = &self.ops;
        let grid = ops.grid();
        let inv: Vec<f64> = rho.data.iter().map(|r| 1.0 / r).collect();
        let mean_inv = inv.iter().sum::<f64>() / inv.len() as f64;
        let b = ops.div(w)?.scale(-1.0).data;
        let apply = |phi: &[f64]| {
            let g = ops
                .grad(&ScalarField {
                    grid,
                    data: phi.to_vec(),
                })
                .expect("finite iterate");
            let flux = VectorField {
                grid,
                x: g.x.iter().zip(&inv).map(|(a, c)| a * c).collect(),
                y: g.y.iter().zip(&inv).map(|(a, c)| a * c).collect(),
            };
            ops.div(&flux).expect("finite iterate").scale(-1.0).data
        };
        let precondition = |r: &[f64]| {
            let mut s = ops.forward(&ScalarField { grid, data: r.to_vec() });
            ops.apply_real_in_place(&mut s, |kx, ky| {
                let k2 = kx * kx + ky * ky;
                if k2 == 0.0 {
                    0.0
                } else {
                    1.0 / (mean_inv * k2)
                }
            });
            ops.inverse(&s).data
        };
        let (phi, stats) = pcg(
            "variable-density projection",
            apply,
            precondition,
            &b,
            vec![0.0; b.len()],
            self.tol,
            MAX_PROJECTION_ITERATIONS,
        )?;
        let g = ops.grad(&ScalarField { grid, data: phi })?;
        let out = VectorField {
            grid,
            x: (0..g.x.len()).map(|k| w.x[k] - g.x[k] * inv[k]).collect(),
            y: (0..g.y.len()).map(|k| w.y[k] - g.y[k] * inv[k]).collect(),
        };
        Ok((out, stats))
    }

    /// Projects the initial velocity when its divergence is not negligible.
    pub fn prepare(&self, state: &FluidState) -> Result<(FluidState, bool)> {
        let div = self.ops.div(&state.u)?.linf();
        if div <= INITIAL_DIVERGENCE_TOL {
            return Ok((state.clone(), false));
        }
        let (u, _) = self.project(&state.rho, &state.u)?;
        Ok((FluidState::new(state.rho.clone(), u, state.t)?, true))
    }

    fn decay(&self, s: &Spectrum, tau: f64) -> Spectrum {
        let c = self.mu / self.rho_ref * tau;
        let mut out = s.clone();
        self.ops.apply_real_in_place(&mut out, |kx, ky| (-c * (kx * kx + ky * ky)).exp());
        out
    }

    fn decay_vector(&self, v: &VectorField, tau: f64) -> VectorField {
        let (sx, sy) = self.ops.forward_vector(v);
        self.ops.inverse_vector(&self.decay(&sx, tau), &self.decay(&sy, tau))
    }

    /// `-div(v (x) v) + mu (1/rho - 1/rho_ref) Lap v`
    fn explicit_rate(&self, rho: &ScalarField, v: &VectorField) -> Result<VectorField> {
        let ops = &self.ops;
        let grid = ops.grid();
        let n = grid.len();
        let prod = |f: &dyn Fn(usize) -> f64| ScalarField {
            grid,
            data: (0..n).map(f).collect(),
        };
        let mut s11 = ops.forward(&prod(&|k| v.x[k] * v.x[k]));
        let (mut s12, mut s22) = ops.forward_pair(
            &(0..n).map(|k| v.x[k] * v.y[k]).collect::<Vec<_>>(),
            &(0..n).map(|k| v.y[k] * v.y[k]).collect::<Vec<_>>(),
        );
        if self.dealias {
            ops.dealias_spectrum(&mut s11);
            ops.dealias_spectrum(&mut s12);
            ops.dealias_spectrum(&mut s22);
        }
        let mut cx = ops.derivative_spectrum(&s11, 0);
        cx.add_assign(&ops.derivative_spectrum(&s12, 1), 1.0);
        let mut cy = ops.derivative_spectrum(&s12, 0);
        cy.add_assign(&ops.derivative_spectrum(&s22, 1), 1.0);
        let (sx, sy) = ops.forward_vector(v);
        let lap = |s: &Spectrum| ops.apply(s, |kx, ky| Complex64::new(-(kx * kx + ky * ky), 0.0));
        let (lx, ly) = ops.inverse_pair(&lap(&sx), &lap(&sy));
        let (ax, ay) = ops.inverse_pair(&cx, &cy);
        let w: Vec<f64> = rho.data.iter().map(|r| self.mu * (1.0 / r - 1.0 / self.rho_ref)).collect();
        Ok(VectorField {
            grid,
            x: (0..n).map(|k| -ax[k] + w[k] * lx[k]).collect(),
            y: (0..n).map(|k| -ay[k] + w[k] * ly[k]).collect(),
        })
    }

    pub fn cfl_dt(&self, state: &FluidState) -> Result<f64> {
        state.u.check_finite("velocity")?;
        let grid = self.ops.grid();
        let h = grid.h();
        let vmax = state.u.linf();
        let adv = if vmax > 0.0 { self.cfl * h / vmax } else { f64::INFINITY };
        let excess = self.mu * (1.0 / state.rho.min().max(1e-300) - 1.0 / self.rho_ref);
        let kmax = grid.dk() * (grid.n() / 2) as f64;
        let visc = if excess > 1e-14 * self.mu {
            EXPLICIT_DIFFUSION_LIMIT / (2.0 * excess * kmax * kmax)
        } else {
            f64::INFINITY
        };
        let dt = adv.min(visc);
        if dt.is_finite() && dt > 0.0 {
            Ok(dt)
        } else {
            Err(Error::InvalidParameter("no finite time step for a fluid at rest".into()))
        }
    }

    pub fn step_with(&self, state: &FluidState, dt: f64) -> Result<(FluidState, ReferenceStep)> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let (r0, v0) = (&state.rho, &state.u);
        let mut iters = 0;
        let k1 = self.explicit_rate(r0, v0)?;
        let d1 = flux_divergence(r0, v0);
        let r2 = r0.zip_map(&d1, |r, d| r - dt / 3.0 * d);
        check_positive(&r2, 1e-12)?;
        let (v2, st) = self.project(&r2, &self.decay_vector(&v0.axpy(dt / 3.0, &k1), dt / 3.0))?;
        iters += st.iterations;

        let k2 = self.explicit_rate(&r2, &v2)?;
        let d2 = flux_divergence(&r2, &v2);
        let r3 = r0.zip_map(&d2, |r, d| r - 2.0 * dt / 3.0 * d);
        check_positive(&r3, 1e-12)?;
        let w3 = self.decay_vector(v0, 2.0 * dt / 3.0).axpy(2.0 * dt / 3.0, &self.decay_vector(&k2, dt / 3.0));
        let (v3, st) = self.project(&r3, &w3)?;
        iters += st.iterations;

        let k3 = self.explicit_rate(&r3, &v3)?;
        let d3 = flux_divergence(&r3, &v3);
        let r1 = ScalarField {
            grid: r0.grid,
            data: (0..r0.data.len())
                .map(|k| r0.data[k] - dt * (0.25 * d1.data[k] + 0.75 * d3.data[k]))
                .collect(),
        };
        check_positive(&r1, 1e-12)?;
        let w1 = self
            .decay_vector(&v0.axpy(0.25 * dt, &k1), dt)
            .axpy(0.75 * dt, &self.decay_vector(&k3, dt / 3.0));
        let (v1, st) = self.project(&r1, &w1)?;
        iters += st.iterations;
        let div_inf = self.ops.div(&v1)?.linf();
        Ok((
            FluidState::new(r1, v1, state.t + dt)?,
            ReferenceStep {
                dt,
                div_inf,
                projection_iterations: iters,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub t: f64,
    pub kinetic: f64,
    pub mass: f64,
    pub velocity: VectorField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub samples: Vec<ReferenceSample>,
    /// Largest post-step divergence over the run.
    pub max_div: f64,
    pub steps: u64,
    pub projected_initial_data: bool,
}

/// Runs the reference from `initial`, landing exactly on each of `times`.
pub fn incompressible_reference(solver: &IncompressibleSolver, initial: &FluidState, times: &[f64]) -> Result<ReferenceRun> {
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|&t| t < initial.t) {
        return Err(Error::InvalidParameter("sample times must increase from the initial time".into()));
    }
    let (mut state, projected) = solver.prepare(initial)?;
    let mut out = ReferenceRun {
        samples: Vec::with_capacity(times.len()),
        max_div: solver.ops.div(&state.u)?.linf(),
        steps: 0,
        projected_initial_data: projected,
    };
    let sample = |s: &FluidState, out: &mut ReferenceRun| {
        let area = s.grid().cell_area();
        let kinetic = 0.5
            * area
            * (0..s.rho.data.len())
                .map(|k| s.rho.data[k] * (s.u.x[k] * s.u.x[k] + s.u.y[k] * s.u.y[k]))
                .sum::<f64>();
        out.samples.push(ReferenceSample {
            t: s.t,
            kinetic,
            mass: s.mass(),
            velocity: s.u.clone(),
        });
    };
    for &target in times {
        while state.t < target - 1e-12 * target.abs().max(1.0) {
            let dt = match solver.cfl_dt(&state) {
                Ok(dt) => dt.min(target - state.t),
                Err(_) => target - state.t,
            };
            let (next, rep) = solver.step_with(&state, dt)?;
            out.max_div = out.max_div.max(rep.div_inf);
            out.steps += 1;
            let landed = (next.t - target).abs() <= 1e-12 * target.abs().max(1.0);
            state = if landed { FluidState { t: target, ..next } } else { next };
        }
        sample(&state, &mut out);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// 2.5% and 97.5% bootstrap percentiles of the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    pub used_nus: Vec<f64>,
    pub excluded_nus: Vec<f64>,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits `log sup_t m(t)` against `log nu`; the bootstrap resamples sample times.
///
/// `series[i]` is the time series of the metric for `nus[i]`.
pub fn fit_scaling(nus: &[f64], series: &[Vec<f64>], resamples: usize, seed: u64) -> Result<ScalingFit> {
    if nus.len() != series.len() {
        return Err(Error::Shape(format!("{} nu values but {} series", nus.len(), series.len())));
    }
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for (i, (&nu, s)) in nus.iter().zip(series).enumerate() {
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if nu > 0.0 && m > 0.0 && m.is_finite() {
            used.push(i);
        } else {
            excluded.push(nu);
        }
    }
    if used.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: used.len(),
        });
    }
    let x: Vec<f64> = used.iter().map(|&i| nus[i].ln()).collect();
    let sup = |i: usize, idx: &mut dyn Iterator<Item = usize>| -> f64 {
        idx.map(|k| series[i][k]).fold(f64::NEG_INFINITY, f64::max)
    };
    let y: Vec<f64> = used.iter().map(|&i| sup(i, &mut (0..series[i].len())).ln()).collect();
    let (slope, intercept) = least_squares(&x, &y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = used.iter().map(|&i| series[i].len()).min().unwrap_or(0);
    let mut slopes = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let idx: Vec<usize> = (0..len).map(|_| rng.gen_range(0..len)).collect();
        let yb: Option<Vec<f64>> = used
            .iter()
            .map(|&i| {
                let m = sup(i, &mut idx.iter().copied());
                (m > 0.0).then(|| m.ln())
            })
            .collect();
        if let Some(yb) = yb {
            slopes.push(least_squares(&x, &yb).0);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if slopes.is_empty() {
        (slope, slope)
    } else {
        (percentile(&slopes, 0.025), percentile(&slopes, 0.975))
    };
    Ok(ScalingFit {
        slope,
        intercept,
        ci_low,
        ci_high,
        used_nus: used.iter().map(|&i| nus[i]).collect(),
        excluded_nus: excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub sup_div_l2: f64,
    /// `(int_0^T ||div u||_2^2)^{1/2}`
    pub div_l2_in_time: f64,
    pub sup_discrepancy: f64,
    /// `E_0 + mu ||grad u_0||^2 + nu ||div u_0||^2 + ||G_0||^2 / nu`
    pub energy0_nu: f64,
    pub sup_a1: f64,
    pub sup_nu_div_sq: f64,
    pub sup_residual_hm1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMember {
    pub nu: f64,
    pub config: RunConfig,
    pub records: Vec<DiagnosticsRecord>,
    /// `(t, ||u(t) - v(t)||_2)` at the reference sample times.
    pub discrepancy: Vec<(f64, f64)>,
    pub metrics: Option<MemberMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub times: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub max_div: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub nus: Vec<f64>,
    /// Step shared by every compressible member.
    pub dt: Option<f64>,
    pub members: Vec<SweepMember>,
    pub reference: Option<ReferenceSummary>,
    /// Fit of `sup_t ||div u||_2` against `nu`.
    pub div_fit: Option<ScalingFit>,
    /// True when some member or the reference failed.
    pub partial: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub workers: usize,
    pub seed: u64,
    pub bootstrap: usize,
    /// Spacing of the reference comparison times; the record cadence when
    /// absent, or ten per run without one.
    pub compare_interval: Option<f64>,
    pub with_reference: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            seed: 0,
            bootstrap: 200,
            compare_interval: None,
            with_reference: true,
        }
    }
}

pub fn validate_nus(nus: &[f64], mu: f64) -> Result<()> {
    if nus.is_empty() {
        return Err(Error::InvalidParameter("the nu list is empty".into()));
    }
    if nus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(format!("nu list must be strictly increasing, got {nus:?}")));
    }
    if let Some(bad) = nus.iter().find(|&&nu| !(nu - 2.0 * mu > 0.0) || !nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("nu = {bad} leaves lambda = nu - 2 mu nonpositive")));
    }
    Ok(())
}

/// `base` with `lambda` chosen so that `2 mu + lambda = nu`.
pub fn member_config(base: &RunConfig, nu: f64, dt: Option<f64>) -> RunConfig {
    let mut cfg = base.clone();
    cfg.simulation.lambda = nu - 2.0 * base.simulation.mu;
    if cfg.simulation.fixed_dt.is_none() {
        cfg.simulation.fixed_dt = dt;
    }
    cfg
}

/// The CFL step at the initial state, rounded down to divide `t_end`.
pub fn shared_step(base: &RunConfig, nus: &[f64]) -> Result<Option<f64>> {
    let t_end = base.simulation.t_end;
    if base.simulation.fixed_dt.is_some() || t_end <= 0.0 {
        return Ok(base.simulation.fixed_dt);
    }
    let state = base.initial_state()?;
    let mut dt = f64::INFINITY;
    for &nu in nus {
        let cfg = member_config(base, nu, None);
        let law = cfg.simulation.pressure_law(state.rho.max())?;
        dt = dt.min(Solver::new(cfg.simulation, law)?.cfl_dt(&state)?.0);
    }
    Ok(Some(t_end / (t_end / dt).ceil()))
}

pub fn comparison_times(base: &RunConfig, interval: Option<f64>) -> Vec<f64> {
    let t_end = base.simulation.t_end;
    if t_end <= 0.0 {
        return vec![0.0];
    }
    let step = interval
        .or(base.simulation.diagnostic_interval)
        .unwrap_or(t_end / 10.0);
    let count = (t_end / step - 1e-9).ceil() as usize;
    let mut t: Vec<f64> = (0..count).map(|k| k as f64 * step).collect();
    t.push(t_end);
    t
}

fn member_metrics(nu: f64, mu: f64, records: &[DiagnosticsRecord], discrepancy: &[(f64, f64)]) -> Option<MemberMetrics> {
    let first = records.first()?;
    let get = |r: &DiagnosticsRecord, f: fn(&DiagnosticsRecord) -> Option<f64>| f(r).unwrap_or(f64::NAN);
    let sup = |f: fn(&DiagnosticsRecord) -> Option<f64>| records.iter().map(|r| get(r, f)).fold(f64::NEG_INFINITY, f64::max);
    let mut div2 = 0.0;
    for w in records.windows(2) {
        let dt = get(&w[1], |r| r.t) - get(&w[0], |r| r.t);
        div2 += 0.5 * dt * (get(&w[0], |r| r.div_l2).powi(2) + get(&w[1], |r| r.div_l2).powi(2));
    }
    let e0 = get(first, |r| r.kinetic) + get(first, |r| r.potential);
    let energy0_nu = e0
        + mu * get(first, |r| r.grad_u_l2).powi(2)
        + nu * get(first, |r| r.div_l2).powi(2)
        + get(first, |r| r.g_l2).powi(2) / nu;
    Some(MemberMetrics {
        sup_div_l2: sup(|r| r.div_l2),
        div_l2_in_time: div2.sqrt(),
        sup_discrepancy: discrepancy.iter().map(|d| d.1).fold(f64::NAN, f64::max),
        energy0_nu,
        sup_a1: sup(|r| r.a1),
        sup_nu_div_sq: sup(|r| r.nu_div_sq),
        sup_residual_hm1: sup(|r| r.momentum_residual_hm1),
    })
}

fn run_member(cfg: &RunConfig, reference: Option<&ReferenceRun>) -> (Vec<DiagnosticsRecord>, Vec<(f64, f64)>, Option<String>) {
    let mut records = Vec::new();
    let mut discrepancy = Vec::new();
    let outcome = Trajectory::start(cfg).and_then(|mut traj| {
        traj.run(&mut |e| {
            if let Event::Record { record, trajectory } = e {
                records.push(record.clone());
                if let Some(r) = reference {
                    let t = trajectory.state.t;
                    if let Some(s) = r.samples.iter().find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0)) {
                        discrepancy.push((t, trajectory.state.u.sub(&s.velocity).l2()));
                    }
                }
            }
            Ok(())
        })
    });
    (records, discrepancy, outcome.err().map(|e| e.to_string()))
}

/// Runs one compressible member per `nu` plus the incompressible reference.
///
/// Discrepancies exist only at comparison times that are also record times.
pub fn run_sweep(base: &RunConfig, nus: &[f64], opts: &SweepOptions) -> Result<SweepResult> {
    base.validate()?;
    validate_nus(nus, base.simulation.mu)?;
    let dt = shared_step(base, nus)?;
    let times = comparison_times(base, opts.compare_interval);
    let mut warnings = Vec::new();
    let mut partial = false;

    let reference = if opts.with_reference {
        let initial = base.initial_state()?;
        let solver = IncompressibleSolver::for_config(base, &initial.rho)?;
        match incompressible_reference(&solver, &initial, &times) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("reference run failed: {e}"));
                partial = true;
                None
            }
        }
    } else {
        None
    };
    if reference.as_ref().is_some_and(|r| r.projected_initial_data) {
        warnings.push("initial velocity was projected for the reference run".into());
    }

    let configs: Vec<RunConfig> = nus.iter().map(|&nu| member_config(base, nu, dt)).collect();
    let results: Mutex<BTreeMap<usize, SweepMember>> = Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    let workers = opts.workers.clamp(1, nus.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let (records, discrepancy, error) = run_member(&configs[i], reference.as_ref());
                let member = SweepMember {
                    nu: nus[i],
                    metrics: if error.is_none() {
                        member_metrics(nus[i], base.simulation.mu, &records, &discrepancy)
                    } else {
                        None
                    },
                    config: configs[i].clone(),
                    records,
                    discrepancy,
                    error,
                };
                results.lock().expect("collector").insert(i, member);
            });
        }
    });
    let members: Vec<SweepMember> = results.into_inner().expect("collector").into_values().collect();
    for m in &members {
        if let Some(e) = &m.error {
            partial = true;
            warnings.push(format!("member nu = {} failed: {e}", m.nu));
        }
    }
    let ok: Vec<&SweepMember> = members.iter().filter(|m| m.error.is_none()).collect();
    let div_fit = if ok.len() >= 3 {
        let series: Vec<Vec<f64>> = ok
            .iter()
            .map(|m| m.records.iter().filter_map(|r| r.div_l2).collect())
            .collect();
        let fit_nus: Vec<f64> = ok.iter().map(|m| m.nu).collect();
        match fit_scaling(&fit_nus, &series, opts.bootstrap, opts.seed) {
            Ok(f) => {
                if !f.excluded_nus.is_empty() {
                    warnings.push(format!("non-positive divergence excluded for nu = {:?}", f.excluded_nus));
                }
                Some(f)
            }
            Err(e) => {
                warnings.push(format!("no divergence fit: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(SweepResult {
        nus: nus.to_vec(),
        dt,
        members,
        reference: reference.map(|r| ReferenceSummary {
            times: r.samples.iter().map(|s| s.t).collect(),
            kinetic: r.samples.iter().map(|s| s.kinetic).collect(),
            max_div: r.max_div,
            steps: r.steps,
        }),
        div_fit,
        partial,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub nu: f64,
    pub t: f64,
    pub discrepancy_l2: f64,
    pub residual_hm1: Option<f64>,
    /// True when the value was interpolated onto the reference time.
    pub resampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `sup_t` discrepancy per `nu`.
    pub sup_discrepancy: Vec<(f64, f64)>,
    /// Each `sup_t` discrepancy is at most 1.1 times the previous one.
    pub monotone: bool,
    /// Fit of `sup_t` of the `H^{-1}` momentum residual against `nu`.
    pub residual_fit: Option<ScalingFit>,
    pub resampled: bool,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nu,t,discrepancy_l2,momentum_residual_hm1,resampled\n");
        for r in &self.rows {
            let res = r.residual_hm1.map(|v| format!("{v:e}")).unwrap_or_default();
            s.push_str(&format!("{:e},{:e},{:e},{res},{}\n", r.nu, r.t, r.discrepancy_l2, u8::from(r.resampled)));
        }
        s
    }
}

fn interpolate(points: &[(f64, f64)], t: f64) -> Option<f64> {
    let j = points.iter().position(|p| p.0 >= t)?;
    if j == 0 {
        return ((points[0].0 - t).abs() < 1e-12 * t.abs().max(1.0)).then_some(points[0].1);
    }
    let (a, b) = (points[j - 1], points[j]);
    Some(a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0))
}

pub fn compare_limit(sweep: &SweepResult, bootstrap: usize, seed: u64) -> Result<ConvergenceTable> {
    let reference = sweep
        .reference
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("the sweep has no reference run".into()))?;
    let mut rows = Vec::new();
    let mut sups = Vec::new();
    let mut any_resampled = false;
    for m in sweep.members.iter().filter(|m| m.error.is_none()) {
        let residual: Vec<(f64, f64)> = m
            .records
            .iter()
            .filter_map(|r| Some((r.t?, r.momentum_residual_hm1?)))
            .collect();
        let mut sup: f64 = 0.0;
        for &t in &reference.times {
            let tol = 1e-9 * t.abs().max(1.0);
            let (d, resampled) = match m.discrepancy.iter().find(|p| (p.0 - t).abs() <= tol) {
                Some(p) => (Some(p.1), false),
                None => (interpolate(&m.discrepancy, t), true),
            };
            let Some(d) = d else { continue };
            any_resampled |= resampled;
            sup = sup.max(d);
            rows.push(ConvergenceRow {
                nu: m.nu,
                t,
                discrepancy_l2: d,
                residual_hm1: residual.iter().find(|p| (p.0 - t).abs() <= tol).map(|p| p.1).or_else(|| interpolate(&residual, t)),
                resampled,
            });
        }
        sups.push((m.nu, sup));
    }
    let monotone = sups.windows(2).all(|w| w[1].1 <= 1.1 * w[0].1);
    let ok: Vec<&SweepMember> = sweep.members.iter().filter(|m| m.error.is_none()).collect();
    let residual_fit = if ok.len() >= 3 {
        let series: Vec<Vec<f64>> = ok
            .iter()
            .map(|m| m.records.iter().filter_map(|r| r.momentum_residual_hm1).collect())
            .collect();
        fit_scaling(&ok.iter().map(|m| m.nu).collect::<Vec<_>>(), &series, bootstrap, seed).ok()
    } else {
        None
    };
    Ok(ConvergenceTable {
        rows,
        sup_discrepancy: sups,
        monotone,
        residual_fit,
        resampled: any_resampled,
    })
}
