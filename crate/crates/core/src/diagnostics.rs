//! Energy, the higher-order functionals, the velocity-gradient decomposition
//! and the inequality verifiers.
//!
//! Quantities needed inside time integrals are gathered into a
//! [`FlowSample`] every solver step and accumulated by [`Tracker`] with the
//! trapezoid rule.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{mat2_norm, ScalarField, TensorField, VectorField};
use crate::solver::Solver;
use crate::spectral::{SpectralOps, Spectrum};
use crate::state::FluidState;
use crate::striated::{striated_norm, Smoothness, VectorFieldFamily};
use crate::thermo::{g_field, h_l, HlSample, PressureLaw};

/// Above this vacuum fraction the weighted functional is flagged unreliable.
pub const VACUUM_FRACTION_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub potential: f64,
    pub dissipation: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential + self.dissipation
    }
}

/// `h^2 sum rho |u|^2 / 2`
pub fn kinetic_energy(state: &FluidState) -> f64 {
    let area = state.grid().cell_area();
    0.5 * area
        * (0..state.rho.data.len())
            .map(|k| state.rho.data[k] * (state.u.x[k] * state.u.x[k] + state.u.y[k] * state.u.y[k]))
            .sum::<f64>()
}

/// `int H_1(rho)`
pub fn potential_energy(state: &FluidState, law: &PressureLaw) -> Result<f64> {
    Ok(h_l(&state.rho, 1.0, law)?.integral())
}

/// `E = int rho |u|^2/2 + H_1(rho)` plus the accumulated dissipation.
pub fn energy(state: &FluidState, law: &PressureLaw, accumulated_dissipation: f64) -> Result<EnergyParts> {
    Ok(EnergyParts {
        kinetic: kinetic_energy(state),
        potential: potential_energy(state, law)?,
        dissipation: accumulated_dissipation,
    })
}

/// `sigma(t) = min(1, t)`
pub fn sigma(t: f64) -> f64 {
    t.clamp(0.0, 1.0)
}

/// `int f^2` over the cells where `mask` holds.
fn masked_sq(f: &[f64], mask: &[bool], area: f64) -> f64 {
    area * f.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v * v).sum::<f64>()
}

/// Instantaneous quantities measured every solver step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub mass: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `||grad u||_2`
    pub grad_u_l2: f64,
    /// grid max of the pointwise operator norm of `grad u`
    pub grad_u_inf: f64,
    pub div_l2: f64,
    pub div_inf: f64,
    pub g_l2: f64,
    pub f_l2: f64,
    pub f_inf: f64,
    /// `||sqrt(rho) u_dot||_2`
    pub sqrt_rho_udot_l2: f64,
    pub udot_l2: f64,
    /// `||rho u_dot||_2`
    pub momentum_rate_l2: f64,
    /// `||grad F||_2`
    pub grad_f_l2: f64,
    /// `||grad u_dot||_2` over cells at or above the density floor.
    pub grad_udot_l2: f64,
    /// `||F_dot||_2` over cells at or above the density floor.
    pub fdot_l2: f64,
    pub vacuum_fraction: f64,
    /// `mu ||grad u||^2 + (mu + lambda) ||div u||^2`
    pub dissipation_rate: f64,
    /// `mu ||grad u_dot||^2 + (mu + lambda)/nu^2 ||F_dot||^2`
    pub a2_rate: f64,
}

/// Fields behind a [`FlowSample`], for callers that need more than norms.
#[derive(Debug, Clone)]
pub struct FlowFields {
    pub grad_u: TensorField,
    pub div_u: ScalarField,
    pub g: ScalarField,
    pub flux: ScalarField,
    /// `rho u_dot = L u - grad G`
    pub momentum_rate: VectorField,
    pub udot: VectorField,
    pub fdot: ScalarField,
}

/// `F_dot = nu (div u_dot - d_j u^k d_k u^j) + rho P'(rho) div u`
pub fn flux_material_derivative(
    rho: &ScalarField,
    grad_u: &TensorField,
    grad_udot: &TensorField,
    law: &PressureLaw,
    nu: f64,
) -> ScalarField {
    let c = &grad_u.c;
    let d = &grad_udot.c;
    let data = (0..rho.data.len())
        .map(|k| {
            let div = c[0][0][k] + c[1][1][k];
            let div_dot = d[0][0][k] + d[1][1][k];
            let square_trace = c[0][0][k] * c[0][0][k] + 2.0 * c[0][1][k] * c[1][0][k] + c[1][1][k] * c[1][1][k];
            let r = rho.data[k];
            nu * (div_dot - square_trace) + r * law.dpressure(r) * div
        })
        .collect();
    ScalarField { grid: rho.grid, data }
}

pub fn flow_fields(solver: &Solver, state: &FluidState) -> Result<FlowFields> {
    let ops = solver.ops();
    let cfg = solver.config();
    let nu = cfg.nu();
    let grad_u = ops.gradient_tensor(&state.u)?;
    let div_u = grad_u.trace();
    let g = g_field(&state.rho, solver.law())?;
    let flux = div_u.scale(nu).sub(&g);
    let momentum_rate = solver.momentum_rhs(state)?;
    let (udot, _) = solver.material_derivative(state)?;
    let grad_udot = ops.gradient_tensor(&udot)?;
    let fdot = flux_material_derivative(&state.rho, &grad_u, &grad_udot, solver.law(), nu);
    Ok(FlowFields {
        grad_u,
        div_u,
        g,
        flux,
        momentum_rate,
        udot,
        fdot,
    })
}

pub fn flow_sample(solver: &Solver, state: &FluidState) -> Result<FlowSample> {
    let fields = flow_fields(solver, state)?;
    flow_sample_from(solver, state, &fields)
}

pub fn flow_sample_from(solver: &Solver, state: &FluidState, fields: &FlowFields) -> Result<FlowSample> {
    let ops = solver.ops();
    let cfg = solver.config();
    let (mu, lambda, nu) = (cfg.mu, cfg.lambda, cfg.nu());
    let grid = state.grid();
    let area = grid.cell_area();
    let floor = cfg.rho_floor();
    let mask: Vec<bool> = state.rho.data.iter().map(|&r| r >= floor).collect();
    let vacuum_fraction = mask.iter().filter(|m| !**m).count() as f64 / mask.len() as f64;

    let grad_udot = ops.gradient_tensor(&fields.udot)?;
    let grad_udot_sq: f64 = (0..2)
        .flat_map(|j| (0..2).map(move |k| (j, k)))
        .map(|(j, k)| masked_sq(&grad_udot.c[j][k], &mask, area))
        .sum();
    let fdot_sq = masked_sq(&fields.fdot.data, &mask, area);
    let sqrt_rho_udot_sq = area
        * (0..mask.len())
            .map(|k| state.rho.data[k] * (fields.udot.x[k].powi(2) + fields.udot.y[k].powi(2)))
            .sum::<f64>();
    let grad_u_l2 = fields.grad_u.l2();
    let div_l2 = fields.div_u.l2();

    Ok(FlowSample {
        t: state.t,
        kinetic: kinetic_energy(state),
        potential: potential_energy(state, solver.law())?,
        mass: state.mass(),
        rho_min: state.rho.min(),
        rho_max: state.rho.max(),
        grad_u_l2,
        grad_u_inf: fields.grad_u.linf(),
        div_l2,
        div_inf: fields.div_u.linf(),
        g_l2: fields.g.l2(),
        f_l2: fields.flux.l2(),
        f_inf: fields.flux.linf(),
        sqrt_rho_udot_l2: sqrt_rho_udot_sq.sqrt(),
        udot_l2: fields.udot.l2(),
        momentum_rate_l2: fields.momentum_rate.l2(),
        grad_f_l2: ops.grad(&fields.flux)?.l2(),
        grad_udot_l2: grad_udot_sq.sqrt(),
        fdot_l2: fdot_sq.sqrt(),
        vacuum_fraction,
        dissipation_rate: mu * grad_u_l2 * grad_u_l2 + (mu + lambda) * div_l2 * div_l2,
        a2_rate: mu * grad_udot_sq + (mu + lambda) / (nu * nu) * fdot_sq,
    })
}

/// Trapezoid accumulation of the time integrals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tracker {
    pub last: Option<FlowSample>,
    /// `int_0^t (mu ||grad u||^2 + (mu + lambda) ||div u||^2)`
    pub dissipation: f64,
    /// `int_0^t ||sqrt(rho) u_dot||^2`
    pub udot: f64,
    /// `int_0^t sigma (mu ||grad u_dot||^2 + (mu+lambda)/nu^2 ||F_dot||^2)`
    pub a2_weighted: f64,
    /// The same integral without the `sigma` weight.
    pub a2_unweighted: f64,
    /// `int_0^t ||grad u||_inf`
    pub lipschitz: f64,
    /// `int_0^t ||div u||_inf`
    pub compression: f64,
    /// `int_0^t ||F||_inf`
    pub flux_inf: f64,
    /// Largest vacuum fraction seen.
    pub max_vacuum_fraction: f64,
}

impl Tracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, s: FlowSample) {
        if let Some(p) = self.last {
            let dt = s.t - p.t;
            let trap = |a: f64, b: f64| 0.5 * dt * (a + b);
            self.dissipation += trap(p.dissipation_rate, s.dissipation_rate);
            self.udot += trap(p.sqrt_rho_udot_l2.powi(2), s.sqrt_rho_udot_l2.powi(2));
            self.a2_weighted += trap(sigma(p.t) * p.a2_rate, sigma(s.t) * s.a2_rate);
            self.a2_unweighted += trap(p.a2_rate, s.a2_rate);
            self.lipschitz += trap(p.grad_u_inf, s.grad_u_inf);
            self.compression += trap(p.div_inf, s.div_inf);
            self.flux_inf += trap(p.f_inf, s.f_inf);
        }
        self.max_vacuum_fraction = self.max_vacuum_fraction.max(s.vacuum_fraction);
        self.last = Some(s);
    }

    pub fn energy(&self) -> Option<EnergyParts> {
        self.last.map(|s| EnergyParts {
            kinetic: s.kinetic,
            potential: s.potential,
            dissipation: self.dissipation,
        })
    }

    /// `(mu/2) ||grad u||^2 + ((mu+lambda)/2) ||div u||^2 + int ||sqrt(rho) u_dot||^2`
    pub fn a1(&self, mu: f64, lambda: f64) -> Option<f64> {
        self.last
            .map(|s| 0.5 * mu * s.grad_u_l2.powi(2) + 0.5 * (mu + lambda) * s.div_l2.powi(2) + self.udot)
    }

    /// `sigma ||sqrt(rho) u_dot||^2 + int sigma (...)`
    pub fn a2(&self) -> Option<A2Value> {
        self.last.map(|s| A2Value {
            value: sigma(s.t) * s.sqrt_rho_udot_l2.powi(2) + self.a2_weighted,
            unweighted: s.sqrt_rho_udot_l2.powi(2) + self.a2_unweighted,
            fdot_l2: s.fdot_l2,
            reliable: self.max_vacuum_fraction <= VACUUM_FRACTION_LIMIT,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A2Value {
    pub value: f64,
    /// The functional with `sigma` replaced by 1.
    pub unweighted: f64,
    pub fdot_l2: f64,
    pub reliable: bool,
}

/// `||rho u_dot - grad F - mu Lap u||` in the homogeneous `H^{-1}` norm.
pub fn momentum_residual_hm1(solver: &Solver, state: &FluidState, fields: &FlowFields) -> Result<f64> {
    let ops = solver.ops();
    let mu = solver.config().mu;
    let grad_f = ops.grad(&fields.flux)?;
    let (lx, ly) = ops.forward_vector(&state.u);
    let lap = |s: &Spectrum| ops.apply(s, |kx, ky| Complex64::new(-(kx * kx + ky * ky), 0.0));
    let (lx, ly) = (lap(&lx), lap(&ly));
    let r = fields.momentum_rate.sub(&grad_f);
    let (mut rx, mut ry) = ops.forward_vector(&r);
    rx.add_assign(&lx, -mu);
    ry.add_assign(&ly, -mu);
    Ok(ops.hminus1_norm(&rx).hypot(ops.hminus1_norm(&ry)))
}

/// Split of `grad u` into the part driven by `rho u_dot` and the part driven by `G`.
#[derive(Debug, Clone)]
pub struct GradDecomposition {
    /// `grad u_tilde`
    pub tilde: TensorField,
    /// `grad u_G = nu^{-1} R R G`
    pub from_pressure: TensorField,
    /// `||grad u_tilde + grad u_G - grad u|| / ||grad u||` (absolute when `grad u = 0`)
    pub residual: f64,
    pub from_pressure_inf: f64,
}

/// `grad u_tilde = nu^{-1} R R F + grad (grad_perp psi)` where
/// `F = Lap^{-1} div(rho u_dot)` and `rot u = -mu^{-1} (-Lap)^{-1} rot(rho u_dot)`.
pub fn grad_decomposition(solver: &Solver, state: &FluidState) -> Result<GradDecomposition> {
    let ops = solver.ops();
    let cfg = solver.config();
    let (mu, nu) = (cfg.mu, cfg.nu());
    let w = solver.momentum_rhs(state)?;
    let g = g_field(&state.rho, solver.law())?;
    let (sx, sy) = ops.forward_vector(&w);
    let sg = ops.forward(&g);
    let grid = ops.grid();
    let n = grid.n();
    let zero = Complex64::new(0.0, 0.0);
    let mut tilde_s: [[Spectrum; 2]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| Spectrum::zeros(grid)));
    let mut press_s: [[Spectrum; 2]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| Spectrum::zeros(grid)));
    for j in 0..n {
        for i in 0..n {
            let idx = j * n + i;
            let (kx, ky) = (ops.wavenumber(i), ops.wavenumber(j));
            let k2 = kx * kx + ky * ky;
            if ops.is_nyquist(i, j) || k2 == 0.0 {
                for a in 0..2 {
                    for b in 0..2 {
                        tilde_s[a][b].data[idx] = zero;
                        press_s[a][b].data[idx] = zero;
                    }
                }
                continue;
            }
            let iu = Complex64::new(0.0, 1.0);
            let div_w = iu * (kx * sx.data[idx] + ky * sy.data[idx]);
            let rot_w = iu * (kx * sy.data[idx] - ky * sx.data[idx]);
            let flux = -div_w / k2;
            let rot_u = -rot_w / (mu * k2);
            for a in 0..2 {
                for b in 0..2 {
                    let rr = SpectralOps::riesz_symbol(a, b, kx, ky);
                    press_s[a][b].data[idx] = rr * sg.data[idx] / nu;
                    // solenoidal part: u_s = (d_2 psi, -d_1 psi), rot u = -Lap psi
                    let sol = match a {
                        0 => -SpectralOps::riesz_symbol(b, 1, kx, ky) * rot_u,
                        _ => SpectralOps::riesz_symbol(b, 0, kx, ky) * rot_u,
                    };
                    tilde_s[a][b].data[idx] = rr * flux / nu + sol;
                }
            }
        }
    }
    let to_tensor = |s: &[[Spectrum; 2]; 2]| {
        let (a, b) = ops.inverse_pair(&s[0][0], &s[0][1]);
        let (c, d) = ops.inverse_pair(&s[1][0], &s[1][1]);
        TensorField { grid, c: [[a, b], [c, d]] }
    };
    let tilde = to_tensor(&tilde_s);
    let from_pressure = to_tensor(&press_s);
    let grad_u = ops.gradient_tensor(&state.u)?;
    let gap = tilde.add(&from_pressure).sub(&grad_u).l2();
    let scale = grad_u.l2();
    Ok(GradDecomposition {
        residual: if scale > 0.0 { gap / scale } else { gap },
        from_pressure_inf: from_pressure.linf(),
        tilde,
        from_pressure,
    })
}

/// Grid max of the pointwise spectral norm of `R R G`, after the 2/3 rule.
pub fn double_riesz_sup(ops: &SpectralOps, g: &ScalarField) -> Result<f64> {
    g.check_finite("Riesz input")?;
    let mut s = ops.forward(g);
    ops.dealias_spectrum(&mut s);
    let t = ops.riesz_tensor_spectral(&s);
    Ok((0..g.data.len())
        .map(|k| mat2_norm(t.c[0][0][k], t.c[0][1][k], t.c[1][0][k], t.c[1][1][k]))
        .fold(0.0, f64::max))
}

/// Both sides of the logarithmic double-Riesz bound, without its constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRieszTerms {
    pub lhs: f64,
    pub g_lq: f64,
    pub g_inf: f64,
    pub g_striated: f64,
    /// `||G||_q + ||G||_inf (1 + log(e + ||G||_striated / ||G||_inf))`
    pub rhs_unit: f64,
}

impl LogRieszTerms {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs_unit
    }

    pub fn margin(&self, constant: f64) -> f64 {
        constant * self.rhs_unit - self.lhs
    }
}

/// `None` when `G` vanishes identically.
pub fn log_riesz_terms(ops: &SpectralOps, g: &ScalarField, family: &VectorFieldFamily, p: f64, q: f64) -> Result<Option<LogRieszTerms>> {
    let g_inf = g.linf();
    if g_inf == 0.0 {
        return Ok(None);
    }
    let g_lq = g.lp(q);
    let g_striated = striated_norm(ops, g, family, p, Smoothness::Rough)?;
    let rhs_unit = g_lq + g_inf * (1.0 + (std::f64::consts::E + g_striated / g_inf).ln());
    Ok(Some(LogRieszTerms {
        lhs: double_riesz_sup(ops, g)?,
        g_lq,
        g_inf,
        g_striated,
        rhs_unit,
    }))
}

/// `C rhs - lhs`, or `None` for `G = 0`.
pub fn log_riesz_check(
    ops: &SpectralOps,
    g: &ScalarField,
    family: &VectorFieldFamily,
    p: f64,
    q: f64,
    constant: f64,
) -> Result<Option<f64>> {
    Ok(log_riesz_terms(ops, g, family, p, q)?.map(|t| t.margin(constant)))
}

/// `|int f det(grad v, grad w)| / (||grad f|| ||grad v|| ||grad w||)`, `None` for a zero denominator.
pub fn clms_check(ops: &SpectralOps, f: &ScalarField, v: &ScalarField, w: &ScalarField) -> Result<Option<f64>> {
    for (name, x) in [("f", f), ("v", v), ("w", w)] {
        x.check_finite(name)?;
        ops.check_zero_mean(x)?;
    }
    let (gf, gv, gw) = (ops.grad(f)?, ops.grad(v)?, ops.grad(w)?);
    let denom = gf.l2() * gv.l2() * gw.l2();
    if denom == 0.0 {
        return Ok(None);
    }
    let area = f.grid.cell_area();
    let lhs = area
        * (0..f.data.len())
            .map(|k| f.data[k] * (gv.x[k] * gw.y[k] - gv.y[k] * gw.x[k]))
            .sum::<f64>();
    Ok(Some(lhs.abs() / denom))
}

/// The two sides of both density-weighted interpolation inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpTerms {
    /// `||v||_2`
    pub lhs_l2: f64,
    /// `||rho - rho_tilde||_p^{p/2} ||grad v|| + ||sqrt(rho) v||`
    pub rhs_l2: f64,
    /// `||rho^{q'/(2q)} v||_q`
    pub lhs_lq: f64,
    /// `||sqrt(rho) v||^{2/q} ||grad v||^{1/q' - 1/q}
    ///  + ||rho - rho_tilde||_p^{(p/q)(1 - q'/2)} ||sqrt(rho) v||^{q'/q} ||grad v||^{1 - q'/q}`
    pub rhs_lq: f64,
}

impl InterpTerms {
    pub fn ratio_l2(&self) -> f64 {
        self.lhs_l2 / self.rhs_l2
    }

    pub fn ratio_lq(&self) -> f64 {
        self.lhs_lq / self.rhs_lq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpMargins {
    pub l2: f64,
    pub lq: f64,
}

pub fn interp_terms(ops: &SpectralOps, v: &ScalarField, rho: &ScalarField, rho_tilde: f64, p: f64, q: f64) -> Result<InterpTerms> {
    if rho.min() < 0.0 {
        return Err(Error::NegativeDensity {
            i: 0,
            j: 0,
            value: rho.min(),
        });
    }
    if !(q > 2.0 && p > 1.0) {
        return Err(Error::InvalidParameter(format!("need p > 1 and q > 2, got p = {p}, q = {q}")));
    }
    let qp = q / (q - 1.0);
    let dev = rho.map(|r| r - rho_tilde).lp(p);
    let grad = ops.grad(v)?.l2();
    let weighted = v.zip_map(rho, |a, r| a * r.sqrt()).l2();
    let lhs_lq = v.zip_map(rho, |a, r| a * r.powf(qp / (2.0 * q))).lp(q);
    let rhs_lq = weighted.powf(2.0 / q) * grad.powf(1.0 / qp - 1.0 / q)
        + dev.powf(p / q * (1.0 - qp / 2.0)) * weighted.powf(qp / q) * grad.powf(1.0 - qp / q);
    Ok(InterpTerms {
        lhs_l2: v.l2(),
        rhs_l2: dev.powf(p / 2.0) * grad + weighted,
        lhs_lq,
        rhs_lq,
    })
}

pub fn interp_check(
    ops: &SpectralOps,
    v: &ScalarField,
    rho: &ScalarField,
    rho_tilde: f64,
    p: f64,
    q: f64,
    constants: (f64, f64),
) -> Result<InterpMargins> {
    let t = interp_terms(ops, v, rho, rho_tilde, p, q)?;
    Ok(InterpMargins {
        l2: constants.0 * t.rhs_l2 - t.lhs_l2,
        lq: constants.1 * t.rhs_lq - t.lhs_lq,
    })
}

/// Continuation-criterion quantities at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSample {
    pub t: f64,
    pub family_norm: f64,
    pub inv_nondegeneracy: f64,
    /// `||1/rho||_inf`, absent when the density touches the floor.
    pub inv_rho_inf: Option<f64>,
    pub rho_inf: f64,
    /// `||rho - rho_tilde||_inf`
    pub rho_deviation_inf: f64,
    /// `sup_v ||d_{X_v} rho||_p`
    pub directional: f64,
    pub grad_u_l2: f64,
    pub udot_l2: f64,
    /// `int_0^t ||grad u||_inf`
    pub lipschitz_integral: f64,
    /// `A_3 = ||X||_{inf,p} + sup_v ||d_{X_v} rho||_p`
    pub a3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub samples: Vec<ContinuationSample>,
    /// Smallest `C` with `int ||grad u||_inf <= C (1 + A3(0)/I(0)) e^{C t}` at every sample.
    pub fitted_lipschitz_constant: f64,
    /// `max_t (||rho - rho_tilde||_inf^2 - ||rho_0 - rho_tilde||_inf^2)`, floored at 0.
    pub density_excess: f64,
    pub all_finite: bool,
}

/// Smallest `c >= 0` with `c k e^{c t} >= target`.
fn fit_exponential(k: f64, t: f64, target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    let f = |c: f64| c * k * (c * t).exp() - target;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

pub fn lipschitz_and_blowup_monitor(history: &[ContinuationSample]) -> Result<ContinuationReport> {
    let first = history.first().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let k = 1.0 + first.a3 * first.inv_nondegeneracy;
    let fitted = history
        .iter()
        .map(|s| fit_exponential(k, s.t - first.t, s.lipschitz_integral - first.lipschitz_integral))
        .fold(0.0, f64::max);
    let base = first.rho_deviation_inf.powi(2);
    let excess = history
        .iter()
        .map(|s| s.rho_deviation_inf.powi(2) - base)
        .fold(0.0, f64::max);
    let all_finite = history.iter().all(|s| {
        [s.family_norm, s.inv_nondegeneracy, s.rho_inf, s.directional, s.grad_u_l2, s.udot_l2, s.lipschitz_integral]
            .iter()
            .all(|v| v.is_finite())
    });
    Ok(ContinuationReport {
        samples: history.to_vec(),
        fitted_lipschitz_constant: fitted,
        density_excess: excess,
        all_finite,
    })
}

/// Fitted constant in `nu^{-1} int ||G||^{l+1} <= 2 int H_l(rho_0) + C nu^{-1} int ||F||^{l+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureControl {
    pub t: Vec<f64>,
    /// `nu^{-1} int_0^t ||G||_{l+1}^{l+1}`
    pub pressure_integral: Vec<f64>,
    /// `nu^{-1} int_0^t ||F||_{l+1}^{l+1}`
    pub flux_integral: Vec<f64>,
    pub fitted_constant: f64,
}

pub fn pressure_by_flux_control(history: &[HlSample], l: f64, nu: f64) -> Result<PressureControl> {
    if history.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: history.len(),
        });
    }
    let h0 = history[0].h_l1;
    let (mut pg, mut pf) = (0.0, 0.0);
    let mut out = PressureControl {
        t: vec![history[0].t],
        pressure_integral: vec![0.0],
        flux_integral: vec![0.0],
        fitted_constant: 0.0,
    };
    for w in history.windows(2) {
        let dt = w[1].t - w[0].t;
        pg += 0.5 * dt * (w[0].g_norm.powf(l + 1.0) + w[1].g_norm.powf(l + 1.0)) / nu;
        pf += 0.5 * dt * (w[0].f_norm.powf(l + 1.0) + w[1].f_norm.powf(l + 1.0)) / nu;
        out.t.push(w[1].t);
        out.pressure_integral.push(pg);
        out.flux_integral.push(pf);
        let need = pg - 2.0 * h0;
        if need > 0.0 {
            out.fitted_constant = out.fitted_constant.max(if pf > 0.0 { need / pf } else { f64::INFINITY });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_saturates() {
        assert_eq!(sigma(0.3), 0.3);
        assert_eq!(sigma(4.0), 1.0);
    }

    #[test]
    fn exponential_fit_inverts() {
        let c = fit_exponential(2.0, 1.5, 10.0);
        assert!((c * 2.0 * (1.5 * c).exp() - 10.0).abs() < 1e-9);
        assert_eq!(fit_exponential(1.0, 1.0, 0.0), 0.0);
    }
}
