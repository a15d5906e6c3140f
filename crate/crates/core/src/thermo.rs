//! Barotropic pressure laws and the density functionals built from them:
//! the pressure deviation, the `H_l` potentials and the effective flux.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::quadrature::integrate;
use crate::spectral::SpectralOps;
use crate::spline::NaturalSpline;
use crate::state::FluidState;

/// Knots in the tabulated `H_l`.
pub const H_TABLE_KNOTS: usize = 10_000;

/// Negative densities down to this value are treated as zero.
pub const NEGATIVE_DENSITY_TOL: f64 = 1e-12;

/// How the pressure depends on density, as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PressureSpec {
    Gamma { a: f64, gamma: f64 },
    Table { knots: Vec<(f64, f64)> },
}

#[derive(Debug)]
enum Curve {
    Gamma { a: f64, gamma: f64 },
    Table(NaturalSpline),
}

#[derive(Debug)]
struct Shared {
    curve: Curve,
    rho_tilde: f64,
    p_tilde: f64,
    rho_max: f64,
    clamped: AtomicU64,
    tables: Mutex<Vec<(f64, Arc<HTable>)>>,
}

/// Increasing pressure law with equilibrium density `rho_tilde`.
///
/// Cheap to clone; clones share the `H_l` cache and the clamp counter.
#[derive(Debug, Clone)]
pub struct PressureLaw {
    shared: Arc<Shared>,
}

impl PressureLaw {
    /// Builds and validates a law on the operating range `[0, rho_max]`.
    pub fn new(spec: &PressureSpec, rho_tilde: f64, rho_max: f64) -> Result<Self> {
        if !(rho_tilde > 0.0 && rho_tilde.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "equilibrium density must be positive, got {rho_tilde}"
            )));
        }
        if !(rho_max > rho_tilde && rho_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "operating range upper bound {rho_max} must exceed the equilibrium density"
            )));
        }
        let curve = match spec {
            PressureSpec::Gamma { a, gamma } => {
                if !(*a > 0.0) || !(*gamma >= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma law needs a > 0 and gamma >= 1, got a = {a}, gamma = {gamma}"
                    )));
                }
                Curve::Gamma { a: *a, gamma: *gamma }
            }
            PressureSpec::Table { knots } => {
                let (x, y): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
                let spline = NaturalSpline::new(x, y)?;
                let (lo, hi) = spline.domain();
                if lo > 0.0 || hi < rho_max {
                    return Err(Error::InvalidParameter(format!(
                        "pressure table covers [{lo}, {hi}] but the operating range is [0, {rho_max}]"
                    )));
                }
                Curve::Table(spline)
            }
        };
        let mut shared = Shared {
            curve,
            rho_tilde,
            p_tilde: 0.0,
            rho_max,
            clamped: AtomicU64::new(0),
            tables: Mutex::new(Vec::new()),
        };
        shared.p_tilde = shared.curve.pressure(rho_tilde);
        let law = Self {
            shared: Arc::new(shared),
        };
        for i in 1..=1000 {
            let rho = rho_max * i as f64 / 1000.0;
            let dp = law.shared.curve.dpressure(rho);
            if !(dp > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "pressure must be increasing: P'({rho}) = {dp}"
                )));
            }
        }
        Ok(law)
    }

    /// Gamma law `a rho^gamma` with the conventional range `4 max(rho)`.
    pub fn gamma(a: f64, gamma: f64, rho_tilde: f64, rho_max: f64) -> Result<Self> {
        Self::new(&PressureSpec::Gamma { a, gamma }, rho_tilde, rho_max)
    }

    #[inline]
    pub fn rho_tilde(&self) -> f64 {
        self.shared.rho_tilde
    }

    #[inline]
    pub fn p_tilde(&self) -> f64 {
        self.shared.p_tilde
    }

    #[inline]
    pub fn rho_max(&self) -> f64 {
        self.shared.rho_max
    }

    /// Number of evaluations that fell outside `[0, rho_max]`.
    pub fn clamp_count(&self) -> u64 {
        self.shared.clamped.load(Ordering::Relaxed)
    }

    #[inline]
    fn clamp(&self, rho: f64) -> f64 {
        if rho < 0.0 || rho > self.shared.rho_max {
            self.shared.clamped.fetch_add(1, Ordering::Relaxed);
            rho.clamp(0.0, self.shared.rho_max)
        } else {
            rho
        }
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        self.shared.curve.pressure(self.clamp(rho))
    }

    pub fn dpressure(&self, rho: f64) -> f64 {
        self.shared.curve.dpressure(self.clamp(rho))
    }

    /// `P(rho) - P(rho_tilde)`
    pub fn deviation(&self, rho: f64) -> f64 {
        self.pressure(rho) - self.shared.p_tilde
    }

    /// Largest `P'` over the samples, for the acoustic time-step limit.
    pub fn max_sound_speed(&self, rho: &ScalarField) -> f64 {
        rho.data
            .iter()
            .map(|&r| self.dpressure(r))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// `H_l` at a single density, through the cached table.
    pub fn h_l_value(&self, rho: f64, l: f64) -> Result<f64> {
        let table = self.table(l)?;
        Ok(table.eval(self, self.clamp(rho)))
    }

    fn table(&self, l: f64) -> Result<Arc<HTable>> {
        if !(l >= 1.0) || !l.is_finite() {
            return Err(Error::InvalidParameter(format!("H_l needs l >= 1, got {l}")));
        }
        let mut cache = self.shared.tables.lock().expect("table cache poisoned");
        if let Some((_, t)) = cache.iter().find(|(ll, _)| *ll == l) {
            return Ok(t.clone());
        }
        let t = Arc::new(HTable::build(self, l));
        cache.push((l, t.clone()));
        Ok(t)
    }

    /// `H_l` computed directly by adaptive quadrature, bypassing the table.
    pub fn h_l_direct(&self, rho: f64, l: f64) -> f64 {
        let rt = self.shared.rho_tilde;
        if rho <= 0.0 {
            return self.signed_power(self.shared.curve.pressure(0.0) - self.shared.p_tilde, l) * -1.0;
        }
        let (i, _) = integrate(|s| self.integrand(s, l), rt, rho, 1e-15, 1e-13);
        (rho * i).max(0.0)
    }

    #[inline]
    fn signed_power(&self, g: f64, l: f64) -> f64 {
        if l == 1.0 {
            g
        } else {
            g.abs().powf(l - 1.0) * g
        }
    }

    fn integrand(&self, s: f64, l: f64) -> f64 {
        let g = self.shared.curve.pressure(s) - self.shared.p_tilde;
        self.signed_power(g, l) / (s * s)
    }
}

impl Curve {
    fn pressure(&self, rho: f64) -> f64 {
        match self {
            Curve::Gamma { a, gamma } => a * rho.powf(*gamma),
            Curve::Table(s) => s.eval(rho),
        }
    }

    fn dpressure(&self, rho: f64) -> f64 {
        match self {
            Curve::Gamma { a, gamma } => a * gamma * rho.powf(gamma - 1.0),
            Curve::Table(s) => s.eval_with_derivative(rho).1,
        }
    }
}

/// `H_l` on uniform knots over `[0, rho_max]`, interpolated by cubic Hermite
/// polynomials using the exact derivative `H' = (H + |G|^{l-1} G) / rho`.
#[derive(Debug)]
struct HTable {
    l: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HTable {
    fn build(law: &PressureLaw, l: f64) -> Self {
        let rho_max = law.rho_max();
        let rt = law.rho_tilde();
        let step = rho_max / H_TABLE_KNOTS as f64;
        let knots: Vec<f64> = (0..=H_TABLE_KNOTS).map(|i| i as f64 * step).collect();
        // I(rho) = int_{rho_tilde}^{rho} s^-2 |G|^{l-1} G, accumulated outward.
        let mut integral = vec![0.0; knots.len()];
        let split = knots.partition_point(|&r| r < rt);
        let seg = |a: f64, b: f64| integrate(|s| law.integrand(s, l), a, b, 1e-16, 1e-14).0;
        let mut acc = 0.0;
        let mut prev = rt;
        for k in split..knots.len() {
            acc += seg(prev, knots[k]);
            integral[k] = acc;
            prev = knots[k];
        }
        acc = 0.0;
        prev = rt;
        for k in (1..split).rev() {
            acc += seg(prev, knots[k]);
            integral[k] = acc;
            prev = knots[k];
        }
        let mut values = vec![0.0; knots.len()];
        let mut slopes = vec![0.0; knots.len()];
        values[0] = law.h_l_direct(0.0, l);
        for k in 1..knots.len() {
            let r = knots[k];
            let h = (r * integral[k]).max(0.0);
            let g = law.shared.curve.pressure(r) - law.p_tilde();
            values[k] = h;
            slopes[k] = (h + law.signed_power(g, l)) / r;
        }
        slopes[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * step);
        Self {
            l,
            step,
            values,
            slopes,
        }
    }

    fn eval(&self, law: &PressureLaw, rho: f64) -> f64 {
        let x = rho / self.step;
        let i = (x.floor() as usize).min(self.values.len() - 2);
        if i < 2 {
            // The first intervals can carry a rho log rho term; integrate directly.
            return law.h_l_direct(rho, self.l);
        }
        let t = x - i as f64;
        let (h0, h1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * self.step, self.slopes[i + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * h0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * h1
            + (t3 - t2) * d1;
        v.max(0.0)
    }
}

fn check_density(rho: &ScalarField) -> Result<()> {
    rho.check_finite("density")?;
    let n = rho.grid.n();
    if let Some(k) = rho.data.iter().position(|&r| r < -NEGATIVE_DENSITY_TOL) {
        return Err(Error::NegativeDensity {
            i: k % n,
            j: k / n,
            value: rho.data[k],
        });
    }
    Ok(())
}

/// Pressure deviation `G = P(rho) - P(rho_tilde)`.
pub fn g_field(rho: &ScalarField, law: &PressureLaw) -> Result<ScalarField> {
    check_density(rho)?;
    Ok(rho.map(|r| law.deviation(r.max(0.0))))
}

/// Pointwise `H_l(rho)`.
pub fn h_l(rho: &ScalarField, l: f64, law: &PressureLaw) -> Result<ScalarField> {
    check_density(rho)?;
    let table = law.table(l)?;
    Ok(rho.map(|r| table.eval(law, law.clamp(r.max(0.0)))))
}

/// Effective flux `F = nu div u - G` with `nu = 2 mu + lambda`.
pub fn effective_flux(
    ops: &SpectralOps,
    state: &FluidState,
    law: &PressureLaw,
    mu: f64,
    lambda: f64,
) -> Result<ScalarField> {
    let nu = 2.0 * mu + lambda;
    let div = ops.div(&state.u)?;
    let g = g_field(&state.rho, law)?;
    Ok(div.scale(nu).sub(&g))
}

/// Norms entering the `H_l` balance at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlSample {
    pub t: f64,
    /// `int H_l(rho)`
    pub h_l1: f64,
    /// `||G||_{l+1}`
    pub g_norm: f64,
    /// `||F||_{l+1}`
    pub f_norm: f64,
    /// `int |G|^{l-1} G F`, the exact cross term.
    pub cross: f64,
}

impl HlSample {
    pub fn measure(ops: &SpectralOps, state: &FluidState, law: &PressureLaw, mu: f64, lambda: f64, l: f64) -> Result<Self> {
        let h = h_l(&state.rho, l, law)?;
        let g = g_field(&state.rho, law)?;
        let f = effective_flux(ops, state, law, mu, lambda)?;
        let q = l + 1.0;
        let weighted = g.map(|v| law.signed_power(v, l));
        Ok(Self {
            t: state.t,
            h_l1: h.integral(),
            g_norm: g.lp(q),
            f_norm: f.lp(q),
            cross: weighted.dot(&f),
        })
    }
}

/// Balance of `d/dt int H_l` between consecutive samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlBalance {
    pub t: f64,
    /// `d/dt ||H_l||_1 + ||G||^{l+1}/nu - ||G||^l ||F|| / nu`; nonpositive when the bound holds.
    pub inequality: f64,
    /// Defect of the exact identity `d/dt ||H_l||_1 + (||G||^{l+1} + int |G|^{l-1} G F) / nu = 0`.
    pub identity: f64,
    /// Size of the dissipative term, for relative comparisons.
    pub scale: f64,
}

pub fn h_l_balance_residual(history: &[HlSample], l: f64, nu: f64) -> Result<Vec<HlBalance>> {
    if history.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: history.len(),
        });
    }
    let q = l + 1.0;
    let terms = |s: &HlSample| {
        let diss = s.g_norm.powf(q) / nu;
        let bound = s.g_norm.powf(l) * s.f_norm / nu;
        (diss, bound, s.cross / nu)
    };
    Ok(history
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let rate = (w[1].h_l1 - w[0].h_l1) / dt;
            let (d0, b0, c0) = terms(&w[0]);
            let (d1, b1, c1) = terms(&w[1]);
            let diss = 0.5 * (d0 + d1);
            let bound = 0.5 * (b0 + b1);
            let cross = 0.5 * (c0 + c1);
            HlBalance {
                t: 0.5 * (w[0].t + w[1].t),
                inequality: rate + diss - bound,
                identity: rate + diss + cross,
                scale: diss.max(bound).max(rate.abs()),
            }
        })
        .collect())
}
