//! Families of vector fields, their nondegeneracy, derivatives of rough
//! functions along them, and their transport by the flow.
//!
//! In two dimensions the wedge of one vector is the vector itself rotated,
//! so the nondegeneracy functional is `min_x max_v |X_v(x)|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::spectral::SpectralOps;
use crate::transport::flux_divergence;

/// Which discretisation a directional derivative uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothness {
    /// Spectral gradient, advective form `Y . grad g`.
    Smooth,
    /// Conservative form `div(g Y) - g div Y` with a limited finite-volume flux for `div(g Y)`.
    Rough,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldFamily {
    pub members: Vec<VectorField>,
    /// Lebesgue exponent of the gradient norms.
    pub p: f64,
}

/// Value of the nondegeneracy functional and where the minimum sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nondegeneracy {
    pub value: f64,
    pub x: f64,
    pub y: f64,
}

impl VectorFieldFamily {
    pub fn new(members: Vec<VectorField>, p: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("a family needs at least one member".into()));
        }
        if !(p > 2.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("family exponent must exceed 2, got {p}")));
        }
        let grid = members[0].grid;
        for (k, m) in members.iter().enumerate() {
            if m.grid != grid {
                return Err(Error::Shape(format!("family member {k} lives on a different grid")));
            }
            m.check_finite(&format!("family member {k}"))?;
        }
        Ok(Self { members, p })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn grid(&self) -> crate::field::Grid {
        self.members[0].grid
    }

    pub fn nondegeneracy(&self) -> Nondegeneracy {
        nondegeneracy(self)
    }

    /// Errors with the minimising point unless `I > tol`.
    pub fn ensure_nondegenerate(&self, tol: f64) -> Result<Nondegeneracy> {
        let nd = self.nondegeneracy();
        if nd.value <= tol {
            return Err(Error::Degenerate {
                value: nd.value,
                x: nd.x,
                y: nd.y,
            });
        }
        Ok(nd)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            members: self.members.iter().map(|m| m.scale(s)).collect(),
            p: self.p,
        }
    }
}

pub fn nondegeneracy(family: &VectorFieldFamily) -> Nondegeneracy {
    let grid = family.grid();
    let mut best = Nondegeneracy {
        value: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    };
    for (k, x, y) in grid.points() {
        let local = family
            .members
            .iter()
            .map(|m| m.x[k].hypot(m.y[k]))
            .fold(0.0, f64::max);
        if local < best.value {
            best = Nondegeneracy { value: local, x, y };
        }
    }
    best
}

/// `div(g Y)` in the requested discretisation.
pub fn div_product(ops: &SpectralOps, g: &ScalarField, y: &VectorField, mode: Smoothness) -> Result<ScalarField> {
    g.check_finite("scalar")?;
    y.check_finite("direction")?;
    match mode {
        Smoothness::Smooth => ops.div(&y.mul_scalar(g)),
        Smoothness::Rough => Ok(flux_divergence(g, y)),
    }
}

/// `d_Y g = div(g Y) - g div Y`.
pub fn directional_derivative(ops: &SpectralOps, g: &ScalarField, y: &VectorField, mode: Smoothness) -> Result<ScalarField> {
    g.check_finite("scalar")?;
    y.check_finite("direction")?;
    match mode {
        Smoothness::Smooth => {
            let gg = ops.grad(g)?;
            Ok(ScalarField {
                grid: g.grid,
                data: (0..g.data.len()).map(|k| y.x[k] * gg.x[k] + y.y[k] * gg.y[k]).collect(),
            })
        }
        Smoothness::Rough => {
            let dgy = flux_divergence(g, y);
            let dy = ops.div(y)?;
            Ok(dgy.zip_map(&g.mul(&dy), |a, b| a - b))
        }
    }
}

/// `||Y||_inf + ||grad Y||_p` for one field.
pub fn field_norm(ops: &SpectralOps, y: &VectorField, p: f64) -> Result<f64> {
    let grad = ops.gradient_tensor(y)?;
    Ok(y.linf() + grad.lp(p))
}

/// `sup_v ||X_v||_{inf,p}`
pub fn family_norm(ops: &SpectralOps, family: &VectorFieldFamily, p: f64) -> Result<f64> {
    let mut out: f64 = 0.0;
    for m in &family.members {
        out = out.max(field_norm(ops, m, p)?);
    }
    Ok(out)
}

/// `I^{-1} sup_v [ ||g||_inf ||X_v||_{inf,p} + ||div(g X_v)||_p ]`
pub fn striated_norm(ops: &SpectralOps, g: &ScalarField, family: &VectorFieldFamily, p: f64, mode: Smoothness) -> Result<f64> {
    let nd = family.ensure_nondegenerate(0.0)?;
    let ginf = g.linf();
    let mut sup: f64 = 0.0;
    for m in &family.members {
        let term = ginf * field_norm(ops, m, p)? + div_product(ops, g, m, mode)?.lp(p);
        sup = sup.max(term);
    }
    Ok(sup / nd.value)
}

/// Velocity at a fraction `s` of the step, linear between the endpoints.
fn blend(a: &VectorField, b: &VectorField, s: f64) -> VectorField {
    if s == 0.0 {
        return a.clone();
    }
    a.scale(1.0 - s).add(&b.scale(s))
}

/// `-u . grad X + X . grad u`, optionally truncated by the 2/3 rule.
fn transport_rhs(ops: &SpectralOps, x: &VectorField, u: &VectorField, du: &crate::field::TensorField, dealias: bool) -> Result<VectorField> {
    let dx = ops.gradient_tensor(x)?;
    let n = x.x.len();
    let mut out = VectorField::zeros(x.grid);
    for k in 0..n {
        for (comp, target) in [(0usize, &mut out.x), (1usize, &mut out.y)] {
            let adv = u.x[k] * dx.c[comp][0][k] + u.y[k] * dx.c[comp][1][k];
            let stretch = x.x[k] * du.c[comp][0][k] + x.y[k] * du.c[comp][1][k];
            target[k] = stretch - adv;
        }
    }
    if dealias {
        let (mut sx, mut sy) = ops.forward_vector(&out);
        ops.dealias_spectrum(&mut sx);
        ops.dealias_spectrum(&mut sy);
        out = ops.inverse_vector(&sx, &sy);
    }
    Ok(out)
}

/// SSP-RK3 step of `d_t X + u . grad X = X . grad u` with `u` linear in time
/// between `u_start` and `u_end`.
pub fn transport_family_between(
    ops: &SpectralOps,
    family: &VectorFieldFamily,
    u_start: &VectorField,
    u_end: &VectorField,
    dt: f64,
    dealias: bool,
) -> Result<VectorFieldFamily> {
    let times = [0.0, 1.0, 0.5];
    let mut vel = Vec::with_capacity(3);
    for &s in &times {
        let u = blend(u_start, u_end, s);
        let du = ops.gradient_tensor(&u)?;
        vel.push((u, du));
    }
    let mut members = Vec::with_capacity(family.len());
    for x0 in &family.members {
        let k1 = transport_rhs(ops, x0, &vel[0].0, &vel[0].1, dealias)?;
        let x1 = x0.axpy(dt, &k1);
        let k2 = transport_rhs(ops, &x1, &vel[1].0, &vel[1].1, dealias)?;
        let x2 = x0.scale(0.75).add(&x1.axpy(dt, &k2).scale(0.25));
        let k3 = transport_rhs(ops, &x2, &vel[2].0, &vel[2].1, dealias)?;
        let x3 = x0.scale(1.0 / 3.0).add(&x2.axpy(dt, &k3).scale(2.0 / 3.0));
        x3.check_finite("transported family member")?;
        members.push(x3);
    }
    Ok(VectorFieldFamily { members, p: family.p })
}

/// Transport with a velocity frozen over the step.
pub fn transport_family(ops: &SpectralOps, family: &VectorFieldFamily, u: &VectorField, dt: f64) -> Result<VectorFieldFamily> {
    transport_family_between(ops, family, u, u, dt, true)
}

/// Both forms of the striated part of the higher-order functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StriatedReport {
    /// `||X||_{inf,p}`
    pub family_norm: f64,
    /// `sup_v ||d_{X_v} rho||_p`
    pub directional: f64,
    /// `sup_v ||div(rho X_v)||_p`
    pub divergence: f64,
}

impl StriatedReport {
    pub fn total(&self) -> f64 {
        self.family_norm + self.directional
    }

    pub fn total_divergence_form(&self) -> f64 {
        self.family_norm + self.divergence
    }
}

pub fn a3(ops: &SpectralOps, rho: &ScalarField, family: &VectorFieldFamily, p: f64) -> Result<StriatedReport> {
    let mut directional: f64 = 0.0;
    let mut divergence: f64 = 0.0;
    for m in &family.members {
        directional = directional.max(directional_derivative(ops, rho, m, Smoothness::Rough)?.lp(p));
        divergence = divergence.max(div_product(ops, rho, m, Smoothness::Rough)?.lp(p));
    }
    Ok(StriatedReport {
        family_norm: family_norm(ops, family, p)?,
        directional,
        divergence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundSample {
    pub t: f64,
    pub nondegeneracy: f64,
    /// `int_0^t ||grad u||_inf`
    pub lipschitz_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub t: Vec<f64>,
    /// `I(t) / (I(0) exp(-int ||grad u||_inf))`; the bound holds where this is >= 1.
    pub ratio: Vec<f64>,
    pub min_ratio: f64,
}

impl LowerBoundReport {
    /// True when `I(t) >= factor I(0) exp(...)` at every sample.
    pub fn holds(&self, factor: f64) -> bool {
        self.min_ratio >= factor
    }
}

pub fn i_lower_bound_check(history: &[LowerBoundSample]) -> Result<LowerBoundReport> {
    let first = history.first().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let i0 = first.nondegeneracy;
    let l0 = first.lipschitz_integral;
    let ratio: Vec<f64> = history
        .iter()
        .map(|s| s.nondegeneracy / (i0 * (-(s.lipschitz_integral - l0)).exp()))
        .collect();
    Ok(LowerBoundReport {
        t: history.iter().map(|s| s.t).collect(),
        min_ratio: ratio.iter().copied().fold(f64::INFINITY, f64::min),
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSample {
    pub t: f64,
    /// `||div(rho X_v)||_p` for the tracked member.
    pub norm: f64,
    /// `int_0^t ||div u||_inf`
    pub compression_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub t: Vec<f64>,
    /// `||div(rho X)(t)|| / (||div(rho_0 X_0)|| exp(int ||div u||_inf))`
    pub ratio: Vec<f64>,
    pub max_ratio: f64,
}

impl DivergenceReport {
    pub fn holds(&self, factor: f64) -> bool {
        self.max_ratio <= factor
    }
}

pub fn div_rho_x_conservation(history: &[DivergenceSample]) -> Result<DivergenceReport> {
    let first = history.first().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let n0 = first.norm;
    let c0 = first.compression_integral;
    let ratio: Vec<f64> = history
        .iter()
        .map(|s| {
            let bound = n0 * (s.compression_integral - c0).exp();
            if bound > 0.0 {
                s.norm / bound
            } else if s.norm == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(DivergenceReport {
        t: history.iter().map(|s| s.t).collect(),
        max_ratio: ratio.iter().copied().fold(0.0, f64::max),
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use std::f64::consts::PI;

    fn frame(g: Grid) -> VectorFieldFamily {
        VectorFieldFamily::new(vec![VectorField::constant(g, 1.0, 0.0), VectorField::constant(g, 0.0, 1.0)], 4.0).unwrap()
    }

    #[test]
    fn unit_frame_is_nondegenerate() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        assert!((frame(g).nondegeneracy().value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vanishing_line_is_degenerate() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let f = VectorFieldFamily::new(vec![VectorField::from_fn(g, |x, _| (x.sin(), 0.0))], 4.0).unwrap();
        assert!(f.nondegeneracy().value.abs() < 1e-15);
        let ops = SpectralOps::new(g);
        assert!(striated_norm(&ops, &ScalarField::constant(g, 1.0), &f, 4.0, Smoothness::Smooth).is_err());
    }

    #[test]
    fn rejects_mixed_grids() {
        let a = Grid::new(16, 1.0).unwrap();
        let b = Grid::new(32, 1.0).unwrap();
        assert!(VectorFieldFamily::new(vec![VectorField::zeros(a), VectorField::zeros(b)], 4.0).is_err());
    }

    #[test]
    fn lower_bound_ratio_of_static_history() {
        let h = [
            LowerBoundSample { t: 0.0, nondegeneracy: 0.5, lipschitz_integral: 0.0 },
            LowerBoundSample { t: 1.0, nondegeneracy: 0.5, lipschitz_integral: 0.0 },
        ];
        let r = i_lower_bound_check(&h).unwrap();
        assert_eq!(r.min_ratio, 1.0);
    }
}
