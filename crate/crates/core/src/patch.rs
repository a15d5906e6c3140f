//! Density-patch initial data, the tangential family attached to the patch
//! boundary, and Lagrangian markers that follow the interface.
//!
//! Distances are measured to the smooth Fourier curve: a polyline sample
//! gives the nearby parameter through a spatial hash, and a few Newton
//! steps on `|gamma(theta) - x|^2` refine it.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::interp::vector_at;
use crate::spline::PeriodicSpline;
use crate::striated::VectorFieldFamily;

/// Fewest markers a curve may carry.
pub const MIN_MARKERS: usize = 256;
/// Polyline samples used for distance queries and geometric checks.
const DISTANCE_SAMPLES: usize = 4096;

/// `x(theta) = sum_k x_cos[k] cos(k theta) + x_sin[k] sin(k theta)`, likewise for `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierCurve {
    pub x_cos: Vec<f64>,
    #[serde(default)]
    pub x_sin: Vec<f64>,
    #[serde(default)]
    pub y_cos: Vec<f64>,
    pub y_sin: Vec<f64>,
}

impl FourierCurve {
    pub fn circle(cx: f64, cy: f64, r: f64) -> Self {
        Self::ellipse(cx, cy, r, r)
    }

    /// Semi-axis `a` along x, `b` along y, counterclockwise.
    pub fn ellipse(cx: f64, cy: f64, a: f64, b: f64) -> Self {
        Self {
            x_cos: vec![cx, a],
            x_sin: vec![0.0, 0.0],
            y_cos: vec![cy, 0.0],
            y_sin: vec![0.0, b],
        }
    }

    fn modes(&self) -> usize {
        self.x_cos.len().max(self.x_sin.len()).max(self.y_cos.len()).max(self.y_sin.len())
    }

    /// Position and its first two derivatives in `theta`.
    pub fn eval(&self, theta: f64) -> [(f64, f64); 3] {
        let get = |v: &Vec<f64>, k: usize| v.get(k).copied().unwrap_or(0.0);
        let mut out = [(0.0, 0.0); 3];
        for k in 0..self.modes() {
            let kf = k as f64;
            let (s, c) = (kf * theta).sin_cos();
            let (xc, xs, yc, ys) = (get(&self.x_cos, k), get(&self.x_sin, k), get(&self.y_cos, k), get(&self.y_sin, k));
            out[0].0 += xc * c + xs * s;
            out[0].1 += yc * c + ys * s;
            out[1].0 += kf * (-xc * s + xs * c);
            out[1].1 += kf * (-yc * s + ys * c);
            out[2].0 -= kf * kf * (xc * c + xs * s);
            out[2].1 -= kf * kf * (yc * c + ys * s);
        }
        out
    }

    pub fn point(&self, theta: f64) -> (f64, f64) {
        self.eval(theta)[0]
    }

    pub fn sample(&self, count: usize) -> Vec<(f64, f64)> {
        (0..count).map(|i| self.point(2.0 * PI * i as f64 / count as f64)).collect()
    }

    fn check_finite(&self) -> Result<()> {
        let all = self.x_cos.iter().chain(&self.x_sin).chain(&self.y_cos).chain(&self.y_sin);
        if self.modes() < 2 || all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("boundary needs finite coefficients up to at least mode 1".into()));
        }
        Ok(())
    }

    /// Largest `|curvature|` over a fine sample.
    pub fn max_curvature(&self) -> f64 {
        (0..DISTANCE_SAMPLES)
            .map(|i| {
                let [_, (x1, y1), (x2, y2)] = self.eval(2.0 * PI * i as f64 / DISTANCE_SAMPLES as f64);
                (x1 * y2 - y1 * x2).abs() / (x1 * x1 + y1 * y1).powf(1.5)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub boundary: FourierCurve,
    /// Density inside the curve; zero is a vacuum patch.
    pub alpha: f64,
    pub rho_tilde: f64,
    /// Width of the density ramp; three cells when absent.
    #[serde(default)]
    pub edge_width: Option<f64>,
    /// Distance from the curve where the far-field members reach full strength.
    #[serde(default)]
    pub chi_radius: Option<f64>,
}

impl PatchSpec {
    pub fn disc(cx: f64, cy: f64, r: f64, alpha: f64, rho_tilde: f64) -> Self {
        Self {
            boundary: FourierCurve::circle(cx, cy, r),
            alpha,
            rho_tilde,
            edge_width: None,
            chi_radius: None,
        }
    }

    pub fn edge_width(&self, grid: &Grid) -> f64 {
        self.edge_width.unwrap_or(3.0 * grid.h())
    }

    pub fn chi_radius(&self) -> f64 {
        self.chi_radius.unwrap_or_else(|| 0.4 / self.boundary.max_curvature())
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("patch density must be >= 0, got {}", self.alpha)));
        }
        if !(self.rho_tilde > 0.0 && self.rho_tilde.is_finite()) {
            return Err(Error::InvalidParameter(format!("exterior density must be > 0, got {}", self.rho_tilde)));
        }
        if let Some(w) = self.edge_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("edge width must be > 0, got {w}")));
            }
        }
        if let Some(r) = self.chi_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("cutoff radius must be > 0, got {r}")));
            }
        }
        self.boundary.check_finite()?;
        let pts = self.boundary.sample(DISTANCE_SAMPLES);
        let clearance = grid.length() / 4.0;
        let l = grid.length();
        for &(x, y) in &pts {
            if x < clearance || x > l - clearance || y < clearance || y > l - clearance {
                return Err(Error::Geometry(format!(
                    "boundary point ({x:.4}, {y:.4}) is closer than {clearance} to the box edge"
                )));
            }
        }
        if polygon_area(&pts).abs() < 1e-12 {
            return Err(Error::Geometry("boundary encloses no area".into()));
        }
        if let Some((a, b)) = first_self_intersection(&pts) {
            return Err(Error::Geometry(format!("boundary crosses itself between samples {a} and {b}")));
        }
        Ok(())
    }
}

/// Quintic smoothstep on `[0, 1]`, clamped outside.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}


/// Signed distance to the boundary (negative inside) and the outward normal
/// at the nearest boundary point. Beyond `band` the distance saturates at
/// `+-band` and the normal is zero.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub distance: ScalarField,
    pub normal: VectorField,
    pub band: f64,
}

struct CurveIndex<'a> {
    curve: &'a FourierCurve,
    samples: Vec<(f64, f64)>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    cell: f64,
    orientation: f64,
}

impl<'a> CurveIndex<'a> {
    fn new(curve: &'a FourierCurve, cell: f64) -> Self {
        let samples = curve.sample(DISTANCE_SAMPLES);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (k, &(x, y)) in samples.iter().enumerate() {
            buckets.entry(((x / cell).floor() as i64, (y / cell).floor() as i64)).or_default().push(k);
        }
        let orientation = polygon_area(&samples).signum();
        Self {
            curve,
            samples,
            buckets,
            cell,
            orientation,
        }
    }

    /// Nearest sample segment within one bucket ring, as a parameter guess.
    fn guess(&self, x: f64, y: f64) -> Option<f64> {
        let (bi, bj) = ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64);
        let ns = self.samples.len();
        let mut best: Option<(f64, f64)> = None;
        for dj in -1..=1 {
            for di in -1..=1 {
                let Some(list) = self.buckets.get(&(bi + di, bj + dj)) else {
                    continue;
                };
                for &k in list {
                    for (a, b) in [((k + ns - 1) % ns, k), (k, (k + 1) % ns)] {
                        let (p, q) = (self.samples[a], self.samples[b]);
                        let (ex, ey) = (q.0 - p.0, q.1 - p.1);
                        let t = (((x - p.0) * ex + (y - p.1) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
                        let (cx, cy) = (p.0 + t * ex - x, p.1 + t * ey - y);
                        let d2 = cx * cx + cy * cy;
                        if best.is_none_or(|(bd, _)| d2 < bd) {
                            best = Some((d2, 2.0 * PI * (a as f64 + t) / ns as f64));
                        }
                    }
                }
            }
        }
        best.map(|(_, theta)| theta)
    }

    /// Projection onto the smooth curve: (signed distance, outward normal).
    fn project(&self, x: f64, y: f64) -> Option<(f64, (f64, f64))> {
        let mut theta = self.guess(x, y)?;
        let max_step = 4.0 * PI / self.samples.len() as f64;
        for _ in 0..12 {
            let [(px, py), (dx, dy), (ddx, ddy)] = self.curve.eval(theta);
            let (rx, ry) = (px - x, py - y);
            let g = rx * dx + ry * dy;
            let speed2 = dx * dx + dy * dy;
            let mut hess = speed2 + rx * ddx + ry * ddy;
            if hess < 0.1 * speed2 {
                hess = speed2;
            }
            let step = (g / hess).clamp(-max_step, max_step);
            theta -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let [(px, py), (dx, dy), _] = self.curve.eval(theta);
        let speed = dx.hypot(dy);
        let normal = (self.orientation * dy / speed, -self.orientation * dx / speed);
        Some(((x - px) * normal.0 + (y - py) * normal.1, normal))
    }
}

/// Row-wise polygon crossings; odd count to the left means inside.
fn inside_mask(samples: &[(f64, f64)], grid: &Grid) -> Vec<bool> {
    let n = grid.n();
    let mut mask = vec![false; grid.len()];
    let mut crossings = Vec::new();
    for j in 0..n {
        let (_, y) = grid.point(0, j);
        crossings.clear();
        for k in 0..samples.len() {
            let (a, b) = (samples[k], samples[(k + 1) % samples.len()]);
            if (a.1 <= y) != (b.1 <= y) {
                crossings.push(a.0 + (y - a.1) / (b.1 - a.1) * (b.0 - a.0));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for i in 0..n {
            let (x, _) = grid.point(i, j);
            let left = crossings.partition_point(|&c| c < x);
            mask[grid.index(i, j)] = left % 2 == 1;
        }
    }
    mask
}

pub fn signed_distance(curve: &FourierCurve, grid: &Grid, band: f64) -> DistanceField {
    let index = CurveIndex::new(curve, band);
    let inside = inside_mask(&index.samples, grid);
    let mut distance = ScalarField::zeros(*grid);
    let mut normal = VectorField::zeros(*grid);
    for (k, x, y) in grid.points() {
        let sign = if inside[k] { -1.0 } else { 1.0 };
        match index.project(x, y) {
            Some((d, nrm)) if d.abs() <= band => {
                distance.data[k] = d;
                normal.x[k] = nrm.0;
                normal.y[k] = nrm.1;
            }
            _ => distance.data[k] = sign * band,
        }
    }
    DistanceField { distance, normal, band }
}

/// Widths of the tangential construction, in units of length.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FamilyWidths {
    /// `|X_1| = 1` for `|d| <= plateau`.
    plateau: f64,
    /// `X_1 = 0` for `|d| >= support`.
    support: f64,
    chi_radius: f64,
}

impl FamilyWidths {
    fn new(spec: &PatchSpec) -> Self {
        let reach = 1.0 / spec.boundary.max_curvature();
        Self {
            plateau: 0.5 * reach,
            support: 0.9 * reach,
            chi_radius: spec.chi_radius(),
        }
    }

    fn band(&self, edge_width: f64, h: f64) -> f64 {
        1.1 * (0.5 * edge_width).max(self.support).max(self.chi_radius) + 2.0 * h
    }
}

/// `rho_tilde + (alpha - rho_tilde) ramp(d)`, exact outside the ramp.
pub fn build_patch_density(spec: &PatchSpec, grid: &Grid) -> Result<ScalarField> {
    spec.validate(grid)?;
    let w = spec.edge_width(grid);
    let dist = signed_distance(&spec.boundary, grid, 0.5 * w + 2.0 * grid.h());
    Ok(dist.distance.map(|d| spec.rho_tilde + (spec.alpha - spec.rho_tilde) * smoothstep(0.5 - d / w)))
}

/// Septic smoothstep, C^3 at both ends.
fn smoothstep7(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * t * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
}

/// `int_0^t smoothstep7`, continued linearly past 1.
fn smoothstep7_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 0.5 + (t - 1.0);
    }
    t.powi(5) * (7.0 + t * (-14.0 + t * (10.0 - 2.5 * t)))
}

/// Divergence-free family built as spectral `grad_perp` of stream functions:
/// `phi(d)` with `phi' = 1` near the boundary, then `chi l sin((x_1 - c)/l)`
/// and `chi l (cos((x_1 - c)/l) - 1)` with `l = L / 2 pi` and `chi`
/// vanishing near the boundary.
pub fn build_tangential_family(spec: &PatchSpec, grid: &Grid, p: f64) -> Result<VectorFieldFamily> {
    spec.validate(grid)?;
    let widths = FamilyWidths::new(spec);
    if widths.chi_radius >= widths.plateau {
        return Err(Error::Geometry(format!(
            "cutoff radius {} must stay below the tangential plateau {}",
            widths.chi_radius, widths.plateau
        )));
    }
    let band = widths.band(spec.edge_width(grid), grid.h());
    let dist = signed_distance(&spec.boundary, grid, band);
    let ell = grid.length() / (2.0 * PI);
    let c1 = spec.boundary.x_cos[0];
    let (inner, outer) = (0.25 * widths.chi_radius, widths.chi_radius);
    let ramp = widths.support - widths.plateau;

    let mut level = ScalarField::zeros(*grid);
    let mut sine = ScalarField::zeros(*grid);
    let mut cosine = ScalarField::zeros(*grid);
    for (k, x, _) in grid.points() {
        let d = dist.distance.data[k];
        let a = d.abs();
        // phi' = 1 - smoothstep7((|d| - plateau) / ramp)
        level.data[k] = d.signum() * (a - ramp * smoothstep7_integral((a - widths.plateau) / ramp));
        let chi = smoothstep7((a - inner) / (outer - inner));
        let (s, c) = ((x - c1) / ell).sin_cos();
        sine.data[k] = chi * ell * s;
        cosine.data[k] = chi * ell * (c - 1.0);
    }
    let ops = crate::spectral::SpectralOps::new(*grid);
    let members = vec![ops.perp_grad(&level)?, ops.perp_grad(&sine)?, ops.perp_grad(&cosine)?];
    let family = VectorFieldFamily::new(members, p)?;
    family.ensure_nondegenerate(1e-6)?;
    Ok(family)
}

/// Shoelace area, positive for counterclockwise order.
pub fn polygon_area(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
}

fn segments_cross(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let orient = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// First pair of non-adjacent closed-polyline segments that cross.
pub fn first_self_intersection(points: &[(f64, f64)]) -> Option<(usize, usize)> {
    let n = points.len();
    let bbox = |i: usize| {
        let (a, b) = (points[i], points[(i + 1) % n]);
        (a.0.min(b.0), a.0.max(b.0), a.1.min(b.1), a.1.max(b.1))
    };
    let boxes: Vec<_> = (0..n).map(bbox).collect();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a, b) = (boxes[i], boxes[j]);
            if a.1 < b.0 || b.1 < a.0 || a.3 < b.2 || b.3 < a.2 {
                continue;
            }
            if segments_cross(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Ordered, closed chain of interface markers.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerCurve {
    pub points: Vec<(f64, f64)>,
}

/// Periodic cubic fit of a marker chain in its index parameter.
struct ChainSpline {
    x: PeriodicSpline,
    y: PeriodicSpline,
}

impl ChainSpline {
    fn new(points: &[(f64, f64)], period: f64) -> Result<Self> {
        Ok(Self {
            x: PeriodicSpline::new(points.iter().map(|p| p.0).collect(), period)?,
            y: PeriodicSpline::new(points.iter().map(|p| p.1).collect(), period)?,
        })
    }

    fn eval(&self, t: f64) -> [(f64, f64); 3] {
        let (x, dx, ddx) = self.x.eval(t);
        let (y, dy, ddy) = self.y.eval(t);
        [(x, y), (dx, dy), (ddx, ddy)]
    }

    fn speed(&self, t: f64) -> f64 {
        let [_, (dx, dy), _] = self.eval(t);
        dx.hypot(dy)
    }
}

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// `sum_i int_i^{i+1} f(t) dt` by five-point Gauss per knot interval.
fn per_interval(count: usize, mut f: impl FnMut(f64) -> f64) -> Vec<f64> {
    (0..count)
        .map(|i| GAUSS5.iter().map(|&(z, w)| 0.5 * w * f(i as f64 + 0.5 + 0.5 * z)).sum())
        .collect()
}

impl MarkerCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < MIN_MARKERS {
            return Err(Error::TooFewSamples {
                needed: MIN_MARKERS,
                got: points.len(),
            });
        }
        if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(Error::NonFinite("marker position".into()));
        }
        Ok(Self { points })
    }

    /// `count` markers equally spaced in the curve parameter.
    pub fn from_curve(curve: &FourierCurve, count: usize) -> Result<Self> {
        Self::new(curve.sample(count))
    }

    /// Marker count giving a spacing near half a cell, at least [`MIN_MARKERS`].
    pub fn for_grid(curve: &FourierCurve, grid: &Grid) -> Result<Self> {
        let rough = Self::new(curve.sample(DISTANCE_SAMPLES))?;
        let count = Self::count_for(rough.perimeter(), grid);
        Self::new(rough.resampled(count)?.points)
    }

    fn count_for(perimeter: f64, grid: &Grid) -> usize {
        ((perimeter / (0.5 * grid.h())).ceil() as usize).max(MIN_MARKERS)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.points[i], self.points[(i + 1) % n]);
                (b.0 - a.0).hypot(b.1 - a.1)
            })
            .sum()
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.points)
    }

    /// Smallest and largest gap between neighbours.
    pub fn spacing_range(&self) -> (f64, f64) {
        let n = self.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.points[i], self.points[(i + 1) % n]);
                (b.0 - a.0).hypot(b.1 - a.1)
            })
            .fold((f64::INFINITY, 0.0), |(lo, hi), d| (lo.min(d), hi.max(d)))
    }

    /// True when a gap exceeds `4h`, or falls below `h/4` and below half the
    /// mean gap. Short curves at the minimum marker count sit under `h/4` by
    /// construction, and resampling them would change nothing.
    pub fn needs_resampling(&self, grid: &Grid) -> bool {
        let (lo, hi) = self.spacing_range();
        let floor = (0.25 * grid.h()).min(0.5 * self.perimeter() / self.len() as f64);
        lo < floor || hi > 4.0 * grid.h()
    }

    fn spline(&self) -> Result<ChainSpline> {
        ChainSpline::new(&self.points, self.len() as f64)
    }

    /// `count` markers equally spaced in arclength along the spline through
    /// the current ones, starting from the first marker.
    pub fn resampled(&self, count: usize) -> Result<Self> {
        let spline = self.spline()?;
        let pieces = per_interval(self.len(), |t| spline.speed(t));
        let mut cumulative = Vec::with_capacity(pieces.len() + 1);
        cumulative.push(0.0);
        for p in &pieces {
            cumulative.push(cumulative.last().unwrap() + p);
        }
        let total = *cumulative.last().unwrap();
        let mut out = Vec::with_capacity(count);
        let mut interval = 0;
        for k in 0..count {
            let target = total * k as f64 / count as f64;
            while interval + 1 < pieces.len() && cumulative[interval + 1] <= target {
                interval += 1;
            }
            // Newton on the arclength within the interval
            let mut t = interval as f64 + (target - cumulative[interval]) / pieces[interval].max(f64::MIN_POSITIVE);
            for _ in 0..6 {
                let covered = cumulative[interval] + arclength_within(&spline, interval, t);
                t -= (covered - target) / spline.speed(t);
                t = t.clamp(interval as f64, interval as f64 + 1.0);
            }
            out.push(spline.eval(t)[0]);
        }
        Self::new(out)
    }

    /// Resample at the grid-matched count when [`Self::needs_resampling`] trips.
    pub fn maintain(self, grid: &Grid) -> Result<Self> {
        if self.needs_resampling(grid) {
            let count = Self::count_for(self.perimeter(), grid);
            self.resampled(count)
        } else {
            Ok(self)
        }
    }

    /// Unit outward normals from the spline tangent at each marker.
    pub fn normals(&self) -> Result<Vec<(f64, f64)>> {
        let spline = self.spline()?;
        let orient = self.area().signum();
        Ok((0..self.len())
            .map(|i| {
                let [_, (dx, dy), _] = spline.eval(i as f64);
                let s = dx.hypot(dy);
                (orient * dy / s, -orient * dx / s)
            })
            .collect())
    }

    /// CSV with a `theta,x,y` header; `theta` is the marker label `2 pi i / N`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,x,y\n");
        let n = self.len() as f64;
        for (i, p) in self.points.iter().enumerate() {
            let _ = writeln!(out, "{:.17e},{:.17e},{:.17e}", 2.0 * PI * i as f64 / n, p.0, p.1);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("theta,x,y") => {}
            other => return Err(Error::InvalidParameter(format!("curve CSV header must be theta,x,y, got {other:?}"))),
        }
        let mut points = Vec::new();
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidParameter(format!("curve CSV row {}: {e}", row + 2)))?;
            if vals.len() != 3 {
                return Err(Error::InvalidParameter(format!("curve CSV row {} needs 3 columns", row + 2)));
            }
            points.push((vals[1], vals[2]));
        }
        Self::new(points)
    }
}

fn arclength_within(spline: &ChainSpline, interval: usize, t: f64) -> f64 {
    let a = interval as f64;
    let half = 0.5 * (t - a);
    GAUSS5.iter().map(|&(z, w)| half * w * spline.speed(a + half * (1.0 + z))).sum()
}

/// SSP-RK3 step of every marker, velocity linear in time between the
/// endpoints and interpolated bicubically in space. Markers closer than
/// two cells to the box edge are an error.
pub fn advect_markers(curve: &MarkerCurve, u_start: &VectorField, u_end: &VectorField, dt: f64) -> Result<MarkerCurve> {
    let grid = u_start.grid;
    let vel = |x: f64, y: f64, s: f64| {
        let a = vector_at(u_start, x, y);
        if s == 0.0 {
            return a;
        }
        let b = vector_at(u_end, x, y);
        ((1.0 - s) * a.0 + s * b.0, (1.0 - s) * a.1 + s * b.1)
    };
    let margin = 2.0 * grid.h();
    let l = grid.length();
    let mut out = Vec::with_capacity(curve.len());
    for (index, &(x0, y0)) in curve.points.iter().enumerate() {
        let k1 = vel(x0, y0, 0.0);
        let (x1, y1) = (x0 + dt * k1.0, y0 + dt * k1.1);
        let k2 = vel(x1, y1, 1.0);
        let (x2, y2) = (0.75 * x0 + 0.25 * (x1 + dt * k2.0), 0.75 * y0 + 0.25 * (y1 + dt * k2.1));
        let k3 = vel(x2, y2, 0.5);
        let (x, y) = (x0 / 3.0 + 2.0 / 3.0 * (x2 + dt * k3.0), y0 / 3.0 + 2.0 / 3.0 * (y2 + dt * k3.1));
        if !(x.is_finite() && y.is_finite()) || x < margin || x > l - margin || y < margin || y > l - margin {
            return Err(Error::MarkerEscaped { index, x, y });
        }
        out.push((x, y));
    }
    MarkerCurve::new(out)?.maintain(&grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceRegularity {
    /// `(oint |gamma''|^p ds)^(1/p)` in arclength.
    pub w2p_seminorm: f64,
    pub arclength: f64,
    pub curvature_max: f64,
    pub self_intersecting: bool,
}

pub fn interface_regularity(curve: &MarkerCurve, p: f64) -> Result<InterfaceRegularity> {
    let even = curve.resampled(curve.len())?;
    let spline = even.spline()?;
    let curvature = |t: f64| {
        let [_, (dx, dy), (ddx, ddy)] = spline.eval(t);
        (dx * ddy - dy * ddx) / (dx * dx + dy * dy).powf(1.5)
    };
    let arclength: f64 = per_interval(even.len(), |t| spline.speed(t)).iter().sum();
    let integral: f64 = per_interval(even.len(), |t| curvature(t).abs().powf(p) * spline.speed(t)).iter().sum();
    let mut curvature_max: f64 = 0.0;
    for i in 0..even.len() {
        for &(z, _) in &GAUSS5 {
            curvature_max = curvature_max.max(curvature(i as f64 + 0.5 + 0.5 * z).abs());
        }
        curvature_max = curvature_max.max(curvature(i as f64).abs());
    }
    Ok(InterfaceRegularity {
        w2p_seminorm: integral.powf(1.0 / p),
        arclength,
        curvature_max,
        self_intersecting: first_self_intersection(&curve.points).is_some(),
    })
}

/// `max |X_1 . n| / |X_1|` over the markers, `X_1` the first family member.
pub fn tangency_error(curve: &MarkerCurve, family: &VectorFieldFamily) -> Result<f64> {
    let normals = curve.normals()?;
    let field = &family.members[0];
    let mut worst: f64 = 0.0;
    for (&(x, y), &(nx, ny)) in curve.points.iter().zip(&normals) {
        let (vx, vy) = vector_at(field, x, y);
        let mag = vx.hypot(vy);
        if mag > 0.0 {
            worst = worst.max((vx * nx + vy * ny).abs() / mag);
        }
    }
    Ok(worst)
}
