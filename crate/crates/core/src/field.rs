//! Periodic grids and the sample fields that live on them.
//!
//! Samples are stored row-major with `x` fastest: the value at grid point
//! `(i, j)` (position `(i h, j h)`) sits at index `j * n + i`. Integrals are
//! Riemann sums with cell weight `h^2`, and `L^infinity` norms are grid maxima.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on the square box `[0, L)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 16, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive, got {length}"
            )));
        }
        Ok(Self { n, length })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Cell width.
    #[inline]
    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Quadrature weight of one cell.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.h() * self.h()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Index with periodic wrap-around of signed offsets.
    #[inline]
    pub fn wrap(&self, i: isize, j: isize) -> usize {
        let n = self.n as isize;
        let ii = i.rem_euclid(n) as usize;
        let jj = j.rem_euclid(n) as usize;
        jj * self.n + ii
    }

    /// Physical coordinates of grid point `(i, j)`.
    #[inline]
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h(), j as f64 * self.h())
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * self.length, 0.5 * self.length)
    }

    /// Fundamental wavenumber `2 pi / L`.
    #[inline]
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length
    }

    /// Iterator over `(index, x, y)` for every grid point.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let h = self.h();
        (0..self.n).flat_map(move |j| {
            (0..self.n).map(move |i| (j * self.n + i, i as f64 * h, j as f64 * h))
        })
    }
}

/// Real scalar samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} samples, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = vec![0.0; grid.len()];
        for (k, x, y) in grid.points() {
            data[k] = f(x, y);
        }
        Self { grid, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if let Some(k) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what}: sample {k} is {}", self.data[k])));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.grid.cell_area() * self.data.iter().sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2(&self) -> f64 {
        (self.grid.cell_area() * self.data.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `(h^2 sum |f|^p)^(1/p)`; `p = inf` gives the grid max.
    pub fn lp(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.linf();
        }
        (self.grid.cell_area() * self.data.iter().map(|v| v.abs().powf(p)).sum::<f64>())
            .powf(1.0 / p)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.grid.cell_area()
            * self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn minus_mean(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    /// Periodic translation by whole cells.
    pub fn shifted(&self, di: isize, dj: isize) -> Self {
        let g = self.grid;
        let n = g.n();
        let mut out = vec![0.0; g.len()];
        for j in 0..n {
            for i in 0..n {
                out[g.wrap(i as isize + di, j as isize + dj)] = self.data[g.index(i, j)];
            }
        }
        Self { grid: g, data: out }
    }
}

/// Two-component real vector samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            x: vec![0.0; grid.len()],
            y: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, vx: f64, vy: f64) -> Self {
        Self {
            grid,
            x: vec![vx; grid.len()],
            y: vec![vy; grid.len()],
        }
    }

    pub fn from_components(x: ScalarField, y: ScalarField) -> Self {
        debug_assert_eq!(x.grid, y.grid);
        Self {
            grid: x.grid,
            x: x.data,
            y: y.data,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        for (k, x, y) in grid.points() {
            let (a, b) = f(x, y);
            out.x[k] = a;
            out.y[k] = b;
        }
        out
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: if c == 0 { self.x.clone() } else { self.y.clone() },
        }
    }

    pub fn xs(&self) -> ScalarField {
        self.component(0)
    }

    pub fn ys(&self) -> ScalarField {
        self.component(1)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite(format!("{what}: non-finite vector sample")));
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            x: self.x.iter().map(|v| s * v).collect(),
            y: self.y.iter().map(|v| s * v).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            grid: self.grid,
            x: self.x.iter().zip(&o.x).map(|(a, b)| a + b).collect(),
            y: self.y.iter().zip(&o.y).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self {
            grid: self.grid,
            x: self.x.iter().zip(&o.x).map(|(a, b)| a - b).collect(),
            y: self.y.iter().zip(&o.y).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self + s * o`
    pub fn axpy(&self, s: f64, o: &Self) -> Self {
        Self {
            grid: self.grid,
            x: self.x.iter().zip(&o.x).map(|(a, b)| a + s * b).collect(),
            y: self.y.iter().zip(&o.y).map(|(a, b)| a + s * b).collect(),
        }
    }

    /// Pointwise product with a scalar field.
    pub fn mul_scalar(&self, s: &ScalarField) -> Self {
        Self {
            grid: self.grid,
            x: self.x.iter().zip(&s.data).map(|(a, b)| a * b).collect(),
            y: self.y.iter().zip(&s.data).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn magnitude(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self
                .x
                .iter()
                .zip(&self.y)
                .map(|(a, b)| a.hypot(*b))
                .collect(),
        }
    }

    pub fn linf(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }

    pub fn l2(&self) -> f64 {
        (self.grid.cell_area()
            * self
                .x
                .iter()
                .zip(&self.y)
                .map(|(a, b)| a * a + b * b)
                .sum::<f64>())
        .sqrt()
    }

    /// `(h^2 sum |v|^p)^(1/p)` with the Euclidean pointwise magnitude.
    pub fn lp(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.linf();
        }
        (self.grid.cell_area()
            * self
                .x
                .iter()
                .zip(&self.y)
                .map(|(a, b)| a.hypot(*b).powf(p))
                .sum::<f64>())
        .powf(1.0 / p)
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.grid.cell_area()
            * (self.x.iter().zip(&o.x).map(|(a, b)| a * b).sum::<f64>()
                + self.y.iter().zip(&o.y).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.x.len() as f64;
        (
            self.x.iter().sum::<f64>() / n,
            self.y.iter().sum::<f64>() / n,
        )
    }

    pub fn shifted(&self, di: isize, dj: isize) -> Self {
        Self::from_components(self.xs().shifted(di, dj), self.ys().shifted(di, dj))
    }
}

/// Velocity-gradient-like tensor field; `c[j][k]` holds `d_k v^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub grid: Grid,
    pub c: [[Vec<f64>; 2]; 2],
}

impl TensorField {
    pub fn zeros(grid: Grid) -> Self {
        let z = || vec![0.0; grid.len()];
        Self {
            grid,
            c: [[z(), z()], [z(), z()]],
        }
    }

    pub fn entry(&self, j: usize, k: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.c[j][k].clone(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for j in 0..2 {
            for k in 0..2 {
                for (a, b) in out.c[j][k].iter_mut().zip(&o.c[j][k]) {
                    *a += b;
                }
            }
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for row in out.c.iter_mut() {
            for comp in row.iter_mut() {
                comp.iter_mut().for_each(|v| *v *= s);
            }
        }
        out
    }

    /// Pointwise Frobenius norm.
    pub fn frobenius(&self) -> ScalarField {
        let n = self.grid.len();
        let mut data = vec![0.0; n];
        for (i, d) in data.iter_mut().enumerate() {
            let mut s = 0.0;
            for row in &self.c {
                for comp in row {
                    s += comp[i] * comp[i];
                }
            }
            *d = s.sqrt();
        }
        ScalarField {
            grid: self.grid,
            data,
        }
    }

    /// Pointwise spectral (operator 2-) norm of the 2x2 matrix.
    pub fn operator_norm(&self) -> ScalarField {
        let n = self.grid.len();
        let mut data = vec![0.0; n];
        for (i, d) in data.iter_mut().enumerate() {
            *d = mat2_norm(
                self.c[0][0][i],
                self.c[0][1][i],
                self.c[1][0][i],
                self.c[1][1][i],
            );
        }
        ScalarField {
            grid: self.grid,
            data,
        }
    }

    /// `( h^2 sum |T|_F^2 )^(1/2)`
    pub fn l2(&self) -> f64 {
        self.frobenius().l2()
    }

    pub fn lp(&self, p: f64) -> f64 {
        self.frobenius().lp(p)
    }

    /// Grid max of the pointwise operator norm.
    pub fn linf(&self) -> f64 {
        self.operator_norm().max().max(0.0)
    }

    pub fn trace(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.c[0][0]
                .iter()
                .zip(&self.c[1][1])
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Largest singular value of `[[a, b], [c, d]]`.
pub fn mat2_norm(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s + disc)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(8, 1.0).is_err());
        assert!(Grid::new(48, 1.0).is_err());
        assert!(Grid::new(32, 0.0).is_err());
        assert!(Grid::new(32, 2.0).is_ok());
    }

    #[test]
    fn wrap_is_periodic() {
        let g = Grid::new(16, 1.0).unwrap();
        assert_eq!(g.wrap(-1, 0), g.index(15, 0));
        assert_eq!(g.wrap(16, 17), g.index(0, 1));
    }

    #[test]
    fn norms_of_constant() {
        let g = Grid::new(16, 2.0).unwrap();
        let f = ScalarField::constant(g, 3.0);
        assert!((f.integral() - 12.0).abs() < 1e-12);
        assert!((f.l2() - (9.0f64 * 4.0).sqrt()).abs() < 1e-12);
        assert!((f.lp(4.0) - (81.0f64 * 4.0).powf(0.25)).abs() < 1e-12);
        assert_eq!(f.linf(), 3.0);
    }

    #[test]
    fn mat2_norm_matches_known_values() {
        assert!((mat2_norm(1.0, 0.0, 0.0, 1.0) - 1.0).abs() < 1e-14);
        assert!((mat2_norm(0.0, -1.0, 1.0, 0.0) - 1.0).abs() < 1e-14);
        assert!((mat2_norm(3.0, 0.0, 0.0, -2.0) - 3.0).abs() < 1e-14);
        // shear [[0, 1], [0, 0]]
        assert!((mat2_norm(0.0, 1.0, 0.0, 0.0) - 1.0).abs() < 1e-14);
    }
}
