//! Fourier machinery on the periodic grid.
//!
//! Spectra use the unnormalized DFT with the same row-major layout as the
//! sample fields: entry `j * n + i` holds the mode with integer wavenumbers
//! `(m(i), m(j))`, `m(i) = i` for `i < n/2` and `i - n` otherwise.
//!
//! Every operator here projects out the Nyquist modes (`|m| = n/2` on either
//! axis). Odd symbols such as `i k` have no real-valued extension there, so
//! identities like `sum_j R_j R_j = id - mean` hold exactly on the
//! Nyquist-free subspace. The zero mode of every inverse operator is 0.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, TensorField, VectorField};

/// Tolerance for the zero-mean precondition, relative to `max |f|`.
pub const ZERO_MEAN_TOL: f64 = 1e-12;

/// Complex coefficients of one real field.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: Grid,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|c| *c *= s);
    }

    pub fn add_assign(&mut self, other: &Spectrum, s: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    /// Number of modes with nonzero coefficient magnitude above `tol`.
    pub fn support(&self, tol: f64) -> usize {
        self.data.iter().filter(|c| c.norm() > tol).count()
    }
}

/// FFT plans plus wavenumber tables for one grid.
#[derive(Clone)]
pub struct SpectralOps {
    grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Physical wavenumber per axis index; 0 at the Nyquist index.
    k: Vec<f64>,
    /// Integer wavenumber per axis index.
    m: Vec<i64>,
}

impl std::fmt::Debug for SpectralOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOps").field("grid", &self.grid).finish()
    }
}

impl SpectralOps {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let m: Vec<i64> = (0..n)
            .map(|i| if i < n / 2 { i as i64 } else { i as i64 - n as i64 })
            .collect();
        let dk = grid.dk();
        let k = m
            .iter()
            .enumerate()
            .map(|(i, &mi)| if i == n / 2 { 0.0 } else { mi as f64 * dk })
            .collect();
        Self {
            grid,
            fwd,
            inv,
            k,
            m,
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Integer wavenumber for axis index `i` (Nyquist maps to `-n/2`).
    #[inline]
    pub fn mode(&self, i: usize) -> i64 {
        self.m[i]
    }

    /// Physical wavenumber for axis index `i`, zero at Nyquist.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.k[i]
    }

    #[inline]
    pub fn is_nyquist(&self, i: usize, j: usize) -> bool {
        let h = self.grid.n() / 2;
        i == h || j == h
    }

    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        plan.process(buf);
        transpose(buf, n);
        plan.process(buf);
        transpose(buf, n);
    }

    pub fn forward(&self, f: &ScalarField) -> Spectrum {
        let mut data: Vec<Complex64> = f.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut data, &self.fwd);
        Spectrum {
            grid: self.grid,
            data,
        }
    }

    /// Transforms two real fields with one complex FFT.
    pub fn forward_pair(&self, a: &[f64], b: &[f64]) -> (Spectrum, Spectrum) {
        let n = self.grid.n();
        let mut z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        self.fft2(&mut z, &self.fwd);
        let mut sa = Spectrum::zeros(self.grid);
        let mut sb = Spectrum::zeros(self.grid);
        for j in 0..n {
            let jn = (n - j) % n;
            for i in 0..n {
                let inn = (n - i) % n;
                let zk = z[j * n + i];
                let zc = z[jn * n + inn].conj();
                sa.data[j * n + i] = 0.5 * (zk + zc);
                sb.data[j * n + i] = Complex64::new(0.0, -0.5) * (zk - zc);
            }
        }
        (sa, sb)
    }

    pub fn forward_vector(&self, u: &VectorField) -> (Spectrum, Spectrum) {
        self.forward_pair(&u.x, &u.y)
    }

    /// Real part of the normalized inverse transform.
    pub fn inverse(&self, s: &Spectrum) -> ScalarField {
        let mut data = s.data.clone();
        self.fft2(&mut data, &self.inv);
        let norm = 1.0 / self.grid.len() as f64;
        ScalarField {
            grid: self.grid,
            data: data.iter().map(|c| c.re * norm).collect(),
        }
    }

    /// Inverts two spectra of real fields with one complex FFT.
    pub fn inverse_pair(&self, a: &Spectrum, b: &Spectrum) -> (Vec<f64>, Vec<f64>) {
        let mut z: Vec<Complex64> = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&p, &q)| p + Complex64::new(0.0, 1.0) * q)
            .collect();
        self.fft2(&mut z, &self.inv);
        let norm = 1.0 / self.grid.len() as f64;
        (
            z.iter().map(|c| c.re * norm).collect(),
            z.iter().map(|c| c.im * norm).collect(),
        )
    }

    pub fn inverse_vector(&self, a: &Spectrum, b: &Spectrum) -> VectorField {
        let (x, y) = self.inverse_pair(a, b);
        VectorField {
            grid: self.grid,
            x,
            y,
        }
    }

    /// Applies `mult(kx, ky)` to every non-Nyquist mode, zeroing Nyquist ones.
    pub fn apply(&self, s: &Spectrum, mult: impl Fn(f64, f64) -> Complex64) -> Spectrum {
        let n = self.grid.n();
        let mut out = Spectrum::zeros(self.grid);
        for j in 0..n {
            for i in 0..n {
                if self.is_nyquist(i, j) {
                    continue;
                }
                let idx = j * n + i;
                out.data[idx] = s.data[idx] * mult(self.k[i], self.k[j]);
            }
        }
        out
    }

    /// Real-multiplier version of [`apply`](Self::apply), in place.
    pub fn apply_real_in_place(&self, s: &mut Spectrum, mult: impl Fn(f64, f64) -> f64) {
        let n = self.grid.n();
        for j in 0..n {
            for i in 0..n {
                let idx = j * n + i;
                if self.is_nyquist(i, j) {
                    s.data[idx] = Complex64::new(0.0, 0.0);
                } else {
                    s.data[idx] *= mult(self.k[i], self.k[j]);
                }
            }
        }
    }

    pub fn derivative_spectrum(&self, s: &Spectrum, axis: usize) -> Spectrum {
        self.apply(s, |kx, ky| {
            Complex64::new(0.0, if axis == 0 { kx } else { ky })
        })
    }

    pub fn derivative(&self, f: &ScalarField, axis: usize) -> Result<ScalarField> {
        f.check_finite("derivative input")?;
        Ok(self.inverse(&self.derivative_spectrum(&self.forward(f), axis)))
    }

    pub fn grad(&self, f: &ScalarField) -> Result<VectorField> {
        f.check_finite("grad input")?;
        let s = self.forward(f);
        let dx = self.derivative_spectrum(&s, 0);
        let dy = self.derivative_spectrum(&s, 1);
        Ok(self.inverse_vector(&dx, &dy))
    }

    /// `(d_2 f, -d_1 f)`
    pub fn perp_grad(&self, f: &ScalarField) -> Result<VectorField> {
        let g = self.grad(f)?;
        Ok(VectorField {
            grid: self.grid,
            x: g.y,
            y: g.x.iter().map(|v| -v).collect(),
        })
    }

    pub fn div(&self, u: &VectorField) -> Result<ScalarField> {
        u.check_finite("div input")?;
        let (sx, sy) = self.forward_vector(u);
        Ok(self.inverse(&self.div_spectrum(&sx, &sy)))
    }

    pub fn div_spectrum(&self, sx: &Spectrum, sy: &Spectrum) -> Spectrum {
        let mut out = self.derivative_spectrum(sx, 0);
        out.add_assign(&self.derivative_spectrum(sy, 1), 1.0);
        out
    }

    /// Scalar vorticity `d_1 u_2 - d_2 u_1`.
    pub fn rot(&self, u: &VectorField) -> Result<ScalarField> {
        u.check_finite("rot input")?;
        let (sx, sy) = self.forward_vector(u);
        Ok(self.inverse(&self.rot_spectrum(&sx, &sy)))
    }

    pub fn rot_spectrum(&self, sx: &Spectrum, sy: &Spectrum) -> Spectrum {
        let mut out = self.derivative_spectrum(sy, 0);
        out.add_assign(&self.derivative_spectrum(sx, 1), -1.0);
        out
    }

    /// Entries `c[j][k] = d_k u^j`.
    pub fn gradient_tensor(&self, u: &VectorField) -> Result<TensorField> {
        u.check_finite("gradient input")?;
        let (sx, sy) = self.forward_vector(u);
        Ok(self.gradient_tensor_spectral(&sx, &sy))
    }

    pub fn gradient_tensor_spectral(&self, sx: &Spectrum, sy: &Spectrum) -> TensorField {
        let (a, b) = self.inverse_pair(&self.derivative_spectrum(sx, 0), &self.derivative_spectrum(sx, 1));
        let (c, d) = self.inverse_pair(&self.derivative_spectrum(sy, 0), &self.derivative_spectrum(sy, 1));
        TensorField {
            grid: self.grid,
            c: [[a, b], [c, d]],
        }
    }

    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        f.check_finite("laplacian input")?;
        let mut s = self.forward(f);
        self.apply_real_in_place(&mut s, |kx, ky| -(kx * kx + ky * ky));
        Ok(self.inverse(&s))
    }

    pub fn check_zero_mean(&self, f: &ScalarField) -> Result<()> {
        let mean = f.mean();
        let scale = f.linf().max(f64::MIN_POSITIVE);
        if mean.abs() > ZERO_MEAN_TOL * scale {
            return Err(Error::NonZeroMean { mean });
        }
        Ok(())
    }

    /// `(-Laplacian)^{-1}` on zero-mean fields.
    pub fn inverse_neg_laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        f.check_finite("inverse Laplacian input")?;
        self.check_zero_mean(f)?;
        let mut s = self.forward(f);
        self.inverse_neg_laplacian_in_place(&mut s);
        Ok(self.inverse(&s))
    }

    pub fn inverse_neg_laplacian_in_place(&self, s: &mut Spectrum) {
        self.apply_real_in_place(s, |kx, ky| {
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                0.0
            } else {
                1.0 / k2
            }
        });
    }

    /// Multiplier of the double Riesz transform `R_j R_k`.
    #[inline]
    pub fn riesz_symbol(j: usize, k: usize, kx: f64, ky: f64) -> f64 {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            return 0.0;
        }
        let kj = if j == 0 { kx } else { ky };
        let kk = if k == 0 { kx } else { ky };
        kj * kk / k2
    }

    pub fn riesz_spectrum(&self, j: usize, k: usize, s: &Spectrum) -> Spectrum {
        let mut out = s.clone();
        self.apply_real_in_place(&mut out, |kx, ky| Self::riesz_symbol(j, k, kx, ky));
        out
    }

    pub fn riesz(&self, j: usize, k: usize, f: &ScalarField) -> Result<ScalarField> {
        f.check_finite("Riesz input")?;
        Ok(self.inverse(&self.riesz_spectrum(j, k, &self.forward(f))))
    }

    /// All four `R_j R_k f` as a tensor field.
    pub fn riesz_tensor(&self, f: &ScalarField) -> Result<TensorField> {
        f.check_finite("Riesz input")?;
        let s = self.forward(f);
        Ok(self.riesz_tensor_spectral(&s))
    }

    pub fn riesz_tensor_spectral(&self, s: &Spectrum) -> TensorField {
        let (a, b) = self.inverse_pair(&self.riesz_spectrum(0, 0, s), &self.riesz_spectrum(0, 1, s));
        let d = self.inverse(&self.riesz_spectrum(1, 1, s)).data;
        TensorField {
            grid: self.grid,
            c: [[a, b.clone()], [b, d]],
        }
    }

    /// Gradient and solenoidal parts of the spectra `(sx, sy)`, in place-free form.
    pub fn hodge_spectral(&self, sx: &Spectrum, sy: &Spectrum) -> [Spectrum; 4] {
        let n = self.grid.n();
        let mut gx = Spectrum::zeros(self.grid);
        let mut gy = Spectrum::zeros(self.grid);
        let mut ox = Spectrum::zeros(self.grid);
        let mut oy = Spectrum::zeros(self.grid);
        for j in 0..n {
            for i in 0..n {
                if self.is_nyquist(i, j) {
                    continue;
                }
                let idx = j * n + i;
                let (kx, ky) = (self.k[i], self.k[j]);
                let k2 = kx * kx + ky * ky;
                if k2 == 0.0 {
                    continue;
                }
                let proj = (sx.data[idx] * kx + sy.data[idx] * ky) / k2;
                gx.data[idx] = proj * kx;
                gy.data[idx] = proj * ky;
                ox.data[idx] = sx.data[idx] - gx.data[idx];
                oy.data[idx] = sy.data[idx] - gy.data[idx];
            }
        }
        [gx, gy, ox, oy]
    }

    /// Splits `u - mean(u)` into a curl-free and a divergence-free part.
    pub fn hodge(&self, u: &VectorField) -> Result<(VectorField, VectorField)> {
        u.check_finite("hodge input")?;
        let (sx, sy) = self.forward_vector(u);
        let [gx, gy, ox, oy] = self.hodge_spectral(&sx, &sy);
        Ok((self.inverse_vector(&gx, &gy), self.inverse_vector(&ox, &oy)))
    }

    /// Largest integer wavenumber kept by the 2/3 rule.
    #[inline]
    pub fn dealias_cutoff(&self) -> i64 {
        (self.grid.n() / 3) as i64
    }

    #[inline]
    pub fn is_dealiased_out(&self, i: usize, j: usize) -> bool {
        let c = self.dealias_cutoff();
        self.m[i].abs() > c || self.m[j].abs() > c
    }

    /// Zeroes modes above the 2/3 cutoff; returns the removed share of `sum |c|^2`.
    pub fn dealias_spectrum(&self, s: &mut Spectrum) -> f64 {
        let n = self.grid.n();
        let mut removed = 0.0;
        let mut total = 0.0;
        for j in 0..n {
            for i in 0..n {
                let idx = j * n + i;
                let e = s.data[idx].norm_sqr();
                total += e;
                if self.is_dealiased_out(i, j) {
                    removed += e;
                    s.data[idx] = Complex64::new(0.0, 0.0);
                }
            }
        }
        if total > 0.0 {
            removed / total
        } else {
            0.0
        }
    }

    pub fn dealias(&self, f: &ScalarField) -> ScalarField {
        let mut s = self.forward(f);
        self.dealias_spectrum(&mut s);
        self.inverse(&s)
    }

    /// `L^2` norm evaluated from the coefficients.
    pub fn spectral_l2(&self, s: &Spectrum) -> f64 {
        let n2 = self.grid.len() as f64;
        (self.grid.cell_area() / n2 * s.data.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Homogeneous `H^{-1}` norm (multiplier `1/|k|`, zero mode excluded).
    pub fn hminus1_norm(&self, s: &Spectrum) -> f64 {
        let n = self.grid.n();
        let n2 = self.grid.len() as f64;
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                if self.is_nyquist(i, j) {
                    continue;
                }
                let k2 = self.k[i] * self.k[i] + self.k[j] * self.k[j];
                if k2 > 0.0 {
                    acc += s.data[j * n + i].norm_sqr() / k2;
                }
            }
        }
        (self.grid.cell_area() / n2 * acc).sqrt()
    }

    /// Share of the resolved fluctuation energy of `f` removed by the 2/3 rule.
    pub fn high_band_fraction(&self, f: &ScalarField) -> f64 {
        let s = self.forward(f);
        let n = self.grid.n();
        let (mut hi, mut total) = (0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                if (i == 0 && j == 0) || self.is_nyquist(i, j) {
                    continue;
                }
                let e = s.data[j * n + i].norm_sqr();
                total += e;
                if self.is_dealiased_out(i, j) {
                    hi += e;
                }
            }
        }
        if total > 0.0 {
            hi / total
        } else {
            0.0
        }
    }

    /// Removes Nyquist content, leaving the field that every operator sees.
    pub fn project_resolved(&self, f: &ScalarField) -> ScalarField {
        let mut s = self.forward(f);
        self.apply_real_in_place(&mut s, |_, _| 1.0);
        self.inverse(&s)
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            buf.swap(j * n + i, i * n + j);
        }
    }
}
