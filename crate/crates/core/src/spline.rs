//! Cubic splines: natural splines on ordered knots and periodic splines for
//! closed curves.

use crate::error::{Error, Result};

/// Natural cubic spline through `(x_i, y_i)` with strictly increasing `x`.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::InvalidParameter(
                "spline needs at least three knots with matching values".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "spline abscissae must be strictly increasing".into(),
            ));
        }
        // Tridiagonal system for interior second derivatives.
        let mut a = vec![0.0; n];
        let mut b = vec![1.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            a[i] = h0;
            b[i] = 2.0 * (h0 + h1);
            c[i] = h1;
            d[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        let m = solve_tridiagonal(&a, &b, &c, &d);
        Ok(Self { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k => (k - 1).min(self.x.len() - 2),
        }
    }

    /// Value and first derivative at `t` (linear extrapolation outside).
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let i = self.segment(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let v = a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let dv = (self.y[i + 1] - self.y[i]) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        (v, dv)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }
}

/// Periodic cubic spline through equally spaced samples on `[0, period)`.
#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(y: Vec<f64>, period: f64) -> Result<Self> {
        let n = y.len();
        if n < 4 {
            return Err(Error::InvalidParameter(
                "periodic spline needs at least four samples".into(),
            ));
        }
        let h = period / n as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|i| 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]) / (h * h))
            .collect();
        let m = solve_cyclic(1.0, 4.0, 1.0, &rhs);
        Ok(Self { h, y, m })
    }

    /// Value, first and second derivative at parameter `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let n = self.y.len();
        let period = self.h * n as f64;
        let tt = t.rem_euclid(period);
        let i = ((tt / self.h).floor() as usize).min(n - 1);
        let j = (i + 1) % n;
        let h = self.h;
        let b = (tt - i as f64 * h) / h;
        let a = 1.0 - b;
        let (m0, m1) = (self.m[i], self.m[j]);
        let v = a * self.y[i] + b * self.y[j] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let dv = (self.y[j] - self.y[i]) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let ddv = a * m0 + b * m1;
        (v, dv, ddv)
    }
}

fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / den;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Constant-coefficient cyclic tridiagonal solve (Sherman-Morrison).
fn solve_cyclic(lower: f64, diag: f64, upper: f64, d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let gamma = -diag;
    let mut a = vec![lower; n];
    let mut b = vec![diag; n];
    let c = vec![upper; n];
    a[0] = 0.0;
    b[0] = diag - gamma;
    b[n - 1] = diag - upper * lower / gamma;
    let x = solve_tridiagonal(&a, &b, &c, d);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = upper;
    let z = solve_tridiagonal(&a, &b, &c, &u);
    let fact = (x[0] + lower * x[n - 1] / gamma) / (1.0 + z[0] + lower * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}
