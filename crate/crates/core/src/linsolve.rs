//! Preconditioned conjugate gradients on flat vectors.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from `x`.
///
/// Stops when `||b - A x|| <= rel_tol ||b||`.
pub fn pcg(
    solver: &'static str,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precondition: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    mut x: Vec<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rnorm = dot(&r, &r).sqrt();
    if rnorm <= rel_tol * bnorm {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: rnorm / bnorm,
            },
        ));
    }
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NoConvergence {
                solver,
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= rel_tol * bnorm {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: rnorm / bnorm,
                },
            ));
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        solver,
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}
