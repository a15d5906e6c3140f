//! Tensor-product cubic Lagrange interpolation on the periodic grid.

use crate::field::{Grid, ScalarField, VectorField};

#[inline]
fn weights(t: f64) -> [f64; 4] {
    // nodes at -1, 0, 1, 2
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

#[inline]
fn locate(grid: &Grid, x: f64) -> (isize, f64) {
    let s = x / grid.h();
    let i = s.floor();
    (i as isize, s - i)
}

fn stencil(grid: &Grid, x: f64, y: f64) -> ([usize; 16], [f64; 16]) {
    let (i0, tx) = locate(grid, x);
    let (j0, ty) = locate(grid, y);
    let wx = weights(tx);
    let wy = weights(ty);
    let mut idx = [0usize; 16];
    let mut w = [0.0; 16];
    for b in 0..4 {
        for a in 0..4 {
            idx[4 * b + a] = grid.wrap(i0 + a as isize - 1, j0 + b as isize - 1);
            w[4 * b + a] = wx[a] * wy[b];
        }
    }
    (idx, w)
}

pub fn scalar_at(f: &ScalarField, x: f64, y: f64) -> f64 {
    let (idx, w) = stencil(&f.grid, x, y);
    idx.iter().zip(&w).map(|(&k, &wk)| wk * f.data[k]).sum()
}

pub fn vector_at(v: &VectorField, x: f64, y: f64) -> (f64, f64) {
    let (idx, w) = stencil(&v.grid, x, y);
    let mut out = (0.0, 0.0);
    for (&k, &wk) in idx.iter().zip(&w) {
        out.0 += wk * v.x[k];
        out.1 += wk * v.y[k];
    }
    out
}
