//! Small dense helpers for n-vectors stored as slices.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

/// Euclidean angle between two nonzero vectors, in `[0, π]`.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let ab = dot(a, b);
    // component of b orthogonal to a, formed directly so it keeps its digits
    let k = ab / (na * na);
    let perp = a
        .iter()
        .zip(b)
        .map(|(x, y)| (y - k * x) * (y - k * x))
        .sum::<f64>()
        .sqrt();
    (perp * na).atan2(ab)
}

/// Quadratic form `vᵀ G v` for a row-major `n×n` matrix.
#[inline]
pub fn quad_form(g: &[f64], v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let row = &g[i * n..(i + 1) * n];
        acc += v[i] * dot(row, v);
    }
    acc
}

/// `out = G v` for a row-major `n×n` matrix.
#[inline]
pub fn mat_vec(g: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for i in 0..n {
        out[i] = dot(&g[i * n..(i + 1) * n], v);
    }
}

/// Upper bound on the largest eigenvalue of a symmetric matrix (Gershgorin).
pub fn gershgorin_max(g: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let row = &g[i * n..(i + 1) * n];
            row[i]
                + row
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, x)| x.abs())
                    .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Inverse of a symmetric positive-definite row-major matrix.
pub fn spd_inverse(g: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, g);
    let chol = m
        .cholesky()
        .ok_or_else(|| GeoError::Numerical("metric is not positive definite".into()))?;
    let inv = chol.inverse();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    Ok(out)
}

/// Solve a general dense system; `None` when singular.
pub fn solve_dense(a: DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    a.lu().solve(&rhs).map(|x| x.iter().copied().collect())
}

/// Thomas algorithm for a tridiagonal system with constant stencil `(off, diag, off)`.
/// Solves in place; `rhs` is overwritten with the solution.
pub fn solve_sym_tridiag_const(diag: f64, off: f64, rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let m = rhs.len();
    if m == 0 {
        return;
    }
    scratch.clear();
    scratch.resize(m, 0.0);
    let mut denom = diag;
    rhs[0] /= denom;
    for i in 1..m {
        scratch[i] = off / denom;
        denom = diag - off * scratch[i];
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / denom;
    }
    for i in (0..m - 1).rev() {
        let c = scratch[i + 1];
        rhs[i] -= c * rhs[i + 1];
    }
}

/// Deterministic quasi-uniform unit directions in `ℝⁿ`: uniform angles for
/// `n = 2`, a Fibonacci lattice for `n = 3`, seeded Gaussian samples above.
pub fn sphere_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * k as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_d1ec);
            (0..count)
                .map(|_| loop {
                    let v: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
                    if let Some(u) = normalized(&v) {
                        break u;
                    }
                })
                .collect()
        }
    }
}

/// Box–Muller sample from N(0, 1).
pub(crate) fn standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
