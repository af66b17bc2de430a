//! Brute-force reference lengths on the cone: a polyline in polar
//! coordinates `(ρ, θ)` on a uniform `θ` grid, length
//! `Σ sqrt(Δρ² + ρ̄² sin²α Δθ²)` minimized over the interior radii by damped
//! Newton. The endpoint angle fixes the homotopy class, so no unfolding is
//! involved.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cone_geometry::OpeningAngle;
use crate::error::{GeoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub length: f64,
    /// Smallest interior radius of the optimized polyline.
    pub min_radius: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Default number of polyline segments.
pub const ORACLE_SEGMENTS: usize = 400;

struct Problem {
    rho0: f64,
    rho1: f64,
    /// `sin α · Δθ`.
    w: f64,
}

impl Problem {
    fn radii<'a>(&self, interior: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        let (a, b) = (self.rho0, self.rho1);
        std::iter::once(a)
            .chain(interior.iter().copied())
            .chain(std::iter::once(b))
    }

    fn length(&self, interior: &[f64]) -> f64 {
        let r: Vec<f64> = self.radii(interior).collect();
        r.windows(2)
            .map(|p| {
                let d = p[1] - p[0];
                let m = 0.5 * (p[0] + p[1]);
                (d * d + m * m * self.w * self.w).sqrt()
            })
            .sum()
    }

    fn gradient(&self, interior: &[f64], grad: &mut [f64]) {
        let r: Vec<f64> = self.radii(interior).collect();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let w2 = self.w * self.w;
        for i in 0..r.len() - 1 {
            let d = r[i + 1] - r[i];
            let m = 0.5 * (r[i] + r[i + 1]);
            let l = (d * d + m * m * w2).sqrt();
            if l == 0.0 {
                continue;
            }
            // ∂l/∂r_i and ∂l/∂r_{i+1}
            let da = (-d + 0.5 * m * w2) / l;
            let db = (d + 0.5 * m * w2) / l;
            if i >= 1 {
                grad[i - 1] += da;
            }
            if i < interior.len() {
                grad[i] += db;
            }
        }
    }
}

/// Minimal polar-polyline length between radius `rho0` at `θ = 0` and radius
/// `rho1` at `θ = chart_angle` (unwrapped; `(2k+1)π` selects winding `k`
/// between antipodal points).
pub fn polyline_length(
    rho0: f64,
    rho1: f64,
    chart_angle: f64,
    alpha: OpeningAngle,
    segments: usize,
) -> Result<OracleResult> {
    if !(rho0 > 0.0 && rho1 > 0.0 && chart_angle > 0.0) || segments < 2 {
        return Err(GeoError::Config(
            "oracle needs positive radii, angle and ≥ 2 segments".into(),
        ));
    }
    let pb = Problem {
        rho0,
        rho1,
        w: alpha.sin() * chart_angle / segments as f64,
    };
    let m = segments - 1;
    let mut x: Vec<f64> = (1..segments)
        .map(|i| rho0 + (rho1 - rho0) * i as f64 / segments as f64)
        .collect();
    let mut g = vec![0.0; m];
    let mut gp = vec![0.0; m];
    let mut gm = vec![0.0; m];
    let mut len = pb.length(&x);
    let mut converged = false;
    let mut it = 0;
    let scale = rho0.max(rho1);
    while it < 500 {
        it += 1;
        pb.gradient(&x, &mut g);
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gnorm < 1e-13 {
            converged = true;
            break;
        }
        // tridiagonal Hessian by differencing the gradient, three colours
        let mut diag = vec![0.0; m];
        let mut lower = vec![0.0; m];
        let h = 1e-6 * scale;
        for colour in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            for i in (colour..m).step_by(3) {
                xp[i] += h;
                xm[i] -= h;
            }
            pb.gradient(&xp, &mut gp);
            pb.gradient(&xm, &mut gm);
            for i in (colour..m).step_by(3) {
                diag[i] = (gp[i] - gm[i]) / (2.0 * h);
                if i + 1 < m {
                    lower[i + 1] = (gp[i + 1] - gm[i + 1]) / (2.0 * h);
                }
            }
        }
        let step = solve_tridiag(&diag, &lower, &g)
            .filter(|s| s.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() > 0.0)
            .unwrap_or_else(|| g.iter().map(|v| v * 0.1 * scale).collect());
        // keep radii positive: at most halve any radius per step
        let mut t: f64 = 1.0;
        for (xi, si) in x.iter().zip(&step) {
            if *si > 0.0 {
                t = t.min(0.5 * xi / si);
            }
        }
        let mut accepted = false;
        while t > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a - t * b).collect();
            let lt = pb.length(&trial);
            if lt < len {
                let gain = len - lt;
                x = trial;
                len = lt;
                accepted = true;
                if gain < 1e-15 * len {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    Ok(OracleResult {
        length: len,
        min_radius: x.iter().copied().fold(f64::INFINITY, f64::min),
        iterations: it,
        converged,
    })
}

/// Thomas algorithm for a symmetric tridiagonal system; `lower[i]` couples
/// `i−1` and `i`.
fn solve_tridiag(diag: &[f64], lower: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return None;
    }
    d[0] = rhs[0] / denom;
    for i in 1..m {
        c[i] = lower[i] / denom;
        denom = diag[i] - lower[i] * c[i];
        if denom.abs() < 1e-300 {
            return None;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i + 1] * d[i + 1];
    }
    Some(d)
}

/// Oracle verdict on winding class `k` between antipodal points at radius `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOracle {
    pub winding: usize,
    pub length: f64,
    pub min_radius: f64,
    /// The minimizer stays off the apex, so the class holds a geodesic segment.
    pub admissible: bool,
}

/// Optimized polylines collapse onto the apex for classes without a geodesic.
const APEX_FRACTION: f64 = 1e-2;

pub fn antipodal_class(rho: f64, winding: usize, alpha: OpeningAngle, segments: usize) -> Result<ClassOracle> {
    let res = polyline_length(rho, rho, (2 * winding + 1) as f64 * PI, alpha, segments)?;
    Ok(ClassOracle {
        winding,
        length: res.length,
        min_radius: res.min_radius,
        admissible: res.min_radius > APEX_FRACTION * rho && res.length < 2.0 * rho,
    })
}

/// Classes `k = 0, 1, …` whose wedge angle `(2k+1)π sin α` stays below `2π`
/// (beyond that every class collapses onto the apex).
pub fn scan_classes(rho: f64, alpha: OpeningAngle, segments: usize) -> Result<Vec<ClassOracle>> {
    let mut out = Vec::new();
    let mut k = 0;
    while (2 * k + 1) as f64 * alpha.sin() < 2.0 {
        out.push(antipodal_class(rho, k, alpha, segments)?);
        k += 1;
    }
    Ok(out)
}
