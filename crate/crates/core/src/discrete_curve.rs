//! Polylines with fixed endpoints as a finite-dimensional stand-in for the
//! path space, with the midpoint-rule energy, the truncated energy `η ∘ E`,
//! their gradients and the deformation flow.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ac_metric::{MetricSpec, DEFAULT_FD_STEP};
use crate::cone_geometry::OpeningAngle;
use crate::error::{GeoError, Result};
use crate::linalg::{self, dist, dot, quad_form};

/// A polyline `x_0 … x_N` in the chart, `N ≥ 2`. The endpoints are never moved
/// by the flow or the refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCurve {
    dim: usize,
    vertices: Vec<f64>,
}

impl DiscreteCurve {
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        if points.len() < 3 {
            return Err(GeoError::Degenerate("a curve needs at least 2 segments".into()));
        }
        let dim = points[0].len();
        if dim < 2 || points.iter().any(|p| p.len() != dim) {
            return Err(GeoError::Degenerate("inconsistent vertex dimensions".into()));
        }
        Ok(Self {
            dim,
            vertices: points.iter().flatten().copied().collect(),
        })
    }

    pub fn from_flat(dim: usize, vertices: Vec<f64>) -> Result<Self> {
        if dim < 2 || !vertices.len().is_multiple_of(dim) || vertices.len() / dim < 3 {
            return Err(GeoError::Degenerate("bad flat vertex buffer".into()));
        }
        Ok(Self { dim, vertices })
    }

    /// Straight chart segment from `a` to `b`.
    pub fn straight(a: &[f64], b: &[f64], segments: usize) -> Result<Self> {
        let pts: Vec<Vec<f64>> = (0..=segments)
            .map(|i| {
                let t = i as f64 / segments as f64;
                a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
            })
            .collect();
        Self::from_points(&pts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of segments `N`.
    pub fn segments(&self) -> usize {
        self.vertices.len() / self.dim - 1
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.dim..(i + 1) * self.dim]
    }

    pub fn flat(&self) -> &[f64] {
        &self.vertices
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.vertices
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.vertices.chunks(self.dim).map(|c| c.to_vec()).collect()
    }

    pub fn start(&self) -> &[f64] {
        self.vertex(0)
    }

    pub fn end(&self) -> &[f64] {
        self.vertex(self.segments())
    }

    /// Apply `f` to every vertex, endpoints included.
    pub fn map_vertices<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Self {
        Self {
            dim: self.dim,
            vertices: self.vertices.chunks(self.dim).flat_map(f).collect(),
        }
    }

    /// `max_i |x_i − y_i|` for curves with equal `N`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.vertices.len(), other.vertices.len());
        (0..=self.segments())
            .map(|i| dist(self.vertex(i), other.vertex(i)))
            .fold(0.0, f64::max)
    }

    /// Euclidean distance from the origin to the polyline.
    pub fn closest_approach(&self) -> (f64, f64) {
        let n = self.segments();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..n {
            let a = self.vertex(i);
            let b = self.vertex(i + 1);
            let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
            let dd = dot(&d, &d);
            let u = if dd == 0.0 {
                0.0
            } else {
                (-dot(a, &d) / dd).clamp(0.0, 1.0)
            };
            let p: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + u * y).collect();
            let r = linalg::norm(&p);
            if r < best.0 {
                best = (r, (i as f64 + u) / n as f64);
            }
        }
        best
    }

    /// Midpoint-rule `g`-length `Σ |Δ_i|_{g(m_i)}`.
    pub fn length(&self, spec: &MetricSpec) -> Result<f64> {
        let mut g = vec![0.0; self.dim * self.dim];
        let mut total = 0.0;
        for_each_segment(self, |_, m, d| {
            spec.metric_into(m, &mut g)?;
            total += quad_form(&g, d).max(0.0).sqrt();
            Ok(())
        })?;
        Ok(total)
    }

    /// Reparametrize to `segments` segments of equal `g`-length (linear in the chart).
    pub fn resample(&self, spec: &MetricSpec, segments: usize) -> Result<Self> {
        let n = self.segments();
        let mut g = vec![0.0; self.dim * self.dim];
        let mut cum = vec![0.0; n + 1];
        for_each_segment(self, |i, m, d| {
            spec.metric_into(m, &mut g)?;
            cum[i + 1] = cum[i] + quad_form(&g, d).max(0.0).sqrt();
            Ok(())
        })?;
        let total = cum[n];
        let mut pts = Vec::with_capacity(segments + 1);
        let mut seg = 0;
        for k in 0..=segments {
            if k == 0 {
                pts.push(self.start().to_vec());
                continue;
            }
            if k == segments {
                pts.push(self.end().to_vec());
                continue;
            }
            let target = total * k as f64 / segments as f64;
            while seg + 1 < n && cum[seg + 1] < target {
                seg += 1;
            }
            let span = cum[seg + 1] - cum[seg];
            let u = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
            let a = self.vertex(seg);
            let b = self.vertex(seg + 1);
            pts.push(a.iter().zip(b).map(|(x, y)| x + u * (y - x)).collect());
        }
        Self::from_points(&pts)
    }

    /// CSV with header `t,x1,...,xn`, one vertex per row, `t = i/N`, 17
    /// significant digits so values round-trip bit-exactly.
    pub fn to_csv(&self) -> String {
        let n = self.segments();
        let mut out = String::from("t");
        for k in 1..=self.dim {
            write!(out, ",x{k}").unwrap();
        }
        out.push('\n');
        for i in 0..=n {
            write!(out, "{:.16e}", i as f64 / n as f64).unwrap();
            for v in self.vertex(i) {
                write!(out, ",{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| GeoError::Config("empty curve CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 3 {
            return Err(GeoError::Config(format!("bad curve CSV header: {header}")));
        }
        let dim = cols.len() - 1;
        let mut vertices = Vec::new();
        for (row, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| GeoError::Config(format!("curve CSV row {row}: {e}")))?;
            if vals.len() != dim + 1 {
                return Err(GeoError::Config(format!("curve CSV row {row}: wrong column count")));
            }
            vertices.extend_from_slice(&vals[1..]);
        }
        Self::from_flat(dim, vertices)
    }
}

/// Visit every segment with its index, chart midpoint and increment.
fn for_each_segment<F>(curve: &DiscreteCurve, mut f: F) -> Result<()>
where
    F: FnMut(usize, &[f64], &[f64]) -> Result<()>,
{
    let dim = curve.dim;
    let mut mid = vec![0.0; dim];
    let mut d = vec![0.0; dim];
    for i in 0..curve.segments() {
        let a = curve.vertex(i);
        let b = curve.vertex(i + 1);
        for k in 0..dim {
            mid[k] = 0.5 * (a[k] + b[k]);
            d[k] = b[k] - a[k];
        }
        f(i, &mid, &d)?;
    }
    Ok(())
}

/// Discrete energy `N Σ_i g(m_i)(Δ_i, Δ_i)` with `m_i` the segment midpoint.
pub fn energy(curve: &DiscreteCurve, spec: &MetricSpec) -> Result<f64> {
    let mut g = vec![0.0; curve.dim * curve.dim];
    let mut acc = 0.0;
    for_each_segment(curve, |_, m, d| {
        spec.metric_into(m, &mut g)?;
        acc += quad_form(&g, d);
        Ok(())
    })?;
    Ok(curve.segments() as f64 * acc)
}

/// Energy and its vertex gradient (flat, zero at the endpoints).
pub fn energy_and_gradient(curve: &DiscreteCurve, spec: &MetricSpec, grad: &mut [f64]) -> Result<f64> {
    let dim = curve.dim;
    let nn = dim * dim;
    let n_seg = curve.segments();
    let scale = n_seg as f64;
    let mut g = vec![0.0; nn];
    let mut dg = vec![0.0; dim * nn];
    let mut gd = vec![0.0; dim];
    grad.iter_mut().for_each(|v| *v = 0.0);
    let mut acc = 0.0;
    for_each_segment(curve, |i, m, d| {
        spec.metric_and_derivatives(m, DEFAULT_FD_STEP, &mut g, &mut dg)?;
        linalg::mat_vec(&g, d, &mut gd);
        acc += dot(&gd, d);
        for l in 0..dim {
            let dq = quad_form(&dg[l * nn..(l + 1) * nn], d);
            grad[i * dim + l] += scale * (-2.0 * gd[l] + 0.5 * dq);
            grad[(i + 1) * dim + l] += scale * (2.0 * gd[l] + 0.5 * dq);
        }
        Ok(())
    })?;
    for l in 0..dim {
        grad[l] = 0.0;
        grad[n_seg * dim + l] = 0.0;
    }
    Ok(scale * acc)
}

pub fn energy_gradient(curve: &DiscreteCurve, spec: &MetricSpec) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; curve.vertices.len()];
    energy_and_gradient(curve, spec, &mut grad)?;
    Ok(grad)
}

/// `N · max_i |∇_i E| / (2ℓ)`: the discrete covariant acceleration relative to
/// the curve's speed. Zero exactly at discrete geodesics.
pub fn geodesic_residual(curve: &DiscreteCurve, spec: &MetricSpec) -> Result<f64> {
    let grad = energy_gradient(curve, spec)?;
    let len = curve.length(spec)?;
    let gmax = grad.chunks(curve.dim).map(linalg::norm).fold(0.0f64, f64::max);
    if gmax == 0.0 {
        return Ok(0.0);
    }
    if len == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(curve.segments() as f64 * gmax / (2.0 * len))
}

/// The cutoff `η` with `η = 0` on `[0, low]`, `η(x) = x` on `[high, ∞)` and a
/// quintic Hermite transition matching value, slope and curvature at both band
/// edges (so `η ∈ C²`, strictly increasing on the band).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub low: f64,
    pub high: f64,
    /// Maximum of `η′` on the band, attained by this profile.
    pub slope_cap: f64,
    /// The slope bound `3 / (4ρ²[(1−5C★ε)² − (1+5C★ε)² sin²(π sin α/2)])`
    /// from the band construction; see [`CutoffProfile::mean_slope`].
    pub reference_slope_bound: f64,
    coeffs: [f64; 3],
}

impl CutoffProfile {
    /// Band `[low, high]` with `0 ≤ low < high`.
    pub fn from_band(low: f64, high: f64) -> Result<Self> {
        if !(low >= 0.0 && high > low) || !high.is_finite() {
            return Err(GeoError::Config(format!(
                "cutoff band must satisfy 0 ≤ low < high, got [{low}, {high}]"
            )));
        }
        let h = high / (high - low);
        // h(u) = a u³ + b u⁴ + c u⁵ with h(1) = H, h'(1) = 1, h''(1) = 0
        let coeffs = [10.0 * h - 4.0, 7.0 - 15.0 * h, 6.0 * h - 3.0];
        let mut prof = Self {
            low,
            high,
            slope_cap: 0.0,
            reference_slope_bound: f64::INFINITY,
            coeffs,
        };
        // h' = u²(3a + 4bu + 5cu²); maximize on a fine grid then polish
        let hp = |u: f64| u * u * (3.0 * coeffs[0] + 4.0 * coeffs[1] * u + 5.0 * coeffs[2] * u * u);
        let mut best = (0.0, 0.0);
        for k in 0..=4000 {
            let u = k as f64 / 4000.0;
            if hp(u) > best.1 {
                best = (u, hp(u));
            }
        }
        let (mut lo, mut hi) = ((best.0 - 2.5e-4).max(0.0), (best.0 + 2.5e-4).min(1.0));
        for _ in 0..100 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if hp(m1) < hp(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        prof.slope_cap = best.1.max(hp(0.5 * (lo + hi)));
        Ok(prof)
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    /// `high / (high − low)`: any `η` with `η(low) = 0` and `η(high) = high`
    /// must reach this slope somewhere on the band.
    pub fn mean_slope(&self) -> f64 {
        self.high / self.width()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.low {
            0.0
        } else if x >= self.high {
            x
        } else {
            let u = (x - self.low) / self.width();
            let [a, b, c] = self.coeffs;
            self.width() * u * u * u * (a + u * (b + u * c))
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x <= self.low {
            0.0
        } else if x >= self.high {
            1.0
        } else {
            let u = (x - self.low) / self.width();
            let [a, b, c] = self.coeffs;
            u * u * (3.0 * a + u * (4.0 * b + 5.0 * c * u))
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        if x <= self.low || x >= self.high {
            0.0
        } else {
            let u = (x - self.low) / self.width();
            let [a, b, c] = self.coeffs;
            u * (6.0 * a + u * (12.0 * b + 20.0 * c * u)) / self.width()
        }
    }
}

/// Band for antipodal points at radius `rho`: `η = 0` up to
/// `(1+5C★ε)² 4ρ² sin²(π sin α/2)` (the boundary-curve level) and `η = id`
/// from `(1−5C★ε)² 4ρ²` (below the min-max level).
pub fn make_cutoff(rho: f64, eps: f64, c_star: f64, alpha: OpeningAngle) -> Result<CutoffProfile> {
    if !(rho > 0.0) || !(eps >= 0.0) || !(c_star > 0.0) {
        return Err(GeoError::Config("cutoff needs ρ > 0, ε ≥ 0, C★ > 0".into()));
    }
    let lo_f = 1.0 + 5.0 * c_star * eps;
    let hi_f = 1.0 - 5.0 * c_star * eps;
    let sin2 = (0.5 * std::f64::consts::PI * alpha.sin()).sin().powi(2);
    if hi_f <= 0.0 || sin2 >= (hi_f / lo_f).powi(2) {
        return Err(GeoError::Config(format!(
            "cutoff bands overlap: sin²(π sin α/2) = {sin2:.6} must be < ((1−5C★ε)/(1+5C★ε))² = {:.6}",
            (hi_f.max(0.0) / lo_f).powi(2)
        )));
    }
    let four_rho2 = 4.0 * rho * rho;
    let mut prof = CutoffProfile::from_band(lo_f * lo_f * four_rho2 * sin2, hi_f * hi_f * four_rho2)?;
    prof.reference_slope_bound = 3.0 / (four_rho2 * (hi_f * hi_f - lo_f * lo_f * sin2));
    Ok(prof)
}

pub fn truncated_energy(curve: &DiscreteCurve, spec: &MetricSpec, cutoff: &CutoffProfile) -> Result<f64> {
    Ok(cutoff.eval(energy(curve, spec)?))
}

/// `∇E★ = η′(E) ∇E`, together with `E`.
pub fn truncated_energy_gradient(
    curve: &DiscreteCurve,
    spec: &MetricSpec,
    cutoff: &CutoffProfile,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; curve.vertices.len()];
    let e = energy_and_gradient(curve, spec, &mut grad)?;
    let s = cutoff.derivative(e);
    grad.iter_mut().for_each(|v| *v *= s);
    Ok((e, grad))
}

/// Inner product used to turn `dE★` into a descent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GradientKind {
    /// Vertexwise partial derivatives.
    #[default]
    L2,
    /// Discrete `W^{1,2}`: `(1/N)ΣX·Y + NΣΔX·ΔY` on interior vertices. Same
    /// zero set as `L2`, but every mode relaxes at a comparable rate.
    Sobolev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub gradient: GradientKind,
    /// Initial (and maximal) step; `None` picks the default for the curve.
    pub tau0: Option<f64>,
    /// Steps below `tau0 · min_step_ratio` count as a collapse.
    pub min_step_ratio: f64,
    /// Hard cap on accepted steps per call.
    pub max_steps: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            gradient: GradientKind::L2,
            tau0: None,
            min_step_ratio: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowStop {
    /// Flowed for the full requested time.
    Completed,
    /// `E★ = 0`: the curve is a fixed point of the flow.
    Equilibrium,
    /// No decrease is possible at any step size and the gradient is at
    /// round-off level.
    Critical,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub curve: DiscreteCurve,
    pub tau_elapsed: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// `E★` before the first step and after every accepted step.
    pub e_star_trace: Vec<f64>,
    pub stop: FlowStop,
}

/// Largest metric eigenvalue bound over the segment midpoints.
fn max_metric_eigen(curve: &DiscreteCurve, spec: &MetricSpec) -> Result<f64> {
    let mut g = vec![0.0; curve.dim * curve.dim];
    let mut worst = 0.0f64;
    for_each_segment(curve, |_, m, _| {
        spec.metric_into(m, &mut g)?;
        worst = worst.max(linalg::gershgorin_max(&g, curve.dim));
        Ok(())
    })?;
    Ok(worst)
}

/// Default explicit step: `0.1/(N λ η′)` for `L2`, `0.25/(λ η′)` for `Sobolev`,
/// with `λ` the largest metric eigenvalue bound on the curve and `η′` the
/// cutoff's maximal slope.
pub fn default_step(
    curve: &DiscreteCurve,
    spec: &MetricSpec,
    cutoff: &CutoffProfile,
    kind: GradientKind,
) -> Result<f64> {
    let lam = max_metric_eigen(curve, spec)? * cutoff.slope_cap.max(1.0);
    Ok(match kind {
        GradientKind::L2 => 0.1 / (curve.segments() as f64 * lam),
        GradientKind::Sobolev => 0.25 / lam,
    })
}

/// Replace the interior part of `grad` by its `W^{1,2}` Riesz representative.
fn sobolev_precondition(grad: &mut [f64], dim: usize, segments: usize, scratch: &mut Vec<f64>) {
    let m = segments - 1;
    let nf = segments as f64;
    let mut col = vec![0.0; m];
    for l in 0..dim {
        for i in 0..m {
            col[i] = grad[(i + 1) * dim + l];
        }
        linalg::solve_sym_tridiag_const(1.0 / nf + 2.0 * nf, -nf, &mut col, scratch);
        for i in 0..m {
            grad[(i + 1) * dim + l] = col[i];
        }
    }
}

/// Explicit-Euler flow of `−∇E★` for time `tau_total`, halving the step
/// whenever `E★` would increase so the recorded `E★` is nonincreasing.
pub fn flow(
    curve: &DiscreteCurve,
    spec: &MetricSpec,
    cutoff: &CutoffProfile,
    tau_total: f64,
    params: &FlowParams,
) -> Result<FlowOutcome> {
    let dim = curve.dim;
    let n_seg = curve.segments();
    let mut x = curve.clone();
    let mut grad = vec![0.0; x.vertices.len()];
    let mut e = energy_and_gradient(&x, spec, &mut grad)?;
    let mut e_star = cutoff.eval(e);
    let mut out = FlowOutcome {
        curve: curve.clone(),
        tau_elapsed: 0.0,
        accepted: 0,
        rejected: 0,
        e_star_trace: vec![e_star],
        stop: FlowStop::Completed,
    };
    if e_star == 0.0 {
        out.stop = FlowStop::Equilibrium;
        return Ok(out);
    }
    let tau0 = match params.tau0 {
        Some(t) => t,
        None => default_step(&x, spec, cutoff, params.gradient)?,
    };
    let mut tau = tau0;
    let mut scratch = Vec::new();
    let mut trial = x.clone();
    let mut trial_grad = vec![0.0; grad.len()];
    while out.tau_elapsed < tau_total {
        if out.accepted >= params.max_steps {
            out.stop = FlowStop::StepLimit;
            break;
        }
        let slope = cutoff.derivative(e);
        let mut dir = grad.clone();
        if params.gradient == GradientKind::Sobolev {
            sobolev_precondition(&mut dir, dim, n_seg, &mut scratch);
        }
        dir.iter_mut().for_each(|v| *v *= slope);
        let mut h = tau.min(tau_total - out.tau_elapsed);
        loop {
            for (t, (xv, dv)) in trial.vertices.iter_mut().zip(x.vertices.iter().zip(&dir)) {
                *t = xv - h * dv;
            }
            let ok = match energy_and_gradient(&trial, spec, &mut trial_grad) {
                Ok(e_new) if cutoff.eval(e_new) <= e_star => Some(e_new),
                _ => None,
            };
            if let Some(e_new) = ok {
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                e = e_new;
                e_star = cutoff.eval(e);
                out.accepted += 1;
                out.tau_elapsed += h;
                out.e_star_trace.push(e_star);
                tau = (2.0 * h).min(tau0);
                break;
            }
            out.rejected += 1;
            h *= 0.5;
            if h < tau0 * params.min_step_ratio {
                let gnorm = linalg::norm(&grad);
                let predicted = tau0 * slope * dot(&grad, &dir);
                if predicted <= 1e-10 * e_star {
                    out.stop = FlowStop::Critical;
                    out.curve = x;
                    return Ok(out);
                }
                return Err(GeoError::Numerical(format!(
                    "flow stalled: step collapsed below {:.3e} at E★ = {e_star:.12e}, |∇E| = {gnorm:.3e}, after {} accepted / {} rejected steps",
                    tau0 * params.min_step_ratio,
                    out.accepted,
                    out.rejected
                )));
            }
        }
        if e_star == 0.0 {
            out.stop = FlowStop::Equilibrium;
            break;
        }
    }
    out.curve = x;
    Ok(out)
}

/// Step for finite-difference Hessians, relative to the curve's extent.
fn hessian_step(curve: &DiscreteCurve) -> f64 {
    let scale = curve.vertices.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    1e-6 * scale
}

/// Symmetrized Hessian of the discrete energy in the interior vertex
/// coordinates (`(N−1)·n` unknowns), by central differences of the analytic
/// gradient. Perturbing every third vertex at once recovers the
/// block-tridiagonal structure in `3n` gradient pairs.
pub fn energy_hessian(curve: &DiscreteCurve, spec: &MetricSpec) -> Result<DMatrix<f64>> {
    let dim = curve.dim;
    let n_seg = curve.segments();
    let m = (n_seg - 1) * dim;
    let h = hessian_step(curve);
    let mut hess = DMatrix::<f64>::zeros(m, m);
    let mut plus = curve.clone();
    let mut minus = curve.clone();
    let mut gp = vec![0.0; curve.vertices.len()];
    let mut gm = vec![0.0; curve.vertices.len()];
    for color in 0..3 {
        for d in 0..dim {
            plus.vertices.copy_from_slice(&curve.vertices);
            minus.vertices.copy_from_slice(&curve.vertices);
            let perturbed: Vec<usize> = (1..n_seg).filter(|i| i % 3 == color).collect();
            for &i in &perturbed {
                plus.vertices[i * dim + d] += h;
                minus.vertices[i * dim + d] -= h;
            }
            energy_and_gradient(&plus, spec, &mut gp)?;
            energy_and_gradient(&minus, spec, &mut gm)?;
            for &i in &perturbed {
                let col = (i - 1) * dim + d;
                for j in i.saturating_sub(1).max(1)..=(i + 1).min(n_seg - 1) {
                    for e in 0..dim {
                        let row = (j - 1) * dim + e;
                        hess[(row, col)] = (gp[j * dim + e] - gm[j * dim + e]) / (2.0 * h);
                    }
                }
            }
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub curve: DiscreteCurve,
    pub residual: f64,
    pub iterations: usize,
}

/// Refinement that ran out of iterations; carries the best iterate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("refinement stopped at residual {residual:.3e} after {iterations} iterations")]
pub struct RefineFailure {
    pub best: DiscreteCurve,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton iteration on `∇E = 0` with fixed endpoints, step length
/// chosen by backtracking on `|∇E|`. Converges to the nearby critical curve
/// whatever its index.
pub fn refine_to_geodesic(
    curve: &DiscreteCurve,
    spec: &MetricSpec,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<Refined, RefineFailure> {
    let fail = |c: &DiscreteCurve, r: f64, it: usize| RefineFailure {
        best: c.clone(),
        residual: r,
        iterations: it,
    };
    let dim = curve.dim;
    let n_seg = curve.segments();
    let mut x = curve.clone();
    let mut residual = geodesic_residual(&x, spec).map_err(|_| fail(curve, f64::INFINITY, 0))?;
    let mut grad = energy_gradient(&x, spec).map_err(|_| fail(curve, residual, 0))?;
    for it in 0..max_iter {
        if residual <= tol {
            return Ok(Refined {
                curve: x,
                residual,
                iterations: it,
            });
        }
        let hess = energy_hessian(&x, spec).map_err(|_| fail(&x, residual, it))?;
        let rhs: Vec<f64> = grad[dim..n_seg * dim].iter().map(|v| -v).collect();
        let step = linalg::solve_dense(hess, &rhs).unwrap_or(rhs);
        let gnorm = linalg::norm(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let mut trial = x.clone();
            for (k, s) in step.iter().enumerate() {
                trial.vertices[dim + k] += t * s;
            }
            if let Ok(g_new) = energy_gradient(&trial, spec) {
                if linalg::norm(&g_new) < gnorm * (1.0 - 1e-4 * t) {
                    x = trial;
                    grad = g_new;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        residual = geodesic_residual(&x, spec).map_err(|_| fail(&x, residual, it))?;
        if !accepted {
            return if residual <= tol {
                Ok(Refined {
                    curve: x,
                    residual,
                    iterations: it + 1,
                })
            } else {
                Err(fail(&x, residual, it + 1))
            };
        }
    }
    if residual <= tol {
        Ok(Refined {
            curve: x,
            residual,
            iterations: max_iter,
        })
    } else {
        Err(fail(&x, residual, max_iter))
    }
}
