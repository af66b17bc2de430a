//! Closed-form geometry of the standard cone `dρ² + ρ² sin²α g_{S^{n−1}}`.
//!
//! Every 2-plane through the apex is a totally geodesic copy of the 2-cone, and
//! the 2-cone cut along a generatrix unfolds isometrically onto a planar sector
//! of angle `2π sin α`. Geodesics are therefore straight chords of the unfolded
//! covering, which is how everything in this module is computed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::discrete_curve::DiscreteCurve;
use crate::error::{GeoError, Result};
use crate::linalg::{angle_between, dot, norm, normalized};

const UNIT_TOL: f64 = 1e-12;
const EXCLUDED_TOL: f64 = 1e-12;

/// Half-angle `α ∈ (0, π/2)` of the model cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeningAngle {
    alpha: f64,
    sin_alpha: f64,
}

impl OpeningAngle {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < PI / 2.0) {
            return Err(GeoError::Config(format!(
                "opening angle must lie in (0, π/2), got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            sin_alpha: alpha.sin(),
        })
    }

    /// Construct from `sin α`, keeping the given sine bit-exact.
    pub fn from_sin(sin_alpha: f64) -> Result<Self> {
        if !(sin_alpha > 0.0 && sin_alpha < 1.0) {
            return Err(GeoError::Config(format!("sin α must lie in (0, 1), got {sin_alpha}")));
        }
        Ok(Self {
            alpha: sin_alpha.asin(),
            sin_alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sin(&self) -> f64 {
        self.sin_alpha
    }

    pub fn cos(&self) -> f64 {
        (1.0 - self.sin_alpha * self.sin_alpha).sqrt()
    }

    /// Total angle of the unfolded sector, `2π sin α`.
    pub fn wedge_angle(&self) -> f64 {
        2.0 * PI * self.sin_alpha
    }

    /// True when `sin α = 1/(2k+1)` for some `k ≥ 1`: the angles where an
    /// antipodal chord passes exactly through the apex.
    pub fn is_excluded(&self) -> bool {
        let k = ((1.0 / self.sin_alpha - 1.0) / 2.0).round();
        k >= 1.0 && (self.sin_alpha - 1.0 / (2.0 * k + 1.0)).abs() < EXCLUDED_TOL
    }
}

/// A point of the cone in polar form: radius and a unit direction in `S^{n−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub rho: f64,
    pub theta: Vec<f64>,
}

impl PolarPoint {
    pub fn new(rho: f64, theta: Vec<f64>) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(GeoError::Degenerate(format!("radius must be ≥ 0, got {rho}")));
        }
        if theta.len() < 2 || (norm(&theta) - 1.0).abs() > UNIT_TOL {
            return Err(GeoError::Degenerate(
                "direction must be a unit vector of dimension ≥ 2".into(),
            ));
        }
        Ok(Self { rho, theta })
    }

    /// Polar form of a chart point. The apex gets direction `e₁`.
    pub fn from_cartesian(x: &[f64]) -> Self {
        let rho = norm(x);
        let theta = normalized(x).unwrap_or_else(|| {
            let mut e = vec![0.0; x.len()];
            e[0] = 1.0;
            e
        });
        Self { rho, theta }
    }

    pub fn to_cartesian(&self) -> Vec<f64> {
        self.theta.iter().map(|t| self.rho * t).collect()
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// A point of the unfolded sector, `φ` reduced to `[−π sin α, π sin α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgePoint {
    pub rho: f64,
    pub phi: f64,
}

impl WedgePoint {
    pub fn new(rho: f64, phi: f64, alpha: OpeningAngle) -> Self {
        let half = PI * alpha.sin();
        let period = 2.0 * half;
        let mut p = (phi + half).rem_euclid(period) - half;
        if p >= half {
            p -= period;
        }
        Self { rho, phi: p }
    }

    pub fn to_cartesian(&self) -> [f64; 2] {
        [self.rho * self.phi.cos(), self.rho * self.phi.sin()]
    }
}

/// An oriented 2-plane through the apex, given by an orthonormal basis `(u, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane2 {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

impl Plane2 {
    /// Gram–Schmidt on `(u, w)`.
    pub fn new(u: &[f64], w: &[f64]) -> Result<Self> {
        if u.len() != w.len() || u.len() < 2 {
            return Err(GeoError::Degenerate("plane basis dimension mismatch".into()));
        }
        let u = normalized(u).ok_or_else(|| GeoError::Degenerate("zero plane vector".into()))?;
        let c = dot(&u, w);
        let w: Vec<f64> = w.iter().zip(&u).map(|(wi, ui)| wi - c * ui).collect();
        let w = normalized(&w)
            .filter(|_| norm(&w) > 1e-12)
            .ok_or_else(|| GeoError::Degenerate("plane vectors are parallel".into()))?;
        Ok(Self { u, w })
    }

    /// The coordinate plane `span{e₁, e₂}` of `ℝⁿ`.
    pub fn standard(n: usize) -> Self {
        let mut u = vec![0.0; n];
        let mut w = vec![0.0; n];
        u[0] = 1.0;
        w[1] = 1.0;
        Self { u, w }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Signed angle of `x` in `(−π, π]`, measured from `u` towards `w`.
    pub fn angle_of(&self, x: &[f64]) -> f64 {
        dot(x, &self.w).atan2(dot(x, &self.u))
    }

    /// Distance of `x` from the plane.
    pub fn offset(&self, x: &[f64]) -> f64 {
        let a = dot(x, &self.u);
        let b = dot(x, &self.w);
        let r: Vec<f64> = x
            .iter()
            .zip(self.u.iter().zip(&self.w))
            .map(|(xi, (ui, wi))| xi - a * ui - b * wi)
            .collect();
        norm(&r)
    }

    pub fn point(&self, rho: f64, angle: f64) -> Vec<f64> {
        let (s, c) = angle.sin_cos();
        self.u
            .iter()
            .zip(&self.w)
            .map(|(ui, wi)| rho * (c * ui + s * wi))
            .collect()
    }

    pub fn mirrored(&self) -> Self {
        Self {
            u: self.u.clone(),
            w: self.w.iter().map(|x| -x).collect(),
        }
    }
}

/// Map a point of a totally geodesic 2-plane into the unfolded sector.
pub fn unfold(p: &PolarPoint, plane: &Plane2, alpha: OpeningAngle) -> Result<WedgePoint> {
    if p.rho == 0.0 {
        return Ok(WedgePoint { rho: 0.0, phi: 0.0 });
    }
    let x = p.to_cartesian();
    if plane.offset(&x) > 1e-9 * p.rho.max(1.0) {
        return Err(GeoError::Degenerate("point does not lie in the unfolding plane".into()));
    }
    Ok(WedgePoint::new(p.rho, alpha.sin() * plane.angle_of(&x), alpha))
}

/// Inverse of [`unfold`] on the fundamental domain.
pub fn fold(w: &WedgePoint, plane: &Plane2, alpha: OpeningAngle) -> PolarPoint {
    if w.rho == 0.0 {
        return PolarPoint {
            rho: 0.0,
            theta: plane.u.clone(),
        };
    }
    let theta = plane.point(1.0, w.phi / alpha.sin());
    PolarPoint { rho: w.rho, theta }
}

/// Length of the minimizing segment between two points on the same sphere `|x| = ρ`.
pub fn minimizing_length(p: &PolarPoint, q: &PolarPoint, alpha: OpeningAngle) -> Result<f64> {
    if p.rho == 0.0 || q.rho == 0.0 {
        return Err(GeoError::Degenerate("minimizing_length needs ρ > 0".into()));
    }
    if (p.rho - q.rho).abs() > 1e-12 * p.rho.max(q.rho) {
        return Err(GeoError::Degenerate(format!(
            "points must share a radius, got {} and {}",
            p.rho, q.rho
        )));
    }
    let angle = angle_between(&p.theta, &q.theta);
    Ok(2.0 * p.rho * (0.5 * angle * alpha.sin()).sin())
}

/// A straight chord of the unfolded covering, folded back into a 2-plane.
///
/// The chord starts at `rho0 · plane.u` (wedge angle 0) and ends at radius
/// `rho1` after sweeping the wedge angle `phi1`, `|phi1| < π`. Chart angles are
/// wedge angles divided by `sin α`, so a chord with `|phi1| > π sin α` winds
/// around the apex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeChord {
    pub plane: Plane2,
    pub alpha: OpeningAngle,
    pub rho0: f64,
    pub rho1: f64,
    pub phi1: f64,
}

impl ConeChord {
    pub fn new(plane: Plane2, alpha: OpeningAngle, rho0: f64, rho1: f64, phi1: f64) -> Result<Self> {
        if !(phi1.abs() < PI) {
            return Err(GeoError::Degenerate(format!(
                "subtended wedge angle {phi1} does not define a chord avoiding the apex"
            )));
        }
        if !(rho0 > 0.0 && rho1 > 0.0) {
            return Err(GeoError::Degenerate("chord endpoints must avoid the apex".into()));
        }
        Ok(Self {
            plane,
            alpha,
            rho0,
            rho1,
            phi1,
        })
    }

    fn start_w(&self) -> [f64; 2] {
        [self.rho0, 0.0]
    }

    fn end_w(&self) -> [f64; 2] {
        [self.rho1 * self.phi1.cos(), self.rho1 * self.phi1.sin()]
    }

    /// Point of the straight chord in the unfolded covering.
    pub fn wedge_point(&self, t: f64) -> [f64; 2] {
        let a = self.start_w();
        let b = self.end_w();
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Unwrapped wedge angle at parameter `t` (monotone since the chord avoids the apex).
    pub fn wedge_angle(&self, t: f64) -> f64 {
        let w = self.wedge_point(t);
        w[1].atan2(w[0])
    }

    pub fn length(&self) -> f64 {
        let a = self.start_w();
        let b = self.end_w();
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Chart position at `t ∈ [0, 1]`, constant metric speed.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if t == 0.0 {
            return self.plane.point(self.rho0, 0.0);
        }
        let w = self.wedge_point(t);
        let rho = (w[0] * w[0] + w[1] * w[1]).sqrt();
        self.plane.point(rho, w[1].atan2(w[0]) / self.alpha.sin())
    }

    /// Chart velocity at `t`, reconstructed from the wedge velocity.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let a = self.start_w();
        let b = self.end_w();
        let dw = [b[0] - a[0], b[1] - a[1]];
        let w = self.wedge_point(t);
        let phi = w[1].atan2(w[0]);
        let (sp, cp) = phi.sin_cos();
        // wedge radial and angular (ρ dφ) components
        let v_rad = dw[0] * cp + dw[1] * sp;
        let v_ang = -dw[0] * sp + dw[1] * cp;
        let theta = phi / self.alpha.sin();
        let radial = self.plane.point(1.0, theta);
        let tangential = self.plane.point(1.0, theta + PI / 2.0);
        radial
            .iter()
            .zip(&tangential)
            .map(|(r, tg)| v_rad * r + (v_ang / self.alpha.sin()) * tg)
            .collect()
    }

    /// Closest approach of the chord to the apex (a cone distance equal to the chart norm).
    pub fn apex_distance(&self) -> f64 {
        let a = self.start_w();
        let b = self.end_w();
        let d = [b[0] - a[0], b[1] - a[1]];
        let dd = d[0] * d[0] + d[1] * d[1];
        let t = if dd == 0.0 {
            0.0
        } else {
            (-(a[0] * d[0] + a[1] * d[1]) / dd).clamp(0.0, 1.0)
        };
        let p = [a[0] + t * d[0], a[1] + t * d[1]];
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    /// Constant-speed sampling with `segments` segments.
    pub fn sample(&self, segments: usize) -> Vec<Vec<f64>> {
        (0..=segments).map(|i| self.eval(i as f64 / segments as f64)).collect()
    }
}

/// Every chord of the unfolded covering joining `rho0 · u` to the point at
/// radius `rho1` and chart angle `chart_angle` in `plane`.
pub fn chords_between(plane: &Plane2, alpha: OpeningAngle, rho0: f64, rho1: f64, chart_angle: f64) -> Vec<ConeChord> {
    let s = alpha.sin();
    let copies = (1.0 / s).ceil() as i64 + 1;
    let base = s * chart_angle;
    (-copies..=copies)
        .filter_map(|m| {
            let phi = base + m as f64 * alpha.wedge_angle();
            ConeChord::new(plane.clone(), alpha, rho0, rho1, phi).ok()
        })
        .collect()
}

/// One geodesic segment between the antipodal points `ρa` and `−ρa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeGeodesicDescriptor {
    pub p: PolarPoint,
    pub q: PolarPoint,
    /// Unit vector orthogonal to `p` fixing the half-plane the chord starts into.
    pub xi: Vec<f64>,
    pub winding: usize,
    pub sign: i8,
    pub length: f64,
    /// Wedge angle subtended by the chord, `(2k+1)π sin α`.
    pub subtended_angle: f64,
    /// Euclidean chart angle between `−p` and the initial velocity.
    pub departure_angle: f64,
    pub alpha: OpeningAngle,
}

impl ConeGeodesicDescriptor {
    pub fn chord(&self) -> ConeChord {
        let plane = Plane2 {
            u: self.p.theta.clone(),
            w: self.xi.clone(),
        };
        ConeChord {
            plane,
            alpha: self.alpha,
            rho0: self.p.rho,
            rho1: self.q.rho,
            phi1: self.sign as f64 * self.subtended_angle,
        }
    }

    /// The same geodesic class in another half-plane (`n ≥ 3`).
    pub fn with_xi(&self, xi: &[f64]) -> Result<Self> {
        check_orthogonal(&self.p.theta, xi)?;
        let mut d = self.clone();
        d.xi = xi.to_vec();
        Ok(d)
    }
}

fn check_orthogonal(a: &[f64], xi: &[f64]) -> Result<()> {
    if a.len() != xi.len() {
        return Err(GeoError::Degenerate("ξ has the wrong dimension".into()));
    }
    if (norm(xi) - 1.0).abs() > UNIT_TOL || dot(a, xi).abs() > UNIT_TOL {
        return Err(GeoError::Degenerate("ξ must be a unit vector orthogonal to p".into()));
    }
    Ok(())
}

fn chart_departure_angle(chord: &ConeChord) -> f64 {
    let v = chord.velocity(0.0);
    let minus_p: Vec<f64> = chord.plane.u.iter().map(|x| -x).collect();
    angle_between(&minus_p, &v)
}

/// All geodesic segments between `ρe₁` and `−ρe₁` on the cone `C_α^n`.
///
/// In the unfolded covering the copies of `q` sit at wedge angles
/// `(2m+1)π sin α`; the chord to copy `m` exists when that angle is below `π`.
/// Winding `k ≥ 0` collects copies `m = k` (sign `+`) and `m = −k−1` (sign `−`).
/// For `n ≥ 3` the chords live in the half-plane towards `e₂`; every other
/// half-plane gives the same class via [`ConeGeodesicDescriptor::with_xi`].
pub fn enumerate_antipodal_geodesics(rho: f64, alpha: OpeningAngle, n: usize) -> Result<Vec<ConeGeodesicDescriptor>> {
    if !(rho > 0.0) {
        return Err(GeoError::Degenerate("enumeration needs ρ > 0".into()));
    }
    if n < 2 {
        return Err(GeoError::Config("dimension must be ≥ 2".into()));
    }
    let plane = Plane2::standard(n);
    let p = PolarPoint::new(rho, plane.u.clone())?;
    let q = PolarPoint::new(rho, plane.u.iter().map(|x| -x).collect())?;
    let s = alpha.sin();
    let copies = (1.0 / s).ceil() as i64 + 1;
    let mut out = Vec::new();
    for m in -copies..=copies {
        let phi = (2 * m + 1) as f64 * PI * s;
        // a chord subtending π (up to rounding) runs through the apex
        if phi.abs() >= PI * (1.0 - 1e-12) {
            continue;
        }
        let (winding, sign) = if m >= 0 {
            (m as usize, 1i8)
        } else {
            ((-m - 1) as usize, -1i8)
        };
        let chord = ConeChord::new(plane.clone(), alpha, rho, rho, phi)?;
        out.push(ConeGeodesicDescriptor {
            p: p.clone(),
            q: q.clone(),
            xi: plane.w.clone(),
            winding,
            sign,
            length: chord.length(),
            subtended_angle: phi.abs(),
            departure_angle: chart_departure_angle(&chord),
            alpha,
        });
    }
    out.sort_by(|a, b| a.winding.cmp(&b.winding).then(b.sign.cmp(&a.sign)));
    Ok(out)
}

/// Number of winding classes `k ≥ 0` with `(2k+1) sin α < 1`.
pub fn admissible_winding_count(alpha: OpeningAngle) -> usize {
    let s = alpha.sin();
    (0..).take_while(|&k| ((2 * k + 1) as f64 * s) < 1.0 - 1e-12).count()
}

/// Constant-speed position on the geodesic described by `d`.
pub fn eval_cone_geodesic(d: &ConeGeodesicDescriptor, t: f64) -> Vec<f64> {
    if t == 1.0 {
        return d.q.to_cartesian();
    }
    d.chord().eval(t)
}

/// The minimizing segment `L_ξ` from `ρa` to `−ρa` through the half-plane
/// `span{a} ⊕ ℝ₊ξ`, sampled at constant speed with `segments` segments.
pub fn minimizing_family(
    rho: f64,
    a: &[f64],
    xi: &[f64],
    alpha: OpeningAngle,
    segments: usize,
) -> Result<DiscreteCurve> {
    if !(rho > 0.0) {
        return Err(GeoError::Degenerate("L_ξ needs ρ > 0".into()));
    }
    if (norm(a) - 1.0).abs() > UNIT_TOL {
        return Err(GeoError::Degenerate("a must be a unit vector".into()));
    }
    check_orthogonal(a, xi)?;
    let chord = ConeChord {
        plane: Plane2 {
            u: a.to_vec(),
            w: xi.to_vec(),
        },
        alpha,
        rho0: rho,
        rho1: rho,
        phi1: PI * alpha.sin(),
    };
    let mut pts = chord.sample(segments);
    pts[segments] = a.iter().map(|x| -rho * x).collect();
    DiscreteCurve::from_points(&pts)
}

/// Limit angle between the two ends of any geodesic line of the cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitAngle {
    /// The integer `K` in `(1/(2 sin α) − ½, 1/(2 sin α) + ½]`.
    pub k: i64,
    /// `|2πK sin α − π| / sin α`, in `[0, π]`.
    pub angle: f64,
}

pub fn limit_angle(alpha: OpeningAngle) -> LimitAngle {
    let s = alpha.sin();
    let k = (0.5 / s + 0.5).floor() as i64;
    let angle = (2.0 * PI * k as f64 * s - PI).abs() / s;
    LimitAngle { k, angle }
}

/// A complete geodesic line of the cone: the straight line of the unfolded
/// covering at distance `closest` from the apex, folded into `plane`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeLine {
    pub plane: Plane2,
    pub alpha: OpeningAngle,
    pub closest: f64,
    /// Wedge angle of the closest point.
    pub psi0: f64,
}

impl ConeLine {
    /// Position at arclength `t ∈ ℝ` (closest point at `t = 0`).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let rho = (self.closest * self.closest + t * t).sqrt();
        let phi = self.psi0 + t.atan2(self.closest);
        self.plane.point(rho, phi / self.alpha.sin())
    }
}

/// Outcome of testing the departure-angle inequality on one chord.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleCheck {
    pub holds: bool,
    /// `∠(γ̇(1), −b)`.
    pub arrival_angle: f64,
    /// `∠(a, b)`.
    pub endpoint_angle: f64,
}

/// `∠(γ̇(1), −b)` against `∠(a, b)` for a chord from the unit vector `a`
/// (radius 1) to `ηb`, without checking that the chord avoids `B(o, η)`.
pub fn departure_angle_inequality(chord: &ConeChord, eta: f64) -> Result<AngleCheck> {
    if (chord.rho0 - 1.0).abs() > 1e-12 || (chord.rho1 - eta).abs() > 1e-12 * eta.max(1.0) {
        return Err(GeoError::Degenerate("chord must join a (|a|=1) to ηb".into()));
    }
    let a = chord.plane.u.clone();
    let b = normalized(&chord.eval(1.0)).expect("η > 0");
    let endpoint_angle = angle_between(&a, &b);
    let minus_b: Vec<f64> = b.iter().map(|x| -x).collect();
    let arrival_angle = angle_between(&chord.velocity(1.0), &minus_b);
    Ok(AngleCheck {
        holds: arrival_angle >= endpoint_angle - 1e-9,
        arrival_angle,
        endpoint_angle,
    })
}

/// [`departure_angle_inequality`] for chords that stay outside the open ball
/// `B(o, η)`; chords dipping into it give [`GeoError::EntersBall`].
pub fn departure_angle_inequality_check(chord: &ConeChord, eta: f64) -> Result<AngleCheck> {
    let check = departure_angle_inequality(chord, eta)?;
    let closest = chord.apex_distance();
    if closest < eta * (1.0 - 1e-12) {
        return Err(GeoError::EntersBall { radius: eta, closest });
    }
    Ok(check)
}
