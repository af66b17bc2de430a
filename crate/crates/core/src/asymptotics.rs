//! Diagnostics for long geodesic segments: blow-downs, crossings of spheres
//! `|x| = r`, non-twisting deviations and end directions.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cone_geometry::OpeningAngle;
use crate::discrete_curve::DiscreteCurve;
use crate::error::{GeoError, Result};
use crate::linalg::{angle_between, dist, dot, norm};

/// Default half-width of the band around `π/2` treated as tangential.
pub const DEFAULT_TOL_BAND: f64 = 1e-6;

/// `x ↦ x/λ` on every vertex. Paired with
/// [`rescale`](crate::ac_metric::rescale) it scales the energy by `λ^{−2}`.
pub fn blow_down(curve: &DiscreteCurve, lambda: f64) -> Result<DiscreteCurve> {
    if !(lambda > 0.0) {
        return Err(GeoError::Config(format!("blow-down factor must be > 0, got {lambda}")));
    }
    if lambda == 1.0 {
        return Ok(curve.clone());
    }
    Ok(curve.map_vertices(|x| x.iter().map(|v| v / lambda).collect()))
}

pub fn closest_approach(curve: &DiscreteCurve) -> f64 {
    curve.closest_approach().0
}

/// Two readings of the distance from `o` to the minimizer `L_ξ` between
/// antipodal points at radius `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerApexDistance {
    /// Chart-Euclidean distance `ρ cos(π sin α/2)`.
    pub chart: f64,
    /// `½ρπ sin α`, the arc length of the wedge sector's half-arc.
    pub half_arc: f64,
}

pub fn minimizer_apex_distance(rho: f64, alpha: OpeningAngle) -> MinimizerApexDistance {
    MinimizerApexDistance {
        chart: rho * (0.5 * PI * alpha.sin()).cos(),
        half_arc: 0.5 * rho * PI * alpha.sin(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingType {
    A,
    B,
    C,
    D,
    E,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingClass {
    Minus,
    Plus,
    Circ,
}

impl CrossingType {
    pub fn class(self) -> CrossingClass {
        match self {
            CrossingType::A | CrossingType::D => CrossingClass::Minus,
            CrossingType::B | CrossingType::E => CrossingClass::Plus,
            CrossingType::C | CrossingType::F => CrossingClass::Circ,
        }
    }
}

/// One parameter (or plateau) where the curve meets `|x| = r`. Parameters
/// are the polyline parameter `t ∈ [0, 1]`, vertex `i` at `t = i/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub t: f64,
    pub r: f64,
    /// `∠(Γ(t), Γ̇(t))`.
    pub angle: f64,
    pub kind: CrossingType,
    /// `[t⁻, t⁺]` for plateau records.
    pub plateau: Option<(f64, f64)>,
    /// The angle lies within the tangency band, so the type rests on the
    /// sides rather than on the angle.
    pub ambiguous: bool,
}

impl CrossingRecord {
    pub fn class(&self) -> CrossingClass {
        self.kind.class()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrossingSets {
    pub minus: Vec<CrossingRecord>,
    pub plus: Vec<CrossingRecord>,
    pub circ: Vec<CrossingRecord>,
}

impl CrossingSets {
    pub fn ambiguous_count(&self) -> usize {
        self.all().filter(|c| c.ambiguous).count()
    }

    pub fn all(&self) -> impl Iterator<Item = &CrossingRecord> {
        self.minus.iter().chain(&self.plus).chain(&self.circ)
    }

    /// A set is connected when it is a single point or a single plateau.
    pub fn minus_connected(&self) -> bool {
        self.minus.len() <= 1
    }

    pub fn plus_connected(&self) -> bool {
        self.plus.len() <= 1
    }
}

fn point_at(curve: &DiscreteCurve, t: f64) -> Vec<f64> {
    let n = curve.segments();
    let s = (t * n as f64).clamp(0.0, n as f64);
    let i = (s.floor() as usize).min(n - 1);
    let u = s - i as f64;
    let a = curve.vertex(i);
    let b = curve.vertex(i + 1);
    a.iter().zip(b).map(|(x, y)| x + u * (y - x)).collect()
}

fn seg_dir(curve: &DiscreteCurve, i: usize) -> Vec<f64> {
    let a = curve.vertex(i);
    let b = curve.vertex(i + 1);
    b.iter().zip(a).map(|(x, y)| x - y).collect()
}

/// Tangent at vertex `i`: central difference inside, one-sided at the ends.
fn vertex_dir(curve: &DiscreteCurve, i: usize) -> Vec<f64> {
    let n = curve.segments();
    let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n));
    let a = curve.vertex(lo);
    let b = curve.vertex(hi);
    b.iter().zip(a).map(|(x, y)| x - y).collect()
}

/// Raw roots of `|Γ(t)| = r` with their angles, in increasing `t`.
fn raw_crossings(curve: &DiscreteCurve, r: f64) -> Vec<(f64, f64)> {
    let n = curve.segments();
    let snap = 1e-13 * r.max(1.0);
    let f: Vec<f64> = (0..=n).map(|i| norm(curve.vertex(i)) - r).collect();
    let mut out = Vec::new();
    for i in 0..=n {
        if f[i].abs() <= snap {
            out.push((
                i as f64 / n as f64,
                angle_between(curve.vertex(i), &vertex_dir(curve, i)),
            ));
        }
        if i == n {
            break;
        }
        // |a + u d|² = r² on (0, 1), away from the vertices
        let a = curve.vertex(i);
        let d = seg_dir(curve, i);
        let qa = dot(&d, &d);
        if qa == 0.0 {
            continue;
        }
        let qb = 2.0 * dot(a, &d);
        let qc = dot(a, a) - r * r;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        // numerically stable pair
        let qq = -0.5 * (qb + qb.signum() * sq);
        let mut roots = if qq != 0.0 {
            vec![qq / qa, qc / qq]
        } else {
            vec![-qb / (2.0 * qa)]
        };
        roots.sort_by(f64::total_cmp);
        roots.dedup();
        for u in roots {
            let edge = 1e-12;
            if u > edge && u < 1.0 - edge && f[i].abs() > snap && f[i + 1].abs() > snap {
                let t = (i as f64 + u) / n as f64;
                let p: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + u * y).collect();
                out.push((t, angle_between(&p, &d)));
            }
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out
}

/// First and last parameters with `|Γ(t)| = r`.
pub fn entry_exit_times(curve: &DiscreteCurve, r: f64) -> Result<(f64, f64)> {
    let roots = raw_crossings(curve, r);
    match (roots.first(), roots.last()) {
        (Some(a), Some(b)) => Ok((a.0, b.0)),
        _ => {
            let radii: Vec<f64> = (0..=curve.segments()).map(|i| norm(curve.vertex(i))).collect();
            let (min, max) = radii
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            Err(GeoError::NoCrossing {
                radius: r,
                min: min.min(curve.closest_approach().0),
                max,
            })
        }
    }
}

/// Partition all crossings of `|x| = r` into `Δ⁻`, `Δ⁺`, `Δ°`.
///
/// Runs of at least three consecutive vertices on the sphere (within
/// `tol_band·r`) whose tangents are within `tol_band` of `π/2` form plateaus,
/// typed D/E/F by the radial monotonicity just outside the run. Isolated
/// crossings with angles outside the band are A (inbound) or B (outbound);
/// inside the band they are typed by the sides of the sphere the neighbouring
/// vertices lie on.
pub fn classify_crossings(curve: &DiscreteCurve, r: f64, tol_band: f64) -> Result<CrossingSets> {
    let n = curve.segments();
    let f: Vec<f64> = (0..=n).map(|i| norm(curve.vertex(i)) - r).collect();
    let on_sphere = |i: usize| {
        f[i].abs() <= tol_band * r
            && (angle_between(curve.vertex(i), &vertex_dir(curve, i)) - FRAC_PI_2).abs() <= tol_band
    };
    let mut plateaus: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i <= n {
        if on_sphere(i) {
            let start = i;
            while i < n && on_sphere(i + 1) {
                i += 1;
            }
            if i - start + 1 >= 3 {
                // absorb the vertices where the curve joins or leaves the sphere
                let mut a = start;
                while a > 0 && f[a - 1].abs() <= tol_band * r {
                    a -= 1;
                }
                while i < n && f[i + 1].abs() <= tol_band * r {
                    i += 1;
                }
                plateaus.push((a, i));
            }
        }
        i += 1;
    }
    let roots = raw_crossings(curve, r);
    if roots.is_empty() && plateaus.is_empty() {
        entry_exit_times(curve, r)?;
    }
    let side = |k: usize| f[k].signum();
    let mut sets = CrossingSets::default();
    let mut push = |rec: CrossingRecord| match rec.class() {
        CrossingClass::Minus => sets.minus.push(rec),
        CrossingClass::Plus => sets.plus.push(rec),
        CrossingClass::Circ => sets.circ.push(rec),
    };
    for &(a, b) in &plateaus {
        let before = if a > 0 { side(a - 1) } else { 0.0 };
        let after = if b < n { side(b + 1) } else { 0.0 };
        let kind = match (before > 0.0, after < 0.0, before < 0.0, after > 0.0) {
            (true, true, _, _) => CrossingType::D,
            (_, _, true, true) => CrossingType::E,
            _ => CrossingType::F,
        };
        let mid = (a + b) / 2;
        push(CrossingRecord {
            t: mid as f64 / n as f64,
            r,
            angle: angle_between(curve.vertex(mid), &vertex_dir(curve, mid)),
            kind,
            plateau: Some((a as f64 / n as f64, b as f64 / n as f64)),
            ambiguous: true,
        });
    }
    let in_plateau = |t: f64| {
        plateaus
            .iter()
            .any(|&(a, b)| t >= a as f64 / n as f64 - 1e-15 && t <= b as f64 / n as f64 + 1e-15)
    };
    for (t, angle) in roots {
        if in_plateau(t) {
            continue;
        }
        let ambiguous = (angle - FRAC_PI_2).abs() <= tol_band;
        let kind = if !ambiguous {
            if angle > FRAC_PI_2 {
                CrossingType::A
            } else {
                CrossingType::B
            }
        } else {
            // strict neighbours on either side of the root
            let s = t * n as f64;
            let lo = (s - 1e-9).floor().max(0.0) as usize;
            let hi = ((s + 1e-9).ceil() as usize).min(n);
            match (side(lo), side(hi)) {
                (x, y) if x > 0.0 && y < 0.0 => CrossingType::A,
                (x, y) if x < 0.0 && y > 0.0 => CrossingType::B,
                _ => CrossingType::C,
            }
        };
        push(CrossingRecord {
            t,
            r,
            angle,
            kind,
            plateau: None,
            ambiguous,
        });
    }
    for v in [&mut sets.minus, &mut sets.plus, &mut sets.circ] {
        v.sort_by(|x, y| x.t.total_cmp(&y.t));
    }
    Ok(sets)
}

/// Chart-Euclidean diameter of `Γ` over the records' parameters (plateaus
/// contribute their vertices).
pub fn crossing_diameter(curve: &DiscreteCurve, records: &[CrossingRecord]) -> f64 {
    let n = curve.segments();
    let mut pts = Vec::new();
    for rec in records {
        match rec.plateau {
            Some((a, b)) => {
                let (ia, ib) = ((a * n as f64).round() as usize, (b * n as f64).round() as usize);
                pts.extend((ia..=ib).map(|i| curve.vertex(i).to_vec()));
            }
            None => pts.push(point_at(curve, rec.t)),
        }
    }
    let mut d = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max(dist(&pts[i], &pts[j]));
        }
    }
    d
}

/// Every crossing before the closest-approach parameter is inbound and every
/// one after it outbound.
pub fn crossings_split_at_closest_approach(curve: &DiscreteCurve, sets: &CrossingSets) -> bool {
    let (_, t_min) = curve.closest_approach();
    sets.circ.is_empty() && sets.minus.iter().all(|c| c.t <= t_min) && sets.plus.iter().all(|c| c.t >= t_min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonTwistRow {
    pub rho: f64,
    pub r: f64,
    /// `|Γ(t⁻)/r − a|`.
    pub dev_minus: f64,
    /// `|Γ(t⁺)/r − a★|`.
    pub dev_plus: f64,
    /// `diam Γ(Δ⁻) / r`.
    pub diam_minus: f64,
    pub diam_plus: f64,
    pub circ_count: usize,
    pub ambiguous_count: usize,
    pub minus_connected: bool,
    pub plus_connected: bool,
    pub split_at_closest_approach: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonTwistReport {
    pub rows: Vec<NonTwistRow>,
    /// Radii in increasing order, with `sup_ρ` of each quantity per radius.
    pub radii: Vec<f64>,
    pub sup_dev_minus: Vec<f64>,
    pub sup_dev_plus: Vec<f64>,
    pub sup_diam_minus: Vec<f64>,
    pub sup_diam_plus: Vec<f64>,
    /// Each `sup` sequence is nonincreasing in `r` (absolute slack `1e−9`).
    pub deviations_nonincreasing: bool,
    pub diameters_nonincreasing: bool,
}

/// Absolute slack for the trend checks.
pub const TREND_SLACK: f64 = 1e-9;

fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + TREND_SLACK)
}

/// Tabulate non-twisting deviations for curves `Γ_ρ` joining `ρa` to `ρa★`;
/// rows exist for every `(ρ, r)` with `ρ > r`.
pub fn nontwist_report(
    curves: &[(f64, DiscreteCurve)],
    radii: &[f64],
    a: &[f64],
    a_star: &[f64],
    tol_band: f64,
) -> Result<NonTwistReport> {
    let mut radii_sorted = radii.to_vec();
    radii_sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    for &(rho, ref curve) in curves {
        for &r in &radii_sorted {
            if rho <= r {
                continue;
            }
            let (tm, tp) = entry_exit_times(curve, r)?;
            let sets = classify_crossings(curve, r, tol_band)?;
            let pm = point_at(curve, tm);
            let pp = point_at(curve, tp);
            let dm: Vec<f64> = pm.iter().zip(a).map(|(x, y)| x / r - y).collect();
            let dp: Vec<f64> = pp.iter().zip(a_star).map(|(x, y)| x / r - y).collect();
            rows.push(NonTwistRow {
                rho,
                r,
                dev_minus: norm(&dm),
                dev_plus: norm(&dp),
                diam_minus: crossing_diameter(curve, &sets.minus) / r,
                diam_plus: crossing_diameter(curve, &sets.plus) / r,
                circ_count: sets.circ.len(),
                ambiguous_count: sets.ambiguous_count(),
                minus_connected: sets.minus_connected(),
                plus_connected: sets.plus_connected(),
                split_at_closest_approach: crossings_split_at_closest_approach(curve, &sets),
            });
        }
    }
    let sup = |r: f64, f: &dyn Fn(&NonTwistRow) -> f64| rows.iter().filter(|x| x.r == r).map(f).fold(0.0f64, f64::max);
    let sup_dev_minus: Vec<f64> = radii_sorted.iter().map(|&r| sup(r, &|x| x.dev_minus)).collect();
    let sup_dev_plus: Vec<f64> = radii_sorted.iter().map(|&r| sup(r, &|x| x.dev_plus)).collect();
    let sup_diam_minus: Vec<f64> = radii_sorted.iter().map(|&r| sup(r, &|x| x.diam_minus)).collect();
    let sup_diam_plus: Vec<f64> = radii_sorted.iter().map(|&r| sup(r, &|x| x.diam_plus)).collect();
    Ok(NonTwistReport {
        deviations_nonincreasing: nonincreasing(&sup_dev_minus) && nonincreasing(&sup_dev_plus),
        diameters_nonincreasing: nonincreasing(&sup_diam_minus) && nonincreasing(&sup_diam_plus),
        rows,
        radii: radii_sorted,
        sup_dev_minus,
        sup_dev_plus,
        sup_diam_minus,
        sup_diam_plus,
    })
}

impl NonTwistReport {
    /// CSV with columns `rho,r,dev_minus,dev_plus,diam_minus,diam_plus`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,r,dev_minus,dev_plus,diam_minus,diam_plus\n");
        for row in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                row.rho, row.r, row.dev_minus, row.dev_plus, row.diam_minus, row.diam_plus
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealBoundary {
    /// Radii actually reached at both ends.
    pub radii: Vec<f64>,
    /// `Γ(t⁻_r)/r` at the start end, one per radius.
    pub start_directions: Vec<Vec<f64>>,
    /// `Γ(t⁺_r)/r` at the far end.
    pub end_directions: Vec<Vec<f64>>,
    /// Distances between successive estimates.
    pub start_deltas: Vec<f64>,
    pub end_deltas: Vec<f64>,
    /// Angle between the two last estimates.
    pub end_angle: Option<f64>,
    /// Some scheduled radii were not reached.
    pub truncated: bool,
}

/// Sample `Γ/|Γ|` where the polyline `pts` first and last meets each radius
/// of the schedule.
pub fn ideal_boundary(pts: &[Vec<f64>], radii: &[f64]) -> Result<IdealBoundary> {
    let curve = DiscreteCurve::from_points(pts)?;
    let mut out = IdealBoundary {
        radii: Vec::new(),
        start_directions: Vec::new(),
        end_directions: Vec::new(),
        start_deltas: Vec::new(),
        end_deltas: Vec::new(),
        end_angle: None,
        truncated: false,
    };
    for &r in radii {
        match entry_exit_times(&curve, r) {
            Ok((tm, tp)) => {
                let dm: Vec<f64> = point_at(&curve, tm).iter().map(|x| x / r).collect();
                let dp: Vec<f64> = point_at(&curve, tp).iter().map(|x| x / r).collect();
                if let Some(prev) = out.start_directions.last() {
                    out.start_deltas.push(dist(prev, &dm));
                }
                if let Some(prev) = out.end_directions.last() {
                    out.end_deltas.push(dist(prev, &dp));
                }
                out.radii.push(r);
                out.start_directions.push(dm);
                out.end_directions.push(dp);
            }
            Err(GeoError::NoCrossing { .. }) => out.truncated = true,
            Err(e) => return Err(e),
        }
    }
    if let (Some(a), Some(b)) = (out.start_directions.last(), out.end_directions.last()) {
        out.end_angle = Some(angle_between(a, b));
    }
    Ok(out)
}
