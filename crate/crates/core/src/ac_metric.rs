//! Asymptotically conical metrics `g = g_cone + A` on `ℝⁿ`.
//!
//! The cone part in Cartesian chart coordinates is
//! `sin²α δ_ij + cos²α x_i x_j / (|x|² + δ²)`, exact at `δ = 0` and smooth at
//! the origin for `δ > 0`. Perturbations are fixed closed forms:
//!
//! * `rotational_cap` (transition radius `R`, exponent `m`): the radial
//!   `cos²α` factor is multiplied by `σ(|x|/R)²`, `σ(s) = 1 − (1 − s²)^m` for
//!   `s < 1` and `1` beyond. This is the surface of revolution of a convex
//!   profile glued to the cone at `|x| = R`; it is `C^{m−1}` there and smooth
//!   at the tip.
//! * `power_bump` (amplitude `a`, rate `μ`, scale `c`): adds
//!   `a (c² + |x|²)^{−μ/2} δ_ij`.

use serde::{Deserialize, Serialize};

use crate::cone_geometry::OpeningAngle;
use crate::error::{GeoError, Result};
use crate::linalg::{self, dot, norm, spd_inverse};

/// Relative finite-difference step for metric derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

fn default_center_scale() -> f64 {
    1.0
}

fn default_profile_exponent() -> u32 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    #[default]
    None,
    RotationalCap {
        transition_radius: f64,
        #[serde(default = "default_profile_exponent")]
        profile_exponent: u32,
    },
    PowerBump {
        amplitude: f64,
        mu: f64,
        #[serde(default = "default_center_scale")]
        center_scale: f64,
    },
}

/// The model the perturbation is added to. `Euclidean` is the flat test
/// metric (the cone formula with `sin α = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConeModel {
    Cone(OpeningAngle),
    Euclidean,
}

impl ConeModel {
    fn sin2_cos2(&self) -> (f64, f64) {
        match self {
            ConeModel::Cone(a) => {
                let s = a.sin();
                (s * s, 1.0 - s * s)
            }
            ConeModel::Euclidean => (1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub n: usize,
    pub cone: ConeModel,
    pub perturbation: Perturbation,
    pub regularization_delta: f64,
}

/// JSON form of a metric:
/// `{"n":3, "alpha_sin":0.5, "perturbation":{"kind":"power_bump",...}, "regularization_delta":0.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub n: usize,
    pub alpha_sin: f64,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub regularization_delta: f64,
}

impl TryFrom<MetricConfig> for MetricSpec {
    type Error = GeoError;

    fn try_from(c: MetricConfig) -> Result<Self> {
        let spec = MetricSpec {
            n: c.n,
            cone: if c.alpha_sin == 1.0 {
                ConeModel::Euclidean
            } else {
                ConeModel::Cone(OpeningAngle::from_sin(c.alpha_sin)?)
            },
            perturbation: c.perturbation,
            regularization_delta: c.regularization_delta,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<&MetricSpec> for MetricConfig {
    fn from(s: &MetricSpec) -> Self {
        MetricConfig {
            n: s.n,
            alpha_sin: match s.cone {
                ConeModel::Cone(a) => a.sin(),
                ConeModel::Euclidean => 1.0,
            },
            perturbation: s.perturbation,
            regularization_delta: s.regularization_delta,
        }
    }
}

impl MetricSpec {
    pub fn cone(n: usize, alpha: OpeningAngle) -> Self {
        Self {
            n,
            cone: ConeModel::Cone(alpha),
            perturbation: Perturbation::None,
            regularization_delta: 0.0,
        }
    }

    pub fn euclidean(n: usize) -> Self {
        Self {
            n,
            cone: ConeModel::Euclidean,
            perturbation: Perturbation::None,
            regularization_delta: 0.0,
        }
    }

    /// Smooth rotational cap glued to the cone at `transition_radius`.
    pub fn rotational_cap(n: usize, alpha: OpeningAngle, transition_radius: f64) -> Self {
        Self {
            perturbation: Perturbation::RotationalCap {
                transition_radius,
                profile_exponent: 3,
            },
            ..Self::cone(n, alpha)
        }
    }

    pub fn power_bump(n: usize, alpha: OpeningAngle, amplitude: f64, mu: f64) -> Self {
        Self {
            perturbation: Perturbation::PowerBump {
                amplitude,
                mu,
                center_scale: 1.0,
            },
            ..Self::cone(n, alpha)
        }
    }

    pub fn with_regularization(mut self, delta: f64) -> Self {
        self.regularization_delta = delta;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: MetricConfig =
            serde_json::from_str(text).map_err(|e| GeoError::Config(format!("metric config: {e}")))?;
        cfg.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MetricConfig::from(self)).expect("metric config serializes")
    }

    pub fn alpha(&self) -> Option<OpeningAngle> {
        match self.cone {
            ConeModel::Cone(a) => Some(a),
            ConeModel::Euclidean => None,
        }
    }

    /// Decay rate of the perturbation: `μ` for the bump, `∞` for compact
    /// support (and for the unperturbed model).
    pub fn decay_rate(&self) -> f64 {
        match self.perturbation {
            Perturbation::PowerBump { mu, .. } => mu,
            _ => f64::INFINITY,
        }
    }

    /// Whether the metric is smooth at the origin.
    pub fn is_smooth_at_origin(&self) -> bool {
        self.regularization_delta > 0.0
            || matches!(self.cone, ConeModel::Euclidean)
            || matches!(self.perturbation, Perturbation::RotationalCap { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(GeoError::Config("dimension must be ≥ 2".into()));
        }
        if !(self.regularization_delta >= 0.0) || !self.regularization_delta.is_finite() {
            return Err(GeoError::Config("regularization_delta must be ≥ 0".into()));
        }
        let (sin2, _) = self.cone.sin2_cos2();
        match self.perturbation {
            Perturbation::None => {}
            Perturbation::RotationalCap {
                transition_radius,
                profile_exponent,
            } => {
                if !(transition_radius > 0.0) {
                    return Err(GeoError::Config("transition_radius must be > 0".into()));
                }
                if profile_exponent < 2 {
                    return Err(GeoError::Config("profile_exponent must be ≥ 2".into()));
                }
                if self.regularization_delta != 0.0 {
                    return Err(GeoError::Config(
                        "rotational_cap is smooth; regularization_delta must be 0".into(),
                    ));
                }
                if matches!(self.cone, ConeModel::Euclidean) {
                    return Err(GeoError::Config("rotational_cap needs sin α < 1".into()));
                }
            }
            Perturbation::PowerBump {
                amplitude,
                mu,
                center_scale,
            } => {
                if !(mu > 0.0) || !(center_scale > 0.0) || !amplitude.is_finite() {
                    return Err(GeoError::Config(
                        "power_bump needs mu > 0, center_scale > 0 and finite amplitude".into(),
                    ));
                }
                if amplitude < 0.0 && -amplitude * center_scale.powf(-mu) >= sin2 {
                    return Err(GeoError::Config(
                        "power_bump amplitude makes the metric indefinite near the origin".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Write `g_ij(x)` (row-major) into `out`.
    pub fn metric_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        let (sin2, cos2) = self.cone.sin2_cos2();
        let r2 = dot(x, x);
        // coefficient multiplying x_i x_j
        let radial = match self.perturbation {
            Perturbation::RotationalCap {
                transition_radius,
                profile_exponent,
            } => {
                let s = r2.sqrt() / transition_radius;
                if s >= 1.0 {
                    cos2 / r2
                } else {
                    let q = cap_profile_over_s(s, profile_exponent) / transition_radius;
                    cos2 * q * q
                }
            }
            _ => {
                if cos2 == 0.0 {
                    0.0
                } else {
                    let denom = r2 + self.regularization_delta * self.regularization_delta;
                    if denom == 0.0 {
                        return Err(GeoError::Singular { point: x.to_vec() });
                    }
                    cos2 / denom
                }
            }
        };
        let iso = sin2
            + match self.perturbation {
                Perturbation::PowerBump {
                    amplitude,
                    mu,
                    center_scale,
                } => amplitude * (center_scale * center_scale + r2).powf(-0.5 * mu),
                _ => 0.0,
            };
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = radial * x[i] * x[j];
            }
            out[i * n + i] += iso;
        }
        Ok(())
    }

    /// `g(x)` together with central-difference derivatives
    /// `dg[l*n*n + i*n + j] = ∂_l g_ij`, step `h_rel · max(1, |x|)`.
    pub fn metric_and_derivatives(&self, x: &[f64], h_rel: f64, g: &mut [f64], dg: &mut [f64]) -> Result<()> {
        let n = self.n;
        let nn = n * n;
        self.metric_into(x, g)?;
        let h = h_rel * norm(x).max(1.0);
        let mut xp = [0.0f64; 16];
        let mut gp = [0.0f64; 256];
        let mut gm = [0.0f64; 256];
        if n > 16 {
            return Err(GeoError::Config("dimension above 16 is not supported".into()));
        }
        let xp = &mut xp[..n];
        xp.copy_from_slice(x);
        for l in 0..n {
            xp[l] = x[l] + h;
            self.metric_into(xp, &mut gp[..nn])?;
            xp[l] = x[l] - h;
            self.metric_into(xp, &mut gm[..nn])?;
            xp[l] = x[l];
            for k in 0..nn {
                dg[l * nn + k] = (gp[k] - gm[k]) / (2.0 * h);
            }
        }
        Ok(())
    }
}

/// `σ(s)/s` for the cap profile `σ(s) = 1 − (1 − s²)^m`, accurate near `s = 0`.
fn cap_profile_over_s(s: f64, m: u32) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let sigma = -(m as f64 * (-s * s).ln_1p()).exp_m1();
    sigma / s
}

/// Symmetric matrix of metric components at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue {
    pub n: usize,
    pub g: Vec<f64>,
}

impl MetricValue {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    pub fn quad(&self, v: &[f64]) -> f64 {
        linalg::quad_form(&self.g, v)
    }

    pub fn norm_of(&self, v: &[f64]) -> f64 {
        self.quad(v).max(0.0).sqrt()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.g);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

pub fn cone_metric_at(x: &[f64], alpha: OpeningAngle, regularization_delta: f64) -> Result<MetricValue> {
    MetricSpec::cone(x.len(), alpha)
        .with_regularization(regularization_delta)
        .metric_at(x)
}

impl MetricSpec {
    pub fn metric_at(&self, x: &[f64]) -> Result<MetricValue> {
        if x.len() != self.n {
            return Err(GeoError::Degenerate(format!(
                "point has dimension {}, metric has {}",
                x.len(),
                self.n
            )));
        }
        let mut g = vec![0.0; self.n * self.n];
        self.metric_into(x, &mut g)?;
        Ok(MetricValue { n: self.n, g })
    }

    /// Components of `A = g − g_cone` against the exact (unregularized) cone.
    /// The flat model has no cone part and reports zero.
    pub fn perturbation_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.n * self.n];
        self.metric_into(x, &mut g)?;
        match self.cone {
            ConeModel::Euclidean => Ok(vec![0.0; self.n * self.n]),
            ConeModel::Cone(alpha) => {
                let mut c = vec![0.0; self.n * self.n];
                MetricSpec::cone(self.n, alpha).metric_into(x, &mut c)?;
                Ok(g.iter().zip(&c).map(|(a, b)| a - b).collect())
            }
        }
    }

    fn max_perturbation(&self, x: &[f64]) -> f64 {
        self.perturbation_at(x)
            .map(|a| a.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(f64::INFINITY)
    }
}

/// The rescaled metric `λ^{−2} D_λ^* g`: its components at `x` equal the
/// components of `spec` at `λx`.
pub fn rescale(spec: &MetricSpec, lambda: f64) -> Result<MetricSpec> {
    if !(lambda > 0.0) {
        return Err(GeoError::Config(format!("rescaling factor must be > 0, got {lambda}")));
    }
    let mut out = *spec;
    out.regularization_delta = spec.regularization_delta / lambda;
    out.perturbation = match spec.perturbation {
        Perturbation::None => Perturbation::None,
        Perturbation::RotationalCap {
            transition_radius,
            profile_exponent,
        } => Perturbation::RotationalCap {
            transition_radius: transition_radius / lambda,
            profile_exponent,
        },
        Perturbation::PowerBump {
            amplitude,
            mu,
            center_scale,
        } => Perturbation::PowerBump {
            amplitude: amplitude * lambda.powf(-mu),
            mu,
            center_scale: center_scale / lambda,
        },
    };
    Ok(out)
}

const R_EPS_MIN: f64 = 1e-6;
const R_EPS_MAX: f64 = 1e12;
const R_EPS_PER_DECADE: usize = 16;
const R_EPS_DIRECTIONS: usize = 64;

/// Smallest radius `R` such that `max |a_ij| ≤ eps` on the sampled region
/// outside `B(o, R)`: a log grid from `1e−6` to `1e12` with 64 directions per
/// shell, refined by bisection inside the first admissible grid cell.
pub fn r_epsilon(spec: &MetricSpec, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(GeoError::Config(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    if matches!(spec.perturbation, Perturbation::None) && spec.regularization_delta == 0.0 {
        return Ok(0.0);
    }
    if matches!(spec.cone, ConeModel::Euclidean) {
        return Ok(0.0);
    }
    let dirs = linalg::sphere_directions(spec.n, R_EPS_DIRECTIONS);
    let shell_max = |r: f64| -> f64 {
        dirs.iter()
            .map(|d| {
                let x: Vec<f64> = d.iter().map(|c| r * c).collect();
                spec.max_perturbation(&x)
            })
            .fold(0.0f64, f64::max)
    };
    let decades = (R_EPS_MAX / R_EPS_MIN).log10();
    let count = (decades * R_EPS_PER_DECADE as f64).round() as usize;
    let radii: Vec<f64> = (0..=count)
        .map(|i| R_EPS_MIN * 10f64.powf(decades * i as f64 / count as f64))
        .collect();
    let vals: Vec<f64> = radii.iter().map(|&r| shell_max(r)).collect();
    if vals[count] > eps {
        return Err(GeoError::Unbounded {
            eps,
            max_radius: R_EPS_MAX,
        });
    }
    // first index from which every sampled shell is within eps
    let mut first = count;
    while first > 0 && vals[first - 1] <= eps {
        first -= 1;
    }
    if first == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (radii[first - 1], radii[first]);
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if shell_max(mid) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    Ok(hi)
}

/// Christoffel symbols `Γ^k_ij` stored at `k*n*n + i*n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    /// `Γ^k_ij v^i v^j`.
    pub fn contract(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|k| linalg::quad_form(&self.data[k * n * n..(k + 1) * n * n], v))
            .collect()
    }
}

/// Christoffel symbols from central differences of the metric.
pub fn christoffel_at(spec: &MetricSpec, x: &[f64], h: f64) -> Result<Christoffel> {
    let n = spec.n;
    let nn = n * n;
    let mut g = vec![0.0; nn];
    let mut dg = vec![0.0; n * nn];
    spec.metric_and_derivatives(x, h, &mut g, &mut dg)?;
    let ginv = spd_inverse(&g, n).map_err(|_| GeoError::Singular { point: x.to_vec() })?;
    let d = |l: usize, i: usize, j: usize| dg[l * nn + i * n + j];
    let mut data = vec![0.0; n * nn];
    for i in 0..n {
        for j in i..n {
            for k in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += ginv[k * n + l] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                }
                data[k * nn + i * n + j] = 0.5 * acc;
                data[k * nn + j * n + i] = 0.5 * acc;
            }
        }
    }
    Ok(Christoffel { n, data })
}

// 5-point Gauss–Legendre on [-1, 1]
const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

fn gauss_legendre<F>(mut f: F, a: f64, b: f64, panels: usize, cluster_at_a: bool) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let edge = |k: usize| {
        let u = k as f64 / panels as f64;
        if cluster_at_a {
            a + (b - a) * u * u
        } else {
            a + (b - a) * u
        }
    };
    let mut acc = 0.0;
    for k in 0..panels {
        let (lo, hi) = (edge(k), edge(k + 1));
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (x, w) in GL5_NODES.iter().zip(&GL5_WEIGHTS) {
            acc += w * half * f(mid + half * x)?;
        }
    }
    Ok(acc)
}

/// Length of the radial segment from `o` to `R·dir`.
pub fn radial_distance(spec: &MetricSpec, dir: &[f64], radius: f64) -> Result<f64> {
    let u = linalg::normalized(dir).ok_or_else(|| GeoError::Degenerate("zero direction".into()))?;
    let mut g = vec![0.0; spec.n * spec.n];
    let mut x = vec![0.0; spec.n];
    gauss_legendre(
        |r| {
            for (xi, ui) in x.iter_mut().zip(&u) {
                *xi = r * ui;
            }
            spec.metric_into(&x, &mut g)?;
            Ok(linalg::quad_form(&g, &u).sqrt())
        },
        0.0,
        radius,
        512,
        true,
    )
}

/// Empirical metric deviation at scale `rho`: `max_θ |d_radial(o, ρθ)/ρ − 1|`
/// over 16 quasi-uniform directions.
pub fn epsilon_emp(spec: &MetricSpec, rho: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for d in linalg::sphere_directions(spec.n, 16) {
        let r = radial_distance(spec, &d, rho)?;
        worst = worst.max((r / rho - 1.0).abs());
    }
    Ok(worst)
}

/// Length of a polyline under `spec`, each segment integrated with 5-point
/// Gauss–Legendre on `sub` panels.
pub fn path_length(spec: &MetricSpec, pts: &[Vec<f64>], sub: usize) -> Result<f64> {
    let n = spec.n;
    let mut g = vec![0.0; n * n];
    let mut x = vec![0.0; n];
    let mut total = 0.0;
    for w in pts.windows(2) {
        let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
        for k in 0..sub {
            let (lo, hi) = (k as f64 / sub as f64, (k + 1) as f64 / sub as f64);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (node, wt) in GL5_NODES.iter().zip(&GL5_WEIGHTS) {
                let t = mid + half * node;
                for i in 0..n {
                    x[i] = w[0][i] + t * d[i];
                }
                spec.metric_into(&x, &mut g)?;
                total += wt * half * linalg::quad_form(&g, &d).sqrt();
            }
        }
    }
    Ok(total)
}

/// Empirical comparison constant: `max |ℓ_g/ℓ_cone − 1| / eps` over random
/// polylines whose segments stay outside `B(o, R_eps)`.
pub fn empirical_c_star(spec: &MetricSpec, eps: f64, samples: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let alpha = spec
        .alpha()
        .ok_or_else(|| GeoError::Config("comparison constant needs a cone model".into()))?;
    let cone = MetricSpec::cone(spec.n, alpha);
    let r_eps = r_epsilon(spec, eps)?.max(1e-3);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut accepted = 0;
    while accepted < samples {
        let pts: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let r = r_eps * (1.0 + 9.0 * rng.random::<f64>());
                let v: Vec<f64> = (0..spec.n).map(|_| linalg::standard_normal(&mut rng)).collect();
                let u = linalg::normalized(&v).unwrap_or_else(|| {
                    let mut e = vec![0.0; spec.n];
                    e[0] = 1.0;
                    e
                });
                u.iter().map(|c| r * c).collect()
            })
            .collect();
        if pts.windows(2).any(|w| segment_origin_distance(&w[0], &w[1]) < r_eps) {
            continue;
        }
        accepted += 1;
        let lg = path_length(spec, &pts, 16)?;
        let lc = path_length(&cone, &pts, 16)?;
        worst = worst.max((lg / lc - 1.0).abs() / eps);
    }
    Ok(worst)
}

/// Euclidean distance from the origin to the segment `[a, b]`.
pub fn segment_origin_distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let dd = dot(&d, &d);
    let t = if dd == 0.0 {
        0.0
    } else {
        (-dot(a, &d) / dd).clamp(0.0, 1.0)
    };
    let p: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + t * y).collect();
    norm(&p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn half() -> OpeningAngle {
        OpeningAngle::from_sin(0.5).unwrap()
    }

    #[test]
    fn cone_on_axis_eigenstructure() {
        let g = cone_metric_at(&[1.0, 0.0, 0.0], half(), 0.0).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(1, 1), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(2, 2), 0.25, epsilon = 1e-15);
        assert!(matches!(
            cone_metric_at(&[0.0, 0.0, 0.0], half(), 0.0),
            Err(GeoError::Singular { .. })
        ));
        assert!(cone_metric_at(&[0.0, 0.0, 0.0], half(), 0.1).is_ok());
    }

    #[test]
    fn cone_norm_comparison() {
        let alpha = OpeningAngle::from_sin(0.3).unwrap();
        let c = 1.0 / alpha.sin();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let g = cone_metric_at(&x, alpha, 0.0).unwrap();
            let nv = norm(&v);
            let gv = g.norm_of(&v);
            assert!(gv >= nv / c - 1e-14 && gv <= c * nv + 1e-14);
            assert!(g.max_asymmetry() < 1e-14);
            assert!(g.eigenvalues()[0] > 0.0);
        }
    }

    #[test]
    fn cone_distance_to_apex_is_chart_norm() {
        let alpha = OpeningAngle::from_sin(0.4).unwrap();
        let spec = MetricSpec::cone(3, alpha);
        for x in [[1.0, 2.0, -0.5], [0.1, 0.0, 0.0], [-3.0, 4.0, 12.0]] {
            let d = radial_distance(&spec, &x, norm(&x)).unwrap();
            assert_abs_diff_eq!(d, norm(&x), epsilon = 1e-12);
        }
    }

    #[test]
    fn unperturbed_equals_cone() {
        let spec = MetricSpec::cone(2, half());
        let x = [0.3, -1.2];
        assert_eq!(spec.metric_at(&x).unwrap(), cone_metric_at(&x, half(), 0.0).unwrap());
    }

    #[test]
    fn cap_is_cone_outside_transition() {
        let spec = MetricSpec::rotational_cap(3, half(), 1.0);
        for r in [1.0, 1.5, 7.0] {
            let x = [r * 0.6, r * 0.8, 0.0];
            let g = spec.metric_at(&x).unwrap();
            let c = cone_metric_at(&x, half(), 0.0).unwrap();
            for (a, b) in g.g.iter().zip(&c.g) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
        // tip is isotropic sin²α
        let g = spec.metric_at(&[0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(0, 1), 0.0, epsilon = 1e-15);
        // and continuous across the transition radius
        let a = spec.metric_at(&[1.0 - 1e-9, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(a.get(0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bump_decay_bound() {
        let spec = MetricSpec::power_bump(3, half(), 0.1, 1.0);
        let a = spec.perturbation_at(&[100.0, 0.0, 0.0]).unwrap();
        assert!(a.iter().all(|v| v.abs() <= 0.001 + 1e-12));
        for r in [10.0, 31.6, 100.0, 316.0, 1000.0] {
            let a = spec.perturbation_at(&[0.0, r, 0.0]).unwrap();
            let m = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(m * r <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn rescale_pulls_back() {
        let cone = MetricSpec::cone(2, half());
        assert_eq!(rescale(&cone, 17.0).unwrap(), cone);
        let bump = MetricSpec::power_bump(2, half(), 0.3, 1.5);
        let r = rescale(&bump, 10.0).unwrap();
        let x = [0.7, -0.2];
        let big: Vec<f64> = x.iter().map(|v| 10.0 * v).collect();
        let a = r.perturbation_at(&x).unwrap();
        let b = bump.perturbation_at(&big).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-14);
        }
        assert!(rescale(&bump, 0.0).is_err());
    }

    #[test]
    fn rescaled_metric_approaches_cone() {
        let bump = MetricSpec::power_bump(2, half(), 0.5, 1.0);
        let mut last = f64::INFINITY;
        for lambda in [1.0, 10.0, 100.0] {
            let r = rescale(&bump, lambda).unwrap();
            let mut worst = 0.0f64;
            for k in 0..100 {
                let rad = 1.0 + (k % 10) as f64 / 9.0;
                let ang = 2.0 * PI * k as f64 / 100.0;
                let a = r.perturbation_at(&[rad * ang.cos(), rad * ang.sin()]).unwrap();
                worst = worst.max(a.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            assert!(worst < last);
            last = worst;
        }
    }

    #[test]
    fn r_epsilon_values() {
        assert_eq!(r_epsilon(&MetricSpec::cone(2, half()), 0.01).unwrap(), 0.0);
        let bump = MetricSpec::power_bump(2, half(), 1.0, 1.0);
        let r = r_epsilon(&bump, 0.01).unwrap();
        assert!((r - 100.0).abs() / 100.0 < 1e-3, "{r}");
        let slow = MetricSpec::power_bump(2, half(), 1.0, 0.01);
        assert!(matches!(r_epsilon(&slow, 0.1), Err(GeoError::Unbounded { .. })));
        let cap = MetricSpec::rotational_cap(2, half(), 2.0);
        let r = r_epsilon(&cap, 0.01).unwrap();
        assert!(r > 1.0 && r <= 2.0);
        assert!(r_epsilon(&cap, 0.7).is_err());
    }

    #[test]
    fn christoffel_flat_and_cone() {
        let flat = MetricSpec::euclidean(3);
        let c = christoffel_at(&flat, &[0.3, 1.0, -2.0], DEFAULT_FD_STEP).unwrap();
        assert!(c.data.iter().all(|v| v.abs() < 1e-8));

        let alpha = OpeningAngle::from_sin(0.4).unwrap();
        let cone = MetricSpec::cone(3, alpha);
        for x in [[1.0, 0.0, 0.0], [0.4, -1.1, 0.7]] {
            let num = christoffel_at(&cone, &x, DEFAULT_FD_STEP).unwrap();
            let ana = analytic_cone_christoffel(&x, alpha.sin());
            for (a, b) in num.data.iter().zip(&ana) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn christoffel_second_order_stencil() {
        let alpha = OpeningAngle::from_sin(0.4).unwrap();
        let cone = MetricSpec::cone(2, alpha);
        let x = [0.8, 0.5];
        let ana = analytic_cone_christoffel(&x, alpha.sin());
        let err = |h: f64| {
            let num = christoffel_at(&cone, &x, h).unwrap();
            num.data
                .iter()
                .zip(&ana)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(2e-2) / err(1e-2);
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    /// Γ from exact derivatives of `s²δ + c² x xᵀ/|x|²`.
    fn analytic_cone_christoffel(x: &[f64], s: f64) -> Vec<f64> {
        let n = x.len();
        let c2 = 1.0 - s * s;
        let r2 = dot(x, x);
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let dg = |l: usize, i: usize, j: usize| {
            c2 * ((delta(i, l) * x[j] + x[i] * delta(j, l)) / r2 - 2.0 * x[i] * x[j] * x[l] / (r2 * r2))
        };
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = s * s * delta(i, j) + c2 * x[i] * x[j] / r2;
            }
        }
        let gi = spd_inverse(&g, n).unwrap();
        let mut out = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += gi[k * n + l] * (dg(i, j, l) + dg(j, i, l) - dg(l, i, j));
                    }
                    out[(k * n + i) * n + j] = 0.5 * acc;
                }
            }
        }
        out
    }

    #[test]
    fn length_comparison_outside_r_eps() {
        let alpha = half();
        let spec = MetricSpec::power_bump(2, alpha, 1.0, 1.0);
        let eps = 0.01;
        let c = 1.0 / (alpha.sin() * alpha.sin());
        let c_emp = empirical_c_star(&spec, eps, 50, 3).unwrap();
        assert!(c_emp > 0.0 && c_emp <= c, "{c_emp}");
    }

    #[test]
    fn bump_distance_ratio_tends_to_one() {
        let spec = MetricSpec::power_bump(2, half(), 0.1, 1.0);
        let d = radial_distance(&spec, &[1.0, 0.0], 1e3).unwrap();
        assert!((d / 1e3 - 1.0).abs() <= 0.05);
        assert!(epsilon_emp(&spec, 1e3).unwrap() <= 0.05);
    }

    #[test]
    fn json_config_roundtrip() {
        let text = r#"{"n":3, "alpha_sin":0.5, "perturbation":{"kind":"power_bump","amplitude":0.1,"mu":1.0}, "regularization_delta":0.0}"#;
        let spec = MetricSpec::from_json(text).unwrap();
        assert_eq!(spec.n, 3);
        assert_eq!(
            spec.perturbation,
            Perturbation::PowerBump {
                amplitude: 0.1,
                mu: 1.0,
                center_scale: 1.0
            }
        );
        assert_eq!(MetricSpec::from_json(&spec.to_json()).unwrap(), spec);
        let cap = r#"{"n":2,"alpha_sin":0.5,"perturbation":{"kind":"rotational_cap","transition_radius":1.0}}"#;
        assert!(matches!(
            MetricSpec::from_json(cap).unwrap().perturbation,
            Perturbation::RotationalCap {
                profile_exponent: 3,
                ..
            }
        ));
        assert!(MetricSpec::from_json(r#"{"n":1,"alpha_sin":0.5}"#).is_err());
        assert!(MetricSpec::from_json(r#"{"n":2,"alpha_sin":1.5}"#).is_err());
    }
}
