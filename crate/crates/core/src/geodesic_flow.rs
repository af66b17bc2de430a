//! Geodesic ODE integration, the exponential map and the properness probe.

use serde::{Deserialize, Serialize};

use crate::ac_metric::{MetricSpec, DEFAULT_FD_STEP};
use crate::cone_geometry::OpeningAngle;
use crate::error::{GeoError, Result};
use crate::exec::{self, Execution};
use crate::linalg::{self, dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Accepted steps, starting with the initial state.
    pub samples: Vec<GeodesicState>,
    pub tol: f64,
    /// Largest relative deviation of `|v|_g` from its initial value.
    pub speed_drift: f64,
    /// Set when an observer stopped the integration early.
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn last(&self) -> &GeodesicState {
        self.samples.last().expect("trajectory is never empty")
    }

    /// Position at time `t`, by cubic Hermite interpolation between samples.
    pub fn position_at(&self, t: f64) -> Vec<f64> {
        let s = &self.samples;
        let k = s.partition_point(|st| st.t <= t).clamp(1, s.len().max(2) - 1);
        if s.len() == 1 {
            return s[0].x.clone();
        }
        let (a, b) = (&s[k - 1], &s[k]);
        let h = b.t - a.t;
        let u = ((t - a.t) / h).clamp(0.0, 1.0);
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        (0..a.x.len())
            .map(|i| h00 * a.x[i] + h10 * h * a.v[i] + h01 * b.x[i] + h11 * h * b.v[i])
            .collect()
    }
}

/// Speed `|v|_g` at `x`.
pub fn speed(spec: &MetricSpec, x: &[f64], v: &[f64]) -> Result<f64> {
    Ok(spec.metric_at(x)?.norm_of(v))
}

/// `ẍ = −Γ(ẋ, ẋ)`, from `g a = −w` with
/// `w_l = Σ_ij (∂_i g_jl − ½ ∂_l g_ij) v^i v^j`.
struct Accel {
    n: usize,
    g: Vec<f64>,
    dg: Vec<f64>,
    w: Vec<f64>,
}

impl Accel {
    fn new(n: usize) -> Self {
        Self {
            n,
            g: vec![0.0; n * n],
            dg: vec![0.0; n * n * n],
            w: vec![0.0; n],
        }
    }

    fn eval(&mut self, spec: &MetricSpec, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        let nn = n * n;
        spec.metric_and_derivatives(x, DEFAULT_FD_STEP, &mut self.g, &mut self.dg)?;
        for l in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let term = self.dg[i * nn + j * n + l] - 0.5 * self.dg[l * nn + i * n + j];
                    acc += term * v[i] * v[j];
                }
            }
            self.w[l] = -acc;
        }
        let gm = nalgebra::DMatrix::from_row_slice(n, n, &self.g);
        let chol = gm.cholesky().ok_or_else(|| GeoError::Singular { point: x.to_vec() })?;
        let a = chol.solve(&nalgebra::DVector::from_column_slice(&self.w));
        out.copy_from_slice(a.as_slice());
        if out.iter().any(|z| !z.is_finite()) {
            return Err(GeoError::Singular { point: x.to_vec() });
        }
        Ok(())
    }
}

// Dormand–Prince 5(4)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: usize = 5_000_000;

/// Integrate the geodesic equation from `(x0, v0)` over `[0, t_end]`.
pub fn integrate_geodesic(spec: &MetricSpec, x0: &[f64], v0: &[f64], t_end: f64, tol: f64) -> Result<Trajectory> {
    integrate_geodesic_with(spec, x0, v0, t_end, tol, |_| true)
}

/// As [`integrate_geodesic`], calling `observer` after every accepted step;
/// returning `false` stops the integration there.
pub fn integrate_geodesic_with<F>(
    spec: &MetricSpec,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    tol: f64,
    observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&GeodesicState) -> bool,
{
    integrate_impl(spec, x0, v0, t_end, tol, f64::INFINITY, observer)
}

fn integrate_impl<F>(
    spec: &MetricSpec,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    tol: f64,
    h_max: f64,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&GeodesicState) -> bool,
{
    let n = spec.n;
    if x0.len() != n || v0.len() != n {
        return Err(GeoError::Config(format!("initial data must have dimension {n}")));
    }
    if !(tol > 0.0) || !(t_end >= 0.0) {
        return Err(GeoError::Config("integration needs tol > 0 and T ≥ 0".into()));
    }
    let speed0 = speed(spec, x0, v0)?;
    let mut traj = Trajectory {
        samples: vec![GeodesicState {
            x: x0.to_vec(),
            v: v0.to_vec(),
            t: 0.0,
        }],
        tol,
        speed_drift: 0.0,
        stopped_early: false,
    };
    if speed0 == 0.0 || t_end == 0.0 {
        return Ok(traj);
    }
    let mut acc = Accel::new(n);
    let dim = 2 * n;
    let mut y = [x0, v0].concat();
    let mut t = 0.0;
    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let rhs = |acc: &mut Accel, y: &[f64], out: &mut [f64]| -> Result<()> {
        out[..n].copy_from_slice(&y[n..]);
        let (x, v) = y.split_at(n);
        acc.eval(spec, x, v, &mut out[n..])
    };
    rhs(&mut acc, &y, &mut k[0])?;
    let scale = norm(x0).max(1.0);
    let mut h = (0.01 * scale / speed0).min(t_end);
    let mut err_prev: f64 = 1.0;
    let mut steps = 0usize;
    let fail = |t: f64, y: &[f64], reason: String| GeoError::Integration {
        t,
        position: y[..n].to_vec(),
        velocity: y[n..].to_vec(),
        reason,
    };
    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(fail(t, &y, "step budget exhausted".into()));
        }
        h = h.min(h_max).min(t_end - t);
        let mut ok = true;
        for (s, a_row) in A.iter().enumerate().take(7).skip(1) {
            for i in 0..dim {
                let mut z = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    z += h * a_row[j] * kj[i];
                }
                stage[i] = z;
            }
            if rhs(&mut acc, &stage, &mut k[s]).is_err() {
                ok = false;
                break;
            }
        }
        let mut err = f64::INFINITY;
        if ok {
            // stage 6 equals the 5th-order solution (FSAL)
            y5.copy_from_slice(&stage);
            err = 0.0;
            for i in 0..dim {
                let e: f64 = (0..7).map(|s| h * (B5[s] - B4[s]) * k[s][i]).sum();
                let sc = tol * (1.0 + y[i].abs().max(y5[i].abs()));
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                err = f64::INFINITY;
            }
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y5);
            k[0] = k[6].clone();
            let state = GeodesicState {
                x: y[..n].to_vec(),
                v: y[n..].to_vec(),
                t,
            };
            if let Ok(sp) = speed(spec, &state.x, &state.v) {
                traj.speed_drift = traj.speed_drift.max((sp - speed0).abs() / speed0);
            }
            let go_on = observer(&state);
            traj.samples.push(state);
            if !go_on {
                traj.stopped_early = true;
                break;
            }
            let e = err.max(1e-10);
            let factor = 0.9 * e.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= factor.clamp(0.2, 5.0);
            err_prev = e;
        } else {
            let factor = if err.is_finite() { 0.9 * err.powf(-0.2) } else { 0.25 };
            h *= factor.clamp(0.1, 0.5);
        }
        if h < 1e-13 * (1.0 + t) {
            return Err(fail(
                t,
                &y,
                "step size collapsed (metric singular or not smooth here)".into(),
            ));
        }
    }
    Ok(traj)
}

/// `exp_x(v)`: the geodesic with initial data `(x, v)` at time 1.
pub fn exp_map(spec: &MetricSpec, x: &[f64], v: &[f64], tol: f64) -> Result<Vec<f64>> {
    let traj = integrate_geodesic(spec, x, v, 1.0, tol)?;
    Ok(traj.last().x.clone())
}

/// Chart angle between the two ends of the cone geodesic line at distance
/// `closest` from the apex, each half integrated for time `t_long`.
pub fn line_end_angle(alpha: OpeningAngle, t_long: f64, closest: f64, tol: f64) -> Result<f64> {
    let spec = MetricSpec::cone(2, alpha);
    let x0 = [closest, 0.0];
    let sp = speed(&spec, &x0, &[0.0, 1.0])?;
    let fwd = integrate_geodesic(&spec, &x0, &[0.0, 1.0 / sp], t_long, tol)?;
    let bwd = integrate_geodesic(&spec, &x0, &[0.0, -1.0 / sp], t_long, tol)?;
    Ok(linalg::angle_between(&fwd.last().x, &bwd.last().x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RayResult {
    /// Left `B(o, r)` for good; `last_exit` is the last time it was inside (0
    /// if it never was).
    Escaped {
        last_exit: f64,
    },
    /// Still inside, or not confirmed outside, at `T_max`.
    Trapped {
        final_radius: f64,
    },
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayOutcome {
    pub direction: Vec<f64>,
    pub result: RayResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub x: Vec<f64>,
    pub r: f64,
    pub t_max: f64,
    pub rays: Vec<RayOutcome>,
    /// `max` of the last-exit times, when every ray escaped.
    pub t_estimate: Option<f64>,
    /// First direction (in probe order) that did not escape.
    pub nonproper_suspect: Option<Vec<f64>>,
    pub failures: usize,
}

/// Consecutive accepted steps outside `B(o, r)` with outward radial velocity
/// before a ray counts as escaped.
pub const ESCAPE_DWELL: usize = 10;

/// Shoot a unit-speed ray and record when it leaves `B(o, r)` for good.
pub fn probe_ray(spec: &MetricSpec, x: &[f64], dir: &[f64], r: f64, t_max: f64, tol: f64) -> RayResult {
    let sp = match speed(spec, x, dir) {
        Ok(s) if s > 0.0 => s,
        Ok(_) => {
            return RayResult::Failed {
                message: "zero direction".into(),
            }
        }
        Err(e) => return RayResult::Failed { message: e.to_string() },
    };
    let v: Vec<f64> = dir.iter().map(|c| c / sp).collect();
    let mut last_exit = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let mut dwell = 0usize;
    let mut escaped = false;
    let res = integrate_impl(spec, x, &v, t_max, tol, 0.25 * r, |st| {
        let rad = norm(&st.x);
        if let Some((t0, r0)) = prev {
            if r0 <= r && rad > r {
                // linear interpolation of the outward crossing
                last_exit = t0 + (st.t - t0) * (r - r0) / (rad - r0);
            }
        }
        if rad <= r {
            last_exit = last_exit.max(st.t);
            dwell = 0;
        } else if dot(&st.x, &st.v) > 0.0 {
            dwell += 1;
        } else {
            dwell = 0;
        }
        prev = Some((st.t, rad));
        if dwell >= ESCAPE_DWELL {
            escaped = true;
            return false;
        }
        true
    });
    match res {
        Err(e) => RayResult::Failed { message: e.to_string() },
        Ok(traj) => {
            if escaped {
                RayResult::Escaped { last_exit }
            } else {
                RayResult::Trapped {
                    final_radius: norm(&traj.last().x),
                }
            }
        }
    }
}

/// Shoot `direction_count` unit-speed rays from `x` and estimate the time
/// after which all of them stay outside `B(o, r)`.
pub fn properness_probe(
    spec: &MetricSpec,
    x: &[f64],
    r: f64,
    direction_count: usize,
    t_max: f64,
    tol: f64,
    exec: Execution,
) -> Result<ProbeReport> {
    spec.validate()?;
    if x.len() != spec.n || !(r > 0.0) || !(t_max > 0.0) || direction_count == 0 {
        return Err(GeoError::Config(
            "probe needs a point of the right dimension, r > 0, T_max > 0 and directions".into(),
        ));
    }
    let dirs = linalg::sphere_directions(spec.n, direction_count);
    let results = exec::map_ordered(exec, &dirs, |_, d| probe_ray(spec, x, d, r, t_max, tol));
    let rays: Vec<RayOutcome> = dirs
        .into_iter()
        .zip(results)
        .map(|(direction, result)| RayOutcome { direction, result })
        .collect();
    let failures = rays
        .iter()
        .filter(|o| matches!(o.result, RayResult::Failed { .. }))
        .count();
    let nonproper_suspect = rays
        .iter()
        .find(|o| matches!(o.result, RayResult::Trapped { .. }))
        .map(|o| o.direction.clone());
    let t_estimate = if nonproper_suspect.is_none() && failures == 0 {
        Some(rays.iter().fold(0.0f64, |m, o| match o.result {
            RayResult::Escaped { last_exit } => m.max(last_exit),
            _ => m,
        }))
    } else {
        None
    };
    Ok(ProbeReport {
        x: x.to_vec(),
        r,
        t_max,
        rays,
        t_estimate,
        nonproper_suspect,
        failures,
    })
}
