//! Sweepouts of curves from `p = ρa` to `q = −ρa` and the discrete min-max
//! (mountain-pass) driver with its Morse index computation.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ac_metric::MetricSpec;
use crate::cone_geometry::{minimizing_family, OpeningAngle, Plane2};
use crate::discrete_curve::{
    default_step, energy, energy_hessian, flow, geodesic_residual, refine_to_geodesic, CutoffProfile, DiscreteCurve,
    FlowParams, GradientKind,
};
use crate::error::{GeoError, Result};
use crate::exec::{self, Execution};
use crate::linalg::dist;

/// Boundary and endpoint agreement required of a sweepout.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// `I(x₁, …, xₙ) = (x₁, …, −xₙ)`.
pub fn reflection_i(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    if let Some(last) = y.last_mut() {
        *last = -*last;
    }
    y
}

/// The `ξ` grid on `S^{n−2} ⊂ span{e₂, …, eₙ}`: `±e₂` for `n = 2`, equally
/// spaced points of the circle in `span{e₂, e₃}` for `n = 3`.
pub fn xi_grid(n: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    match n {
        2 => {
            if count != 2 {
                return Err(GeoError::Config("for n = 2 the ξ grid is {e₂, −e₂}".into()));
            }
            Ok(vec![vec![0.0, 1.0], vec![0.0, -1.0]])
        }
        3 => {
            if count < 2 {
                return Err(GeoError::Config("ξ grid needs at least 2 points".into()));
            }
            Ok((0..count)
                .map(|j| {
                    let th = 2.0 * PI * j as f64 / count as f64;
                    vec![0.0, th.cos(), th.sin()]
                })
                .collect())
        }
        _ => Err(GeoError::Config(format!(
            "sweepouts are implemented for n ∈ {{2, 3}}, got {n}"
        ))),
    }
}

/// Uniform grid of `count ≥ 2` points on `[0, 1]`.
pub fn s_grid(count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(GeoError::Config("s grid needs at least 2 points".into()));
    }
    Ok((0..count).map(|j| j as f64 / (count - 1) as f64).collect())
}

fn e1(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    a[0] = 1.0;
    a
}

/// A grid sample `H(ξ_i, s_j)` of a family of curves from `p = ρe₁` to
/// `q = −ρe₁` with `H(ξ, 0) = L_ξ` and `H(ξ, 1) = L_{I(ξ)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweepout {
    pub rho: f64,
    pub alpha: OpeningAngle,
    pub xi_grid: Vec<Vec<f64>>,
    pub s_grid: Vec<f64>,
    /// Row-major in `(ξ index, s index)`.
    pub curves: Vec<DiscreteCurve>,
}

impl Sweepout {
    /// Validates shared endpoints and the boundary condition.
    pub fn new(
        rho: f64,
        alpha: OpeningAngle,
        xi_grid: Vec<Vec<f64>>,
        s_grid: Vec<f64>,
        curves: Vec<DiscreteCurve>,
    ) -> Result<Self> {
        if curves.len() != xi_grid.len() * s_grid.len() || curves.is_empty() {
            return Err(GeoError::Config("curve count does not match the (ξ, s) grid".into()));
        }
        if s_grid.first() != Some(&0.0) || s_grid.last() != Some(&1.0) {
            return Err(GeoError::Config("s grid must start at 0 and end at 1".into()));
        }
        let sw = Self {
            rho,
            alpha,
            xi_grid,
            s_grid,
            curves,
        };
        sw.check_boundary()?;
        Ok(sw)
    }

    pub fn dim(&self) -> usize {
        self.curves[0].dim()
    }

    pub fn segments(&self) -> usize {
        self.curves[0].segments()
    }

    pub fn p(&self) -> Vec<f64> {
        e1(self.dim()).iter().map(|x| self.rho * x).collect()
    }

    pub fn q(&self) -> Vec<f64> {
        e1(self.dim()).iter().map(|x| -self.rho * x).collect()
    }

    pub fn index(&self, i_xi: usize, i_s: usize) -> usize {
        i_xi * self.s_grid.len() + i_s
    }

    pub fn curve(&self, i_xi: usize, i_s: usize) -> &DiscreteCurve {
        &self.curves[self.index(i_xi, i_s)]
    }

    /// Shared endpoints `p`, `q` and `H(ξ,0) = L_ξ`, `H(ξ,1) = L_{I(ξ)}`
    /// vertexwise within [`BOUNDARY_TOL`].
    pub fn check_boundary(&self) -> Result<()> {
        let n = self.dim();
        let segs = self.segments();
        let (p, q) = (self.p(), self.q());
        for c in &self.curves {
            if c.dim() != n || c.segments() != segs {
                return Err(GeoError::Config("all sweepout curves must share n and N".into()));
            }
            if dist(c.start(), &p) > BOUNDARY_TOL * self.rho || dist(c.end(), &q) > BOUNDARY_TOL * self.rho {
                return Err(GeoError::Config("sweepout curves must join p to q".into()));
            }
        }
        let a = e1(n);
        let last = self.s_grid.len() - 1;
        for (i, xi) in self.xi_grid.iter().enumerate() {
            let l0 = minimizing_family(self.rho, &a, xi, self.alpha, segs)?;
            let l1 = minimizing_family(self.rho, &a, &reflection_i(xi), self.alpha, segs)?;
            let d0 = self.curve(i, 0).sup_distance(&l0);
            let d1 = self.curve(i, last).sup_distance(&l1);
            if d0 > BOUNDARY_TOL * self.rho || d1 > BOUNDARY_TOL * self.rho {
                return Err(GeoError::Config(format!(
                    "boundary condition violated at ξ index {i}: |H(ξ,0) − L_ξ| = {d0:.3e}, |H(ξ,1) − L_I(ξ)| = {d1:.3e}"
                )));
            }
        }
        Ok(())
    }

    pub fn energies(&self, spec: &MetricSpec, exec: Execution) -> Result<Vec<f64>> {
        exec::map_ordered(exec, &self.curves, |_, c| energy(c, spec))
            .into_iter()
            .collect()
    }

    /// Largest energy and its `(ξ, s)` indices; ties go to the
    /// lexicographically first pair.
    pub fn max_energy(&self, spec: &MetricSpec, exec: Execution) -> Result<(f64, usize, usize)> {
        let es = self.energies(spec, exec)?;
        Ok(argmax(&es, self.s_grid.len()))
    }

    /// Closest approach of the family to `o` and where it is attained.
    pub fn verify_origin_passage(&self) -> OriginPassage {
        let (distance, k) = family_closest_approach(&self.curves);
        let ns = self.s_grid.len();
        OriginPassage {
            distance,
            xi_index: k / ns,
            s_index: k % ns,
        }
    }

    /// Curves as CSV blocks, each preceded by a `# xi=i s=j` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, c) in self.curves.iter().enumerate() {
            let ns = self.s_grid.len();
            out.push_str(&format!("# xi={} s={:.16e}\n", k / ns, self.s_grid[k % ns]));
            out.push_str(&c.to_csv());
        }
        out
    }
}

fn argmax(es: &[f64], ns: usize) -> (f64, usize, usize) {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, &e) in es.iter().enumerate() {
        if e > best.0 {
            best = (e, k);
        }
    }
    (best.0, best.1 / ns, best.1 % ns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginPassage {
    pub distance: f64,
    pub xi_index: usize,
    pub s_index: usize,
}

/// `min_k dist(o, curves[k])` with the first minimizing index.
pub fn family_closest_approach(curves: &[DiscreteCurve]) -> (f64, usize) {
    curves
        .iter()
        .enumerate()
        .map(|(k, c)| (c.closest_approach().0, k))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

/// Constant-speed samples of the straight wedge segment between
/// `(r0, φ0)` and `(r1, φ1)`, folded into `plane`; `pts` receives
/// `segments` points, the start excluded.
fn wedge_leg(
    plane: &Plane2,
    alpha: OpeningAngle,
    (r0, f0): (f64, f64),
    (r1, f1): (f64, f64),
    segments: usize,
    pts: &mut Vec<Vec<f64>>,
) {
    let a = [r0 * f0.cos(), r0 * f0.sin()];
    let b = [r1 * f1.cos(), r1 * f1.sin()];
    for k in 1..=segments {
        let t = k as f64 / segments as f64;
        let w = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let rho = w[0].hypot(w[1]);
        if rho == 0.0 {
            pts.push(vec![0.0; plane.dim()]);
        } else {
            pts.push(plane.point(rho, w[1].atan2(w[0]) / alpha.sin()));
        }
    }
}

/// The tent curve through `c·ξ` (chart distance `c` from `o`): two straight
/// wedge chords `p → cξ → q` with `N/2` segments each.
pub fn tent_curve(rho: f64, alpha: OpeningAngle, xi: &[f64], c: f64, segments: usize) -> Result<DiscreteCurve> {
    if !segments.is_multiple_of(2) || segments < 2 {
        return Err(GeoError::Config("tent curves need an even segment count".into()));
    }
    let n = xi.len();
    if c == 0.0 {
        // the broken generatrix, kept exactly on the e₁ axis
        let pts: Vec<Vec<f64>> = (0..=segments)
            .map(|k| {
                let mut x = vec![0.0; n];
                x[0] = rho * (1.0 - 2.0 * k as f64 / segments as f64);
                x
            })
            .collect();
        return DiscreteCurve::from_points(&pts);
    }
    let plane = Plane2::new(&e1(n), xi)?;
    let half = segments / 2;
    let s = alpha.sin();
    let mut pts = vec![plane.point(rho, 0.0)];
    wedge_leg(&plane, alpha, (rho, 0.0), (c, 0.5 * PI * s), half, &mut pts);
    wedge_leg(&plane, alpha, (c, 0.5 * PI * s), (rho, PI * s), half, &mut pts);
    pts[0] = e1(n).iter().map(|x| rho * x).collect();
    pts[segments] = e1(n).iter().map(|x| -rho * x).collect();
    DiscreteCurve::from_points(&pts)
}

/// Chart distance from `o` to the midpoint of `L_ξ`.
pub fn minimizer_midpoint_distance(rho: f64, alpha: OpeningAngle) -> f64 {
    rho * (0.5 * PI * alpha.sin()).cos()
}

/// The tent family: for `s ≤ ½` the two-chord path `p → (1−2s)m_ξ → q`, for
/// `s ≥ ½` the path through `(2s−1)m_{I(ξ)}`; `s = ½` is the broken
/// generatrix `p → o → q`. Boundary curves are exactly `L_ξ`, `L_{I(ξ)}`.
pub fn build_initial_sweepout(
    rho: f64,
    alpha: OpeningAngle,
    n: usize,
    xi_count: usize,
    s_count: usize,
    segments: usize,
) -> Result<Sweepout> {
    if !(rho > 0.0) {
        return Err(GeoError::Config("ρ must be positive".into()));
    }
    let xis = xi_grid(n, xi_count)?;
    let ss = s_grid(s_count)?;
    let m = minimizer_midpoint_distance(rho, alpha);
    let a = e1(n);
    let mut curves = Vec::with_capacity(xis.len() * ss.len());
    for xi in &xis {
        let ixi = reflection_i(xi);
        for (j, &s) in ss.iter().enumerate() {
            let c = if j == 0 {
                minimizing_family(rho, &a, xi, alpha, segments)?
            } else if j + 1 == ss.len() {
                minimizing_family(rho, &a, &ixi, alpha, segments)?
            } else if s <= 0.5 {
                tent_curve(rho, alpha, xi, (1.0 - 2.0 * s) * m, segments)?
            } else {
                tent_curve(rho, alpha, &ixi, (2.0 * s - 1.0) * m, segments)?
            };
            curves.push(c);
        }
    }
    Sweepout::new(rho, alpha, xis, ss, curves)
}

/// Checks `ρ > R_κ` before building the tent family.
pub fn build_initial_sweepout_checked(
    spec: &MetricSpec,
    rho: f64,
    r_kappa: f64,
    xi_count: usize,
    s_count: usize,
    segments: usize,
) -> Result<Sweepout> {
    if !(rho > r_kappa) {
        return Err(GeoError::Config(format!(
            "ρ = {rho} must exceed R_κ = {r_kappa} (metric not yet close to the cone)"
        )));
    }
    let alpha = spec
        .alpha()
        .ok_or_else(|| GeoError::Config("sweepouts need a conical model metric".into()))?;
    build_initial_sweepout(rho, alpha, spec.n, xi_count, s_count, segments)
}

/// Interior deformation `x ↦ x + amp·4s(1−s)·(1 − |x|²/ρ²)·Ax` with a random
/// matrix `A` (entries uniform in `[−1, 1]`). It fixes `o`, the sphere
/// `|x| = ρ` and the boundary curves, so the result is again a valid sweepout.
pub fn perturbed_sweepout(base: &Sweepout, amp: f64, seed: u64) -> Result<Sweepout> {
    let n = base.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n * n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let rho2 = base.rho * base.rho;
    let ns = base.s_grid.len();
    let curves = base
        .curves
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let s = base.s_grid[k % ns];
            let w = amp * 4.0 * s * (1.0 - s);
            if w == 0.0 {
                return c.clone();
            }
            let mut out = c.map_vertices(|x| {
                let f = w * (1.0 - crate::linalg::dot(x, x) / rho2);
                (0..n)
                    .map(|i| x[i] + f * (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>())
                    .collect()
            });
            // endpoints are fixed points up to rounding; pin them exactly
            let seg = out.segments();
            let flat = out.flat_mut();
            flat[..n].copy_from_slice(c.start());
            flat[seg * n..].copy_from_slice(c.end());
            out
        })
        .collect();
    Sweepout::new(base.rho, base.alpha, base.xi_grid.clone(), base.s_grid.clone(), curves)
}

/// `(ξ grid, s grid, curves)` of a family that has not been validated.
pub type RawFamily = (Vec<Vec<f64>>, Vec<f64>, Vec<DiscreteCurve>);

/// The family `H(ξ, s) = L_{ξ rotated by πs}` in `span{e₂, e₃}` (`n = 3`).
/// Its `s = 1` curves are `L_{−ξ}` rather than `L_{I(ξ)}`.
pub fn rotating_family(
    rho: f64,
    alpha: OpeningAngle,
    xi_count: usize,
    s_count: usize,
    segments: usize,
) -> Result<RawFamily> {
    let xis = xi_grid(3, xi_count)?;
    let ss = s_grid(s_count)?;
    let a = e1(3);
    let mut curves = Vec::new();
    for xi in &xis {
        let th = xi[2].atan2(xi[1]);
        for &s in &ss {
            let t = th + PI * s;
            curves.push(minimizing_family(rho, &a, &[0.0, t.cos(), t.sin()], alpha, segments)?);
        }
    }
    Ok((xis, ss, curves))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxParams {
    pub flow: FlowParams,
    /// Deformation time per round, in units of the base step.
    pub steps_per_round: usize,
    pub stop_tol: f64,
    pub stop_window: usize,
    pub max_rounds: usize,
    pub refine_tol: f64,
    pub refine_max_iter: usize,
    /// Refined curves above this residual count as a failed saddle search.
    pub max_residual: f64,
    pub index_eps: f64,
    pub exec: Execution,
}

impl Default for MinMaxParams {
    fn default() -> Self {
        Self {
            flow: FlowParams {
                gradient: GradientKind::Sobolev,
                ..FlowParams::default()
            },
            steps_per_round: 10,
            stop_tol: 1e-8,
            stop_window: 20,
            max_rounds: 5000,
            refine_tol: 1e-9,
            refine_max_iter: 50,
            max_residual: 1e-6,
            index_eps: 1e-8,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxReport {
    /// Energy of the refined critical curve.
    pub lambda: f64,
    pub argmax_xi: usize,
    pub argmax_s: usize,
    pub residual: f64,
    pub morse_index: Option<usize>,
    pub iterations: usize,
    /// Max energy over the family before the first round and after each round.
    pub history: Vec<f64>,
    pub rho: f64,
    pub lambda_over_4rho2: f64,
    /// Max energy of the deformed family (before refinement).
    pub lambda_grid: f64,
    pub closest_approach: f64,
    pub boundary_preserved: bool,
    pub base_step: f64,
    pub stalled: bool,
    #[serde(skip)]
    pub critical_curve: Option<DiscreteCurve>,
    #[serde(skip)]
    pub sweepout: Option<Sweepout>,
}

#[derive(Debug, thiserror::Error)]
pub enum MinMaxError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    /// The max-energy curve did not refine to a critical curve.
    #[error("saddle search failed: residual {} after {} rounds", .0.residual, .0.iterations)]
    SaddleEscape(Box<MinMaxReport>),
    #[error("saddle search failed: residual {} after {} rounds", .0.minmax.residual, .0.minmax.iterations)]
    PipelineEscape(Box<PipelineReport>),
}

/// Deform the sweepout by the truncated-energy flow until the max level
/// stalls, then refine the max-energy curve and compute its index.
pub fn minmax_run(
    sweepout: &Sweepout,
    spec: &MetricSpec,
    cutoff: &CutoffProfile,
    params: &MinMaxParams,
) -> std::result::Result<MinMaxReport, MinMaxError> {
    sweepout.check_boundary()?;
    let exec = params.exec;
    let kind = params.flow.gradient;
    let steps = exec::map_ordered(exec, &sweepout.curves, |_, c| default_step(c, spec, cutoff, kind))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let tau0 = params
        .flow
        .tau0
        .unwrap_or_else(|| steps.iter().copied().fold(f64::INFINITY, f64::min));
    let flow_params = FlowParams {
        tau0: Some(tau0),
        ..params.flow
    };
    let tau_round = tau0 * params.steps_per_round as f64;

    let mut sw = sweepout.clone();
    let ns = sw.s_grid.len();
    let mut energies = sw.energies(spec, exec)?;
    let mut history = vec![argmax(&energies, ns).0];
    let mut rounds = 0;
    let mut stalled = false;
    while rounds < params.max_rounds {
        let flowed = exec::map_ordered(exec, &sw.curves, |_, c| {
            flow(c, spec, cutoff, tau_round, &flow_params).map(|o| o.curve)
        });
        sw.curves = flowed.into_iter().collect::<Result<Vec<_>>>()?;
        energies = sw.energies(spec, exec)?;
        history.push(argmax(&energies, ns).0);
        rounds += 1;
        let k = history.len() - 1;
        if k >= params.stop_window {
            let old = history[k - params.stop_window];
            if (old - history[k]) / history[k] < params.stop_tol {
                stalled = true;
                break;
            }
        }
    }
    let boundary_preserved = sw.check_boundary().is_ok();
    let (lambda_grid, ixi, is) = argmax(&energies, ns);
    let top = sw.curve(ixi, is).clone();
    let rho = sw.rho;
    let mut report = MinMaxReport {
        lambda: lambda_grid,
        argmax_xi: ixi,
        argmax_s: is,
        residual: geodesic_residual(&top, spec)?,
        morse_index: None,
        iterations: rounds,
        history,
        rho,
        lambda_over_4rho2: lambda_grid / (4.0 * rho * rho),
        lambda_grid,
        closest_approach: top.closest_approach().0,
        boundary_preserved,
        base_step: tau0,
        stalled,
        critical_curve: Some(top.clone()),
        sweepout: Some(sw),
    };
    let refined = match refine_to_geodesic(&top, spec, params.refine_tol, params.refine_max_iter) {
        Ok(r) => r.curve,
        Err(fail) => fail.best,
    };
    report.residual = geodesic_residual(&refined, spec)?;
    report.lambda = energy(&refined, spec)?;
    report.lambda_over_4rho2 = report.lambda / (4.0 * rho * rho);
    report.closest_approach = refined.closest_approach().0;
    report.critical_curve = Some(refined.clone());
    if report.residual > params.max_residual {
        return Err(MinMaxError::SaddleEscape(Box::new(report)));
    }
    report.morse_index = Some(morse_index(
        &refined,
        spec,
        params.max_residual.max(1e-4),
        params.index_eps,
    )?);
    Ok(report)
}

/// Everything needed to go from a metric to a critical curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxSetup {
    pub rho: f64,
    pub xi_count: usize,
    pub s_count: usize,
    pub segments: usize,
    /// Comparison constant used for the cutoff band.
    pub c_star: f64,
    /// `R_κ` is the radius beyond which the metric deviates from the cone by
    /// at most `κ`.
    pub kappa: f64,
    pub seed: u64,
    pub params: MinMaxParams,
}

impl MinMaxSetup {
    pub fn new(n: usize, rho: f64) -> Self {
        Self {
            rho,
            xi_count: if n == 2 { 2 } else { 32 },
            s_count: 33,
            segments: 200,
            c_star: 1.0,
            kappa: 0.05,
            seed: 0,
            params: MinMaxParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    #[serde(flatten)]
    pub minmax: MinMaxReport,
    pub eps_emp: f64,
    pub r_kappa: f64,
    pub c_star: f64,
    /// `max |ℓ_g/ℓ_cone − 1| / κ` over random polylines outside `B(o, R_κ)`.
    pub empirical_c_star: f64,
    pub cutoff: CutoffProfile,
    /// `(1 − ε)²·4ρ² ≤ λ ≤ (1 + C★ε)²·4ρ²` with the measured `ε`.
    pub lower_bracket: f64,
    pub upper_bracket: f64,
    pub initial_max_energy: f64,
}

/// Tent sweepout, cutoff from the measured deviation `ε` at `ρ`, min-max,
/// refinement and index.
pub fn run_pipeline(spec: &MetricSpec, setup: &MinMaxSetup) -> std::result::Result<PipelineReport, MinMaxError> {
    spec.validate()?;
    let alpha = spec
        .alpha()
        .ok_or_else(|| GeoError::Config("min-max needs a conical model metric".into()))?;
    let r_kappa = crate::ac_metric::r_epsilon(spec, setup.kappa)?;
    let sweepout =
        build_initial_sweepout_checked(spec, setup.rho, r_kappa, setup.xi_count, setup.s_count, setup.segments)?;
    let eps = crate::ac_metric::epsilon_emp(spec, setup.rho)?;
    let cutoff = crate::discrete_curve::make_cutoff(setup.rho, eps, setup.c_star, alpha)?;
    let empirical_c_star = crate::ac_metric::empirical_c_star(spec, setup.kappa, 64, setup.seed)?;
    let (initial_max_energy, _, _) = sweepout.max_energy(spec, setup.params.exec)?;
    let four = 4.0 * setup.rho * setup.rho;
    let wrap = |minmax: MinMaxReport| PipelineReport {
        minmax,
        eps_emp: eps,
        r_kappa,
        c_star: setup.c_star,
        empirical_c_star,
        cutoff,
        lower_bracket: (1.0 - eps).powi(2) * four,
        upper_bracket: (1.0 + setup.c_star * eps).powi(2) * four,
        initial_max_energy,
    };
    match minmax_run(&sweepout, spec, &cutoff, &setup.params) {
        Ok(r) => Ok(wrap(r)),
        Err(MinMaxError::SaddleEscape(r)) => Err(MinMaxError::PipelineEscape(Box::new(wrap(*r)))),
        Err(e) => Err(e),
    }
}

/// Number of Hessian eigenvalues below `−eps·‖H‖` in the interior vertex
/// variables. Refuses curves whose residual exceeds `max_residual`.
pub fn morse_index(curve: &DiscreteCurve, spec: &MetricSpec, max_residual: f64, eps: f64) -> Result<usize> {
    let res = geodesic_residual(curve, spec)?;
    if res > max_residual {
        return Err(GeoError::Numerical(format!(
            "Morse index undefined off the critical set: residual {res:.3e} > {max_residual:.1e}"
        )));
    }
    Ok(negative_eigen_count(&hessian_spectrum(curve, spec)?, eps))
}

/// Eigenvalues of the symmetrized discrete energy Hessian, ascending.
pub fn hessian_spectrum(curve: &DiscreteCurve, spec: &MetricSpec) -> Result<Vec<f64>> {
    let h = energy_hessian(curve, spec)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn negative_eigen_count(spectrum: &[f64], eps: f64) -> usize {
    let scale = spectrum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    spectrum.iter().filter(|&&v| v < -eps * scale).count()
}

/// Euclidean norm of the chart displacement between consecutive `s` curves,
/// maximized over the family.
pub fn max_adjacent_distance(sw: &Sweepout) -> f64 {
    let ns = sw.s_grid.len();
    let mut m = 0.0f64;
    for i in 0..sw.xi_grid.len() {
        for j in 0..ns - 1 {
            m = m.max(sw.curve(i, j).sup_distance(sw.curve(i, j + 1)));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn half() -> OpeningAngle {
        OpeningAngle::from_sin(0.5).unwrap()
    }

    #[test]
    fn reflection_is_an_involution() {
        let x = [1.0, -2.0, 3.5];
        assert_eq!(reflection_i(&reflection_i(&x)), x.to_vec());
        assert_eq!(reflection_i(&[4.0, 0.0, 0.0]), vec![4.0, 0.0, 0.0]);
        assert_eq!(reflection_i(&[1.0, 2.0]), vec![1.0, -2.0]);
    }

    #[test]
    fn reflection_maps_minimizers() {
        let a = [1.0, 0.0, 0.0];
        let xi = [0.0, 0.6, 0.8];
        let l = minimizing_family(2.0, &a, &xi, half(), 40).unwrap();
        let li = minimizing_family(2.0, &a, &reflection_i(&xi), half(), 40).unwrap();
        assert!(l.map_vertices(reflection_i).sup_distance(&li) < 1e-14);
    }

    #[test]
    fn tent_family_energies() {
        let spec = MetricSpec::cone(2, half());
        let sw = build_initial_sweepout(1.0, half(), 2, 2, 33, 200).unwrap();
        let e0 = energy(sw.curve(0, 0), &spec).unwrap();
        assert_abs_diff_eq!(e0, 2.0, epsilon = 1e-4);
        let mid = sw.curve(0, 16);
        assert_eq!(mid.vertex(100), &[0.0, 0.0]);
        assert_abs_diff_eq!(energy(mid, &spec).unwrap(), 4.0, epsilon = 1e-12);
        let (emax, _, _) = sw.max_energy(&spec, Execution::Sequential).unwrap();
        assert!((emax - 4.0).abs() < 0.02 * 4.0);
        assert_eq!(sw.verify_origin_passage().distance, 0.0);
        assert_eq!(sw.verify_origin_passage().s_index, 16);
    }

    #[test]
    fn rotating_family_is_rejected() {
        let (xis, ss, curves) = rotating_family(1.0, half(), 8, 5, 40).unwrap();
        let (d, _) = family_closest_approach(&curves);
        // secants of a curve wrapping around o pass slightly closer than its vertices
        let m = minimizer_midpoint_distance(1.0, half());
        assert!(d <= m && d > 0.99 * m, "{d}");
        assert!(Sweepout::new(1.0, half(), xis, ss, curves).is_err());
    }

    #[test]
    fn perturbed_sweepouts_stay_valid() {
        let base = build_initial_sweepout(3.0, half(), 3, 6, 9, 40).unwrap();
        let p = perturbed_sweepout(&base, 0.1, 7).unwrap();
        assert_eq!(p.verify_origin_passage().distance, 0.0);
        assert!(p.curve(1, 3).sup_distance(base.curve(1, 3)) > 1e-3);
    }

    #[test]
    fn index_of_minimizers_is_zero() {
        let spec = MetricSpec::cone(2, half()).with_regularization(1e-3);
        let flat = MetricSpec::euclidean(2);
        let chord = DiscreteCurve::straight(&[1.0, 0.0], &[-1.0, 0.5], 50).unwrap();
        assert_eq!(morse_index(&chord, &flat, 1e-6, 1e-8).unwrap(), 0);
        let l = minimizing_family(1.0, &[1.0, 0.0], &[0.0, 1.0], half(), 60).unwrap();
        let refined = refine_to_geodesic(&l, &spec, 1e-10, 30).unwrap();
        assert_eq!(morse_index(&refined.curve, &spec, 1e-6, 1e-8).unwrap(), 0);
        let wiggle = l.map_vertices(|x| vec![x[0], x[1] * 1.2]);
        assert!(morse_index(&wiggle, &spec, 1e-6, 1e-8).is_err());
    }
}
