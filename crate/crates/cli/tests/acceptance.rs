//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use acgeo::ac_metric::epsilon_emp;
use acgeo::cone_geometry::{self, enumerate_antipodal_geodesics, minimizing_length, ConeChord, Plane2, PolarPoint};
use acgeo::discrete_curve::{
    energy, energy_gradient, flow, make_cutoff, truncated_energy, truncated_energy_gradient, CutoffProfile, FlowParams,
    GradientKind,
};
use acgeo::geodesic_flow::line_end_angle;
use acgeo::oracle::{self, ORACLE_SEGMENTS};
use acgeo::sweepout_minmax::{build_initial_sweepout, rotating_family, Sweepout};
use acgeo::{DiscreteCurve, MetricSpec, OpeningAngle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const CONE_CLOSED_FORM_TOL: f64 = 1e-12;
const ORACLE_REL_TOL: f64 = 1e-3;
const LIMIT_ANGLE_TOL: f64 = 1e-3;
const LIMIT_ANGLE_T: f64 = 1e4;
const ISOMETRY_TOL: f64 = 1e-10;
const GRADIENT_REL_TOL: f64 = 1e-5;
const MINMAX_RESIDUAL_N2: f64 = 1e-6;
const MINMAX_RESIDUAL_N3: f64 = 1e-4;
const LEVEL_BAND: (f64, f64) = (0.85, 1.15);
const CAP_SIN_ALPHA: f64 = 0.5;
const CAP_RADIUS: f64 = 1.0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Run {
    json: Value,
    stdout: Vec<u8>,
    files: Vec<(String, Vec<u8>)>,
    code: i32,
    elapsed: Duration,
}

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(tag);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

/// Run the binary single-threaded with `--out` pointing at a fresh directory.
fn run_cli(tag: &str, args: &[&str]) -> Run {
    let dir = scratch_dir(tag);
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_acgeo"))
        .env("ACGEO_THREADS", "1")
        .arg("--out")
        .arg(&dir)
        .args(args)
        .output()
        .expect("acgeo binary runs");
    let elapsed = start.elapsed();
    let mut files = Vec::new();
    if let Ok(rd) = std::fs::read_dir(&dir) {
        let mut names: Vec<_> = rd.filter_map(|e| e.ok()).map(|e| e.path()).collect();
        names.sort();
        for p in names {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, std::fs::read(&p).unwrap()));
        }
    }
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    Run {
        json,
        stdout: out.stdout,
        files,
        code: out.status.code().unwrap_or(-1),
        elapsed,
    }
}

fn same_bytes(a: &Run, b: &Run) -> bool {
    a.code == b.code && a.stdout == b.stdout && a.files == b.files
}

fn f(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for p in path {
        cur = &cur[*p];
    }
    cur.as_f64().unwrap_or(f64::NAN)
}

fn cap(n: usize) -> MetricSpec {
    MetricSpec::rotational_cap(n, OpeningAngle::from_sin(CAP_SIN_ALPHA).unwrap(), CAP_RADIUS)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rho = 0.1 + 10.0 * rng.random::<f64>();
        let angle = PI * rng.random::<f64>();
        let s = 0.05 + 0.9 * rng.random::<f64>();
        let alpha = OpeningAngle::from_sin(s).unwrap();
        let p = PolarPoint::new(rho, vec![1.0, 0.0]).unwrap();
        let q = PolarPoint::new(rho, vec![angle.cos(), angle.sin()]).unwrap();
        let got = minimizing_length(&p, &q, alpha).unwrap();
        let expect = 2.0 * rho * (0.5 * angle * s).sin();
        worst = worst.max((got - expect).abs() / expect.max(1e-300));
    }
    let mut worst_oracle = 0.0f64;
    for s in [0.2, 0.35, 0.6] {
        let alpha = OpeningAngle::from_sin(s).unwrap();
        for angle in [PI / 3.0, 2.0 * PI / 3.0, PI] {
            let p = PolarPoint::new(1.0, vec![1.0, 0.0]).unwrap();
            let q = PolarPoint::new(1.0, vec![angle.cos(), angle.sin()]).unwrap();
            let exact = minimizing_length(&p, &q, alpha).unwrap();
            let o = oracle::polyline_length(1.0, 1.0, angle, alpha, ORACLE_SEGMENTS).unwrap();
            worst_oracle = worst_oracle.max((o.length - exact).abs() / exact);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst <= CONE_CLOSED_FORM_TOL && worst_oracle <= ORACLE_REL_TOL && secs < 60.0,
        format!("closed form max rel err {worst:.2e}, oracle max rel err {worst_oracle:.2e}, {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [0.2, 0.35, 0.6] {
        let alpha = OpeningAngle::from_sin(s).unwrap();
        let geos = enumerate_antipodal_geodesics(1.0, alpha, 2).unwrap();
        let mut windings: Vec<usize> = geos.iter().map(|g| g.winding).collect();
        windings.dedup();
        let scan = oracle::scan_classes(1.0, alpha, ORACLE_SEGMENTS).unwrap();
        let admissible: Vec<usize> = scan.iter().filter(|c| c.admissible).map(|c| c.winding).collect();
        let mut worst = 0.0f64;
        for g in &geos {
            if let Some(o) = scan.iter().find(|c| c.winding == g.winding) {
                worst = worst.max((o.length - g.length).abs() / g.length);
            }
        }
        let floor_count = (0.5 / s + 0.5).floor() as usize;
        let ok = windings == admissible && worst <= ORACLE_REL_TOL;
        pass &= ok;
        parts.push(format!(
            "sin α={s}: {} classes, oracle {} (floor formula {floor_count}), rel err {worst:.1e}",
            windings.len(),
            admissible.len()
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    parts.push("winding k spans wedge angle (2k+1)π sin α".into());
    Outcome::new(pass, format!("{}; {secs:.2}s", parts.join("; ")))
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [0.3, 0.45] {
        let alpha = OpeningAngle::from_sin(s).unwrap();
        let la = cone_geometry::limit_angle(alpha);
        let measured = line_end_angle(alpha, LIMIT_ANGLE_T, 1.0, 1e-10).unwrap();
        let err = (measured - la.angle).abs();
        pass &= err <= LIMIT_ANGLE_TOL;
        parts.push(format!(
            "sin α={s}: K={} K_angle={:.5} measured {measured:.5} err {err:.1e}",
            la.k, la.angle
        ));
    }
    let half = cone_geometry::limit_angle(OpeningAngle::from_sin(0.5).unwrap()).angle;
    pass &= half == 0.0;
    parts.push(format!("K_angle(0.5)={half}"));
    Outcome::new(pass, parts.join("; "))
}

/// Random wedge polylines folded onto the cone: the cone length of each
/// folded chord, integrated from the metric, against its wedge length.
fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    const GL: [(f64, f64); 3] = [
        (-0.774_596_669_241_483_4, 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        (0.774_596_669_241_483_4, 5.0 / 9.0),
    ];
    for _ in 0..1000 {
        let s = 0.1 + 0.4 * rng.random::<f64>();
        let alpha = OpeningAngle::from_sin(s).unwrap();
        let n = if rng.random::<bool>() { 2 } else { 3 };
        let cone = MetricSpec::cone(n, alpha);
        let verts: Vec<(f64, f64)> = (0..6)
            .map(|_| {
                (
                    0.5 + 5.0 * rng.random::<f64>(),
                    PI * s * 0.9 * (2.0 * rng.random::<f64>() - 1.0),
                )
            })
            .collect();
        let base = if n == 2 {
            Plane2::standard(2)
        } else {
            Plane2::new(&[0.6, 0.0, 0.8], &[0.0, 1.0, 0.0]).unwrap()
        };
        let mut wedge_len = 0.0;
        let mut cone_len = 0.0;
        for w in verts.windows(2) {
            let (r0, p0) = w[0];
            let (r1, p1) = w[1];
            let th = p0 / s;
            let u = base.point(1.0, th);
            let v = base.point(1.0, th + PI / 2.0);
            let chord = ConeChord::new(Plane2::new(&u, &v).unwrap(), alpha, r0, r1, p1 - p0).unwrap();
            wedge_len += chord.length();
            for (node, wt) in GL {
                let t = 0.5 + 0.5 * node;
                let g = cone.metric_at(&chord.eval(t)).unwrap();
                cone_len += 0.5 * wt * g.norm_of(&chord.velocity(t));
            }
        }
        worst = worst.max((wedge_len - cone_len).abs());
    }
    Outcome::new(
        worst <= ISOMETRY_TOL,
        format!("1000 polylines, max |ℓ_wedge − ℓ_cone| {worst:.2e}"),
    )
}

fn random_curve(rng: &mut ChaCha8Rng, n: usize, segments: usize) -> DiscreteCurve {
    loop {
        let mut a: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        a.iter_mut().for_each(|x| *x *= 4.0 / na);
        let b: Vec<f64> = a.iter().map(|x| -0.3 * x + 1.5 * (rng.random::<f64>() - 0.5)).collect();
        let amp: Vec<f64> = (0..n).map(|_| 0.8 * (rng.random::<f64>() - 0.5)).collect();
        let freq = 1.0 + (3.0 * rng.random::<f64>()).floor();
        let pts: Vec<Vec<f64>> = (0..=segments)
            .map(|k| {
                let t = k as f64 / segments as f64;
                let bump = (PI * freq * t).sin();
                (0..n).map(|l| a[l] + t * (b[l] - a[l]) + amp[l] * bump).collect()
            })
            .collect();
        let c = DiscreteCurve::from_points(&pts).unwrap();
        if c.closest_approach().0 > 0.5 {
            return c;
        }
    }
}

fn fd_gradient(curve: &DiscreteCurve, f: &dyn Fn(&DiscreteCurve) -> f64) -> Vec<f64> {
    let dim = curve.dim();
    let mut flat = curve.flat().to_vec();
    let mut g = vec![0.0; flat.len()];
    for k in dim..flat.len() - dim {
        let x = flat[k];
        let h = 1e-6 * x.abs().max(1.0);
        flat[k] = x + h;
        let ep = f(&DiscreteCurve::from_flat(dim, flat.clone()).unwrap());
        flat[k] = x - h;
        let em = f(&DiscreteCurve::from_flat(dim, flat.clone()).unwrap());
        flat[k] = x;
        g[k] = (ep - em) / (2.0 * h);
    }
    g
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
    let den = b.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    num / den
}

fn criterion_5() -> Outcome {
    let alpha = OpeningAngle::from_sin(0.5).unwrap();
    let families = [
        ("cone", MetricSpec::cone(2, alpha)),
        ("cap", MetricSpec::rotational_cap(3, alpha, 3.0)),
        ("power_bump", MetricSpec::power_bump(2, alpha, 0.3, 1.5)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_e = 0.0f64;
    let mut worst_star = 0.0f64;
    for k in 0..50 {
        let (_, spec) = &families[k % 3];
        let curve = random_curve(&mut rng, spec.n, 24);
        let an = energy_gradient(&curve, spec).unwrap();
        let fd = fd_gradient(&curve, &|c| energy(c, spec).unwrap());
        worst_e = worst_e.max(rel_err(&an, &fd));
        let e = energy(&curve, spec).unwrap();
        let cutoff = CutoffProfile::from_band(0.6 * e, 1.3 * e).unwrap();
        let (_, an_star) = truncated_energy_gradient(&curve, spec, &cutoff).unwrap();
        let fd_star = fd_gradient(&curve, &|c| truncated_energy(c, spec, &cutoff).unwrap());
        worst_star = worst_star.max(rel_err(&an_star, &fd_star));
    }
    Outcome::new(
        worst_e <= GRADIENT_REL_TOL && worst_star <= GRADIENT_REL_TOL,
        format!("50 curves over cone/cap/power_bump: ∇E rel err {worst_e:.2e}, ∇E★ rel err {worst_star:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let alpha = OpeningAngle::from_sin(0.5).unwrap();
    let families = [
        MetricSpec::cone(2, alpha),
        MetricSpec::rotational_cap(3, alpha, 3.0),
        MetricSpec::power_bump(2, alpha, 0.3, 1.5),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0usize;
    let mut steps = 0usize;
    for k in 0..24 {
        let spec = &families[k % 3];
        let curve = random_curve(&mut rng, spec.n, 32);
        let e = energy(&curve, spec).unwrap();
        let cutoff = CutoffProfile::from_band(0.5 * e, 0.9 * e).unwrap();
        for gradient in [GradientKind::L2, GradientKind::Sobolev] {
            let params = FlowParams {
                gradient,
                max_steps: 400,
                ..FlowParams::default()
            };
            let out = flow(&curve, spec, &cutoff, 5.0, &params).unwrap();
            steps += out.e_star_trace.len().saturating_sub(1);
            violations += out.e_star_trace.windows(2).filter(|w| w[1] > w[0]).count();
        }
    }
    let rho = 20.0;
    let spec = cap(2);
    let eps = epsilon_emp(&spec, rho).unwrap();
    let cutoff = make_cutoff(rho, eps, 1.0, alpha).unwrap();
    let sw = build_initial_sweepout(rho, alpha, 2, 2, 9, 200).unwrap();
    let mut fixed = 0;
    let mut boundary = 0;
    for (i, c) in sw.curves.iter().enumerate() {
        let s_idx = i % sw.s_grid.len();
        if s_idx != 0 && s_idx + 1 != sw.s_grid.len() {
            continue;
        }
        boundary += 1;
        let below = energy(c, &spec).unwrap() < cutoff.low;
        let out = flow(c, &spec, &cutoff, 1.0, &FlowParams::default()).unwrap();
        if below && out.curve.flat() == c.flat() {
            fixed += 1;
        }
    }
    Outcome::new(
        violations == 0 && fixed == boundary,
        format!("{steps} accepted steps, {violations} increases of E★; {fixed}/{boundary} boundary curves below `low` bitwise fixed"),
    )
}

fn minmax_outcome(run: &Run, max_residual: f64, max_index: u64, budget: f64) -> Outcome {
    let r = &run.json["report"];
    let ratio = f(r, &["lambda_over_4rho2"]);
    let residual = f(r, &["residual"]);
    let closest = f(r, &["closest_approach"]);
    let index = r["morse_index"].as_u64();
    let lower = f(r, &["lower_bracket"]) / (4.0 * f(r, &["rho"]).powi(2));
    let upper = f(r, &["upper_bracket"]) / (4.0 * f(r, &["rho"]).powi(2));
    let secs = run.elapsed.as_secs_f64();
    let pass = run.code == 0
        && residual <= max_residual
        && ratio >= LEVEL_BAND.0
        && ratio <= LEVEL_BAND.1
        && closest.is_finite()
        && index.is_some_and(|i| i <= max_index)
        && secs <= budget;
    Outcome::new(
        pass,
        format!(
            "exit {}, λ/4ρ² {ratio:.4} (bracket with ε_emp [{lower:.4}, {upper:.4}]), residual {residual:.2e}, index {index:?}, closest approach {closest:.2e}, {secs:.1}s",
            run.code
        ),
    )
}

fn criterion_9() -> Outcome {
    let alpha = OpeningAngle::from_sin(CAP_SIN_ALPHA).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, xi_count) in [(2usize, 2usize), (3, 8)] {
        let rho = 20.0;
        let spec = cap(n);
        let eps = epsilon_emp(&spec, rho).unwrap();
        let sw = build_initial_sweepout(rho, alpha, n, xi_count, 33, 200).unwrap();
        let (max_e, _, _) = sw.max_energy(&spec, acgeo::Execution::Sequential).unwrap();
        let bound = (1.0 - eps).powi(2) * 4.0 * rho * rho;
        let passage = sw.verify_origin_passage();
        let ok = max_e >= bound && passage.distance == 0.0;
        pass &= ok;
        parts.push(format!(
            "n={n}: max E {max_e:.2} ≥ {bound:.2}, passage distance {}",
            passage.distance
        ));
    }
    let (xis, ss, curves) = rotating_family(20.0, alpha, 8, 17, 100).unwrap();
    let rejected = Sweepout::new(20.0, alpha, xis, ss, curves).is_err();
    pass &= rejected;
    parts.push(format!("rotating family rejected: {rejected}"));
    Outcome::new(pass, parts.join("; "))
}

const ASYM_RHOS: [f64; 3] = [20.0, 40.0, 80.0];
const ASYM_RADII: [f64; 3] = [5.0, 10.0, 20.0];

fn criterion_10(run: &Run) -> Outcome {
    // rows exist where the sphere |x| = r lies strictly inside |x| = ρ
    let expected_rows = ASYM_RHOS
        .iter()
        .map(|rho| ASYM_RADII.iter().filter(|&&r| r < *rho).count())
        .sum::<usize>();
    let j = &run.json;
    let nt = &j["nontwist"];
    let circ = j["circ_count_at_largest_radius"].as_u64();
    let connected = j["all_connected"].as_bool() == Some(true);
    let dev = nt["deviations_nonincreasing"].as_bool() == Some(true);
    let diam = nt["diameters_nonincreasing"].as_bool() == Some(true);
    let rows = nt["rows"].as_array().map(|r| r.len()).unwrap_or(0);
    let sup_dev = nt["sup_dev_minus"].to_string();
    let sup_diam = nt["sup_diam_minus"].to_string();
    Outcome::new(
        run.code == 0 && circ == Some(0) && connected && dev && diam && rows == expected_rows,
        format!(
            "exit {}, {rows}/{expected_rows} (ρ, r) rows, Δ° at largest r {circ:?}, Δ± connected {connected}, sup dev⁻ {sup_dev}, sup diam⁻/r {sup_diam} (nonincreasing {dev}/{diam}), {:.1}s",
            run.code,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {id:>2} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };

    record(1, "cone formula suite", criterion_1());
    record(2, "winding enumeration", criterion_2());
    record(3, "limit angle", criterion_3());
    record(4, "isometry", criterion_4());
    record(5, "gradient correctness", criterion_5());
    record(6, "flow monotonicity", criterion_6());

    let mm2 = [
        "minmax",
        "--cap",
        "1",
        "--sin-alpha",
        "0.5",
        "--n",
        "2",
        "--rho",
        "20",
        "--segments",
        "200",
    ];
    let minmax2 = run_cli("minmax2_a", &mm2);
    record(7, "min-max n=2", minmax_outcome(&minmax2, MINMAX_RESIDUAL_N2, 1, 600.0));

    let mm3 = [
        "minmax",
        "--cap",
        "1",
        "--sin-alpha",
        "0.5",
        "--n",
        "3",
        "--rho",
        "10",
        "--segments",
        "100",
        "--xi-count",
        "32",
        "--max-residual",
        "1e-4",
    ];
    let minmax3 = run_cli("minmax3_a", &mm3);
    record(
        8,
        "min-max n=3 smoke",
        minmax_outcome(&minmax3, MINMAX_RESIDUAL_N3, 2, 1800.0),
    );

    record(9, "sweepout lower bound", criterion_9());

    let asy = [
        "asymptotics",
        "--cap",
        "1",
        "--sin-alpha",
        "0.5",
        "--rhos",
        "20,40,80",
        "--radii",
        "5,10,20",
    ];
    let asym = run_cli("asym_a", &asy);
    record(10, "asymptotics", criterion_10(&asym));

    let cone = ["cone-geodesics", "--sin-alpha", "0.2", "--rho", "1", "--oracle"];
    let limit = ["limit-angle", "--sin-alpha", "0.3"];
    let probe = [
        "properness-probe",
        "--cap",
        "1",
        "--r",
        "2",
        "--directions",
        "16",
        "--t-max",
        "50",
    ];
    let pairs: Vec<(&str, Run, Run)> = vec![
        ("cone-geodesics", run_cli("cone_a", &cone), run_cli("cone_b", &cone)),
        ("limit-angle", run_cli("limit_a", &limit), run_cli("limit_b", &limit)),
        (
            "properness-probe",
            run_cli("probe_a", &probe),
            run_cli("probe_b", &probe),
        ),
        ("minmax n=2", run_cli("minmax2_b", &mm2), minmax2),
        ("minmax n=3", run_cli("minmax3_b", &mm3), minmax3),
        ("asymptotics", run_cli("asym_b", &asy), asym),
    ];
    let mismatched: Vec<&str> = pairs
        .iter()
        .filter(|(_, a, b)| !same_bytes(a, b))
        .map(|(n, _, _)| *n)
        .collect();
    let files: usize = pairs.iter().map(|(_, a, _)| a.files.len()).sum();
    record(
        11,
        "determinism",
        Outcome::new(
            mismatched.is_empty(),
            format!(
                "{} commands run twice, {files} report files compared, mismatches {mismatched:?}",
                pairs.len()
            ),
        ),
    );

    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, _, o)| !o.pass)
        .map(|(id, _, _)| *id)
        .collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
