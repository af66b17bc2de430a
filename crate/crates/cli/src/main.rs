//! `acgeo`: cone geodesics, min-max runs and asymptotic diagnostics from the
//! command line. Reports are JSON on stdout and, with `--out DIR`, JSON/CSV
//! files under `DIR`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acgeo::ac_metric::MetricConfig;
use acgeo::asymptotics::{self, CrossingRecord, NonTwistReport};
use acgeo::cone_geometry::{self, ConeGeodesicDescriptor};
use acgeo::discrete_curve::GradientKind;
use acgeo::exec::{self, Execution};
use acgeo::geodesic_flow;
use acgeo::oracle::{self, ORACLE_SEGMENTS};
use acgeo::sweepout_minmax::{self, MinMaxError, MinMaxSetup, PipelineReport};
use acgeo::{GeoError, MetricSpec, OpeningAngle, Perturbation};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "acgeo",
    version,
    about = "Geodesics and min-max on asymptotically conical metrics"
)]
struct Cli {
    /// Directory for report files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Geodesic segments between antipodal points of the exact cone.
    ConeGeodesics(ConeGeodesicsArgs),
    /// Limit angle between the ends of a cone geodesic line.
    LimitAngle(LimitAngleArgs),
    /// Sweepout, min-max flow, refinement and Morse index.
    Minmax(MinmaxArgs),
    /// Min-max over a schedule of radii followed by the non-twisting diagnostics.
    Asymptotics(AsymptoticsArgs),
    /// Shoot rays from a point and estimate the uniform escape time.
    PropernessProbe(ProbeArgs),
}

#[derive(Args, Debug)]
struct ConeGeodesicsArgs {
    #[arg(long)]
    sin_alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Cross-check every class against a homotopy-constrained polyline minimization.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = ORACLE_SEGMENTS)]
    oracle_segments: usize,
}

#[derive(Args, Debug)]
struct LimitAngleArgs {
    #[arg(long)]
    sin_alpha: f64,
    /// Half-length of the integrated geodesic line.
    #[arg(long, default_value_t = 1e4)]
    t_long: f64,
    /// Distance of the line from the apex.
    #[arg(long, default_value_t = 1.0)]
    closest: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args, Debug, Clone)]
struct MetricArgs {
    /// Metric config JSON file; overrides the flags below.
    #[arg(long)]
    metric: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    sin_alpha: f64,
    /// Rotational cap glued to the cone at this radius.
    #[arg(long, conflicts_with = "bump_amplitude")]
    cap: Option<f64>,
    #[arg(long, requires = "bump_mu")]
    bump_amplitude: Option<f64>,
    #[arg(long)]
    bump_mu: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    regularization: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Gradient {
    L2,
    Sobolev,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Grid size over the parameter sphere (default 2 for n = 2, 32 otherwise).
    #[arg(long)]
    xi_count: Option<usize>,
    #[arg(long, default_value_t = 33)]
    s_count: usize,
    #[arg(long, default_value_t = 200)]
    segments: usize,
    #[arg(long, default_value_t = 1.0)]
    c_star: f64,
    #[arg(long, default_value_t = 0.05)]
    kappa: f64,
    #[arg(long, value_enum, default_value_t = Gradient::Sobolev)]
    gradient: Gradient,
    #[arg(long, default_value_t = 10)]
    steps_per_round: usize,
    #[arg(long, default_value_t = 5000)]
    max_rounds: usize,
    #[arg(long, default_value_t = 1e-8)]
    stop_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    refine_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    max_residual: f64,
}

#[derive(Args, Debug)]
struct MinmaxArgs {
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 20.0)]
    rho: f64,
    /// Write every curve of the deformed sweepout to `sweepout.csv`.
    #[arg(long)]
    emit_sweepout: bool,
}

#[derive(Args, Debug)]
struct AsymptoticsArgs {
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![20.0, 40.0, 80.0])]
    rhos: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 20.0])]
    radii: Vec<f64>,
    /// Use the s = ½ tent curve of each sweepout instead of running min-max.
    #[arg(long)]
    tent: bool,
    #[arg(long, default_value_t = asymptotics::DEFAULT_TOL_BAND)]
    tol_band: f64,
    /// Use `--segments` at every ρ instead of scaling it with ρ from the
    /// smallest entry of the schedule.
    #[arg(long)]
    fixed_segments: bool,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[command(flatten)]
    metric: MetricArgs,
    /// Base point, comma separated (default `(R₀/2) e₁`).
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 64)]
    directions: usize,
    #[arg(long, default_value_t = 200.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

/// Bad input, reported with exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A numerical failure whose diagnostics were already written.
#[derive(Debug)]
struct Reported(String);

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Reported {}

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

fn geo(e: GeoError) -> anyhow::Error {
    match e {
        GeoError::Config(_) => config_err(e),
        other => other.into(),
    }
}

struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    fn new(dir: Option<PathBuf>) -> anyhow::Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self { dir })
    }

    fn file(&self, name: &str, text: &str) -> anyhow::Result<()> {
        if let Some(d) = &self.dir {
            let path: PathBuf = Path::new(d).join(name);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }

    fn report<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.file(name, &text)?;
        print!("{text}");
        Ok(())
    }
}

fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var("ACGEO_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| config_err(format!("ACGEO_THREADS must be a thread count, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

impl MetricArgs {
    fn spec(&self) -> anyhow::Result<MetricSpec> {
        if let Some(path) = &self.metric {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
            return MetricSpec::from_json(&text).map_err(geo);
        }
        let perturbation = match (self.cap, self.bump_amplitude, self.bump_mu) {
            (Some(r), _, _) => Perturbation::RotationalCap {
                transition_radius: r,
                profile_exponent: 3,
            },
            (None, Some(amplitude), Some(mu)) => Perturbation::PowerBump {
                amplitude,
                mu,
                center_scale: 1.0,
            },
            _ => Perturbation::None,
        };
        let cfg = MetricConfig {
            n: self.n,
            alpha_sin: self.sin_alpha,
            perturbation,
            regularization_delta: self.regularization,
        };
        MetricSpec::try_from(cfg).map_err(geo)
    }
}

impl RunArgs {
    fn setup(&self, n: usize, rho: f64, seed: u64, exec: Execution) -> anyhow::Result<MinMaxSetup> {
        for (name, v) in [
            ("stop-tol", self.stop_tol),
            ("refine-tol", self.refine_tol),
            ("max-residual", self.max_residual),
            ("kappa", self.kappa),
            ("c-star", self.c_star),
        ] {
            if !(v > 0.0) {
                return Err(config_err(format!("--{name} must be positive")));
            }
        }
        let mut setup = MinMaxSetup::new(n, rho);
        if let Some(x) = self.xi_count {
            setup.xi_count = x;
        }
        setup.s_count = self.s_count;
        setup.segments = self.segments;
        setup.c_star = self.c_star;
        setup.kappa = self.kappa;
        setup.seed = seed;
        setup.params.flow.gradient = match self.gradient {
            Gradient::L2 => GradientKind::L2,
            Gradient::Sobolev => GradientKind::Sobolev,
        };
        setup.params.steps_per_round = self.steps_per_round;
        setup.params.max_rounds = self.max_rounds;
        setup.params.stop_tol = self.stop_tol;
        setup.params.refine_tol = self.refine_tol;
        setup.params.max_residual = self.max_residual;
        setup.params.exec = exec;
        Ok(setup)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let exec = exec::configure_threads(threads_from_env()?);
    let out = Output::new(cli.out)?;
    match cli.command {
        Command::ConeGeodesics(a) => cone_geodesics(&a, &out),
        Command::LimitAngle(a) => limit_angle(&a, &out),
        Command::Minmax(a) => minmax(&a, cli.seed, exec, &out),
        Command::Asymptotics(a) => asymptotics_cmd(&a, cli.seed, exec, &out),
        Command::PropernessProbe(a) => probe(&a, exec, &out),
    }
}

#[derive(Serialize)]
struct ClassRow {
    winding: usize,
    length: f64,
    subtended_angle: f64,
    departure_angle: f64,
    /// Orientations present (`+1`, `−1`).
    signs: Vec<i8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_min_radius: Option<f64>,
}

fn cone_geodesics(a: &ConeGeodesicsArgs, out: &Output) -> anyhow::Result<()> {
    let alpha = OpeningAngle::from_sin(a.sin_alpha).map_err(geo)?;
    if !(a.rho > 0.0) {
        return Err(config_err("--rho must be positive"));
    }
    let geodesics = cone_geometry::enumerate_antipodal_geodesics(a.rho, alpha, a.n).map_err(geo)?;
    let mut classes: Vec<ClassRow> = Vec::new();
    for d in &geodesics {
        match classes.last_mut() {
            Some(c) if c.winding == d.winding => c.signs.push(d.sign),
            _ => classes.push(ClassRow {
                winding: d.winding,
                length: d.length,
                subtended_angle: d.subtended_angle,
                departure_angle: d.departure_angle,
                signs: vec![d.sign],
                oracle_length: None,
                oracle_rel_error: None,
                oracle_min_radius: None,
            }),
        }
    }
    let mut oracle_scan = None;
    if a.oracle {
        for c in &mut classes {
            let o = oracle::antipodal_class(a.rho, c.winding, alpha, a.oracle_segments)?;
            c.oracle_length = Some(o.length);
            c.oracle_rel_error = Some((o.length - c.length).abs() / c.length);
            c.oracle_min_radius = Some(o.min_radius);
        }
        let scan = oracle::scan_classes(a.rho, alpha, a.oracle_segments)?;
        oracle_scan = Some(scan);
    }
    let oracle_class_count = oracle_scan.as_ref().map(|s| s.iter().filter(|c| c.admissible).count());
    let mut csv = String::from("winding,length,subtended_angle,departure_angle,oracle_length,oracle_rel_error\n");
    for c in &classes {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        csv.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{},{}\n",
            c.winding,
            c.length,
            c.subtended_angle,
            c.departure_angle,
            opt(c.oracle_length),
            opt(c.oracle_rel_error)
        ));
    }
    out.file("cone_geodesics.csv", &csv)?;
    let descriptors: Vec<&ConeGeodesicDescriptor> = geodesics.iter().collect();
    out.report(
        "cone_geodesics.json",
        &json!({
            "sin_alpha": a.sin_alpha,
            "rho": a.rho,
            "n": a.n,
            "excluded": alpha.is_excluded(),
            "class_count": classes.len(),
            "admissible_winding_count": cone_geometry::admissible_winding_count(alpha),
            "classes": classes,
            "geodesics": descriptors,
            "oracle_class_count": oracle_class_count,
            "oracle_scan": oracle_scan,
        }),
    )
}

fn limit_angle(a: &LimitAngleArgs, out: &Output) -> anyhow::Result<()> {
    let alpha = OpeningAngle::from_sin(a.sin_alpha).map_err(geo)?;
    if !(a.t_long > 0.0 && a.closest > 0.0 && a.tol > 0.0) {
        return Err(config_err("--t-long, --closest and --tol must be positive"));
    }
    let la = cone_geometry::limit_angle(alpha);
    let measured = geodesic_flow::line_end_angle(alpha, a.t_long, a.closest, a.tol).map_err(geo)?;
    out.report(
        "limit_angle.json",
        &json!({
            "sin_alpha": a.sin_alpha,
            "excluded": alpha.is_excluded(),
            "k": la.k,
            "k_angle": la.angle,
            "t_long": a.t_long,
            "closest": a.closest,
            "measured_angle": measured,
            "abs_error": (measured - la.angle).abs(),
        }),
    )
}

fn curve_csv(report: &PipelineReport) -> String {
    report
        .minmax
        .critical_curve
        .as_ref()
        .map(|c| c.to_csv())
        .unwrap_or_default()
}

fn history_csv(report: &PipelineReport) -> String {
    let mut s = String::from("round,max_energy\n");
    for (k, e) in report.minmax.history.iter().enumerate() {
        s.push_str(&format!("{k},{e:.16e}\n"));
    }
    s
}

fn minmax(a: &MinmaxArgs, seed: u64, exec: Execution, out: &Output) -> anyhow::Result<()> {
    let spec = a.metric.spec()?;
    let setup = a.run.setup(spec.n, a.rho, seed, exec)?;
    let (report, failed) = match sweepout_minmax::run_pipeline(&spec, &setup) {
        Ok(r) => (r, false),
        Err(MinMaxError::PipelineEscape(r)) => (*r, true),
        Err(MinMaxError::Geo(e)) => return Err(geo(e)),
        Err(e) => return Err(e.into()),
    };
    out.file("critical_curve.csv", &curve_csv(&report))?;
    out.file("history.csv", &history_csv(&report))?;
    if a.emit_sweepout {
        if let Some(sw) = &report.minmax.sweepout {
            out.file("sweepout.csv", &sw.to_csv())?;
        }
    }
    out.report(
        "minmax.json",
        &json!({
            "status": if failed { "saddle_escape" } else { "ok" },
            "metric": MetricConfig::from(&spec),
            "setup": setup,
            "report": report,
        }),
    )?;
    if failed {
        return Err(Reported(format!(
            "saddle search failed: residual {:e} above {:e}",
            report.minmax.residual, setup.params.max_residual
        ))
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct RhoRun {
    rho: f64,
    segments: usize,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_over_4rho2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    morse_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    closest_approach: Option<f64>,
}

#[derive(Serialize)]
struct CrossingRow {
    rho: f64,
    #[serde(flatten)]
    record: CrossingRecord,
    set: &'static str,
}

fn asymptotics_cmd(a: &AsymptoticsArgs, seed: u64, exec: Execution, out: &Output) -> anyhow::Result<()> {
    let spec = a.metric.spec()?;
    if a.rhos.is_empty() || a.radii.is_empty() {
        return Err(config_err("--rhos and --radii must be nonempty"));
    }
    if a.rhos.iter().chain(&a.radii).any(|&v| !(v > 0.0)) || !(a.tol_band > 0.0) {
        return Err(config_err("radii and the tangency band must be positive"));
    }
    let alpha = spec
        .alpha()
        .ok_or_else(|| config_err("asymptotics needs a conical model metric"))?;
    let rho_min = a.rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let setups = a
        .rhos
        .iter()
        .map(|&rho| {
            let mut setup = a.run.setup(spec.n, rho, seed, Execution::Sequential)?;
            if !a.fixed_segments {
                // keep the mesh width of the smallest ρ
                let n = (a.run.segments as f64 * rho / rho_min / 2.0).round() as usize * 2;
                setup.segments = n.max(2);
            }
            Ok(setup)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let results = exec::map_ordered(exec, &setups, |_, setup| {
        if a.tent {
            let xi = sweepout_minmax::xi_grid(spec.n, 2).map(|g| g[0].clone());
            xi.and_then(|xi| sweepout_minmax::tent_curve(setup.rho, alpha, &xi, 0.0, setup.segments))
                .map(|c| (c, None))
                .map_err(MinMaxError::Geo)
        } else {
            sweepout_minmax::run_pipeline(&spec, setup).map(|r| {
                (
                    r.minmax.critical_curve.clone().expect("pipeline keeps the curve"),
                    Some(r),
                )
            })
        }
    });
    let mut runs = Vec::new();
    let mut curves = Vec::new();
    let mut any_failed = false;
    for (setup, res) in setups.iter().zip(results) {
        let rho = setup.rho;
        match res {
            Ok((curve, rep)) => {
                runs.push(RhoRun {
                    rho,
                    segments: setup.segments,
                    status: "ok".into(),
                    error: None,
                    lambda_over_4rho2: rep.as_ref().map(|r| r.minmax.lambda_over_4rho2),
                    residual: rep.as_ref().map(|r| r.minmax.residual),
                    morse_index: rep.as_ref().and_then(|r| r.minmax.morse_index),
                    closest_approach: Some(curve.closest_approach().0),
                });
                curves.push((rho, curve));
            }
            Err(e) => {
                any_failed = true;
                runs.push(RhoRun {
                    rho,
                    segments: setup.segments,
                    status: "failed".into(),
                    error: Some(e.to_string()),
                    lambda_over_4rho2: None,
                    residual: None,
                    morse_index: None,
                    closest_approach: None,
                });
            }
        }
    }
    let mut a_dir = vec![0.0; spec.n];
    a_dir[0] = 1.0;
    let a_star: Vec<f64> = a_dir.iter().map(|x| -x).collect();
    let nontwist: NonTwistReport = asymptotics::nontwist_report(&curves, &a.radii, &a_dir, &a_star, a.tol_band)?;
    let mut crossings = Vec::new();
    for (rho, curve) in &curves {
        for &r in &nontwist.radii {
            if *rho <= r {
                continue;
            }
            let sets = asymptotics::classify_crossings(curve, r, a.tol_band)?;
            for (set, list) in [("minus", &sets.minus), ("plus", &sets.plus), ("circ", &sets.circ)] {
                crossings.extend(list.iter().map(|record| CrossingRow {
                    rho: *rho,
                    record: record.clone(),
                    set,
                }));
            }
        }
    }
    let largest = nontwist.radii.last().copied().unwrap_or(0.0);
    let circ_at_largest: usize = nontwist
        .rows
        .iter()
        .filter(|r| r.r == largest)
        .map(|r| r.circ_count)
        .sum();
    let mut crossing_csv = String::from("rho,r,set,t,angle,kind,ambiguous\n");
    for c in &crossings {
        crossing_csv.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{:?},{}\n",
            c.rho, c.record.r, c.set, c.record.t, c.record.angle, c.record.kind, c.record.ambiguous
        ));
    }
    out.file("nontwist.csv", &nontwist.to_csv())?;
    out.file("crossings.csv", &crossing_csv)?;
    for (rho, curve) in &curves {
        out.file(&format!("curve_rho_{rho}.csv"), &curve.to_csv())?;
    }
    out.report(
        "asymptotics.json",
        &json!({
            "metric": MetricConfig::from(&spec),
            "tent": a.tent,
            "runs": runs,
            "nontwist": nontwist,
            "circ_count_at_largest_radius": circ_at_largest,
            "all_connected": nontwist.rows.iter().all(|r| r.minus_connected && r.plus_connected),
            "crossings": crossings,
        }),
    )?;
    if any_failed {
        return Err(Reported("min-max failed for part of the schedule".into()).into());
    }
    Ok(())
}

fn probe(a: &ProbeArgs, exec: Execution, out: &Output) -> anyhow::Result<()> {
    let spec = a.metric.spec()?;
    let x = match &a.x {
        Some(x) => x.clone(),
        None => {
            let mut x = vec![0.0; spec.n];
            x[0] = 0.5 * a.r;
            x
        }
    };
    if x.len() != spec.n {
        return Err(config_err(format!("--x needs {} coordinates", spec.n)));
    }
    if !(a.r > 0.0 && a.t_max > 0.0 && a.tol > 0.0) || a.directions == 0 {
        return Err(config_err("--r, --t-max, --tol and --directions must be positive"));
    }
    let report = geodesic_flow::properness_probe(&spec, &x, a.r, a.directions, a.t_max, a.tol, exec).map_err(geo)?;
    out.report(
        "probe.json",
        &json!({ "metric": MetricConfig::from(&spec), "probe": report }),
    )?;
    if report.failures > 0 {
        return Err(anyhow!("{} rays failed to integrate", report.failures));
    }
    Ok(())
}
