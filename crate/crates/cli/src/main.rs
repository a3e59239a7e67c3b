//! `ct`: classify initial data, emit threshold curves, cross-check the
//! classifiers and simulate the aggregation model.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use ct_core::aggregation::{
    audit_frame, ep_params_of_mass, simulate, AggregationField, AuditTolerances, DecayCertificate,
    FrameAudit, SimOptions, SimStatus,
};
use ct_core::characteristic::{HorizonPolicy, OracleOptions};
use ct_core::curves::{
    integrate_q, Branch, CurveSet, CurveSidecar, ThresholdCurve, DEFAULT_CURVE_TOL,
};
use ct_core::explicit::classify_tol;
use ct_core::grid::GridSpec;
use ct_core::verify::{verify_grid, VerifyOptions, DEFAULT_GEOMETRIC_BAND};
use ct_core::{CtError, EPParams, Verdict, DEFAULT_BOUNDARY_TOL};

const EXIT_DISAGREE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_BREAKDOWN: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "ct", version, about = "Critical thresholds for damped Euler-Poisson systems")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify one point or a grid of initial data.
    Classify(ClassifyArgs),
    /// Emit a threshold curve and its sidecar.
    Curve(CurveArgs),
    /// Cross-check formulas, curves and direct simulation on a grid.
    Verify(VerifyArgs),
    /// Simulate the aggregation model from a field file.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
struct ParamArgs {
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Total mass of the aggregation model; sets ν = 1, k = 2, c = M0/2.
    #[arg(long = "M0", allow_hyphen_values = true)]
    m0: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<EPParams, CtError> {
        match (self.nu, self.k, self.c, self.m0) {
            (Some(nu), Some(k), Some(c), None) => EPParams::new(nu, k, c),
            (None, None, None, Some(m0)) => ep_params_of_mass(m0),
            _ => Err(CtError::InvalidParams(
                "give either all of --nu --k --c or only --M0".into(),
            )),
        }
    }

    fn meta(&self, params: &EPParams) -> serde_json::Value {
        let mut v = json!({"nu": params.nu, "k": params.k, "c": params.c});
        if let Some(m0) = self.m0 {
            v["M0"] = json!(m0);
        }
        v
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Plane {
    #[value(name = "s-q")]
    SQ,
    #[value(name = "rho-d")]
    RhoD,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, allow_hyphen_values = true)]
    rho0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    d0: Option<f64>,
    /// `rho0=lo:hi:count,d0=lo:hi:count`
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_TOL)]
    boundary_tol: f64,
    /// Output format; points default to json, grids to csv.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Qa, Qb, Q1 or Q2; defaults to the upper branch of the regime.
    #[arg(long)]
    branch: Option<String>,
    #[arg(long)]
    smax: Option<f64>,
    #[arg(long, value_enum, default_value = "s-q")]
    plane: Plane,
    #[arg(long, default_value_t = DEFAULT_CURVE_TOL)]
    tol: f64,
    /// CSV destination; the sidecar goes next to it unless --sidecar is set.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value = "rho0=0.05:4:41,d0=-6:2:41")]
    grid: String,
    #[arg(long, default_value_t = DEFAULT_CURVE_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_TOL)]
    boundary_tol: f64,
    #[arg(long, default_value_t = DEFAULT_GEOMETRIC_BAND)]
    band: f64,
    /// Fixed oracle horizon instead of the regime default.
    #[arg(long)]
    horizon: Option<f64>,
    /// Use this curve CSV in place of the computed branch named by --sidecar.
    #[arg(long, requires = "sidecar")]
    curve: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Field CSV with columns alpha,rho0,u0[,d0].
    #[arg(long)]
    input: PathBuf,
    /// Decay certificate JSON {delta, decay_bound, quad_tol}.
    #[arg(long)]
    sidecar: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    /// Number of equally spaced output frames on [0, horizon].
    #[arg(long, default_value_t = 21)]
    frames: usize,
    /// Override the certificate's quadrature tolerance.
    #[arg(long)]
    quad_tol: Option<f64>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Directory for frame CSVs and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(CtError),
    Numeric(CtError),
}

impl From<CtError> for Failure {
    fn from(e: CtError) -> Self {
        if e.is_config_error() {
            Failure::Config(e)
        } else {
            Failure::Numeric(e)
        }
    }
}

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(CtError::InvalidParams(msg.into()))
}

fn meta(command: &str, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "tool": "ct",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "inputs": extra,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Config(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        Failure::Config(CtError::Io(format!("{}: {e}", path.display())))
    })
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config(format!("--{name} must be positive, got {v}")))
    }
}

#[derive(Serialize)]
struct PointOutput<'a> {
    #[serde(flatten)]
    verdict: &'a Verdict,
    meta: serde_json::Value,
}

#[derive(Serialize)]
struct GridRow {
    rho0: f64,
    d0: f64,
    #[serde(flatten)]
    verdict: Verdict,
}

fn cmd_classify(a: &ClassifyArgs) -> Result<u8, Failure> {
    let params = a.params.resolve()?;
    positive("boundary-tol", a.boundary_tol)?;
    let inputs = a.params.meta(&params);
    match (&a.grid, a.rho0, a.d0) {
        (None, Some(rho0), Some(d0)) => {
            let v = classify_tol(&params, rho0, d0, a.boundary_tol)?;
            let m = meta("classify", json!({"params": inputs, "rho0": rho0, "d0": d0}));
            let text = match a.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&PointOutput { verdict: &v, meta: m }),
                Format::Csv => format!("rho0,d0,outcome\n{rho0:.16e},{d0:.16e},{}\n", v.outcome),
            };
            emit(a.out.as_deref(), &text)?;
        }
        (Some(spec), None, None) => {
            let grid: GridSpec = spec.parse()?;
            use rayon::prelude::*;
            let rows: Vec<GridRow> = grid
                .points()
                .into_par_iter()
                .map(|(rho0, d0)| {
                    classify_tol(&params, rho0, d0, a.boundary_tol)
                        .map(|verdict| GridRow { rho0, d0, verdict })
                })
                .collect::<Result<_, _>>()?;
            let text = match a.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut s = String::from("rho0,d0,outcome\n");
                    for r in &rows {
                        s.push_str(&format!("{:.16e},{:.16e},{}\n", r.rho0, r.d0, r.verdict.outcome));
                    }
                    s
                }
                Format::Json => to_json(&json!({
                    "points": rows,
                    "meta": meta("classify", json!({"params": inputs, "grid": grid})),
                })),
            };
            emit(a.out.as_deref(), &text)?;
        }
        _ => return Err(config("give --rho0 and --d0, or --grid")),
    }
    Ok(0)
}

fn cmd_curve(a: &CurveArgs) -> Result<u8, Failure> {
    let params = a.params.resolve()?;
    positive("tol", a.tol)?;
    if let Some(s) = a.smax {
        positive("smax", s)?;
    }
    let branch = match &a.branch {
        Some(b) => b.parse::<Branch>()?,
        None => Branch::upper_for(params.tag()),
    };
    let curve = integrate_q(&params, branch, a.smax, a.tol)?;
    let text = match a.plane {
        Plane::SQ => curve.to_csv(),
        Plane::RhoD => curve.to_rho_d_csv(),
    };
    emit(a.out.as_deref(), &text)?;
    let sidecar_path = a
        .sidecar
        .clone()
        .or_else(|| a.out.as_ref().map(|p| p.with_extension("json")));
    if let Some(p) = sidecar_path {
        fs::write(&p, to_json(&curve.sidecar())).map_err(|e| Failure::Config(e.into()))?;
    }
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> Result<u8, Failure> {
    let params = a.params.resolve()?;
    positive("tol", a.tol)?;
    positive("boundary-tol", a.boundary_tol)?;
    if a.band.is_nan() || a.band < 0.0 {
        return Err(config("--band must be non-negative"));
    }
    let grid: GridSpec = a.grid.parse()?;
    let mut curves = CurveSet::build(&params, a.tol, None)?;
    if let (Some(curve_path), Some(side_path)) = (&a.curve, &a.sidecar) {
        let sidecar = CurveSidecar::from_json(&read(side_path)?)?;
        let curve = ThresholdCurve::from_parts(&read(curve_path)?, &sidecar)?;
        if curve.params.nu != params.nu || curve.params.k != params.k || curve.params.c != params.c {
            return Err(config("curve sidecar parameters differ from --nu/--k/--c"));
        }
        if curve.branch == Branch::Q2 {
            curves.lower = Some(curve);
        } else {
            curves.upper = curve;
        }
    }
    let mut opts = VerifyOptions {
        boundary_tol: a.boundary_tol,
        geometric_band: a.band,
        oracle: OracleOptions::default(),
    };
    if let Some(h) = a.horizon {
        positive("horizon", h)?;
        opts.oracle.horizon = HorizonPolicy::Fixed(h);
    }
    let (report, _) = verify_grid(&params, &curves, &grid, &opts)?;
    let body = json!({
        "n_points": report.n_points,
        "n_agree": report.n_agree,
        "n_boundary_excluded": report.n_boundary_excluded,
        "n_disagree": report.n_disagree,
        "excluded_fraction": report.excluded_fraction(),
        "passed": report.passed(),
        "max_disagreement_location": report.max_disagreement_location,
        "meta": meta("verify", json!({"params": a.params.meta(&params), "grid": grid})),
    });
    emit(a.out.as_deref(), &to_json(&body))?;
    Ok(if report.passed() { 0 } else { EXIT_DISAGREE })
}

#[derive(Serialize)]
struct SimReport {
    #[serde(flatten)]
    status: SimStatus,
    n_frames: usize,
    audits_passed: bool,
    audits: Vec<FrameAudit>,
    meta: serde_json::Value,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<u8, Failure> {
    positive("horizon", a.horizon)?;
    positive("tol", a.tol)?;
    if a.frames < 2 {
        return Err(config("--frames must be at least 2"));
    }
    let mut cert = DecayCertificate::from_json(&read(&a.sidecar)?)?;
    if let Some(q) = a.quad_tol {
        positive("quad-tol", q)?;
        cert.quad_tol = q;
    }
    let field = AggregationField::from_csv(read(&a.input)?.as_bytes(), cert)?;
    let mut opts = SimOptions::uniform(a.horizon, a.frames);
    opts.rtol = a.tol;
    let run = simulate(&field, &opts)?;
    let tol = AuditTolerances::for_field(&field);
    let audits: Vec<FrameAudit> = run.frames.iter().map(|f| audit_frame(f, &field, &tol)).collect();
    let audits_passed = audits.iter().all(FrameAudit::passed);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(e.into()))?;
        for (i, frame) in run.frames.iter().enumerate() {
            fs::write(dir.join(format!("frame_{i:04}.csv")), frame.to_csv(&field.alpha))
                .map_err(|e| Failure::Config(e.into()))?;
        }
    }
    let report = SimReport {
        status: run.status,
        n_frames: run.frames.len(),
        audits_passed,
        audits,
        meta: meta(
            "simulate",
            json!({
                "input": a.input.display().to_string(),
                "horizon": a.horizon,
                "frames": a.frames,
                "M0": field.m0,
                "M1": field.m1,
            }),
        ),
    };
    let text = to_json(&report);
    if let Some(dir) = &a.out {
        fs::write(dir.join("report.json"), &text).map_err(|e| Failure::Config(e.into()))?;
    }
    print!("{text}");
    Ok(match run.status {
        SimStatus::Completed if audits_passed => 0,
        SimStatus::Completed => {
            log::error!("simulation completed but audits failed");
            EXIT_NUMERIC
        }
        SimStatus::BreakdownDetected { .. } => EXIT_BREAKDOWN,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CT_LOG")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            log::warn!("could not size worker pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Classify(a) => cmd_classify(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (code, kind, e) = match f {
                Failure::Config(e) => (EXIT_CONFIG, "config", e),
                Failure::Numeric(e) => (EXIT_NUMERIC, "numerical", e),
            };
            println!("{}", json!({"error": {"kind": kind, "message": e.to_string()}}));
            ExitCode::from(code)
        }
    }
}
