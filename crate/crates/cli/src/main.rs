//! conenorm: cone seminorms, truncated sum-of-squares membership and
//! closure tests for real polynomials, with JSON reports.

mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use conenorm::cones::{sample_kset, ConeError, QuadraticModule, SampleBox};
use conenorm::duality::{closure_membership, ClosureOptions, ClosureVerdict, DualityError};
use conenorm::poly::{max_variable_index, parse, PolyError, Polynomial};
use conenorm::seminorm::{Seminorm, SeminormError, WitnessBudget, DEFAULT_BISECTION_TOL};
use conenorm::sos::{
    membership, verify_certificate, GramCertificate, MembershipStatus, Method, SolverOptions, SosError,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use conenorm::topology::{direct_limit_lb, TopologyError};
use serde_json::{json, Value};

use report::{write_atomic, RunReport};

const EXIT_OK: u8 = 0;
const EXIT_NEGATIVE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NOT_ARCHIMEDEAN: u8 = 3;
const EXIT_UNKNOWN: u8 = 4;
const EXIT_EMPTY: u8 = 5;

#[derive(Parser)]
#[command(
    name = "conenorm",
    version,
    about = "Cone seminorms and sum-of-squares certificates for real polynomials",
    after_help = "EXIT CODES:\n  0 success / Certified / InClosure\n  1 Unknown membership, NotInClosure, failed verification\n  \
                  2 parse, degree or certificate errors\n  3 no Archimedean witness (use dlimit)\n  4 closure Unknown\n  \
                  5 sampled set is empty\n\nEXAMPLES:\n  conenorm seminorm --poly x1 --gens \"1 - x1^2\" --degree 2\n  \
                  conenorm member --poly \"1 + x1\" --gens \"1 - x1^2\" --degree 2 --cert-out cert.json\n  \
                  conenorm verify --cert cert.json --poly \"1 + x1\" --gens \"1 - x1^2\"\n  \
                  conenorm closure --poly x1 --gens-m \"1 - x1^2\"\n  conenorm dlimit --poly x1 --gens x1 --box 0,4"
)]
struct Cli {
    /// Print JSON on a single line
    #[arg(long, global = true)]
    compact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enclose the cone seminorm inf{r : r ± a ∈ M}
    Seminorm(SeminormArgs),
    /// Search for a degree-d certificate of f ∈ M
    Member(MemberArgs),
    /// Test whether f lies in the closure of M (in the T-seminorm topology)
    Closure(ClosureArgs),
    /// Re-check a certificate file independently of the solver
    Verify(VerifyArgs),
    /// Sup of |a| over sampled points of K_M (works for non-Archimedean M)
    Dlimit(DlimitArgs),
}

#[derive(Args)]
struct ModuleArgs {
    /// Generator polynomial (repeatable)
    #[arg(long = "gens", value_name = "POLY")]
    gens: Vec<String>,
    /// Use the preordering (all products of generators)
    #[arg(long)]
    preordering: bool,
}

#[derive(Args)]
struct SolverArgs {
    /// Residual and eigenvalue tolerance for certificates
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::InteriorPoint)]
    method: MethodArg,
}

#[derive(Args)]
struct SampleArgs {
    /// "lo,hi" for every variable or "lo,hi;lo,hi;..." per variable
    #[arg(long = "box", value_name = "BOX")]
    bounds: Option<String>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    InteriorPoint,
    AlternatingProjections,
}

#[derive(Args)]
struct SeminormArgs {
    #[arg(long)]
    poly: String,
    #[command(flatten)]
    module: ModuleArgs,
    #[arg(long)]
    degree: u32,
    /// Number of variables (default: highest index used)
    #[arg(long)]
    nvars: Option<usize>,
    #[command(flatten)]
    sampling: SampleArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Width at which the bisection on r stops
    #[arg(long, default_value_t = DEFAULT_BISECTION_TOL)]
    bisection_tol: f64,
    /// Write the certificates for r + a and r - a into this directory
    #[arg(long, value_name = "DIR")]
    cert_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MemberArgs {
    #[arg(long)]
    poly: String,
    #[command(flatten)]
    module: ModuleArgs,
    #[arg(long)]
    degree: u32,
    #[arg(long)]
    nvars: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the certificate here when membership is certified
    #[arg(long, value_name = "FILE")]
    cert_out: Option<PathBuf>,
}

#[derive(Args)]
struct ClosureArgs {
    #[arg(long)]
    poly: String,
    /// Generators of M (repeatable)
    #[arg(long = "gens-m", value_name = "POLY")]
    gens_m: Vec<String>,
    /// Generators of T (repeatable; default T = M)
    #[arg(long = "gens-t", value_name = "POLY")]
    gens_t: Vec<String>,
    /// Treat M and T as preorderings
    #[arg(long)]
    preordering: bool,
    /// Comma-separated shifts eps for which f + eps must certify
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.1, 0.01])]
    eps_grid: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    dmax: u32,
    #[arg(long)]
    nvars: Option<usize>,
    #[command(flatten)]
    sampling: SampleArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the certificates of the shifted polynomials into this directory
    #[arg(long, value_name = "DIR")]
    cert_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_name = "FILE")]
    cert: PathBuf,
    #[arg(long)]
    poly: String,
    /// Generator polynomial (repeatable); the module kind is read from the certificate
    #[arg(long = "gens", value_name = "POLY")]
    gens: Vec<String>,
    #[arg(long)]
    nvars: Option<usize>,
}

#[derive(Args)]
struct DlimitArgs {
    #[arg(long)]
    poly: String,
    #[command(flatten)]
    module: ModuleArgs,
    #[arg(long)]
    nvars: Option<usize>,
    #[command(flatten)]
    sampling: SampleArgs,
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let err: anyhow::Error = e.into();
        Failure { code: classify(&err), err }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SeminormError>() {
            if matches!(e, SeminormError::NotArchimedean { .. }) {
                return EXIT_NOT_ARCHIMEDEAN;
            }
        }
        if let Some(DualityError::EmptyIntersection) = cause.downcast_ref::<DualityError>() {
            return EXIT_EMPTY;
        }
        if let Some(TopologyError::EmptySample) = cause.downcast_ref::<TopologyError>() {
            return EXIT_EMPTY;
        }
    }
    EXIT_INPUT
}

fn with_code(code: u8, err: anyhow::Error) -> Failure {
    Failure { code, err }
}

type Outcome = Result<(Value, Value, u8), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let (name, out) = match &cli.command {
        Command::Seminorm(a) => ("seminorm", cmd_seminorm(a)),
        Command::Member(a) => ("member", cmd_member(a)),
        Command::Closure(a) => ("closure", cmd_closure(a)),
        Command::Verify(a) => ("verify", cmd_verify(a)),
        Command::Dlimit(a) => ("dlimit", cmd_dlimit(a)),
    };
    match out {
        Ok((inputs, result, code)) => {
            let report = RunReport::new(name, inputs, result, start.elapsed());
            let text = if cli.compact {
                serde_json::to_string(&report)
            } else {
                serde_json::to_string_pretty(&report)
            };
            // A closed pipe (e.g. `| head`) is not worth a panic.
            let _ = writeln!(std::io::stdout().lock(), "{}", text.expect("report serializes"));
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn infer_nvars<'a>(explicit: Option<usize>, texts: impl IntoIterator<Item = &'a String>) -> usize {
    explicit.unwrap_or_else(|| texts.into_iter().map(|t| max_variable_index(t)).max().unwrap_or(0).max(1))
}

fn parse_poly(text: &str, nvars: usize, what: &str) -> Result<Polynomial, Failure> {
    parse(text, nvars)
        .map_err(|e: PolyError| with_code(EXIT_INPUT, anyhow!(e).context(format!("cannot parse {what} {text:?}"))))
}

fn build_module(gens: &[String], preordering: bool, nvars: usize) -> Result<QuadraticModule, Failure> {
    let polys = gens
        .iter()
        .map(|g| parse_poly(g, nvars, "generator"))
        .collect::<Result<Vec<_>, _>>()?;
    let m = if preordering {
        QuadraticModule::preordering(nvars, polys)
    } else {
        QuadraticModule::quadratic(nvars, polys)
    };
    m.map_err(|e: ConeError| with_code(EXIT_INPUT, e.into()))
}

fn parse_box(text: &str, nvars: usize) -> Result<SampleBox, Failure> {
    let bad = |msg: String| with_code(EXIT_INPUT, anyhow!("invalid --box {text:?}: {msg}"));
    let intervals: Vec<(f64, f64)> = text
        .split(';')
        .map(|part| {
            let (lo, hi) = part.split_once(',').ok_or_else(|| bad(format!("{part:?} is not lo,hi")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad(format!("{lo:?} is not a number")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad(format!("{hi:?} is not a number")))?;
            Ok((lo, hi))
        })
        .collect::<Result<_, Failure>>()?;
    let intervals = match intervals.len() {
        1 => vec![intervals[0]; nvars],
        k if k == nvars => intervals,
        k => return Err(bad(format!("{k} intervals for {nvars} variables"))),
    };
    SampleBox::new(intervals).map_err(|e| bad(e.to_string()))
}

fn solver_options(a: &SolverArgs) -> Result<SolverOptions, Failure> {
    if !(a.tol > 0.0) || a.max_iter == 0 {
        return Err(with_code(EXIT_INPUT, anyhow!("--tol must be positive and --max-iter at least 1")));
    }
    let method = match a.method {
        MethodArg::InteriorPoint => Method::InteriorPoint,
        MethodArg::AlternatingProjections => Method::AlternatingProjections,
    };
    Ok(SolverOptions { tol: a.tol, max_iter: a.max_iter, method })
}

fn module_json(m: &QuadraticModule) -> Value {
    json!({
        "generators": m.generators().iter().map(|g| g.to_string()).collect::<Vec<_>>(),
        "kind": m.kind(),
    })
}

fn write_certificate(path: &Path, cert: &GramCertificate) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(cert)?;
    write_atomic(path, text.as_bytes()).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn cmd_seminorm(a: &SeminormArgs) -> Outcome {
    let nvars = infer_nvars(a.nvars, std::iter::once(&a.poly).chain(&a.module.gens));
    let f = parse_poly(&a.poly, nvars, "polynomial")?;
    let m = build_module(&a.module.gens, a.module.preordering, nvars)?;
    if f.degree() > a.degree {
        return Err(SosError::Degree { poly_degree: f.degree(), degree: a.degree }.into());
    }
    let opts = solver_options(&a.solver)?;
    let budget = WitnessBudget { d_max: WitnessBudget::default().d_max.max(a.degree), ..Default::default() };
    let s = Seminorm::new(&m, budget, opts)?.with_bisection_tol(a.bisection_tol)?;
    let bounds = match &a.sampling.bounds {
        Some(b) => parse_box(b, nvars)?,
        None => {
            let r = s.witness().radius_sq.sqrt();
            SampleBox::cube(nvars, -r, r)?
        }
    };
    let samples = sample_kset(&m, &bounds, a.sampling.samples, a.sampling.seed)?;
    if samples.is_empty() {
        return Err(with_code(EXIT_EMPTY, anyhow!("no sample point of K found in the box")));
    }
    let iv = s.interval(&f, a.degree, &samples)?;

    let mut written = Vec::new();
    if let (Some(dir), Some(c)) = (&a.cert_dir, &iv.certificates) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let r = Polynomial::from_f64(nvars, c.r);
        for (name, poly, cert) in [("plus", &r + &f, &c.plus), ("minus", &r - &f, &c.minus)] {
            let path = dir.join(format!("{name}.json"));
            write_certificate(&path, cert)?;
            written.push(json!({"file": path, "poly": poly.to_string()}));
        }
    }

    let inputs = json!({
        "poly": f.to_string(),
        "nvars": nvars,
        "module": module_json(&m),
        "degree": a.degree,
        "box": bounds,
        "samples": a.sampling.samples,
        "seed": a.sampling.seed,
        "bisection_tol": a.bisection_tol,
    });
    let mut result = serde_json::to_value(&iv)?;
    result["gap"] = json!(iv.gap());
    result["witness"] = json!({"radius_sq": s.witness().radius_sq, "degree": s.witness().degree});
    if !written.is_empty() {
        result["certificate_files"] = Value::Array(written);
    }
    Ok((inputs, result, EXIT_OK))
}

fn cmd_member(a: &MemberArgs) -> Outcome {
    let nvars = infer_nvars(a.nvars, std::iter::once(&a.poly).chain(&a.module.gens));
    let f = parse_poly(&a.poly, nvars, "polynomial")?;
    let m = build_module(&a.module.gens, a.module.preordering, nvars)?;
    let opts = solver_options(&a.solver)?;
    let status = membership(&f, &m, a.degree, &opts)?;
    let inputs = json!({
        "poly": f.to_string(),
        "nvars": nvars,
        "module": module_json(&m),
        "degree": a.degree,
        "tol": opts.tol,
        "max_iter": opts.max_iter,
        "method": opts.method,
    });
    match status {
        MembershipStatus::Certified(cert) => {
            if let Some(path) = &a.cert_out {
                write_certificate(path, &cert)?;
            }
            let result = json!({
                "status": "Certified",
                "residual": cert.residual,
                "min_eigenvalue": cert.min_eigenvalue,
                "certificate_file": a.cert_out,
                "certificate": cert,
            });
            Ok((inputs, result, EXIT_OK))
        }
        MembershipStatus::Unknown { iterations, final_residual } => {
            let result = json!({
                "status": "Unknown",
                "iterations": iterations,
                "final_residual": final_residual,
            });
            Ok((inputs, result, EXIT_NEGATIVE))
        }
    }
}

fn cmd_closure(a: &ClosureArgs) -> Outcome {
    let nvars = infer_nvars(a.nvars, std::iter::once(&a.poly).chain(&a.gens_m).chain(&a.gens_t));
    let f = parse_poly(&a.poly, nvars, "polynomial")?;
    let m = build_module(&a.gens_m, a.preordering, nvars)?;
    let t = if a.gens_t.is_empty() { None } else { Some(build_module(&a.gens_t, a.preordering, nvars)?) };
    if a.eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(with_code(EXIT_INPUT, anyhow!("--eps-grid entries must be positive")));
    }
    let bounds = match &a.sampling.bounds {
        Some(b) => parse_box(b, nvars)?,
        None => SampleBox::cube(nvars, -1.0, 1.0)?,
    };
    let opts = ClosureOptions {
        eps_grid: a.eps_grid.clone(),
        d_max: a.dmax,
        bounds: Some(bounds.clone()),
        samples: a.sampling.samples,
        seed: a.sampling.seed,
        solver: solver_options(&a.solver)?,
        ..Default::default()
    };
    let out = closure_membership(&f, &m, t.as_ref(), &opts)?;

    let mut result = serde_json::to_value(&out.verdict)?;
    result["samples"] = json!(out.samples.len());
    let shifts = match &out.verdict {
        ClosureVerdict::InClosure(c) | ClosureVerdict::Unknown(c) => c.as_slice(),
        ClosureVerdict::NotInClosure(_) => &[],
    };
    if let Some(dir) = &a.cert_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let mut written = Vec::new();
        for (i, s) in shifts.iter().enumerate() {
            let path = dir.join(format!("eps-{i}.json"));
            write_certificate(&path, &s.certificate)?;
            let poly = &f + &Polynomial::from_f64(nvars, s.eps);
            written.push(json!({"file": path, "eps": s.eps, "poly": poly.to_string()}));
        }
        result["certificate_files"] = Value::Array(written);
    }
    let inputs = json!({
        "poly": f.to_string(),
        "nvars": nvars,
        "module": module_json(&out.module),
        "eps_grid": a.eps_grid,
        "dmax": a.dmax,
        "box": bounds,
        "samples": a.sampling.samples,
        "seed": a.sampling.seed,
    });
    let code = match out.verdict {
        ClosureVerdict::InClosure(_) => EXIT_OK,
        ClosureVerdict::NotInClosure(_) => EXIT_NEGATIVE,
        ClosureVerdict::Unknown(_) => EXIT_UNKNOWN,
    };
    Ok((inputs, result, code))
}

fn cmd_verify(a: &VerifyArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.cert).with_context(|| format!("cannot read {}", a.cert.display()))?;
    let cert: GramCertificate = serde_json::from_str(&text)
        .map_err(|e| with_code(EXIT_INPUT, anyhow!(e).context("malformed certificate")))?;
    let nvars = match a.nvars {
        Some(n) => n,
        None => cert
            .blocks
            .iter()
            .flat_map(|b| b.basis.first())
            .map(|m| m.nvars())
            .next()
            .unwrap_or_else(|| infer_nvars(None, std::iter::once(&a.poly).chain(&a.gens))),
    };
    let f = parse_poly(&a.poly, nvars, "polynomial")?;
    let m = build_module(&a.gens, cert.preordering, nvars)?;
    let v = verify_certificate(&cert, &f, &m)
        .map_err(|e| with_code(EXIT_INPUT, anyhow!(e).context("certificate does not fit the module")))?;
    let passes = v.passes(cert.tol);
    let inputs = json!({
        "cert": a.cert,
        "poly": f.to_string(),
        "nvars": nvars,
        "module": module_json(&m),
    });
    let result = json!({
        "passes": passes,
        "residual": v.residual,
        "min_eigenvalue": v.min_eigenvalue,
        "tol": cert.tol,
        "degree": cert.degree,
    });
    Ok((inputs, result, if passes { EXIT_OK } else { EXIT_NEGATIVE }))
}

fn cmd_dlimit(a: &DlimitArgs) -> Outcome {
    let nvars = infer_nvars(a.nvars, std::iter::once(&a.poly).chain(&a.module.gens));
    let f = parse_poly(&a.poly, nvars, "polynomial")?;
    let m = build_module(&a.module.gens, a.module.preordering, nvars)?;
    let bounds = match &a.sampling.bounds {
        Some(b) => parse_box(b, nvars)?,
        None => SampleBox::cube(nvars, -1.0, 1.0)?,
    };
    let samples = sample_kset(&m, &bounds, a.sampling.samples, a.sampling.seed)?;
    let (lb, point) = direct_limit_lb(&m, &f, &samples)?;
    let inputs = json!({
        "poly": f.to_string(),
        "nvars": nvars,
        "module": module_json(&m),
        "box": bounds,
        "samples": a.sampling.samples,
        "seed": a.sampling.seed,
    });
    let result = json!({
        "lb": lb,
        "point": point,
        "samples": samples.len(),
        "seed": samples.seed,
    });
    Ok((inputs, result, EXIT_OK))
}
