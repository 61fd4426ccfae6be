//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code:
//! 0 success, 2 invalid input, 3 certification failure, 4 numerical
//! failure, 5 pipeline stage failure.

use crate::entropy::{
    bowen_entropy_estimate, certify_pseudo_horseshoe, count_cylinders, to_bits, CylinderReport, Density,
    EntropyError, Framed, HorseshoeCertificate, HorseshoeFrame, OracleError, Refinement, TorusMap,
};
use crate::fields::{ExactMap, build_horseshoe_block, build_infinite_entropy_field, build_rotation_bump, FieldError, FieldSpec};
use crate::flow::{integrate, time_t_map, trajectory, trajectory_csv, FlowError, IntegratorConfig, MapGrid};
use crate::pipeline::{flat_csv, recertify, run_pipeline, PipelineConfig, PipelineReport};
use crate::torus::{Box2, TorusPoint, Vec2};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_STAGE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "osgood", version, about = "Flow maps of Osgood fields on the torus and certified entropy bounds")]
pub struct Cli {
    /// Relative integrator tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Overrides the seed of randomized stages.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a field spec.
    Construct {
        #[command(subcommand)]
        kind: ConstructKind,
    },
    /// Integrate a field: one point, a trajectory, or a map grid.
    Flow(FlowArgs),
    /// Entropy of the time-one map by certificate, cylinder count or
    /// Bowen sampling.
    Entropy(EntropyArgs),
    /// Certify a horseshoe, or re-certify a pipeline result under its
    /// stored perturbations.
    Certify(CertifyArgs),
    /// Run the generic-perturbation pipeline from a config file.
    GenericPerturb {
        #[arg(long)]
        config: PathBuf,
    },
    /// Convert a map grid, cylinder report or pipeline report to CSV.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConstructKind {
    /// Horseshoe block with `N` strips supported in the ball of radius `eps`.
    Horseshoe {
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
    },
    /// Rotation by pi of the ball of radius rho/2.
    Bump {
        #[arg(long, value_parser = parse_pair)]
        center: [f64; 2],
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        anchor: f64,
    },
    /// Ladder of horseshoe blocks N = 2..=nmax on disjoint balls.
    Example32 {
        #[arg(long)]
        nmax: usize,
    },
    /// Constant velocity.
    Drift {
        #[arg(long, value_parser = parse_pair)]
        velocity: [f64; 2],
    },
    Zero,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_parser = parse_pair)]
    pub point: Option<[f64; 2]>,
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
    /// Write the accepted steps as CSV instead of the end point.
    #[arg(long)]
    pub trajectory: bool,
    /// Map a `grid x grid` lattice of the period cell.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Certify,
    Cylinders,
    Bowen,
}

/// Where the horseshoe frame sits; unset values come from the spec's
/// manifest.
#[derive(Debug, Args, Clone)]
pub struct FrameArgs {
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub frame_scale: Option<f64>,
    #[arg(long, value_parser = parse_pair)]
    pub center: Option<[f64; 2]>,
    /// Use the closed-form stage map instead of integration.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 1000)]
    pub per_segment: usize,
    #[arg(long, default_value_t = 101)]
    pub square: usize,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Certify)]
    pub method: Method,
    #[command(flatten)]
    pub frame: FrameArgs,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Keep witness curves in the cylinder report.
    #[arg(long)]
    pub witnesses: bool,
    /// Orbit length for Bowen sampling.
    #[arg(long = "n", default_value_t = 6)]
    pub orbit_length: usize,
    #[arg(long, default_value_t = 1.0 / 128.0)]
    pub bowen_eps: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Sample the whole period cell instead of the frame square.
    #[arg(long)]
    pub whole_torus: bool,
    /// Report entropies in bits.
    #[arg(long)]
    pub bits: bool,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, conflicts_with = "report")]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub frame: FrameArgs,
    /// Pipeline report whose field is re-certified.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Index of the stored perturbation to add; all when absent.
    #[arg(long, requires = "report")]
    pub perturbation: Option<usize>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(m: impl std::fmt::Display) -> Self {
        CliError { code: EXIT_INVALID, message: m.to_string() }
    }

    fn numeric(m: impl std::fmt::Display) -> Self {
        CliError { code: EXIT_NUMERIC, message: m.to_string() }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        let code = match e {
            FieldError::CertificationFailed { .. } => EXIT_CERTIFICATION,
            _ => EXIT_INVALID,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<EntropyError> for CliError {
    fn from(e: EntropyError) -> Self {
        match e {
            EntropyError::OracleFailure { .. } => CliError::numeric(e),
            _ => CliError::invalid(e),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::InvalidParams(_) => CliError::invalid(e),
            _ => CliError::numeric(e),
        }
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected x,y but got {s:?}"));
    }
    let num = |p: &str| p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"));
    Ok([num(parts[0])?, num(parts[1])?])
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code. Messages go to stderr, results to `--out` or stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    if !(cli.tol > 0.0) {
        return Err(CliError::invalid(format!("--tol {} must be positive", cli.tol)));
    }
    if cli.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let cfg = IntegratorConfig::with_tol(cli.tol);
    match &cli.command {
        Command::Construct { kind } => construct(cli, kind),
        Command::Flow(a) => flow(cli, a, &cfg),
        Command::Entropy(a) => entropy(cli, a, &cfg),
        Command::Certify(a) => certify(cli, a, &cfg),
        Command::GenericPerturb { config } => generic_perturb(cli, config),
        Command::Export { input, format } => export(cli, input, format),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::invalid(format!("{}: {e}", p.display()))),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

/// Status lines: stdout when the result went to a file, else stderr.
fn note(cli: &Cli, line: &str) {
    if cli.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn read_spec(path: &Path) -> Result<FieldSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    Ok(FieldSpec::from_json(&text)?)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn construct(cli: &Cli, kind: &ConstructKind) -> Result<i32, CliError> {
    let spec = match kind {
        ConstructKind::Horseshoe { n, eps } => build_horseshoe_block(*n, *eps, None)?,
        ConstructKind::Bump { center, rho, eta, anchor } => {
            build_rotation_bump(TorusPoint::new(center[0], center[1]), *rho, *eta, *anchor)?
        }
        ConstructKind::Example32 { nmax } => build_infinite_entropy_field(*nmax)?,
        ConstructKind::Drift { velocity } => FieldSpec::drift(Vec2::new(velocity[0], velocity[1])),
        ConstructKind::Zero => FieldSpec::zero(),
    };
    emit(cli, &spec.to_json_pretty())?;
    note(cli, &format!("digest: {}", spec.digest()));
    note(cli, &format!("blocks: {}", spec.blocks.len()));
    if let ConstructKind::Horseshoe { .. } = kind {
        let margin = spec.manifest.as_ref().and_then(|m| m["margin"].as_f64()).unwrap_or(f64::NAN);
        note(cli, &format!("certified: true, margin: {margin}"));
    }
    Ok(EXIT_OK)
}

fn flow(cli: &Cli, a: &FlowArgs, cfg: &IntegratorConfig) -> Result<i32, CliError> {
    let spec = read_spec(&a.spec)?;
    if let Some(res) = a.grid {
        let grid = time_t_map(&spec, res, a.time, cfg)?;
        emit(cli, &to_json(&grid))?;
        return Ok(EXIT_OK);
    }
    let p = a.point.ok_or_else(|| CliError::invalid("flow needs --point or --grid"))?;
    let x0 = TorusPoint::new(p[0], p[1]);
    if a.trajectory {
        emit(cli, &trajectory_csv(&trajectory(&spec, &x0, a.time, cfg)?))?;
    } else {
        emit(cli, &to_json(&integrate(&spec, &x0, a.time, cfg)?))?;
    }
    Ok(EXIT_OK)
}

fn manifest_value(spec: &FieldSpec, key: &str) -> Option<f64> {
    spec.manifest.as_ref().and_then(|m| m.get(key)).and_then(|v| v.as_f64())
}

fn resolve_frame(spec: &FieldSpec, f: &FrameArgs) -> Result<HorseshoeFrame, CliError> {
    let n = f
        .n
        .or_else(|| manifest_value(spec, "N").map(|v| v as usize))
        .ok_or_else(|| CliError::invalid("no --N given and the spec has no manifest N"))?;
    let scale = f
        .frame_scale
        .or_else(|| manifest_value(spec, "frame_scale"))
        .ok_or_else(|| CliError::invalid("no --frame-scale given and the spec has no manifest frame_scale"))?;
    Ok(HorseshoeFrame::new(n, scale, f.center.unwrap_or([0.0, 0.0]))?)
}

/// The time-one map of a spec, in closed form or by integration.
enum TimeOne<'a> {
    Exact(ExactMap),
    Integrated(&'a FieldSpec, IntegratorConfig),
}

impl TorusMap for TimeOne<'_> {
    fn image(&self, p: &TorusPoint) -> Result<TorusPoint, OracleError> {
        match self {
            TimeOne::Exact(map) => Ok(map.apply(p)),
            TimeOne::Integrated(spec, cfg) => {
                integrate(spec, p, 1.0, cfg).map(|r| r.point).map_err(|e| OracleError(e.to_string()))
            }
        }
    }
}

fn time_one_map(spec: &FieldSpec, exact: bool, cfg: IntegratorConfig) -> Result<TimeOne<'_>, CliError> {
    if exact {
        let map = spec.exact_map().ok_or_else(|| CliError::invalid("the spec has no closed-form time-one map"))?;
        Ok(TimeOne::Exact(map))
    } else {
        Ok(TimeOne::Integrated(spec, cfg))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum EntropyReport {
    Certify { certificate: HorseshoeCertificate, bound: f64, units: String },
    Cylinders { cylinders: CylinderReport, units: String },
    Bowen { estimate: f64, orbit_length: usize, eps: f64, samples: usize, region: Box2, units: String },
}

fn certify_spec(spec: &FieldSpec, f: &FrameArgs, cfg: &IntegratorConfig) -> Result<HorseshoeCertificate, CliError> {
    let frame = resolve_frame(spec, f)?;
    let map = time_one_map(spec, f.exact, *cfg)?;
    let framed = Framed { map: &map, frame: &frame };
    let density = Density { per_segment: f.per_segment, square: f.square };
    Ok(certify_pseudo_horseshoe(&framed, &frame, density)?)
}

fn entropy(cli: &Cli, a: &EntropyArgs, cfg: &IntegratorConfig) -> Result<i32, CliError> {
    let spec = read_spec(&a.spec)?;
    let units = if a.bits { "bits" } else { "nats" }.to_string();
    let convert = |nats: f64| if a.bits { to_bits(nats) } else { nats };
    let (report, ok) = match a.method {
        Method::Certify => {
            let certificate = certify_spec(&spec, &a.frame, cfg)?;
            let bound = if certificate.pass { convert(certificate.bound_nats) } else { 0.0 };
            let ok = certificate.pass;
            (EntropyReport::Certify { certificate, bound, units }, ok)
        }
        Method::Cylinders => {
            let frame = resolve_frame(&spec, &a.frame)?;
            let map = time_one_map(&spec, a.frame.exact, *cfg)?;
            let framed = Framed { map: &map, frame: &frame };
            let refinement = Refinement { keep_witnesses: a.witnesses, ..Default::default() };
            let mut cylinders = count_cylinders(&framed, &frame, a.depth, refinement)?;
            cylinders.rate = convert(cylinders.rate);
            let ok = cylinders.realized == cylinders.total && cylinders.semiconjugacy_failures.is_empty();
            (EntropyReport::Cylinders { cylinders, units }, ok)
        }
        Method::Bowen => {
            let region = if a.whole_torus || (a.frame.n.is_none() && manifest_value(&spec, "N").is_none()) {
                Box2::closed(-1.0, 1.0, -1.0, 1.0)
            } else {
                let frame = resolve_frame(&spec, &a.frame)?;
                let lo = frame.to_torus(Vec2::new(-0.25, -0.25)).as_vec();
                let w = 0.5 * frame.scale;
                Box2::closed(lo.x, lo.x + w, lo.y, lo.y + w)
            };
            let map = time_one_map(&spec, a.frame.exact, *cfg)?;
            let estimate = convert(bowen_entropy_estimate(&map, &region, a.orbit_length, a.bowen_eps, a.samples)?);
            let report = EntropyReport::Bowen {
                estimate,
                orbit_length: a.orbit_length,
                eps: a.bowen_eps,
                samples: a.samples,
                region,
                units,
            };
            (report, true)
        }
    };
    emit(cli, &to_json(&report))?;
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATION })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecertificationRow {
    pub perturbation: usize,
    pub description: String,
    pub ln_norm: f64,
    pub certificate: HorseshoeCertificate,
    pub bound: f64,
    pub above_target: bool,
}

fn certify(cli: &Cli, a: &CertifyArgs, cfg: &IntegratorConfig) -> Result<i32, CliError> {
    if let Some(path) = &a.spec {
        let spec = read_spec(path)?;
        let certificate = certify_spec(&spec, &a.frame, cfg)?;
        let pass = certificate.pass;
        emit(cli, &to_json(&certificate))?;
        note(cli, &format!("certified: {pass}, margin: {}", certificate.margin));
        return Ok(if pass { EXIT_OK } else { EXIT_CERTIFICATION });
    }
    let path = a.report.as_ref().ok_or_else(|| CliError::invalid("certify needs --spec or --report"))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let report: PipelineReport = serde_json::from_str(&text).map_err(CliError::invalid)?;
    let indices: Vec<usize> = match a.perturbation {
        Some(k) if k >= report.perturbations.len() => {
            return Err(CliError::invalid(format!("report holds {} perturbations", report.perturbations.len())))
        }
        Some(k) => vec![k],
        None => (0..report.perturbations.len()).collect(),
    };
    let mut rows = Vec::new();
    for k in indices {
        let stored = &report.perturbations[k];
        let (certificate, bound) = recertify(&report, &stored.block).map_err(CliError::numeric)?;
        let above_target = certificate.pass && bound > report.config.k_target;
        rows.push(RecertificationRow {
            perturbation: k,
            description: stored.description.clone(),
            ln_norm: stored.ln_norm,
            certificate,
            bound,
            above_target,
        });
    }
    let ok = rows.iter().all(|r| r.above_target);
    emit(cli, &to_json(&rows))?;
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATION })
}

fn generic_perturb(cli: &Cli, path: &Path) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let mut config: PipelineConfig = serde_json::from_str(&text).map_err(CliError::invalid)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.integrator = IntegratorConfig { rel_tol: cli.tol, abs_tol: cli.tol * 1e-3, ..config.integrator };
    config.validate().map_err(CliError::invalid)?;
    let base = config.load_base(path.parent()).map_err(CliError::invalid)?;
    match run_pipeline(&config, &base) {
        Ok(report) => {
            emit(cli, &report.to_json())?;
            note(
                cli,
                &format!(
                    "success: {}, bound: {}, budget: {} of {}",
                    report.success, report.certification.bound, report.budget.total, report.budget.limit
                ),
            );
            Ok(if report.success { EXIT_OK } else { EXIT_CERTIFICATION })
        }
        Err(e) => {
            eprintln!("pipeline stage failed: {}", e.stage);
            Err(CliError { code: EXIT_STAGE, message: e.to_string() })
        }
    }
}

/// CSV of witness polylines: one row per vertex.
pub fn witnesses_csv(report: &CylinderReport) -> String {
    let mut s = String::from("word,vertex,x,y\n");
    for w in &report.witnesses {
        let word: Vec<String> = w.word.iter().map(usize::to_string).collect();
        let word = word.join("-");
        for (k, p) in w.witness.iter().enumerate() {
            s.push_str(&format!("{word},{k},{},{}\n", p[0], p[1]));
        }
    }
    s
}

fn export(cli: &Cli, input: &Path, format: &str) -> Result<i32, CliError> {
    if !format.eq_ignore_ascii_case("csv") {
        return Err(CliError::invalid(format!("unknown export format {format:?}")));
    }
    let text = std::fs::read_to_string(input).map_err(|e| CliError::invalid(format!("{}: {e}", input.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(CliError::invalid)?;
    let csv = if value.get("images").is_some() {
        let grid: MapGrid = serde_json::from_value(value).map_err(CliError::invalid)?;
        grid.to_csv()
    } else if let Some(c) = value.get("cylinders").or_else(|| value.get("witnesses").map(|_| &value)) {
        let report: CylinderReport = serde_json::from_value(c.clone()).map_err(CliError::invalid)?;
        witnesses_csv(&report)
    } else {
        flat_csv(&value)
    };
    emit(cli, &csv)?;
    Ok(EXIT_OK)
}
