//! Command-line front end: `eigen`, `resonance-scan`, `mesh` and `validate`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::geometry::build_preset;
use crate::mesh::{generate_refined, write_mesh};
use crate::pipeline::{self, default_window, prepare, MeshSummary, ProblemConfig};
use crate::resonance::{Axis, GridSpec, DEFAULT_IM_COUNT, DEFAULT_LEVELS, DEFAULT_RE_COUNT};
use crate::solver::DEFAULT_TOL;
use crate::validate::{self, FaultInjection};

pub const EXIT_VALIDATE_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "spectral-ends", version, about = "Eigenvalues and resonances of the Laplacian on planar domains with cylindrical ends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Real eigenvalues in one threshold window.
    Eigen(EigenArgs),
    /// Condition-number scan over a grid in the lower half-plane, with zooming.
    ResonanceScan(ScanArgs),
    /// Generate, refine and check or write the mesh.
    Mesh(MeshArgs),
    /// Run the property suites.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct GeometryArgs {
    /// Preset: bent-waveguide, straight-waveguide, obstructed-strip,
    /// cshape-cavity, gaussian-potential, rect-test.
    #[arg(long)]
    geometry: String,
    #[arg(long)]
    angle: Option<f64>,
    #[arg(long)]
    leg: Option<f64>,
    /// Obstacle centre offset (obstructed-strip).
    #[arg(long)]
    delta: Option<f64>,
    /// Obstacle radius (obstructed-strip).
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    length: Option<f64>,
    /// 1 for a Dirichlet (antisymmetric) cut at x = 0.
    #[arg(long)]
    symmetry: Option<f64>,
    /// Gap half-width (cshape-cavity).
    #[arg(long)]
    eps: Option<f64>,
    /// Artificial circle radius.
    #[arg(long)]
    rart: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    /// Uniform refinements of the base mesh.
    #[arg(long, default_value_t = 3)]
    refine: usize,
    /// Base mesh size; defaults to the preset's.
    #[arg(long)]
    h0: Option<f64>,
}

impl GeometryArgs {
    fn params(&self) -> BTreeMap<String, f64> {
        [
            ("angle", self.angle),
            ("leg", self.leg),
            ("delta", self.delta),
            ("radius", self.radius),
            ("length", self.length),
            ("symmetry", self.symmetry),
            ("eps", self.eps),
            ("rart", self.rart),
            ("amplitude", self.amplitude),
            ("decay", self.decay),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
    }
}

#[derive(Args, Debug, Clone)]
struct ProblemArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Cut-off for the interior Neumann eigenpairs.
    #[arg(long = "lambda-max", default_value_t = 50.0)]
    lambda_max: f64,
    /// Transverse modes per interface (total for a circle).
    #[arg(long = "M")]
    m: Option<usize>,
    /// Reference point of the accelerated expansion.
    #[arg(long, allow_hyphen_values = true)]
    lambda0: Option<f64>,
    /// Use the plain truncated expansion.
    #[arg(long = "no-accel")]
    no_accel: bool,
    /// Result document path; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl ProblemArgs {
    fn config(&self) -> Result<ProblemConfig, Error> {
        let mut cfg = ProblemConfig::new(&self.geometry.geometry, self.geometry.params(), self.geometry.refine, self.lambda_max)?;
        if let Some(h0) = self.geometry.h0 {
            if !(h0 > 0.0) {
                return Err(Error::InvalidArgument("--h0 must be positive".into()));
            }
            cfg.h0 = h0;
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(l0) = self.lambda0 {
            cfg.lambda0 = l0;
        }
        cfg.accelerate = !self.no_accel;
        if !(cfg.lambda_max > 0.0) {
            return Err(Error::InvalidArgument("--lambda-max must be positive".into()));
        }
        if cfg.m == 0 {
            return Err(Error::InvalidArgument("--M must be at least 1".into()));
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct EigenArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Threshold window index (0: below kappa_1).
    #[arg(long = "J")]
    j: Option<usize>,
    /// Search interval lo:hi inside the window.
    #[arg(long, allow_hyphen_values = true)]
    search: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Real axis lo:hi[:n].
    #[arg(long, allow_hyphen_values = true)]
    re: String,
    /// Imaginary axis lo:hi[:n], hi <= 0.
    #[arg(long, allow_hyphen_values = true)]
    im: String,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the initial grid as CSV `re,im,cond,logabsdet`.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MeshArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Write the mesh (v1 text format).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report quality and area error.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fault injection for testing the suites themselves.
    #[arg(long = "inject-fault", hide = true, value_parser = ["branch-sign"])]
    inject_fault: Option<String>,
}

#[derive(Serialize)]
struct EigenConfigEcho<'a> {
    problem: &'a ProblemConfig,
    window_index: usize,
    search: (f64, f64),
    tol: f64,
}

#[derive(Serialize)]
struct EigenDocument<'a> {
    command: &'static str,
    config: EigenConfigEcho<'a>,
    mesh: MeshSummary,
    thresholds: &'a [f64],
    mu_count: usize,
    nu_count: usize,
    mu_below: usize,
    nu_below: usize,
    k_bound: usize,
    findings: &'a [crate::solver::EigenFinding],
    subintervals: &'a [(f64, f64)],
    warnings: &'a [String],
    timings: &'a BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct ScanConfigEcho<'a> {
    problem: &'a ProblemConfig,
    grid: GridSpec,
    levels: usize,
    workers: usize,
}

#[derive(Serialize)]
struct ScanDocument<'a> {
    command: &'static str,
    config: ScanConfigEcho<'a>,
    mesh: MeshSummary,
    thresholds: &'a [f64],
    mu_count: usize,
    nudged_nodes: usize,
    invalid_nodes: usize,
    estimates: &'a [crate::resonance::ResonanceEstimate],
    warnings: &'a [String],
    timings: &'a BTreeMap<String, f64>,
}

/// Failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Geometry(_) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

/// Numerical stages report exit code 3 even for argument-like errors raised
/// deep inside them.
fn numerical(e: Error) -> Failure {
    Failure {
        code: EXIT_NUMERICAL,
        message: e.to_string(),
    }
}

fn emit(doc: &impl Serialize, path: Option<&PathBuf>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| numerical(Error::InvalidArgument(e.to_string())))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| numerical(e.into())),
        None => {
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

fn parse_axis(s: &str, default_count: usize) -> Result<Axis, Failure> {
    let full = if s.split(':').count() == 2 {
        format!("{s}:{default_count}")
    } else {
        s.to_string()
    };
    full.parse::<Axis>().map_err(Failure::from)
}

fn parse_interval(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || usage(format!("--search `{s}` is not lo:hi"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn cmd_eigen(a: &EigenArgs) -> Result<(), Failure> {
    let cfg = a.problem.config()?;
    let j = a.j.unwrap_or_else(|| default_window(&cfg.geometry));
    if !(a.tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let search = a.search.as_deref().map(parse_interval).transpose()?;
    let geometry = build_preset(&cfg.geometry, &cfg.params)?;
    if geometry.artificial_circle.is_some() {
        return Err(usage(format!("preset '{}' has an artificial circle; use resonance-scan", cfg.geometry)));
    }
    if j >= cfg.m {
        return Err(usage(format!("--J {j} needs M > J (M = {})", cfg.m)));
    }
    let mut prep = prepare(&cfg, j).map_err(numerical)?;
    if let Some((lo, hi)) = search {
        let (wlo, whi) = crate::solver::window_bounds(&prep.data.kappa, j);
        if lo < wlo || hi > whi || hi > cfg.lambda_max {
            return Err(usage(format!(
                "--search {lo}:{hi} must lie in window [{wlo}, {whi}) and below lambda_max"
            )));
        }
    }
    let out = pipeline::run_eigen(&mut prep, j, search, a.tol).map_err(numerical)?;
    let doc = EigenDocument {
        command: "eigen",
        config: EigenConfigEcho {
            problem: &cfg,
            window_index: j,
            search: out.search,
            tol: a.tol,
        },
        mesh: prep.summary(),
        thresholds: &prep.data.kappa,
        mu_count: out.mu_count,
        nu_count: out.nu_count,
        mu_below: out.mu_below,
        nu_below: out.nu_below,
        k_bound: out.k_bound,
        findings: &out.findings,
        subintervals: &out.subintervals,
        warnings: &out.warnings,
        timings: &prep.timings,
    };
    emit(&doc, a.problem.output.as_ref())
}

fn cmd_scan(a: &ScanArgs) -> Result<(), Failure> {
    let cfg = a.problem.config()?;
    let grid = GridSpec::new(parse_axis(&a.re, DEFAULT_RE_COUNT)?, parse_axis(&a.im, DEFAULT_IM_COUNT)?)?;
    if a.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    build_preset(&cfg.geometry, &cfg.params)?;
    let mut prep = prepare(&cfg, 0).map_err(numerical)?;
    let out = pipeline::run_resonance(&mut prep, grid, a.levels, a.workers).map_err(numerical)?;
    if let Some(path) = &a.csv {
        std::fs::write(path, out.scan.to_csv()).map_err(|e| numerical(e.into()))?;
    }
    let doc = ScanDocument {
        command: "resonance-scan",
        config: ScanConfigEcho {
            problem: &cfg,
            grid,
            levels: a.levels,
            workers: a.workers,
        },
        mesh: prep.summary(),
        thresholds: &prep.data.kappa,
        mu_count: prep.basis.len(),
        nudged_nodes: out.nudged_nodes,
        invalid_nodes: out.invalid_nodes,
        estimates: &out.estimates,
        warnings: &out.warnings,
        timings: &prep.timings,
    };
    emit(&doc, a.problem.output.as_ref())
}

fn cmd_mesh(a: &MeshArgs) -> Result<(), Failure> {
    let g = build_preset(&a.geometry.geometry, &a.geometry.params())?;
    let h0 = a.geometry.h0.unwrap_or(g.default_h0);
    if !(h0 > 0.0) {
        return Err(usage("--h0 must be positive"));
    }
    let mesh = generate_refined(&g, h0, a.geometry.refine).map_err(numerical)?;
    if let Some(path) = &a.out {
        write_mesh(&mesh, path).map_err(numerical)?;
    }
    let exact = g.area();
    let area_error = (mesh.total_area() - exact).abs() / exact;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "geometry: {}", g.name);
    let _ = writeln!(out, "nodes: {}", mesh.n_nodes());
    let _ = writeln!(out, "triangles: {}", mesh.triangles.len());
    let _ = writeln!(out, "max_edge: {:.6e}", mesh.max_edge());
    if a.check {
        mesh.check().map_err(numerical)?;
        mesh.check_tags(&g).map_err(numerical)?;
        let _ = writeln!(out, "min_angle_deg: {:.4}", mesh.min_angle_deg());
        let _ = writeln!(out, "area_rel_error: {area_error:.3e}");
    }
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Result<i32, Failure> {
    let faults = FaultInjection {
        flip_branch_sign: a.inject_fault.as_deref() == Some("branch-sign"),
    };
    let report = validate::run_all(&faults);
    let mut out = std::io::stdout().lock();
    for s in &report.suites {
        let _ = writeln!(out, "{} {}: {} ({:.2}s)", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail, s.seconds);
    }
    let _ = writeln!(out, "rectangle oracle max relative error: {:.3e}", report.rect_oracle_max_rel_error);
    let _ = writeln!(out, "total {:.1}s", report.seconds);
    if let Some(path) = &a.output {
        let text = serde_json::to_string_pretty(&report).map_err(|e| numerical(Error::InvalidArgument(e.to_string())))?;
        std::fs::write(path, text + "\n").map_err(|e| numerical(e.into()))?;
    }
    Ok(if report.passed { 0 } else { EXIT_VALIDATE_FAILED })
}

/// Parses `args` (including the program name) and runs; returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Eigen(a) => cmd_eigen(a).map(|_| 0),
        Command::ResonanceScan(a) => cmd_scan(a).map(|_| 0),
        Command::Mesh(a) => cmd_mesh(a).map(|_| 0),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
