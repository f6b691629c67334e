//! Command-line entry point for the factorization-rank bounds.
//!
//! Subcommands: `bound` solves one relaxation and prints a report, `sweep`
//! evaluates a parameter grid into CSV, `export` writes the assembled SDP in
//! sparse SDPA format, `baselines` prints the closed-form and SOS
//! comparisons without solving a relaxation, and `check` screens cp/cpsd
//! membership through increasing levels.
//!
//! Exit codes: 0 on success (including a conclusive infeasibility), 2 on
//! solver failures and usage errors, 3 on instance parse errors.

mod sweep;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facrank_core::hierarchies::{
    self, BilinearPair, BoundKind, BoundRequest, BoundResult, HierarchyError, RequestOptions,
    Variants, build_cp, build_cpsd, build_nonneg, build_nuclear, build_psd, cp_rank_cap,
    sphere_grid,
};
use facrank_core::instances::{self, InstanceError, MatrixFormat, MatrixInstance};
use facrank_core::sdpcore::{SolveStatus, export_sdpa};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Bound(args) => run_bound(args),
        Cmd::Sweep(args) => sweep::run(args),
        Cmd::Export(args) => run_export(args),
        Cmd::Baselines(args) => run_baselines(args),
        Cmd::Check(args) => run_check(args),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[derive(Parser)]
#[command(
    name = "facrank",
    version,
    about = "Lower bounds on matrix factorization ranks via moment relaxations"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one relaxation and print value, status, flatness, baselines
    Bound(BoundArgs),
    /// Evaluate a parameter grid and emit CSV rows
    Sweep(sweep::SweepArgs),
    /// Write the assembled SDP in sparse SDPA format
    Export(ExportArgs),
    /// Print closed-form and SOS baselines without solving a relaxation
    Baselines(BaselinesArgs),
    /// Screen cp/cpsd membership through levels 1..t
    Check(CheckArgs),
}

/// A failure with its process exit code (2 usage/solver, 3 parse).
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<InstanceError> for Failure {
    fn from(e: InstanceError) -> Self {
        Failure::parse(e.to_string())
    }
}

impl From<HierarchyError> for Failure {
    fn from(e: HierarchyError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

/// Instance selection and transforms, shared by every subcommand.
#[derive(Args, Clone)]
pub struct InstanceArgs {
    /// Generator spec `name` or `name:p1,p2`; known names: a_alpha,
    /// nn_alpha, circulant5, circulant3, cos2_circulant, bipartite,
    /// nested_slack, slack_quadrilateral (s_q), slack_hexagon (s_h),
    /// identity, ones
    #[arg(long = "gen", value_name = "SPEC")]
    pub generator: Option<String>,
    /// Read the matrix from a file instead
    #[arg(long, value_name = "PATH")]
    pub file: Option<PathBuf>,
    /// File layout for --file
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Use the transpose of the instance
    #[arg(long)]
    pub transpose: bool,
    /// Scale row i by the i-th entry (comma-separated positives)
    #[arg(long, value_name = "D1,D2,...")]
    pub row_scale: Option<String>,
    /// Rescale symmetrically so the diagonal becomes all ones
    #[arg(long)]
    pub diag_normalize: bool,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum FormatArg {
    Csv,
    Whitespace,
}

impl InstanceArgs {
    /// Loads the instance and applies transforms (transpose, then row
    /// scaling, then diagonal normalization).
    pub fn load(&self) -> Result<MatrixInstance, Failure> {
        let mut inst = match (&self.generator, &self.file) {
            (Some(spec), None) => instances::gen_spec(spec)?,
            (None, Some(path)) => {
                let format = match self.format {
                    FormatArg::Csv => MatrixFormat::Csv,
                    FormatArg::Whitespace => MatrixFormat::Whitespace,
                };
                instances::load(&path.to_string_lossy(), format)?
            }
            _ => {
                return Err(Failure::usage("exactly one of --gen and --file must be given"));
            }
        };
        if self.transpose {
            inst = inst.transposed();
        }
        if let Some(spec) = &self.row_scale {
            let d = parse_floats(spec)
                .map_err(|e| Failure::usage(format!("bad --row-scale: {e}")))?;
            inst = inst.row_scaled(&d)?;
        }
        if self.diag_normalize {
            inst = inst.diagonal_normalized()?;
        }
        Ok(inst)
    }
}

/// Strengthening flags, shared by the solving subcommands.
#[derive(Args, Clone, Default)]
pub struct VariantArgs {
    /// Direction vector components, comma-separated (repeatable)
    #[arg(long = "direction", value_name = "V1,V2,...")]
    pub directions: Vec<String>,
    /// Append the deterministic unit-direction grid of this level
    #[arg(long, value_name = "K")]
    pub sphere_grid: Option<usize>,
    /// Add scalar positivity rows L(g u) >= 0 (commutative kinds)
    #[arg(long)]
    pub dagger: bool,
    /// Tensor compression level, 2 <= L <= t (repeatable, cp only)
    #[arg(long = "tensor", value_name = "L")]
    pub tensor: Vec<usize>,
    /// Bilinear block over localizer indices `I.J`, or `cross` (repeatable)
    #[arg(long = "bilinear", value_name = "I.J|cross")]
    pub bilinear: Vec<String>,
    /// Add ideal rows from the matrix kernel and exact zeros (cpsd, cp)
    #[arg(long)]
    pub kernel: bool,
    /// Add every degree-two monomial x_i x_j as a localizer (cp only)
    #[arg(long)]
    pub extra_monomials: bool,
}

impl VariantArgs {
    /// Resolves the flags against the instance's column count (direction
    /// vectors and the sphere grid live in that dimension).
    pub fn to_variants(&self, n: usize) -> Result<Variants, Failure> {
        let mut v = Variants::default();
        for spec in &self.directions {
            let d =
                parse_floats(spec).map_err(|e| Failure::usage(format!("bad --direction: {e}")))?;
            v.directions.push(d);
        }
        if let Some(k) = self.sphere_grid {
            v.directions.extend(sphere_grid(n, k));
        }
        v.dagger = self.dagger;
        v.tensor_levels = self.tensor.clone();
        for spec in &self.bilinear {
            if spec == "cross" {
                v.bilinear_pairs.push(BilinearPair::CrossFamily);
                continue;
            }
            let pair = spec
                .split_once('.')
                .and_then(|(i, j)| Some((i.parse().ok()?, j.parse().ok()?)))
                .ok_or_else(|| {
                    Failure::usage(format!("bad --bilinear '{spec}': expected I.J or cross"))
                })?;
            v.bilinear_pairs.push(BilinearPair::Localizers(pair.0, pair.1));
        }
        v.kernel = self.kernel;
        v.extra_monomial_localizers = self.extra_monomials;
        Ok(v)
    }
}

/// Solver and certification tolerances. Environment variables supply
/// defaults; explicit flags win.
#[derive(Args, Clone, Default)]
pub struct SolverArgs {
    /// Feasibility tolerance (env FACRANK_FEAS_TOL)
    #[arg(long, value_name = "TOL")]
    pub feas_tol: Option<f64>,
    /// Complementarity-gap tolerance (env FACRANK_GAP_TOL)
    #[arg(long, value_name = "TOL")]
    pub gap_tol: Option<f64>,
    /// Iteration cap (env FACRANK_MAX_ITER)
    #[arg(long, value_name = "N")]
    pub max_iter: Option<usize>,
    /// Relative rank threshold of the flatness report (env FACRANK_RANK_TOL)
    #[arg(long, value_name = "TOL")]
    pub rank_tol: Option<f64>,
    /// Residual ceiling for certifying a value (env FACRANK_RESIDUAL_TOL)
    #[arg(long, value_name = "TOL")]
    pub residual_tol: Option<f64>,
}

impl SolverArgs {
    pub fn resolve(&self) -> Result<RequestOptions, Failure> {
        let mut opts = RequestOptions::default();
        opts.solve.feas_tol = pick(self.feas_tol, "FACRANK_FEAS_TOL", opts.solve.feas_tol)?;
        opts.solve.gap_tol = pick(self.gap_tol, "FACRANK_GAP_TOL", opts.solve.gap_tol)?;
        opts.solve.max_iter = pick(self.max_iter, "FACRANK_MAX_ITER", opts.solve.max_iter)?;
        opts.rank_tol = pick(self.rank_tol, "FACRANK_RANK_TOL", opts.rank_tol)?;
        opts.residual_tol =
            pick(self.residual_tol, "FACRANK_RESIDUAL_TOL", opts.residual_tol)?;
        Ok(opts)
    }
}

/// Flag value if given, else the parsed environment variable, else the
/// default.
fn pick<T: std::str::FromStr>(flag: Option<T>, env: &str, default: T) -> Result<T, Failure> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match std::env::var(env) {
        Ok(s) => s
            .parse()
            .map_err(|_| Failure::usage(format!("cannot parse {env}='{s}'"))),
        Err(_) => Ok(default),
    }
}

fn parse_floats(spec: &str) -> Result<Vec<f64>, String> {
    spec.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("cannot parse '{t}'")))
        .collect()
}

fn parse_kind(s: &str) -> Result<BoundKind, String> {
    BoundKind::parse(s).ok_or_else(|| {
        let names: Vec<&str> = BoundKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown kind '{s}'; expected one of {}", names.join(", "))
    })
}

/// Assembles the SDP for a request without solving it.
fn assemble(req: &BoundRequest) -> Result<facrank_core::sdpcore::SDPProblem, HierarchyError> {
    match req.kind {
        BoundKind::Cpsd => build_cpsd(req),
        BoundKind::Cp => build_cp(req),
        BoundKind::Nonneg => build_nonneg(req),
        BoundKind::Psd => build_psd(req),
        BoundKind::Nuclear => build_nuclear(req),
    }
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Bound kind: cpsd, cp, nonneg, psd, nuclear
    #[arg(long, value_parser = parse_kind)]
    kind: BoundKind,
    /// Relaxation level
    #[arg(long, default_value_t = 1)]
    t: usize,
    #[command(flatten)]
    variants: VariantArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Append one CSV row (schema as `sweep`) to this file
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

fn run_bound(args: BoundArgs) -> Result<ExitCode, Failure> {
    let inst = args.instance.load()?;
    let variants = args.variants.to_variants(inst.ncols())?;
    let opts = args.solver.resolve()?;
    let req = BoundRequest { kind: args.kind, a: inst.values.clone(), t: args.t, variants };
    let result = hierarchies::solve_request(&req, &opts)?;
    print_report(&inst, &req, &result);
    if let Some(path) = &args.csv {
        let params = generator_params(args.instance.generator.as_deref());
        append_csv_row(path, &params, &req, &result)?;
    }
    let ok = result.value.is_some() || result.status == SolveStatus::Infeasible;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

/// Numeric parameters of a generator spec, for the CSV param columns.
fn generator_params(spec: Option<&str>) -> Vec<f64> {
    let Some(spec) = spec else { return Vec::new() };
    match spec.split_once(':') {
        Some((_, rest)) => {
            rest.split(',').filter_map(|t| t.trim().parse().ok()).collect()
        }
        None => Vec::new(),
    }
}

fn append_csv_row(
    path: &PathBuf,
    params: &[f64],
    req: &BoundRequest,
    result: &BoundResult,
) -> Result<(), Failure> {
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{}", sweep::CSV_HEADER)?;
    }
    let row = sweep::csv_row(
        params.first().copied(),
        params.get(1).copied(),
        req.kind,
        req.t,
        &req.variants.summary(),
        result.value,
        &result.status.to_string(),
    );
    writeln!(f, "{row}")?;
    Ok(())
}

fn print_report(inst: &MatrixInstance, req: &BoundRequest, result: &BoundResult) {
    println!("instance   {}  ({}x{})", inst.provenance, inst.nrows(), inst.ncols());
    println!(
        "request    kind={}  t={}  variants={}",
        req.kind,
        req.t,
        req.variants.summary()
    );
    for w in inst.warnings.iter().chain(&result.warnings) {
        println!("warning    {w}");
    }
    println!("status     {}  ({} iterations)", result.status, result.iterations);
    match result.value {
        Some(v) => println!("value      {v:.9}"),
        None => println!("value      none (objective {:.9}, not certified)", result.objective),
    }
    println!(
        "residuals  cone={:.2e}  equality={:.2e}",
        -result.max_psd_violation,
        result.max_equality_residual
    );
    match &result.flat_report {
        Some(rep) => {
            for e in &rep.entries {
                println!(
                    "flatness   delta={}: rank(M_t)={} rank(M_t-delta)={} -> {}",
                    e.delta,
                    e.rank_full,
                    e.rank_truncated,
                    if e.flat { "flat" } else { "not flat" }
                );
            }
        }
        None => println!("flatness   unavailable (no optimal solution)"),
    }
    print_baselines(&result.baselines);
    println!("note       {}", result.solver_note);
}

fn print_baselines(baselines: &BTreeMap<String, f64>) {
    if baselines.is_empty() {
        println!("baselines  none applicable");
        return;
    }
    let parts: Vec<String> =
        baselines.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
    println!("baselines  {}", parts.join("  "));
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Bound kind: cpsd, cp, nonneg, psd, nuclear
    #[arg(long, value_parser = parse_kind)]
    kind: BoundKind,
    /// Relaxation level
    #[arg(long, default_value_t = 1)]
    t: usize,
    #[command(flatten)]
    variants: VariantArgs,
    /// Output path
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Write the file to standard output
    #[arg(long)]
    stdout: bool,
}

fn run_export(args: ExportArgs) -> Result<ExitCode, Failure> {
    let inst = args.instance.load()?;
    let variants = args.variants.to_variants(inst.ncols())?;
    let req = BoundRequest { kind: args.kind, a: inst.values.clone(), t: args.t, variants };
    let problem = assemble(&req)?;
    let text = export_sdpa(&problem);
    if let Some(path) = &args.out {
        std::fs::write(path, &text)?;
    }
    if args.stdout || args.out.is_none() {
        print!("{text}");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct BaselinesArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Bound kind: cpsd, cp, nonneg, psd, nuclear
    #[arg(long, value_parser = parse_kind)]
    kind: BoundKind,
    #[command(flatten)]
    solver: SolverArgs,
}

fn run_baselines(args: BaselinesArgs) -> Result<ExitCode, Failure> {
    let inst = args.instance.load()?;
    let opts = args.solver.resolve()?;
    println!("instance   {}  ({}x{})", inst.provenance, inst.nrows(), inst.ncols());
    for w in &inst.warnings {
        println!("warning    {w}");
    }
    println!("kind       {}", args.kind);
    print_baselines(&hierarchies::baselines(args.kind, &inst.values, &opts));
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Membership cone to screen: cp or cpsd
    #[arg(long, value_parser = parse_kind)]
    kind: BoundKind,
    /// Highest level to run
    #[arg(long, default_value_t = 2)]
    t: usize,
    #[command(flatten)]
    variants: VariantArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

fn run_check(args: CheckArgs) -> Result<ExitCode, Failure> {
    if !matches!(args.kind, BoundKind::Cp | BoundKind::Cpsd) {
        return Err(Failure::usage(format!(
            "check screens cp or cpsd membership; got kind '{}'",
            args.kind
        )));
    }
    let inst = args.instance.load()?;
    let variants = args.variants.to_variants(inst.ncols())?;
    let opts = args.solver.resolve()?;
    println!("instance   {}  ({}x{})", inst.provenance, inst.nrows(), inst.ncols());
    for w in &inst.warnings {
        println!("warning    {w}");
    }
    let cap = (args.kind == BoundKind::Cp).then(|| cp_rank_cap(inst.ncols()));
    let mut best: Option<f64> = None;
    let mut failed_levels = 0usize;
    for t in 1..=args.t.max(1) {
        let req = BoundRequest {
            kind: args.kind,
            a: inst.values.clone(),
            t,
            variants: variants.clone(),
        };
        let result = hierarchies::solve_request(&req, &opts)?;
        match (result.status, result.value) {
            (SolveStatus::Infeasible, _) => {
                println!("level {t}    infeasible");
                println!(
                    "conclusion NOT in the {} cone: level-{t} relaxation is infeasible",
                    args.kind
                );
                return Ok(ExitCode::SUCCESS);
            }
            (_, Some(v)) => {
                println!("level {t}    value {v:.9}");
                best = Some(best.map_or(v, |b: f64| b.max(v)));
                if let Some(cap) = cap
                    && v > cap as f64 + 1e-6
                {
                    println!(
                        "conclusion NOT completely positive: level-{t} bound {v:.6} exceeds \
                         the cp-rank cap {cap}"
                    );
                    return Ok(ExitCode::SUCCESS);
                }
            }
            (status, None) => {
                println!("level {t}    {status} (no certified value)");
                failed_levels += 1;
            }
        }
    }
    match (best, cap) {
        (Some(v), Some(cap)) => {
            println!("conclusion inconclusive: best bound {v:.6} within the cp-rank cap {cap}")
        }
        (Some(v), None) => println!(
            "conclusion inconclusive: best bound {v:.6}; only an infeasible level certifies \
             non-membership for cpsd"
        ),
        (None, _) => println!("conclusion inconclusive: no level certified a value"),
    }
    if best.is_none() && failed_levels > 0 {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
