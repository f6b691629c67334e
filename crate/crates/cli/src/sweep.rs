//! Parameter-grid sweeps: one bound computation per grid point, emitted as
//! CSV with the stable schema `param1,param2,kind,t,variants,value,status`.
//!
//! Points are computed independently (optionally by several worker threads)
//! and written in grid order, so the output is byte-identical regardless of
//! the worker count. Failures at a point become a row whose status column
//! carries the error; the sweep continues. With `--skip-existing`, rows
//! already present in the target file are kept and only missing points run.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::Args;
use facrank_core::hierarchies::{self, BoundKind, BoundRequest, RequestOptions, Variants};
use facrank_core::instances;

use crate::{Failure, SolverArgs, VariantArgs, parse_kind};

/// First line of every sweep CSV.
pub const CSV_HEADER: &str = "param1,param2,kind,t,variants,value,status";

#[derive(Args)]
pub struct SweepArgs {
    /// Parametric generator name; the grids supply its parameters in order
    #[arg(long = "gen", value_name = "NAME")]
    pub generator: String,
    /// Parameter grid `LO:HI[:STEP]`, step defaulting to 0.1 (one flag per
    /// generator parameter, at most two)
    #[arg(long = "grid", value_name = "LO:HI[:STEP]", required = true)]
    pub grids: Vec<String>,
    /// Bound kind: cpsd, cp, nonneg, psd, nuclear
    #[arg(long, value_parser = parse_kind)]
    pub kind: BoundKind,
    /// Relaxation level
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    /// Transpose each generated instance
    #[arg(long)]
    pub transpose: bool,
    #[command(flatten)]
    pub variants: VariantArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output CSV path (standard output when omitted)
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Keep rows already in --csv and compute only the missing points
    #[arg(long, requires = "csv")]
    pub skip_existing: bool,
    /// Worker threads
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub jobs: usize,
}

/// Inclusive arithmetic progression; empty when `lo > hi`.
struct GridSpec {
    lo: f64,
    hi: f64,
    step: f64,
}

impl GridSpec {
    fn parse(spec: &str) -> Result<GridSpec, Failure> {
        let parts: Vec<&str> = spec.split(':').collect();
        let err = |msg: &str| Failure::usage(format!("bad --grid '{spec}': {msg}"));
        if parts.len() < 2 || parts.len() > 3 {
            return Err(err("expected LO:HI or LO:HI:STEP"));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| err("parts must be numbers"))?;
        let step = if nums.len() == 3 { nums[2] } else { 0.1 };
        if !step.is_finite() || step <= 0.0 {
            return Err(err("step must be positive"));
        }
        if !nums[0].is_finite() || !nums[1].is_finite() {
            return Err(err("bounds must be finite"));
        }
        Ok(GridSpec { lo: nums[0], hi: nums[1], step })
    }

    fn values(&self) -> Vec<f64> {
        if self.lo > self.hi {
            return Vec::new();
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| round_param(self.lo + i as f64 * self.step)).collect()
    }
}

/// Kills accumulated floating-point dust (`0.30000000000000004`) so CSV
/// parameter columns read back cleanly.
fn round_param(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

pub fn run(args: SweepArgs) -> Result<ExitCode, Failure> {
    let opts = args.solver.resolve()?;
    if args.grids.len() > 2 {
        return Err(Failure::usage("at most two --grid flags are supported"));
    }
    let grids: Vec<GridSpec> =
        args.grids.iter().map(|g| GridSpec::parse(g)).collect::<Result<_, _>>()?;
    let points = grid_points(&grids);

    // The instance dimension (needed by direction flags) is constant across
    // the family; probe it at the first point.
    let variants = match points.first() {
        Some(p) => {
            let inst = instances::generate(&args.generator, &point_params(p))?;
            let n = if args.transpose { inst.nrows() } else { inst.ncols() };
            args.variants.to_variants(n)?
        }
        None => Variants::default(),
    };
    let vsummary = variants.summary();

    let existing: HashSet<String> = match (&args.csv, args.skip_existing) {
        (Some(path), true) if path.exists() => {
            let text = std::fs::read_to_string(path)?;
            text.lines().skip(1).map(|l| row_key_of_line(l)).collect()
        }
        _ => HashSet::new(),
    };

    let pending: Vec<usize> = (0..points.len())
        .filter(|&i| {
            let (p1, p2) = points[i];
            !existing.contains(&row_key(p1, p2, args.kind, args.t, &vsummary))
        })
        .collect();

    let rows = compute_rows(&args, &opts, &variants, &vsummary, &points, &pending);

    match &args.csv {
        Some(path) => {
            if args.skip_existing && path.exists() {
                let mut f = std::fs::OpenOptions::new().append(true).open(path)?;
                for r in &rows {
                    writeln!(f, "{r}")?;
                }
            } else {
                let mut text = String::from(CSV_HEADER);
                for r in &rows {
                    text.push('\n');
                    text.push_str(r);
                }
                text.push('\n');
                std::fs::write(path, text)?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{CSV_HEADER}")?;
            for r in &rows {
                writeln!(out, "{r}")?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Row-major cartesian product; a single grid leaves `param2` absent.
fn grid_points(grids: &[GridSpec]) -> Vec<(f64, Option<f64>)> {
    match grids {
        [g] => g.values().into_iter().map(|v| (v, None)).collect(),
        [g1, g2] => {
            let v2 = g2.values();
            g1.values()
                .into_iter()
                .flat_map(|a| v2.iter().map(move |&b| (a, Some(b))))
                .collect()
        }
        _ => Vec::new(),
    }
}

fn point_params(point: &(f64, Option<f64>)) -> Vec<f64> {
    let mut params = vec![point.0];
    params.extend(point.1);
    params
}

/// Computes the pending rows, in point order, using `jobs` workers that
/// claim indices from a shared counter. Each row only depends on its own
/// point, so the assembled output is identical for any worker count.
fn compute_rows(
    args: &SweepArgs,
    opts: &RequestOptions,
    variants: &Variants,
    vsummary: &str,
    points: &[(f64, Option<f64>)],
    pending: &[usize],
) -> Vec<String> {
    let jobs = args.jobs.max(1).min(pending.len().max(1));
    let next = AtomicUsize::new(0);
    let mut rows: Vec<Option<String>> = vec![None; pending.len()];
    let slots: Vec<_> = rows.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| {
                loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= pending.len() {
                        break;
                    }
                    let (p1, p2) = points[pending[k]];
                    let row = eval_point(args, opts, variants, vsummary, p1, p2);
                    **slots[k].lock().unwrap() = Some(row);
                }
            });
        }
    });
    rows.into_iter().map(|r| r.expect("every pending row computed")).collect()
}

fn eval_point(
    args: &SweepArgs,
    opts: &RequestOptions,
    variants: &Variants,
    vsummary: &str,
    p1: f64,
    p2: Option<f64>,
) -> String {
    let outcome = (|| -> Result<(Option<f64>, String), String> {
        let mut inst = instances::generate(&args.generator, &point_params(&(p1, p2)))
            .map_err(|e| e.to_string())?;
        if args.transpose {
            inst = inst.transposed();
        }
        let req = BoundRequest {
            kind: args.kind,
            a: inst.values,
            t: args.t,
            variants: variants.clone(),
        };
        let result = hierarchies::solve_request(&req, opts).map_err(|e| e.to_string())?;
        Ok((result.value, result.status.to_string()))
    })();
    let (value, status) = match outcome {
        Ok(pair) => pair,
        Err(msg) => (None, format!("error: {msg}")),
    };
    csv_row(Some(p1), p2, args.kind, args.t, vsummary, value, &status)
}

/// One CSV data row under [`CSV_HEADER`].
pub fn csv_row(
    p1: Option<f64>,
    p2: Option<f64>,
    kind: BoundKind,
    t: usize,
    variants: &str,
    value: Option<f64>,
    status: &str,
) -> String {
    let fields = [
        p1.map(fmt_param).unwrap_or_default(),
        p2.map(fmt_param).unwrap_or_default(),
        kind.name().to_string(),
        t.to_string(),
        variants.to_string(),
        value.map(|v| format!("{v:.9}")).unwrap_or_default(),
        status.to_string(),
    ];
    fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",")
}

/// The skip-existing identity of a row: its first five fields.
fn row_key(p1: f64, p2: Option<f64>, kind: BoundKind, t: usize, variants: &str) -> String {
    [
        fmt_param(p1),
        p2.map(fmt_param).unwrap_or_default(),
        kind.name().to_string(),
        t.to_string(),
        variants.to_string(),
    ]
    .join("\u{1f}")
}

fn row_key_of_line(line: &str) -> String {
    let fields = csv_split(line);
    fields.iter().take(5).cloned().collect::<Vec<_>>().join("\u{1f}")
}

fn fmt_param(v: f64) -> String {
    format!("{v}")
}

/// RFC-4180-style quoting: fields containing commas, quotes, or newlines
/// are wrapped in double quotes with inner quotes doubled.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Splits one CSV line, undoing [`csv_field`] quoting.
fn csv_split(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cur.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if cur.is_empty() => quoted = true,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values_are_inclusive_and_clean() {
        let g = GridSpec::parse("0:1:0.1").unwrap();
        let vs = g.values();
        assert_eq!(vs.len(), 11);
        assert_eq!(vs[3], 0.3);
        assert_eq!(vs[10], 1.0);
    }

    #[test]
    fn grid_default_step_and_empty_range() {
        assert_eq!(GridSpec::parse("0:1").unwrap().values().len(), 11);
        assert!(GridSpec::parse("1:0").unwrap().values().is_empty());
        assert!(GridSpec::parse("0:1:0").is_err());
        assert!(GridSpec::parse("0").is_err());
    }

    #[test]
    fn csv_quoting_round_trips() {
        let row = csv_row(
            Some(0.5),
            None,
            BoundKind::Cp,
            2,
            "bilinear(0.1,cross)",
            Some(1.5),
            "optimal",
        );
        let fields = csv_split(&row);
        assert_eq!(fields[0], "0.5");
        assert_eq!(fields[1], "");
        assert_eq!(fields[4], "bilinear(0.1,cross)");
        assert_eq!(fields[5], "1.500000000");
        assert_eq!(fields[6], "optimal");
    }

    #[test]
    fn row_keys_match_between_written_and_parsed_rows() {
        let row = csv_row(Some(0.3), Some(0.7), BoundKind::Nonneg, 2, "dagger", None, "max-iter");
        assert_eq!(
            row_key_of_line(&row),
            row_key(0.3, Some(0.7), BoundKind::Nonneg, 2, "dagger")
        );
    }
}
