//! Moment relaxations that lower-bound matrix factorization ranks, plus the
//! closed-form and SOS baselines they are compared against.
//!
//! A [`BoundRequest`] names a target quantity ([`BoundKind`]), an input
//! matrix, a relaxation level `t`, and optional strengthenings
//! ([`Variants`]). The `build_*` functions assemble the request into an
//! [`SDPProblem`](crate::sdpcore::SDPProblem); [`solve_request`] additionally runs the solver and
//! packages the optimum with a flatness certificate, residuals, and baseline
//! comparisons into a [`BoundResult`].
//!
//! Every program minimizes `L(1)` over truncated linear functionals that
//! reproduce the input matrix on quadratic moments and are positive on a
//! kind-specific localizing set. Raising `t` or adding any variant shrinks
//! the feasible set, so solved values are monotone nondecreasing along both
//! axes.

mod build;

pub use build::{build_cp, build_cpsd, build_nonneg, build_nuclear, build_psd, tau_sos};

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::momentmodel::MomentError;
use crate::polyalg;
use crate::sdpcore::{self, FlatnessReport, SdpError, SolveOptions, SolveStatus, lapack};

/// Relative tolerance for the symmetry and membership checks on inputs.
const CHECK_TOL: f64 = 1e-9;

/// Relative eigenvalue cutoff below which a direction counts as kernel.
///
/// Deliberately much tighter than [`CHECK_TOL`]: kernel ideal rows are only
/// sound for exact kernel vectors, and a loose cutoff would inject
/// inconsistent equality rows for nearly singular data.
const KERNEL_TOL: f64 = 1e-12;

/// Errors from request validation, assembly, and solving.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HierarchyError {
    /// The matrix shape, level, or data is unusable for the requested kind.
    #[error("bad request: {0}")]
    Shape(String),
    /// A variant flag does not apply to the requested kind or is out of range.
    #[error("variant not applicable: {0}")]
    Variant(String),
    /// The closed-form bound needs a nonzero matrix.
    #[error("matrix is zero")]
    ZeroMatrix,
    /// The closed-form bound needs every column to have a positive sum.
    #[error("column {0} sums to zero")]
    ZeroColumn(usize),
    /// Moment-model assembly failed.
    #[error(transparent)]
    Moment(#[from] MomentError),
    /// Solving or analyzing the SDP failed.
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// The quantity a request lower-bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BoundKind {
    /// Completely positive semidefinite rank: the smallest `d` such that the
    /// matrix is the Gram matrix of `d x d` positive semidefinite matrices.
    Cpsd,
    /// Completely positive rank: the smallest number of nonnegative rank-one
    /// symmetric terms summing to the matrix.
    Cp,
    /// Nonnegative rank of a rectangular matrix.
    Nonneg,
    /// Positive semidefinite rank: entrywise trace-inner-product
    /// factorizations of a rectangular matrix by PSD matrices.
    Psd,
    /// Nonnegative nuclear norm: the minimal total weight of a decomposition
    /// into nonnegative unit rank-one atoms (its square over the Frobenius
    /// norm lower-bounds the nonnegative rank).
    Nuclear,
}

impl BoundKind {
    /// All kinds, in display order.
    pub const ALL: [BoundKind; 5] =
        [BoundKind::Cpsd, BoundKind::Cp, BoundKind::Nonneg, BoundKind::Psd, BoundKind::Nuclear];

    /// The lowercase name used in CLI arguments and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Cpsd => "cpsd",
            BoundKind::Cp => "cp",
            BoundKind::Nonneg => "nonneg",
            BoundKind::Psd => "psd",
            BoundKind::Nuclear => "nuclear",
        }
    }

    /// Parses a kind name (case-insensitive).
    pub fn parse(s: &str) -> Option<BoundKind> {
        BoundKind::ALL.into_iter().find(|k| k.name() == s.to_ascii_lowercase())
    }

    /// True when the kind requires a square symmetric input.
    pub fn needs_symmetric(self) -> bool {
        matches!(self, BoundKind::Cpsd | BoundKind::Cp | BoundKind::Nuclear)
    }

    /// True when the moments are over commuting variables.
    pub fn commutative(self) -> bool {
        matches!(self, BoundKind::Cp | BoundKind::Nonneg | BoundKind::Nuclear)
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Selector for one bilinear strengthening block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BilinearPair {
    /// Product of the localizers at the two positions in the kind's
    /// localizer list (base set first, then one entry per direction vector).
    Localizers(usize, usize),
    /// Every product of a row-letter localizer `x_i` with a column inequality
    /// `sum_i A_ij - x_{m+j}` (rectangular psd bound only). At level 1 these
    /// reduce to the scalar cross inequalities `L(x_i x_{m+j}) <= sum_i A_ij
    /// L(x_i)`.
    CrossFamily,
}

/// Optional strengthenings layered onto a base relaxation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Variants {
    /// Direction vectors `v`, each adding the quadratic localizer
    /// `v' A v - (sum_i v_i x_i)^2`. Valid for the Gram-type kinds
    /// (cpsd, cp); every Gram factorization satisfies the constraint.
    pub directions: Vec<Vec<f64>>,
    /// Scalar positivity rows `L(g u) >= 0` for `g` in the unit plus the
    /// localizer set and every in-degree monomial `u` (commutative kinds).
    pub dagger: bool,
    /// Tensor compression levels `l`: each adds the PSD constraint
    /// `Q_l A^(x l) Q_l' - (L(m m'))_[deg l monomials] >= 0` (cp only,
    /// `2 <= l <= t`).
    pub tensor_levels: Vec<usize>,
    /// Bilinear blocks `L(p* g p g2) >= 0` for selected localizer pairs.
    pub bilinear_pairs: Vec<BilinearPair>,
    /// Ideal rows from kernel vectors of the matrix and its exact-zero
    /// entries (cpsd, cp).
    pub kernel: bool,
    /// Adds every degree-two monomial `x_i x_j` (`i < j`) as a localizer
    /// (cp only).
    pub extra_monomial_localizers: bool,
}

impl Variants {
    /// True when no strengthening is active.
    pub fn is_plain(&self) -> bool {
        self == &Variants::default()
    }

    /// Compact summary such as `V4+dagger+tensor2`, used in CSV rows and
    /// problem metadata; `plain` when nothing is active.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if !self.directions.is_empty() {
            parts.push(format!("V{}", self.directions.len()));
        }
        if self.dagger {
            parts.push("dagger".into());
        }
        if !self.tensor_levels.is_empty() {
            let ls: Vec<String> = self.tensor_levels.iter().map(usize::to_string).collect();
            parts.push(format!("tensor{}", ls.join(".")));
        }
        if !self.bilinear_pairs.is_empty() {
            let ps: Vec<String> = self
                .bilinear_pairs
                .iter()
                .map(|p| match p {
                    BilinearPair::Localizers(i, j) => format!("{i}.{j}"),
                    BilinearPair::CrossFamily => "cross".into(),
                })
                .collect();
            parts.push(format!("bilinear({})", ps.join(",")));
        }
        if self.kernel {
            parts.push("kernel".into());
        }
        if self.extra_monomial_localizers {
            parts.push("monomials".into());
        }
        if parts.is_empty() { "plain".into() } else { parts.join("+") }
    }
}

/// One bound computation: target kind, input matrix, level, strengthenings.
#[derive(Debug, Clone)]
pub struct BoundRequest {
    /// Target quantity.
    pub kind: BoundKind,
    /// Input matrix.
    pub a: DMatrix<f64>,
    /// Relaxation level; moments of degree up to `2t` participate.
    pub t: usize,
    /// Optional strengthenings.
    pub variants: Variants,
}

impl BoundRequest {
    /// A plain request with no variants.
    pub fn new(kind: BoundKind, a: DMatrix<f64>, t: usize) -> Self {
        BoundRequest { kind, a, t, variants: Variants::default() }
    }

    /// Checks shape, finiteness, level, and variant applicability.
    ///
    /// Returns membership notes instead of failing on them: a cpsd/cp input
    /// that is not PSD or has negative entries yields a warning, since
    /// whether the matrix lies in the cone may be exactly what the bound run
    /// is probing (an infeasible relaxation certifies non-membership).
    pub fn validate(&self) -> Result<Vec<String>, HierarchyError> {
        let a = &self.a;
        let (m, n) = (a.nrows(), a.ncols());
        if m == 0 || n == 0 {
            return Err(HierarchyError::Shape("matrix is empty".into()));
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(HierarchyError::Shape("matrix has a non-finite entry".into()));
        }
        if self.t == 0 {
            return Err(HierarchyError::Shape("level must be at least 1".into()));
        }
        if 2 * self.t > polyalg::MAX_DEGREE {
            return Err(HierarchyError::Shape(format!(
                "level {} exceeds the supported maximum {}",
                self.t,
                polyalg::MAX_DEGREE / 2
            )));
        }
        let scale = 1.0 + a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if self.kind.needs_symmetric() {
            if m != n {
                return Err(HierarchyError::Shape(format!(
                    "{} needs a square matrix, got {m}x{n}",
                    self.kind
                )));
            }
            let skew = (0..n)
                .flat_map(|i| (0..i).map(move |j| (i, j)))
                .map(|(i, j)| (a[(i, j)] - a[(j, i)]).abs())
                .fold(0.0f64, f64::max);
            if skew > CHECK_TOL * scale {
                return Err(HierarchyError::Shape(format!(
                    "{} needs a symmetric matrix (asymmetry {skew:.3e})",
                    self.kind
                )));
            }
        }
        if matches!(self.kind, BoundKind::Cpsd | BoundKind::Cp) {
            // The diagonal feeds sqrt coefficients, so negativity there is a
            // hard data error rather than a membership warning.
            for i in 0..n {
                if a[(i, i)] < 0.0 {
                    return Err(HierarchyError::Shape(format!("diagonal entry {i} is negative")));
                }
            }
        }
        let mut warnings = Vec::new();
        let min_entry = a.iter().copied().fold(f64::INFINITY, f64::min);
        if min_entry < -CHECK_TOL * scale {
            warnings.push(format!(
                "matrix has negative entries (min {min_entry:.3e}); the relaxation may be infeasible"
            ));
        }
        if matches!(self.kind, BoundKind::Cpsd | BoundKind::Cp) {
            let sym = (a + a.transpose()) * 0.5;
            let eigs = lapack::sym_eigenvalues(&sym)
                .map_err(|e| HierarchyError::Shape(e.to_string()))?;
            if eigs.first().copied().unwrap_or(0.0) < -CHECK_TOL * scale {
                warnings.push(format!(
                    "matrix is not positive semidefinite (min eigenvalue {:.3e}); the relaxation may be infeasible",
                    eigs[0]
                ));
            }
        }
        self.validate_variants(m, n)?;
        Ok(warnings)
    }

    fn validate_variants(&self, m: usize, n: usize) -> Result<(), HierarchyError> {
        let v = &self.variants;
        let gram = matches!(self.kind, BoundKind::Cpsd | BoundKind::Cp);
        if !v.directions.is_empty() {
            if !gram {
                return Err(HierarchyError::Variant(
                    "direction localizers apply to cpsd and cp only".into(),
                ));
            }
            for (i, d) in v.directions.iter().enumerate() {
                if d.len() != n {
                    return Err(HierarchyError::Variant(format!(
                        "direction vector {i} has length {}, expected {n}",
                        d.len()
                    )));
                }
                if !d.iter().all(|x| x.is_finite()) {
                    return Err(HierarchyError::Variant(format!(
                        "direction vector {i} has a non-finite entry"
                    )));
                }
            }
        }
        if v.dagger && !self.kind.commutative() {
            return Err(HierarchyError::Variant(
                "scalar positivity rows apply to commutative kinds (cp, nonneg, nuclear)".into(),
            ));
        }
        if !v.tensor_levels.is_empty() {
            if self.kind != BoundKind::Cp {
                return Err(HierarchyError::Variant("tensor constraints apply to cp only".into()));
            }
            for &l in &v.tensor_levels {
                if l < 2 || l > self.t {
                    return Err(HierarchyError::Variant(format!(
                        "tensor level {l} outside 2..={}",
                        self.t
                    )));
                }
            }
        }
        for p in &v.bilinear_pairs {
            match p {
                BilinearPair::Localizers(i, j) => {
                    if !matches!(self.kind, BoundKind::Cpsd | BoundKind::Cp | BoundKind::Psd) {
                        return Err(HierarchyError::Variant(
                            "bilinear localizer products apply to cpsd, cp, and psd".into(),
                        ));
                    }
                    let cap = build::localizer_count(self.kind, m, n)
                        + if gram { v.directions.len() } else { 0 };
                    if *i >= cap || *j >= cap {
                        return Err(HierarchyError::Variant(format!(
                            "bilinear pair ({i}, {j}) out of range: {cap} localizers available"
                        )));
                    }
                }
                BilinearPair::CrossFamily => {
                    if self.kind != BoundKind::Psd {
                        return Err(HierarchyError::Variant(
                            "cross-family bilinear blocks apply to psd only".into(),
                        ));
                    }
                }
            }
        }
        if v.kernel && !gram {
            return Err(HierarchyError::Variant(
                "kernel ideal rows apply to cpsd and cp only".into(),
            ));
        }
        if v.extra_monomial_localizers && self.kind != BoundKind::Cp {
            return Err(HierarchyError::Variant(
                "extra monomial localizers apply to cp only".into(),
            ));
        }
        Ok(())
    }
}

/// Knobs for [`solve_request`].
#[derive(Debug, Clone, Copy)]
pub struct RequestOptions {
    /// Interior-point termination tolerances.
    pub solve: SolveOptions,
    /// Relative rank threshold for the flatness report.
    pub rank_tol: f64,
    /// Residual ceiling below which the optimum is reported as a value.
    pub residual_tol: f64,
    /// Largest `nrows * ncols` for which the SOS baseline SDP is solved; the
    /// baseline has a matrix variable of that side length, so it is skipped
    /// on large inputs.
    pub sos_baseline_cap: usize,
}

impl Default for RequestOptions {
    fn default() -> Self {
        RequestOptions {
            solve: SolveOptions::default(),
            rank_tol: 1e-6,
            residual_tol: 1e-6,
            sos_baseline_cap: 100,
        }
    }
}

/// Outcome of [`solve_request`].
#[derive(Debug, Clone)]
pub struct BoundResult {
    /// The kind that was bounded.
    pub kind: BoundKind,
    /// The level that was solved.
    pub t: usize,
    /// Certified lower bound: present only when the solver reached
    /// optimality with residuals below [`RequestOptions::residual_tol`].
    pub value: Option<f64>,
    /// Raw solver termination status.
    pub status: SolveStatus,
    /// Objective at the final iterate, certified or not.
    pub objective: f64,
    /// Rank comparison of the moment matrix against its truncations
    /// (optimal runs only).
    pub flat_report: Option<FlatnessReport>,
    /// Comparison values keyed by name (`analytic`, `rank`, `sqrt_rank`,
    /// `tau_sos`, `nuclear_norm`, `rank_plus_floor`), as applicable.
    pub baselines: BTreeMap<String, f64>,
    /// Most negative constraint eigenvalue at the final iterate (0 when
    /// feasible).
    pub max_psd_violation: f64,
    /// Largest absolute equality residual at the final iterate.
    pub max_equality_residual: f64,
    /// Interior-point iterations performed.
    pub iterations: usize,
    /// Membership warnings from input validation.
    pub warnings: Vec<String>,
    /// Solver termination detail.
    pub solver_note: String,
}

/// Assembles, solves, and analyzes one bound request.
pub fn solve_request(
    req: &BoundRequest,
    opts: &RequestOptions,
) -> Result<BoundResult, HierarchyError> {
    let warnings = req.validate()?;
    let (problem, tab) = build::assemble(req)?;
    let sol = sdpcore::solve(&problem, &opts.solve)?;
    let flat_report = match sol.status {
        SolveStatus::Optimal => Some(sdpcore::flatness(&sol, &tab, opts.rank_tol)?),
        _ => None,
    };
    let residual_ok = -sol.max_psd_violation <= opts.residual_tol
        && sol.max_equality_residual <= opts.residual_tol;
    let value = (sol.status == SolveStatus::Optimal && residual_ok)
        .then_some(sol.primal_objective);
    let baselines = baselines_for(req.kind, &req.a, value, opts);
    Ok(BoundResult {
        kind: req.kind,
        t: req.t,
        value,
        status: sol.status,
        objective: sol.primal_objective,
        flat_report,
        baselines,
        max_psd_violation: sol.max_psd_violation,
        max_equality_residual: sol.max_equality_residual,
        iterations: sol.iterations,
        warnings,
        solver_note: sol.metadata,
    })
}

/// Baseline comparison values for a matrix under one kind, without solving
/// the moment relaxation.
///
/// The `rank_plus_floor` entry needs a solved nuclear value and is therefore
/// only present in [`BoundResult::baselines`].
pub fn baselines(
    kind: BoundKind,
    a: &DMatrix<f64>,
    opts: &RequestOptions,
) -> BTreeMap<String, f64> {
    baselines_for(kind, a, None, opts)
}

/// Baseline values the solved bound should be compared against.
fn baselines_for(
    kind: BoundKind,
    a: &DMatrix<f64>,
    value: Option<f64>,
    opts: &RequestOptions,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let rank = numeric_rank(a);
    match kind {
        BoundKind::Cpsd => {
            if let Ok(v) = analytic_cpsd(a) {
                out.insert("analytic".into(), v);
            }
            out.insert("sqrt_rank".into(), (rank as f64).sqrt());
        }
        BoundKind::Cp => {
            if let Ok(v) = analytic_cpsd(a) {
                out.insert("analytic".into(), v);
            }
            out.insert("rank".into(), rank as f64);
            if let Some(v) = sos_baseline(a, BoundKind::Cp, opts) {
                out.insert("tau_sos".into(), v);
            }
        }
        BoundKind::Nonneg => {
            out.insert("rank".into(), rank as f64);
            if let Some(v) = sos_baseline(a, BoundKind::Nonneg, opts) {
                out.insert("tau_sos".into(), v);
            }
        }
        BoundKind::Psd => {
            if let Ok(v) = analytic_psd(a) {
                out.insert("analytic".into(), v);
            }
            out.insert("sqrt_rank".into(), (rank as f64).sqrt());
        }
        BoundKind::Nuclear => {
            if let Ok((_, sv, _)) = lapack::svd(a) {
                out.insert("nuclear_norm".into(), sv.iter().sum());
            }
            if let Some(v) = value {
                let fro = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                if fro > 0.0 {
                    out.insert("rank_plus_floor".into(), (v / fro).powi(2));
                }
            }
        }
    }
    out
}

/// Solves the SOS baseline SDP when the instance is small enough.
fn sos_baseline(a: &DMatrix<f64>, kind: BoundKind, opts: &RequestOptions) -> Option<f64> {
    if a.nrows() * a.ncols() > opts.sos_baseline_cap {
        return None;
    }
    let p = tau_sos(a, kind).ok()?;
    let sol = sdpcore::solve(&p, &opts.solve).ok()?;
    (sol.status == SolveStatus::Optimal).then_some(sol.primal_objective)
}

/// Numeric rank: singular values above `1e-9` of the largest.
fn numeric_rank(a: &DMatrix<f64>) -> usize {
    match lapack::svd(a) {
        Ok((_, sv, _)) => {
            let smax = sv.first().copied().unwrap_or(0.0);
            sv.iter().filter(|&&s| s > 1e-9 * smax && s > 0.0).count()
        }
        Err(_) => 0,
    }
}

/// Closed-form floor `(sum_i sqrt(A_ii))^2 / sum_ij A_ij` for the cpsd side:
/// every Gram factorization by PSD matrices needs at least this dimension.
///
/// It never exceeds the level-1 relaxation value and is exact on identity
/// matrices.
pub fn analytic_cpsd(a: &DMatrix<f64>) -> Result<f64, HierarchyError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(HierarchyError::Shape(format!(
            "needs a square matrix, got {n}x{}",
            a.ncols()
        )));
    }
    for i in 0..n {
        if a[(i, i)] < 0.0 {
            return Err(HierarchyError::Shape(format!("diagonal entry {i} is negative")));
        }
    }
    if a.iter().all(|&v| v == 0.0) {
        return Err(HierarchyError::ZeroMatrix);
    }
    let total: f64 = a.iter().sum();
    if total <= 0.0 {
        return Err(HierarchyError::Shape("entry sum must be positive".into()));
    }
    let root_diag: f64 = (0..n).map(|i| a[(i, i)].sqrt()).sum();
    Ok(root_diag * root_diag / total)
}

/// Closed-form floor `sum_i max_j A_ij / (sum_i' A_i'j)` for the psd side of
/// a nonnegative matrix.
///
/// Complementary to the moment relaxations rather than dominated by them:
/// either side can win on a given instance.
pub fn analytic_psd(a: &DMatrix<f64>) -> Result<f64, HierarchyError> {
    let (m, n) = (a.nrows(), a.ncols());
    if a.iter().any(|&v| v < 0.0) {
        return Err(HierarchyError::Shape("needs a nonnegative matrix".into()));
    }
    let col_sums: Vec<f64> = (0..n).map(|j| a.column(j).iter().sum()).collect();
    if let Some(j) = col_sums.iter().position(|&s| s == 0.0) {
        return Err(HierarchyError::ZeroColumn(j));
    }
    let mut total = 0.0;
    for i in 0..m {
        let row_best =
            (0..n).map(|j| a[(i, j)] / col_sums[j]).fold(0.0f64, f64::max);
        total += row_best;
    }
    Ok(total)
}

/// Generic upper bound `n(n+1)/2` on the cp-rank of an `n x n` completely
/// positive matrix; membership search can stop once the bound value passes it.
pub fn cp_rank_cap(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Deterministic unit direction vectors for the `directions` variant.
///
/// Level `k` collects all primitive integer vectors with entries bounded by
/// `k` in absolute value, one representative per antipodal pair (first
/// nonzero entry positive), normalized to unit length and ordered by
/// (max-norm layer, lexicographic). For `n = 3` a low-discrepancy spiral of
/// `8k` upper-hemisphere points is appended. Grids are nested in `k` and
/// every vector has unit norm.
pub fn sphere_grid(n: usize, k: usize) -> Vec<Vec<f64>> {
    if n == 0 {
        return Vec::new();
    }
    let k = k.max(1);
    let bound = k as i64;
    let mut lattice: Vec<Vec<i64>> = Vec::new();
    let mut v = vec![-bound; n];
    'odometer: loop {
        if is_primitive_rep(&v) {
            lattice.push(v.clone());
        }
        for slot in (0..n).rev() {
            if v[slot] < bound {
                v[slot] += 1;
                continue 'odometer;
            }
            v[slot] = -bound;
        }
        break;
    }
    lattice.sort_by(|a, b| {
        let la = a.iter().map(|x| x.abs()).max().unwrap_or(0);
        let lb = b.iter().map(|x| x.abs()).max().unwrap_or(0);
        la.cmp(&lb).then_with(|| a.cmp(b))
    });
    let mut out: Vec<Vec<f64>> = lattice
        .into_iter()
        .map(|v| normalize(v.into_iter().map(|x| x as f64).collect()))
        .collect();
    if n == 3 {
        for i in 0..8 * k {
            out.push(spiral_point(i as u64));
        }
    }
    out
}

/// True for the canonical representative of a primitive lattice direction:
/// nonzero, content 1, first nonzero entry positive.
fn is_primitive_rep(v: &[i64]) -> bool {
    let mut g: i64 = 0;
    for &x in v {
        g = gcd(g, x.abs());
    }
    if g != 1 {
        return false;
    }
    v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// The `i`-th point of an infinite low-discrepancy spiral on the open upper
/// hemisphere: height from the bit-reversal sequence, azimuth from the
/// golden angle. Independent of any grid level, so prefixes are nested.
fn spiral_point(i: u64) -> Vec<f64> {
    let z = van_der_corput(i + 1);
    let r = (1.0 - z * z).sqrt();
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let theta = golden_angle * i as f64;
    normalize(vec![r * theta.cos(), r * theta.sin(), z])
}

/// Bit-reversal (base-2 van der Corput) value in `(0, 1)` for `m >= 1`.
fn van_der_corput(mut m: u64) -> f64 {
    let mut r = 0.0;
    let mut f = 0.5;
    while m > 0 {
        if m & 1 == 1 {
            r += f;
        }
        f *= 0.5;
        m >>= 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::sdpcore::SolveStatus;

    fn dm(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    /// `[[1, a], [a, 1]]`, the running 2x2 example.
    fn corr(alpha: f64) -> DMatrix<f64> {
        dm(2, 2, &[1.0, alpha, alpha, 1.0])
    }

    /// `[[1, 1], [1, a]]`, the rectangular-bound 2x2 example.
    fn nn(alpha: f64) -> DMatrix<f64> {
        dm(2, 2, &[1.0, 1.0, 1.0, alpha])
    }

    fn solve_kind(kind: BoundKind, a: DMatrix<f64>, t: usize) -> BoundResult {
        solve_request(&BoundRequest::new(kind, a, t), &RequestOptions::default()).unwrap()
    }

    fn value(result: &BoundResult) -> f64 {
        assert_eq!(result.status, SolveStatus::Optimal, "note: {}", result.solver_note);
        result.value.expect("residuals within tolerance")
    }

    #[test]
    fn analytic_bound_matches_closed_forms() {
        for k in 1..=4 {
            let v = analytic_cpsd(&DMatrix::identity(k, k)).unwrap();
            assert!((v - k as f64).abs() < 1e-12);
        }
        let v = analytic_cpsd(&corr(0.5)).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-12);
        let cos2 = instances::generate("cos2_circulant", &[]).unwrap();
        let v = analytic_cpsd(&cos2.values).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "got {v}");
        assert_eq!(analytic_cpsd(&DMatrix::zeros(3, 3)), Err(HierarchyError::ZeroMatrix));
    }

    #[test]
    fn rectangular_analytic_bound_fixtures() {
        let v = analytic_psd(&DMatrix::identity(3, 3)).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        let v = analytic_psd(&dm(2, 3, &[1.0; 6])).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let hexagon = instances::generate("slack_hexagon", &[]).unwrap();
        let v = analytic_psd(&hexagon.values).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "got {v}");
        assert!(v > 1.0 && v <= 3.0);
        let with_zero_col = dm(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert_eq!(analytic_psd(&with_zero_col), Err(HierarchyError::ZeroColumn(1)));
    }

    #[test]
    fn direction_grid_is_frozen_nested_and_unit() {
        let sort = |mut g: Vec<Vec<f64>>| {
            g.sort_by(|a, b| a.partial_cmp(b).unwrap());
            g
        };
        let r = 0.5f64.sqrt();
        let expected = sort(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![r, r],
            vec![r, -r],
        ]);
        let got = sort(sphere_grid(2, 1));
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            for (x, y) in g.iter().zip(e) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        for n in 1..=4 {
            for k in 1..=3 {
                let small = sphere_grid(n, k);
                let big = sphere_grid(n, k + 1);
                for v in &small {
                    assert!(
                        big.iter().any(|w| v
                            .iter()
                            .zip(w)
                            .all(|(a, b)| (a - b).abs() < 1e-12)),
                        "grid({n},{k}) not inside grid({n},{})",
                        k + 1
                    );
                }
                for v in &small {
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!((norm - 1.0).abs() < 1e-12);
                }
            }
        }
        assert_eq!(sphere_grid(1, 3), vec![vec![1.0]]);
        // n = 3 carries the spiral tail on top of the lattice directions.
        assert_eq!(sphere_grid(3, 1).len(), 13 + 8);
    }

    #[test]
    fn gram_kind_level_one_matches_known_value() {
        let r = solve_kind(BoundKind::Cpsd, corr(0.5), 1);
        assert!((value(&r) - 4.0 / 3.0).abs() < 1e-6, "got {}", r.objective);
        assert!(r.flat_report.is_some());
        let analytic = r.baselines["analytic"];
        assert!((analytic - 4.0 / 3.0).abs() < 1e-12);
        assert!((r.baselines["sqrt_rank"] - 2.0f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn gram_kind_level_two_value_and_flatness() {
        let r = solve_kind(BoundKind::Cpsd, corr(0.5), 2);
        assert!((value(&r) - 1.5).abs() < 1e-5, "got {}", r.objective);
        assert!(r.flat_report.unwrap().any_flat());
    }

    #[test]
    fn identity_level_one_reaches_dimension() {
        let r = solve_kind(BoundKind::Cpsd, DMatrix::identity(4, 4), 1);
        assert!((value(&r) - 4.0).abs() < 1e-5);
        let r = solve_kind(BoundKind::Cp, DMatrix::identity(3, 3), 1);
        assert!((value(&r) - 3.0).abs() < 1e-5);
    }

    #[test]
    fn level_monotonicity_on_small_example() {
        let lo = value(&solve_kind(BoundKind::Cpsd, corr(0.3), 1));
        let hi = value(&solve_kind(BoundKind::Cpsd, corr(0.3), 2));
        assert!(lo <= hi + 1e-6, "t=1 gave {lo}, t=2 gave {hi}");
    }

    #[test]
    fn direction_localizers_only_tighten() {
        let base = value(&solve_kind(BoundKind::Cpsd, corr(0.5), 2));
        let mut req = BoundRequest::new(BoundKind::Cpsd, corr(0.5), 2);
        req.variants.directions = sphere_grid(2, 1);
        let strengthened = solve_request(&req, &RequestOptions::default()).unwrap();
        assert!(value(&strengthened) >= base - 1e-6);
    }

    #[test]
    fn kernel_rows_tighten_but_stay_sound() {
        // Block matrix with an exact kernel vector and a factorization of
        // size 2, so any valid bound stays at or below 2.
        let a = dm(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        for kind in [BoundKind::Cpsd, BoundKind::Cp] {
            let plain = value(&solve_kind(kind, a.clone(), 1));
            let mut req = BoundRequest::new(kind, a.clone(), 1);
            req.variants.kernel = true;
            let strengthened = solve_request(&req, &RequestOptions::default()).unwrap();
            let v = value(&strengthened);
            assert!(v >= plain - 1e-6, "{kind}: kernel {v} below plain {plain}");
            assert!(v <= 2.0 + 1e-5, "{kind}: kernel bound {v} exceeds factorization size");
        }
    }

    #[test]
    fn rectangular_bound_matches_convex_closed_form() {
        for alpha in [0.0, 0.5, 1.0] {
            let r = solve_kind(BoundKind::Nonneg, nn(alpha), 2);
            assert!(
                (value(&r) - (2.0 - alpha)).abs() < 1e-4,
                "alpha={alpha}: got {}",
                r.objective
            );
        }
    }

    #[test]
    fn all_ones_rectangle_is_rank_one() {
        let r = solve_kind(BoundKind::Nonneg, dm(2, 2, &[1.0; 4]), 1);
        assert!((value(&r) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zero_row_does_not_change_rectangular_bound() {
        let a = dm(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        let padded = dm(3, 2, &[1.0, 2.0, 3.0, 1.0, 0.0, 0.0]);
        let v1 = value(&solve_kind(BoundKind::Nonneg, a, 1));
        let v2 = value(&solve_kind(BoundKind::Nonneg, padded, 1));
        assert!((v1 - v2).abs() < 1e-5, "{v1} vs {v2}");
    }

    #[test]
    fn dagger_rows_only_tighten() {
        let base = value(&solve_kind(BoundKind::Nonneg, nn(0.5), 2));
        let mut req = BoundRequest::new(BoundKind::Nonneg, nn(0.5), 2);
        req.variants.dagger = true;
        let strengthened = solve_request(&req, &RequestOptions::default()).unwrap();
        assert!(value(&strengthened) >= base - 1e-6);
    }

    #[test]
    fn trace_kind_scalar_matrix() {
        let r = solve_kind(BoundKind::Psd, dm(1, 1, &[1.0]), 1);
        assert!((value(&r) - 1.0).abs() < 1e-5);
        assert!((r.baselines["analytic"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_family_blocks_only_tighten() {
        let a = dm(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let base = value(&solve_kind(BoundKind::Psd, a.clone(), 1));
        let mut req = BoundRequest::new(BoundKind::Psd, a, 1);
        req.variants.bilinear_pairs = vec![BilinearPair::CrossFamily];
        let strengthened = solve_request(&req, &RequestOptions::default()).unwrap();
        let v = value(&strengthened);
        assert!(v >= base - 1e-6);
        let floor = strengthened.baselines["analytic"];
        assert!(v >= floor - 1e-4, "cross-strengthened {v} below analytic {floor}");
    }

    #[test]
    fn atomic_norm_fixtures() {
        let r = solve_kind(BoundKind::Nuclear, dm(1, 1, &[1.0]), 1);
        assert!((value(&r) - 1.0).abs() < 1e-6);
        let r = solve_kind(BoundKind::Nuclear, DMatrix::identity(2, 2), 2);
        assert!((value(&r) - 2.0).abs() < 1e-5, "got {}", r.objective);
        assert!((r.baselines["nuclear_norm"] - 2.0).abs() < 1e-9);
        assert!((r.baselines["rank_plus_floor"] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn atomic_norm_respects_explicit_decompositions() {
        // Entrywise decomposition: every entry contributes one unit atom of
        // weight A_ij, so the total entry sum upper-bounds the target.
        let a = dm(2, 2, &[0.7, 0.4, 0.4, 1.1]);
        let entry_sum: f64 = a.iter().sum();
        let r = solve_kind(BoundKind::Nuclear, a, 2);
        assert!(value(&r) <= entry_sum + 1e-6);
    }

    #[test]
    fn infeasible_relaxation_certifies_non_membership() {
        // Symmetric, entrywise nonnegative, but not PSD: the quadratic
        // moments cannot sit inside any PSD moment matrix.
        let a = dm(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let req = BoundRequest::new(BoundKind::Cp, a, 1);
        let warnings = req.validate().unwrap();
        assert!(warnings.iter().any(|w| w.contains("not positive semidefinite")));
        let r = solve_request(&req, &RequestOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible, "note: {}", r.solver_note);
        assert_eq!(r.value, None);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn shape_and_level_validation() {
        let rect = dm(2, 3, &[1.0; 6]);
        for kind in [BoundKind::Cpsd, BoundKind::Cp, BoundKind::Nuclear] {
            let err = BoundRequest::new(kind, rect.clone(), 1).validate().unwrap_err();
            assert!(matches!(err, HierarchyError::Shape(_)));
        }
        let asym = dm(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let err = BoundRequest::new(BoundKind::Cpsd, asym, 1).validate().unwrap_err();
        assert!(matches!(err, HierarchyError::Shape(_)));
        let err = BoundRequest::new(BoundKind::Cp, corr(0.5), 0).validate().unwrap_err();
        assert!(matches!(err, HierarchyError::Shape(_)));
        assert!(BoundRequest::new(BoundKind::Nonneg, rect, 1).validate().is_ok());
    }

    #[test]
    fn variant_guards_reject_wrong_kinds() {
        let expect_variant = |req: &BoundRequest| {
            assert!(matches!(req.validate().unwrap_err(), HierarchyError::Variant(_)));
        };
        let mut req = BoundRequest::new(BoundKind::Cpsd, corr(0.5), 2);
        req.variants.dagger = true;
        expect_variant(&req);

        let mut req = BoundRequest::new(BoundKind::Nonneg, nn(0.5), 2);
        req.variants.tensor_levels = vec![2];
        expect_variant(&req);

        let mut req = BoundRequest::new(BoundKind::Cp, corr(0.5), 2);
        req.variants.tensor_levels = vec![3];
        expect_variant(&req);
        req.variants.tensor_levels = vec![1];
        expect_variant(&req);

        let mut req = BoundRequest::new(BoundKind::Psd, nn(0.5), 1);
        req.variants.kernel = true;
        expect_variant(&req);

        let mut req = BoundRequest::new(BoundKind::Cpsd, corr(0.5), 1);
        req.variants.extra_monomial_localizers = true;
        expect_variant(&req);

        let mut req = BoundRequest::new(BoundKind::Cpsd, corr(0.5), 2);
        req.variants.directions = vec![vec![1.0, 0.0, 0.0]];
        expect_variant(&req);

        let mut req = BoundRequest::new(BoundKind::Nonneg, nn(0.5), 2);
        req.variants.directions = vec![vec![1.0, 0.0]];
        expect_variant(&req);

        let mut req = BoundRequest::new(BoundKind::Cp, corr(0.5), 2);
        req.variants.bilinear_pairs = vec![BilinearPair::CrossFamily];
        expect_variant(&req);

        let mut req = BoundRequest::new(BoundKind::Cpsd, corr(0.5), 2);
        req.variants.bilinear_pairs = vec![BilinearPair::Localizers(0, 2)];
        expect_variant(&req);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in BoundKind::ALL {
            assert_eq!(BoundKind::parse(kind.name()), Some(kind));
        }
        assert_eq!(BoundKind::parse("CPSD"), Some(BoundKind::Cpsd));
        assert_eq!(BoundKind::parse("unknown"), None);
        assert_eq!(cp_rank_cap(3), 6);
    }

    #[test]
    fn variant_summaries_are_compact() {
        assert_eq!(Variants::default().summary(), "plain");
        let v = Variants {
            directions: vec![vec![1.0, 0.0]; 4],
            dagger: true,
            tensor_levels: vec![2, 3],
            bilinear_pairs: vec![BilinearPair::Localizers(0, 1), BilinearPair::CrossFamily],
            kernel: true,
            extra_monomial_localizers: true,
        };
        assert_eq!(v.summary(), "V4+dagger+tensor2.3+bilinear(0.1,cross)+kernel+monomials");
        assert!(!v.is_plain());
    }
}
