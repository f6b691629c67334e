//! Dual-form semidefinite programs, an embedded interior-point solver, a
//! sparse interchange format, and solution analysis.
//!
//! Problems minimize a linear objective over affine PSD block constraints
//! plus scalar equality and inequality rows. The solver eliminates the
//! equalities exactly (see [`presolve`]), runs a primal-dual predictor-
//! corrector iteration with Nesterov-Todd scaling on the reduced problem,
//! and reports the solution together with exact residuals measured on the
//! original problem data. Analysis helpers reconstruct numeric moment
//! matrices from a solution and compute flatness certificates.

pub mod lapack;
mod ipm;
mod presolve;
mod sdpa;

use nalgebra::DMatrix;

use crate::momentmodel::{AffineBlock, LinearRow, MomentTable, RowSense};

pub use sdpa::{SdpaEqualities, export_sdpa, export_sdpa_with, parse_sdpa};

/// Errors from problem validation and solution analysis.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    /// The problem violates a structural invariant.
    #[error("ill-formed problem: {0}")]
    IllFormed(String),
    /// The operation needs a solved (optimal) solution.
    #[error("solution status is not optimal")]
    NotSolved,
    /// A dense linear-algebra kernel failed.
    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

/// A dual-LMI-form semidefinite program:
/// minimize `objective . y + constant` subject to every block being PSD at
/// `y`, every equality row vanishing, and every inequality row nonnegative.
#[derive(Debug, Clone, Default)]
pub struct SDPProblem {
    /// Number of scalar variables.
    pub nvars: usize,
    /// Sparse objective coefficients, sorted by variable.
    pub objective: Vec<(usize, f64)>,
    /// Constant added to the objective value.
    pub obj_constant: f64,
    /// Affine PSD block constraints.
    pub blocks: Vec<AffineBlock>,
    /// Affine equality rows.
    pub eq_rows: Vec<LinearRow>,
    /// Affine inequality (`>= 0`) rows.
    pub ineq_rows: Vec<LinearRow>,
    /// Instance provenance carried through to reports.
    pub metadata: String,
}

impl SDPProblem {
    /// Checks the structural invariants: a nonempty objective over declared
    /// variables, positive block dimensions, in-range entries, and every
    /// variable referenced by some block or row.
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.objective.is_empty() {
            return Err(SdpError::IllFormed("empty objective".into()));
        }
        let check_var = |v: usize, what: &str| {
            if v >= self.nvars {
                Err(SdpError::IllFormed(format!("{what} references variable {v} >= {}", self.nvars)))
            } else {
                Ok(())
            }
        };
        for &(v, c) in &self.objective {
            check_var(v, "objective")?;
            if !c.is_finite() {
                return Err(SdpError::IllFormed("non-finite objective coefficient".into()));
            }
        }
        let mut referenced = vec![false; self.nvars];
        for (bi, b) in self.blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(SdpError::IllFormed(format!("block {bi} has dimension 0")));
            }
            let dim = b.dim as u32;
            for &(i, j, v) in &b.constant {
                if i > j || j >= dim || !v.is_finite() {
                    return Err(SdpError::IllFormed(format!("block {bi} has a bad constant entry")));
                }
            }
            for (var, entries) in &b.coeffs {
                check_var(*var, "block")?;
                referenced[*var] = true;
                for &(i, j, v) in entries {
                    if i > j || j >= dim || !v.is_finite() {
                        return Err(SdpError::IllFormed(format!(
                            "block {bi} has a bad entry for variable {var}"
                        )));
                    }
                }
            }
        }
        for r in self.eq_rows.iter().chain(&self.ineq_rows) {
            for &(v, c) in &r.coeffs {
                check_var(v, "row")?;
                referenced[v] = true;
                if !c.is_finite() {
                    return Err(SdpError::IllFormed("non-finite row coefficient".into()));
                }
            }
        }
        if let Some(v) = referenced.iter().position(|r| !r) {
            return Err(SdpError::IllFormed(format!("variable {v} is unreferenced")));
        }
        for r in &self.eq_rows {
            if r.sense != RowSense::Equality {
                return Err(SdpError::IllFormed("inequality row in eq_rows".into()));
            }
        }
        for r in &self.ineq_rows {
            if r.sense != RowSense::GeqZero {
                return Err(SdpError::IllFormed("equality row in ineq_rows".into()));
            }
        }
        Ok(())
    }

    /// Objective value at a variable assignment.
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.obj_constant + self.objective.iter().map(|&(v, c)| c * y[v]).sum::<f64>()
    }
}

/// Termination status of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Residuals and relative gap within tolerances.
    Optimal,
    /// Heuristic infeasibility certificate: primal infeasibility stalls
    /// while the dual objective diverges, or a structural contradiction.
    Infeasible,
    /// Iteration limit reached without meeting either criterion.
    MaxIter,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveStatus::Optimal => write!(f, "optimal"),
            SolveStatus::Infeasible => write!(f, "infeasible"),
            SolveStatus::MaxIter => write!(f, "max-iter"),
        }
    }
}

/// Solver options; defaults suit the acceptance tolerances of the bounds.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative feasibility tolerance for primal and dual residuals.
    pub feas_tol: f64,
    /// Relative complementarity-gap tolerance.
    pub gap_tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { feas_tol: 1e-8, gap_tol: 1e-8, max_iter: 200 }
    }
}

/// Numeric solution of an [`SDPProblem`].
#[derive(Debug, Clone)]
pub struct SDPSolution {
    /// Values of the original problem variables.
    pub y: Vec<f64>,
    /// Termination status.
    pub status: SolveStatus,
    /// Objective value at `y` (the minimization objective).
    pub primal_objective: f64,
    /// Best lower bound from the dual iterate.
    pub dual_objective: f64,
    /// Most negative eigenvalue across all blocks and inequality rows at `y`
    /// (0 when everything is PSD).
    pub max_psd_violation: f64,
    /// Largest absolute equality-row residual at `y`.
    pub max_equality_residual: f64,
    /// Interior-point iterations performed.
    pub iterations: usize,
    /// Termination detail, including the heuristic infeasibility certificate.
    pub metadata: String,
}

/// Solves the problem with an infeasible-start primal-dual interior-point
/// method. Deterministic for identical inputs and options.
pub fn solve(p: &SDPProblem, opts: &SolveOptions) -> Result<SDPSolution, SdpError> {
    p.validate()?;
    ipm::run(p, opts)
}

/// One flatness comparison at a given level drop.
#[derive(Debug, Clone, Copy)]
pub struct FlatnessEntry {
    /// The level drop `delta`.
    pub delta: usize,
    /// Numeric rank of the full moment matrix `M_t`.
    pub rank_full: usize,
    /// Numeric rank of the truncated moment matrix `M_{t-delta}`.
    pub rank_truncated: usize,
    /// Absolute singular-value threshold used for both ranks.
    pub threshold: f64,
    /// True when the two ranks coincide.
    pub flat: bool,
}

/// Flatness certificate: rank comparisons of `M_t` against each truncation.
#[derive(Debug, Clone)]
pub struct FlatnessReport {
    /// The level of the underlying table.
    pub t: usize,
    /// The relative rank tolerance that produced the thresholds.
    pub rank_tol: f64,
    /// One entry per `delta` in `1..=t`.
    pub entries: Vec<FlatnessEntry>,
}

impl FlatnessReport {
    /// True when any truncation level is flat.
    pub fn any_flat(&self) -> bool {
        self.entries.iter().any(|e| e.flat)
    }
}

/// Reconstructs the numeric moment matrix `M_s` from a solved assignment,
/// substituting the table's fixed classes.
pub fn extract_moment_matrix(
    sol: &SDPSolution,
    tab: &MomentTable,
    s: usize,
) -> Result<DMatrix<f64>, SdpError> {
    if sol.status != SolveStatus::Optimal {
        return Err(SdpError::NotSolved);
    }
    moment_matrix_at(&sol.y, tab, s)
}

/// The numeric moment matrix at an explicit assignment (no status check).
pub fn moment_matrix_at(
    y: &[f64],
    tab: &MomentTable,
    s: usize,
) -> Result<DMatrix<f64>, SdpError> {
    if s > tab.t() {
        return Err(SdpError::IllFormed(format!("requested level {s} exceeds table level", )));
    }
    let basis = tab
        .index_basis(s)
        .map_err(|e| SdpError::IllFormed(e.to_string()))?;
    let one = crate::momentmodel::Polynomial::constant(1.0);
    let dim = basis.len();
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let e = tab
                .entry_expr(&basis[i], &one, &basis[j], None)
                .map_err(|e| SdpError::IllFormed(e.to_string()))?;
            let v = e.eval(y);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Computes the flatness report of a solved moment table: for each level
/// drop `delta`, compares the numeric ranks of `M_t` and `M_{t-delta}`.
///
/// Ranks count singular values above `rank_tol * sigma_max(M_t)`; using one
/// threshold for both matrices keeps the truncated rank monotone.
pub fn flatness(
    sol: &SDPSolution,
    tab: &MomentTable,
    rank_tol: f64,
) -> Result<FlatnessReport, SdpError> {
    if sol.status != SolveStatus::Optimal {
        return Err(SdpError::NotSolved);
    }
    let t = tab.t();
    let full = moment_matrix_at(&sol.y, tab, t)?;
    let sigma = |m: &DMatrix<f64>| -> Result<Vec<f64>, SdpError> {
        let mut v = lapack::sym_eigenvalues(m)
            .map_err(|e| SdpError::Numerical(e.to_string()))?
            .into_iter()
            .map(f64::abs)
            .collect::<Vec<_>>();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(v)
    };
    let full_sv = sigma(&full)?;
    let sigma_max = full_sv.first().copied().unwrap_or(0.0);
    let threshold = rank_tol * sigma_max;
    let rank_of = |sv: &[f64]| sv.iter().filter(|&&s| s > threshold).count();
    let rank_full = rank_of(&full_sv);
    let mut entries = Vec::new();
    for delta in 1..=t {
        let trunc = moment_matrix_at(&sol.y, tab, t - delta)?;
        let rank_truncated = rank_of(&sigma(&trunc)?);
        entries.push(FlatnessEntry {
            delta,
            rank_full,
            rank_truncated,
            threshold,
            flat: rank_full == rank_truncated,
        });
    }
    Ok(FlatnessReport { t, rank_tol, entries })
}
