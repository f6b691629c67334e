//! Translation of bound requests into concrete SDPs: the moment block,
//! kind-specific localizing blocks, optional strengthening blocks and rows,
//! and the data fixes tying quadratic moments to the input matrix.

use nalgebra::DMatrix;

use crate::momentmodel::{
    AffineBlock, LinearRow, MomentTable, Polynomial, RowSense, bilinear_block, ideal_rows,
    localizing_block, moment_block, scalar_positivity_rows, tensor_block,
};
use crate::polyalg::{EquivalenceMode, NCWord};
use crate::sdpcore::{SDPProblem, lapack};

use super::{BilinearPair, BoundKind, BoundRequest, HierarchyError, KERNEL_TOL};

/// Assembles the SDP and the moment table it is phrased over.
pub(super) fn assemble(
    req: &BoundRequest,
) -> Result<(SDPProblem, MomentTable), HierarchyError> {
    req.validate()?;
    match req.kind {
        BoundKind::Cpsd | BoundKind::Cp => assemble_gram(req),
        BoundKind::Psd => assemble_povm(req),
        BoundKind::Nonneg | BoundKind::Nuclear => assemble_split(req),
    }
}

/// Number of base localizers for a kind on an `m x n` matrix; bilinear pair
/// indices address this list, then the direction localizers.
pub(super) fn localizer_count(kind: BoundKind, m: usize, n: usize) -> usize {
    match kind {
        BoundKind::Cpsd => n,
        BoundKind::Cp => n + n * (n - 1) / 2,
        BoundKind::Nonneg => (m + n) + m * n,
        BoundKind::Psd => m + n,
        BoundKind::Nuclear => m + n,
    }
}

/// Assembles the SDP for the cpsd bound: tracial symmetric noncommutative
/// moments of the Gram letters, with `L(x_i x_j)` fixed to the matrix.
pub fn build_cpsd(req: &BoundRequest) -> Result<SDPProblem, HierarchyError> {
    expect_kind(req, BoundKind::Cpsd)?;
    Ok(assemble(req)?.0)
}

/// Assembles the SDP for the cp bound: the commutative counterpart of
/// [`build_cpsd`] with the entry localizers `A_ij - x_i x_j` added.
pub fn build_cp(req: &BoundRequest) -> Result<SDPProblem, HierarchyError> {
    expect_kind(req, BoundKind::Cp)?;
    Ok(assemble(req)?.0)
}

/// Assembles the SDP for the nonnegative-rank bound: commutative moments of
/// `m + n` letters with only the cross products `L(x_i x_{m+j})` fixed.
pub fn build_nonneg(req: &BoundRequest) -> Result<SDPProblem, HierarchyError> {
    expect_kind(req, BoundKind::Nonneg)?;
    Ok(assemble(req)?.0)
}

/// Assembles the SDP for the psd-rank bound: tracial symmetric moments of
/// the row and column letters with the cross moments fixed. The row letters
/// resolve the identity, so the last one is eliminated up front rather than
/// carried as a generator with ideal rows.
pub fn build_psd(req: &BoundRequest) -> Result<SDPProblem, HierarchyError> {
    expect_kind(req, BoundKind::Psd)?;
    Ok(assemble(req)?.0)
}

/// Assembles the SDP for the nonnegative nuclear norm: commutative moments
/// with nonnegativity localizers on every letter and both halves of the
/// variables pinned to the unit sphere.
pub fn build_nuclear(req: &BoundRequest) -> Result<SDPProblem, HierarchyError> {
    expect_kind(req, BoundKind::Nuclear)?;
    Ok(assemble(req)?.0)
}

fn expect_kind(req: &BoundRequest, kind: BoundKind) -> Result<(), HierarchyError> {
    if req.kind == kind {
        Ok(())
    } else {
        Err(HierarchyError::Variant(format!(
            "request kind is {}, this builder handles {kind}",
            req.kind
        )))
    }
}

/// Square symmetric kinds (cpsd, cp): all quadratic moments are data.
fn assemble_gram(req: &BoundRequest) -> Result<(SDPProblem, MomentTable), HierarchyError> {
    let a = &req.a;
    let n = a.nrows();
    let commutative = req.kind == BoundKind::Cp;
    let mode = if commutative {
        EquivalenceMode::COMMUTATIVE
    } else {
        EquivalenceMode::TRACIAL_SYMMETRIC
    };
    let mut fixes = Vec::new();
    for i in 0..n {
        for j in i..n {
            fixes.push((pair_word(i, j)?, a[(i, j)]));
        }
    }
    let tab = MomentTable::new_table(n, req.t, mode, &fixes)?;

    // Indexable localizers: the base set, then one per direction vector.
    let mut localizers: Vec<(Polynomial, String)> = Vec::new();
    for i in 0..n {
        let mut g = Polynomial::monomial(letter(i)?, a[(i, i)].sqrt());
        g.add_term(pair_word(i, i)?, -1.0);
        localizers.push((g, format!("loc:{i}")));
    }
    if commutative {
        for i in 0..n {
            for j in (i + 1)..n {
                let mut g = Polynomial::constant(a[(i, j)]);
                g.add_term(pair_word(i, j)?, -1.0);
                localizers.push((g, format!("loc:entry{i}.{j}")));
            }
        }
    }
    for (vi, v) in req.variants.directions.iter().enumerate() {
        localizers.push((direction_localizer(a, v), format!("direction:{vi}")));
    }

    let mut blocks = vec![moment_block(&tab)?];
    for (g, label) in &localizers {
        blocks.push(localizing_block(&tab, g, label)?);
    }
    let mut extra_localizers: Vec<(Polynomial, String)> = Vec::new();
    if req.variants.extra_monomial_localizers {
        for i in 0..n {
            for j in (i + 1)..n {
                let g = Polynomial::monomial(pair_word(i, j)?, 1.0);
                let label = format!("monomial:{i}.{j}");
                blocks.push(localizing_block(&tab, &g, &label)?);
                extra_localizers.push((g, label));
            }
        }
    }
    for l in sorted_levels(&req.variants.tensor_levels) {
        blocks.push(tensor_block(&tab, a, l)?);
    }
    for pair in &req.variants.bilinear_pairs {
        // CrossFamily is rejected for these kinds during validation.
        if let BilinearPair::Localizers(i, j) = pair {
            let (g, gl) = &localizers[*i];
            let (g2, g2l) = &localizers[*j];
            blocks.push(bilinear_block(&tab, g, g2, &format!("bilinear:{gl}*{g2l}"))?);
        }
    }

    let mut eq_rows = Vec::new();
    if req.variants.kernel {
        eq_rows.extend(ideal_rows(&tab, &kernel_ideal(a)?)?);
    }
    let mut ineq_rows = Vec::new();
    if req.variants.dagger {
        let gs: Vec<Polynomial> = localizers
            .iter()
            .chain(&extra_localizers)
            .map(|(g, _)| g.clone())
            .collect();
        ineq_rows.extend(scalar_positivity_rows(&tab, &gs)?);
    }
    let p = finish(req, &tab, blocks, eq_rows, ineq_rows);
    Ok((p, tab))
}

/// Rectangular commutative kinds (nonneg, nuclear): letters split into a row
/// half and a column half, with only the cross moments fixed.
fn assemble_split(req: &BoundRequest) -> Result<(SDPProblem, MomentTable), HierarchyError> {
    let a = &req.a;
    let (m, n) = (a.nrows(), a.ncols());
    let nv = m + n;
    let mut fixes = Vec::new();
    for i in 0..m {
        for j in 0..n {
            fixes.push((pair_word(i, m + j)?, a[(i, j)]));
        }
    }
    let tab = MomentTable::new_table(nv, req.t, EquivalenceMode::COMMUTATIVE, &fixes)?;

    let mut localizers: Vec<(Polynomial, String)> = Vec::new();
    if req.kind == BoundKind::Nonneg {
        let amax = a.iter().copied().fold(0.0f64, f64::max);
        let root = amax.sqrt();
        for k in 0..nv {
            let mut g = Polynomial::monomial(letter(k)?, root);
            g.add_term(pair_word(k, k)?, -1.0);
            localizers.push((g, format!("loc:{k}")));
        }
        for i in 0..m {
            for j in 0..n {
                let mut g = Polynomial::constant(a[(i, j)]);
                g.add_term(pair_word(i, m + j)?, -1.0);
                localizers.push((g, format!("loc:entry{i}.{j}")));
            }
        }
    } else {
        for k in 0..nv {
            localizers.push((Polynomial::monomial(letter(k)?, 1.0), format!("loc:{k}")));
        }
    }

    let mut blocks = vec![moment_block(&tab)?];
    for (g, label) in &localizers {
        blocks.push(localizing_block(&tab, g, label)?);
    }
    for pair in &req.variants.bilinear_pairs {
        // CrossFamily is rejected for these kinds during validation.
        if let BilinearPair::Localizers(i, j) = pair {
            let (g, gl) = &localizers[*i];
            let (g2, g2l) = &localizers[*j];
            blocks.push(bilinear_block(&tab, g, g2, &format!("bilinear:{gl}*{g2l}"))?);
        }
    }

    let mut eq_rows = Vec::new();
    if req.kind == BoundKind::Nuclear {
        // Both halves of an atom are unit vectors.
        let mut row_sphere = Polynomial::constant(-1.0);
        for i in 0..m {
            row_sphere.add_term(pair_word(i, i)?, 1.0);
        }
        let mut col_sphere = Polynomial::constant(-1.0);
        for j in 0..n {
            col_sphere.add_term(pair_word(m + j, m + j)?, 1.0);
        }
        eq_rows.extend(ideal_rows(&tab, &[row_sphere, col_sphere])?);
    }
    let mut ineq_rows = Vec::new();
    if req.variants.dagger {
        let gs: Vec<Polynomial> = localizers.iter().map(|(g, _)| g.clone()).collect();
        ineq_rows.extend(scalar_positivity_rows(&tab, &gs)?);
    }
    let p = finish(req, &tab, blocks, eq_rows, ineq_rows);
    Ok((p, tab))
}

/// The psd kind: tracial symmetric moments of the row and column letters,
/// where the row letters resolve the identity. The last row letter is
/// eliminated against that relation up front, becoming the polynomial
/// `s = 1 - x_1 - ... - x_{m-1}` wherever it appears: its data fixes turn
/// into equality rows and its localizer into a quadratic polynomial. Working
/// in this quotient keeps the moment and localizing matrices generically
/// nonsingular, where explicit ideal rows would force rank defects at every
/// feasible point.
fn assemble_povm(req: &BoundRequest) -> Result<(SDPProblem, MomentTable), HierarchyError> {
    let a = &req.a;
    let (m, n) = (a.nrows(), a.ncols());
    let mm = m - 1;
    let col = |j: usize| mm + j;

    let mut fixes = Vec::new();
    for i in 0..mm {
        for j in 0..n {
            fixes.push((pair_word(i, col(j))?, a[(i, j)]));
        }
    }
    let tab = MomentTable::new_table(mm + n, req.t, EquivalenceMode::TRACIAL_SYMMETRIC, &fixes)?;

    // Data rows for the eliminated letter: L(s y_j) = A_{m-1,j}; the fixed
    // cross moments inside fold into the constant.
    let mut eq_rows = Vec::new();
    for j in 0..n {
        let mut p = Polynomial::monomial(letter(col(j))?, 1.0);
        for i in 0..mm {
            p.add_term(pair_word(i, col(j))?, -1.0);
        }
        let expr = tab.poly_expr(&p)?;
        eq_rows.push(LinearRow {
            coeffs: expr.coeffs.into_iter().collect(),
            constant: expr.constant - a[(mm, j)],
            sense: RowSense::Equality,
        });
    }

    // Indexable localizers: x_i - x_i^2 per row letter, with the eliminated
    // one expanded to s - s^2 = r - r^2 for r = x_1 + ... + x_{m-1} (empty
    // when m = 1), then the column localizers scaled by the column sums.
    let mut localizers: Vec<(Polynomial, String)> = Vec::new();
    for i in 0..mm {
        let mut g = Polynomial::monomial(letter(i)?, 1.0);
        g.add_term(pair_word(i, i)?, -1.0);
        localizers.push((g, format!("loc:row{i}")));
    }
    let mut g = Polynomial::zero();
    for i in 0..mm {
        g.add_term(letter(i)?, 1.0);
        for k in 0..mm {
            g.add_term(pair_word(i, k)?, -1.0);
        }
    }
    localizers.push((g, format!("loc:row{mm}")));
    for j in 0..n {
        let col_sum: f64 = a.column(j).iter().sum();
        let mut g = Polynomial::monomial(letter(col(j))?, col_sum);
        g.add_term(pair_word(col(j), col(j))?, -1.0);
        localizers.push((g, format!("loc:col{j}")));
    }

    let nonzero = |g: &Polynomial| g.terms().next().is_some();
    let mut blocks = vec![moment_block(&tab)?];
    for (g, label) in &localizers {
        if nonzero(g) {
            blocks.push(localizing_block(&tab, g, label)?);
        }
    }
    for pair in &req.variants.bilinear_pairs {
        match pair {
            BilinearPair::Localizers(i, j) => {
                let (g, gl) = &localizers[*i];
                let (g2, g2l) = &localizers[*j];
                if nonzero(g) && nonzero(g2) {
                    blocks.push(bilinear_block(&tab, g, g2, &format!("bilinear:{gl}*{g2l}"))?);
                }
            }
            BilinearPair::CrossFamily => {
                let mut s = Polynomial::constant(1.0);
                for i in 0..mm {
                    s.add_term(letter(i)?, -1.0);
                }
                for i in 0..m {
                    let g = if i < mm {
                        Polynomial::monomial(letter(i)?, 1.0)
                    } else {
                        s.clone()
                    };
                    for j in 0..n {
                        let col_sum: f64 = a.column(j).iter().sum();
                        let mut g2 = Polynomial::constant(col_sum);
                        g2.add_term(letter(col(j))?, -1.0);
                        blocks.push(bilinear_block(&tab, &g, &g2, &format!("cross:{i}.{j}"))?);
                    }
                }
            }
        }
    }

    let p = finish(req, &tab, blocks, eq_rows, Vec::new());
    Ok((p, tab))
}

/// The quadratic localizer `v' A v - (sum_i v_i x_i)^2` of a direction `v`;
/// symmetric in both commutative and word modes.
fn direction_localizer(a: &DMatrix<f64>, v: &[f64]) -> Polynomial {
    let n = v.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += v[i] * a[(i, j)] * v[j];
        }
    }
    let mut g = Polynomial::constant(quad);
    for i in 0..n {
        for j in 0..n {
            if v[i] != 0.0 && v[j] != 0.0 {
                let w = NCWord::from_letters(&[(i + 1) as u8, (j + 1) as u8])
                    .expect("validated dimension");
                g.add_term(w, -v[i] * v[j]);
            }
        }
    }
    g
}

/// Ideal generators from the matrix: one linear form per (numerically exact)
/// kernel eigenvector and one quadratic word per exact-zero entry.
fn kernel_ideal(a: &DMatrix<f64>) -> Result<Vec<Polynomial>, HierarchyError> {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let (eigs, vecs) =
        lapack::sym_eigen(&sym).map_err(|e| HierarchyError::Shape(e.to_string()))?;
    let scale = eigs.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
    let cutoff = KERNEL_TOL * (1.0 + scale);
    let mut polys = Vec::new();
    for (idx, &e) in eigs.iter().enumerate() {
        if e.abs() <= cutoff {
            let mut p = Polynomial::zero();
            for i in 0..n {
                p.add_term(letter(i)?, vecs[(i, idx)]);
            }
            polys.push(p);
        }
    }
    for i in 0..n {
        for j in i..n {
            if a[(i, j)] == 0.0 {
                polys.push(Polynomial::monomial(pair_word(i, j)?, 1.0));
            }
        }
    }
    Ok(polys)
}

/// The word `x_{i+1} x_{j+1}` from zero-based letter indices.
fn pair_word(i: usize, j: usize) -> Result<NCWord, HierarchyError> {
    Ok(NCWord::from_letters(&[(i + 1) as u8, (j + 1) as u8])
        .map_err(crate::momentmodel::MomentError::from)?)
}

/// The single-letter word `x_{i+1}` from a zero-based index.
fn letter(i: usize) -> Result<NCWord, HierarchyError> {
    Ok(NCWord::generator(i + 1).map_err(crate::momentmodel::MomentError::from)?)
}

fn sorted_levels(levels: &[usize]) -> Vec<usize> {
    let mut ls = levels.to_vec();
    ls.sort_unstable();
    ls.dedup();
    ls
}

fn finish(
    req: &BoundRequest,
    tab: &MomentTable,
    blocks: Vec<AffineBlock>,
    eq_rows: Vec<LinearRow>,
    ineq_rows: Vec<LinearRow>,
) -> SDPProblem {
    SDPProblem {
        nvars: tab.num_vars(),
        objective: vec![(tab.unit_var(), 1.0)],
        obj_constant: 0.0,
        blocks,
        eq_rows,
        ineq_rows,
        metadata: format!(
            "{} t={} {}x{} {}",
            req.kind,
            req.t,
            req.a.nrows(),
            req.a.ncols(),
            req.variants.summary()
        ),
    }
}

/// The quadratic SOS baseline SDP: minimize `alpha` such that the arrow
/// matrix `[[alpha, vec(A)'], [vec(A), X]]` is PSD, diagonal entries of `X`
/// stay below `A_ij^2`, `X` carries the pair-swap symmetry of a moment
/// matrix, and (square symmetric case) `X` stays below `A (x) A`.
///
/// Solving it yields the convex baseline the level-2 strengthened bounds are
/// compared against; the optimum also dominates `rank(A)` in the square case.
pub fn tau_sos(a: &DMatrix<f64>, kind: BoundKind) -> Result<SDPProblem, HierarchyError> {
    if !matches!(kind, BoundKind::Cp | BoundKind::Nonneg) {
        return Err(HierarchyError::Variant(
            "the SOS baseline exists for cp and nonneg only".into(),
        ));
    }
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Err(HierarchyError::Shape("matrix is empty".into()));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(HierarchyError::Shape("matrix has a non-finite entry".into()));
    }
    if kind == BoundKind::Cp {
        if m != n {
            return Err(HierarchyError::Shape(format!(
                "cp needs a square matrix, got {m}x{n}"
            )));
        }
        let scale = 1.0 + a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let skew = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (a[(i, j)] - a[(j, i)]).abs())
            .fold(0.0f64, f64::max);
        if skew > super::CHECK_TOL * scale {
            return Err(HierarchyError::Shape("cp needs a symmetric matrix".into()));
        }
    }
    let mn = m * n;
    let pair = |i: usize, j: usize| i * n + j;
    // Variable 0 is alpha; then the upper triangle of X in row-major order.
    let tri = |p: usize, q: usize| 1 + p * mn - p * (p + 1) / 2 + q;
    let nvars = 1 + mn * (mn + 1) / 2;

    let mut arrow_constant = Vec::new();
    let mut arrow_coeffs: Vec<(usize, Vec<(u32, u32, f64)>)> = Vec::new();
    arrow_coeffs.push((0, vec![(0, 0, 1.0)]));
    for i in 0..m {
        for j in 0..n {
            let p = pair(i, j);
            if a[(i, j)] != 0.0 {
                arrow_constant.push((0, (1 + p) as u32, a[(i, j)]));
            }
        }
    }
    for p in 0..mn {
        for q in p..mn {
            arrow_coeffs.push((tri(p, q), vec![((1 + p) as u32, (1 + q) as u32, 1.0)]));
        }
    }
    let mut blocks = vec![AffineBlock {
        dim: mn + 1,
        label: "arrow".into(),
        constant: arrow_constant,
        coeffs: arrow_coeffs,
    }];

    if kind == BoundKind::Cp {
        // A (x) A - X >= 0 over pair indices p = (i, j), q = (k, l).
        let mut constant = Vec::new();
        let mut coeffs: Vec<(usize, Vec<(u32, u32, f64)>)> = Vec::new();
        for p in 0..mn {
            for q in p..mn {
                let (i, j) = (p / n, p % n);
                let (k, l) = (q / n, q % n);
                let v = a[(i, k)] * a[(j, l)];
                if v != 0.0 {
                    constant.push((p as u32, q as u32, v));
                }
                coeffs.push((tri(p, q), vec![(p as u32, q as u32, -1.0)]));
            }
        }
        coeffs.sort_by_key(|&(v, _)| v);
        blocks.push(AffineBlock { dim: mn, label: "tensor-cap".into(), constant, coeffs });
    }

    let mut ineq_rows = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let p = pair(i, j);
            ineq_rows.push(LinearRow {
                coeffs: vec![(tri(p, p), -1.0)],
                constant: a[(i, j)] * a[(i, j)],
                sense: crate::momentmodel::RowSense::GeqZero,
            });
        }
    }
    let mut eq_rows = Vec::new();
    for i in 0..m {
        for k in (i + 1)..m {
            for j in 0..n {
                for l in (j + 1)..n {
                    // X_{(i,j),(k,l)} = X_{(i,l),(k,j)}: both straddle rows
                    // i < k, so both pair indices are already ordered.
                    let v1 = tri(pair(i, j), pair(k, l));
                    let v2 = tri(pair(i, l), pair(k, j));
                    let mut coeffs = vec![(v1, 1.0), (v2, -1.0)];
                    coeffs.sort_by_key(|&(v, _)| v);
                    eq_rows.push(LinearRow {
                        coeffs,
                        constant: 0.0,
                        sense: crate::momentmodel::RowSense::Equality,
                    });
                }
            }
        }
    }
    Ok(SDPProblem {
        nvars,
        objective: vec![(0, 1.0)],
        obj_constant: 0.0,
        blocks,
        eq_rows,
        ineq_rows,
        metadata: format!("sos baseline {kind} {m}x{n}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchies::{RequestOptions, solve_request};
    use crate::sdpcore::{self, SolveStatus};

    fn dm(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn solve_value(p: &SDPProblem) -> f64 {
        let sol = sdpcore::solve(p, &Default::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "note: {}", sol.metadata);
        sol.primal_objective
    }

    #[test]
    fn gram_problem_has_expected_shape() {
        let a = dm(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let req = BoundRequest::new(BoundKind::Cpsd, a, 1);
        let p = build_cpsd(&req).unwrap();
        // Unit, two letters; the three quadratic classes are data.
        assert_eq!(p.nvars, 3);
        assert_eq!(p.objective, vec![(0, 1.0)]);
        assert_eq!(p.blocks.len(), 3);
        assert_eq!(p.blocks[0].dim, 3);
        assert_eq!(p.blocks[1].dim, 1);
        p.validate().unwrap();
        let err = build_cp(&req).unwrap_err();
        assert!(matches!(err, HierarchyError::Variant(_)));
    }

    #[test]
    fn cp_problem_adds_entry_localizers() {
        let a = dm(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let p = build_cp(&BoundRequest::new(BoundKind::Cp, a, 1)).unwrap();
        // Moment block + 2 diagonal + 1 entry localizer.
        assert_eq!(p.blocks.len(), 4);
        p.validate().unwrap();
    }

    #[test]
    fn split_problem_fixes_cross_moments_only() {
        let a = dm(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p = build_nonneg(&BoundRequest::new(BoundKind::Nonneg, a, 1)).unwrap();
        // Classes of degree <= 2 in 5 commuting letters: 1 + 5 + 15 = 21,
        // minus the 6 fixed cross moments.
        assert_eq!(p.nvars, 15);
        // Moment block + 5 letter localizers + 6 entry localizers.
        assert_eq!(p.blocks.len(), 12);
        p.validate().unwrap();
    }

    #[test]
    fn psd_problem_eliminates_last_row_letter() {
        let a = dm(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = build_psd(&BoundRequest::new(BoundKind::Psd, a, 1)).unwrap();
        // Letters x1, y1, y2: 1 + 3 + 6 classes of degree <= 2, minus the two
        // fixed cross moments; the eliminated row letter contributes one data
        // row per column instead of fixes.
        assert_eq!(p.nvars, 8);
        assert_eq!(p.eq_rows.len(), 2);
        // Moment block, both row localizers, two column localizers.
        assert_eq!(p.blocks.len(), 5);
        p.validate().unwrap();
    }

    #[test]
    fn nuclear_problem_pins_both_spheres() {
        let a = dm(1, 1, &[1.0]);
        let p = build_nuclear(&BoundRequest::new(BoundKind::Nuclear, a, 1)).unwrap();
        // I_2(x1^2 - 1) and I_2(x2^2 - 1) each contribute one row at t = 1.
        assert_eq!(p.eq_rows.len(), 2);
        p.validate().unwrap();
    }

    #[test]
    fn sos_baseline_matches_closed_form_on_two_by_two() {
        for alpha in [0.0, 0.25, 0.5, 1.0] {
            let a = dm(2, 2, &[1.0, 1.0, 1.0, alpha]);
            let p = tau_sos(&a, BoundKind::Nonneg).unwrap();
            let v = solve_value(&p);
            let expected = 2.0 / (1.0 + alpha);
            assert!((v - expected).abs() < 1e-6, "alpha={alpha}: {v} vs {expected}");
        }
    }

    #[test]
    fn sos_baseline_on_bipartite_block_matrix() {
        let inst = crate::instances::generate("bipartite", &[0.0, 0.0]).unwrap();
        let p = tau_sos(&inst.values, BoundKind::Cp).unwrap();
        let v = solve_value(&p);
        assert!((v - 6.0).abs() < 1e-5, "got {v}");
    }

    #[test]
    fn sos_baseline_dominates_rank_on_random_gram_matrices() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let b = DMatrix::from_fn(3, 2, |_, _| rng.random_range(0.0..1.0));
            let a = &b * b.transpose();
            let p = tau_sos(&a, BoundKind::Cp).unwrap();
            let v = solve_value(&p);
            assert!(v >= 2.0 - 1e-6, "rank-2 instance got {v}");
        }
    }

    #[test]
    fn strengthened_cp_dominates_sos_baseline() {
        let a = dm(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let tau = solve_value(&tau_sos(&a, BoundKind::Cp).unwrap());
        let mut req = BoundRequest::new(BoundKind::Cp, a, 2);
        req.variants.dagger = true;
        req.variants.tensor_levels = vec![2];
        let r = solve_request(&req, &RequestOptions::default()).unwrap();
        let v = r.value.unwrap();
        assert!(v >= tau - 1e-5, "strengthened {v} below baseline {tau}");
    }

    #[test]
    fn bipartite_block_matrix_reaches_product_bound() {
        let inst = crate::instances::generate("bipartite", &[0.0, 0.0]).unwrap();
        let mut req = BoundRequest::new(BoundKind::Cp, inst.values, 2);
        req.variants.dagger = true;
        req.variants.tensor_levels = vec![2];
        let r = solve_request(&req, &RequestOptions::default()).unwrap();
        let v = r.value.expect("optimal");
        assert!((v - 6.0).abs() < 1e-4, "got {v}");
    }

    #[test]
    fn builders_reject_mismatched_kind() {
        let a = dm(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let req = BoundRequest::new(BoundKind::Cp, a, 1);
        assert!(build_cpsd(&req).is_err());
        assert!(build_nonneg(&req).is_err());
        assert!(build_psd(&req).is_err());
        assert!(build_nuclear(&req).is_err());
        assert!(tau_sos(&req.a, BoundKind::Cpsd).is_err());
    }

    #[test]
    fn tensor_block_respects_baseline_feasible_set() {
        // On a feasible moment vector of the tensor-strengthened problem,
        // the arrow matrix of the SOS baseline is PSD.
        let a = dm(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let mut req = BoundRequest::new(BoundKind::Cp, a.clone(), 2);
        req.variants.dagger = true;
        req.variants.tensor_levels = vec![2];
        let (p, tab) = assemble(&req).unwrap();
        let sol = sdpcore::solve(&p, &Default::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        // Arrow matrix over monomials {1, x1^2, x1x2, x2^2}.
        let words: Vec<NCWord> = vec![
            NCWord::one(),
            NCWord::from_letters(&[1, 1]).unwrap(),
            NCWord::from_letters(&[1, 2]).unwrap(),
            NCWord::from_letters(&[2, 2]).unwrap(),
        ];
        let mut arrow = DMatrix::zeros(4, 4);
        for (r, u) in words.iter().enumerate() {
            for (c, v) in words.iter().enumerate() {
                let e = tab
                    .entry_expr(u, &Polynomial::constant(1.0), v, None)
                    .unwrap();
                arrow[(r, c)] = e.eval(&sol.y);
            }
        }
        let eigs = lapack::sym_eigenvalues(&arrow).unwrap();
        assert!(eigs[0] > -1e-7, "arrow matrix eigenvalue {}", eigs[0]);
    }
}
