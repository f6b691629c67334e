//! Exact elimination of equality rows ahead of the interior-point iteration.
//!
//! Equality rows are affine relations among the problem variables. Rather
//! than handling them with penalty terms or paired inequalities, they are
//! eliminated exactly: Gaussian elimination produces a substitution
//! `y = y0 + Z u` onto a reduced free-variable vector `u`, and the solver
//! runs on the reduced space. The substitution is kept sparse by always
//! pivoting on the lowest eligible variable id, which for moment-table
//! ideals means low-degree classes are rewritten in terms of high-degree
//! ones and fill-in stays bounded.

use std::collections::{BTreeMap, BTreeSet};

use crate::momentmodel::LinearRow;

/// Relative pivot eligibility: a coefficient qualifies as pivot when it is at
/// least this fraction of the row's largest coefficient.
const PIVOT_REL_TOL: f64 = 1e-2;

/// Residual threshold (relative to row magnitude) above which a fully
/// reduced, variable-free row is a contradiction.
const CONTRADICTION_TOL: f64 = 1e-7;

/// The affine substitution `y = y0 + Z u` produced by elimination.
#[derive(Debug, Clone)]
pub struct Elimination {
    /// Number of original variables.
    pub nvars: usize,
    /// Original index of each free variable, ascending.
    pub free: Vec<usize>,
    /// Constant part `y0`, one entry per original variable.
    pub y0: Vec<f64>,
    /// Rows of `Z`: for each original variable, its expression in free
    /// variables as sorted `(free index, coeff)` pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Columns of `Z`: for each free variable, the original variables whose
    /// expression references it, as sorted `(original index, coeff)` pairs.
    pub cols: Vec<Vec<(usize, f64)>>,
}

/// Outcome of eliminating the equality rows.
pub enum EliminationResult {
    /// Substitution onto the free variables.
    Reduced(Elimination),
    /// The rows are inconsistent; no assignment satisfies them.
    Contradiction {
        /// Residual magnitude of the violated row.
        residual: f64,
    },
}

/// Eliminates `rows` over `nvars` variables.
pub fn eliminate(nvars: usize, rows: &[LinearRow]) -> EliminationResult {
    // pivot var -> (expression in non-pivot vars, constant)
    let mut dict: BTreeMap<usize, (BTreeMap<usize, f64>, f64)> = BTreeMap::new();
    // var -> pivots whose expression may reference it; advisory, since a
    // cancellation during back-substitution leaves stale entries behind
    let mut uses: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();

    for row in rows {
        // Expand the row and substitute all known pivots.
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        let mut constant = row.constant;
        let mut scale = row.constant.abs();
        for &(v, c) in &row.coeffs {
            scale = scale.max(c.abs());
            match dict.get(&v) {
                None => merge(&mut acc, v, c),
                Some((expr, k)) => {
                    constant += c * k;
                    for (&ev, &ec) in expr {
                        merge(&mut acc, ev, c * ec);
                    }
                }
            }
        }
        if acc.is_empty() {
            if constant.abs() > CONTRADICTION_TOL * scale.max(1.0) {
                return EliminationResult::Contradiction { residual: constant.abs() };
            }
            continue;
        }
        // Pivot: lowest id whose coefficient is not negligibly small.
        let maxabs = acc.values().fold(0.0f64, |m, c| m.max(c.abs()));
        let (&pivot, &pc) = acc
            .iter()
            .find(|(_, c)| c.abs() >= PIVOT_REL_TOL * maxabs)
            .expect("a maximal coefficient is always eligible");
        acc.remove(&pivot);
        // y_pivot = -(constant + rest)/pc
        let expr: BTreeMap<usize, f64> =
            acc.into_iter().map(|(v, c)| (v, -c / pc)).collect();
        let pconst = -constant / pc;

        // Back-substitute the new pivot into existing expressions.
        if let Some(users) = uses.remove(&pivot) {
            for user in users {
                let Some((uexpr, uconst)) = dict.get_mut(&user) else { continue };
                let Some(c) = uexpr.remove(&pivot) else { continue };
                *uconst += c * pconst;
                for (&ev, &ec) in &expr {
                    let e = uexpr.entry(ev).or_insert(0.0);
                    *e += c * ec;
                    if *e == 0.0 {
                        uexpr.remove(&ev);
                    } else {
                        uses.entry(ev).or_default().insert(user);
                    }
                }
            }
        }
        for &ev in expr.keys() {
            uses.entry(ev).or_default().insert(pivot);
        }
        dict.insert(pivot, (expr, pconst));
    }

    // Assemble the substitution. Free variables are the non-pivots.
    let free: Vec<usize> = (0..nvars).filter(|v| !dict.contains_key(v)).collect();
    let free_index: BTreeMap<usize, usize> =
        free.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut y0 = vec![0.0; nvars];
    let mut z_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nvars];
    for (i, &v) in free.iter().enumerate() {
        z_rows[v].push((i, 1.0));
    }
    for (&p, (expr, k)) in &dict {
        y0[p] = *k;
        z_rows[p] = expr
            .iter()
            .map(|(&v, &c)| (*free_index.get(&v).expect("expression is pivot-free"), c))
            .collect();
    }
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); free.len()];
    for (v, row) in z_rows.iter().enumerate() {
        for &(u, c) in row {
            cols[u].push((v, c));
        }
    }
    EliminationResult::Reduced(Elimination { nvars, free, y0, rows: z_rows, cols })
}

fn merge(acc: &mut BTreeMap<usize, f64>, v: usize, c: f64) {
    let e = acc.entry(v).or_insert(0.0);
    *e += c;
    if *e == 0.0 {
        acc.remove(&v);
    }
}

impl Elimination {
    /// Maps a reduced vector `u` back to the original variables.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.y0.clone();
        for (v, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                y[v] += c * u[j];
            }
        }
        y
    }

    /// Projects an original-space vector: `Z^T v`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.free.len()];
        for (j, col) in self.cols.iter().enumerate() {
            out[j] = col.iter().map(|&(x, c)| c * v[x]).sum();
        }
        out
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momentmodel::RowSense;

    fn eq(coeffs: &[(usize, f64)], constant: f64) -> LinearRow {
        LinearRow { coeffs: coeffs.to_vec(), constant, sense: RowSense::Equality }
    }

    #[test]
    fn substitution_satisfies_rows() {
        // y0 = y1 + y2, y1 = 2 y3 + 1 over 4 vars.
        let rows =
            vec![eq(&[(0, 1.0), (1, -1.0), (2, -1.0)], 0.0), eq(&[(1, 1.0), (3, -2.0)], -1.0)];
        let EliminationResult::Reduced(e) = eliminate(4, &rows) else {
            panic!("consistent rows must reduce");
        };
        assert_eq!(e.free.len(), 2);
        let y = e.expand(&[0.7, -0.3]);
        for r in &rows {
            assert!(r.eval(&y).abs() < 1e-12);
        }
        // Expressions reference only free variables.
        for (v, row) in e.rows.iter().enumerate() {
            if !e.free.contains(&v) {
                for &(j, _) in row {
                    assert!(j < e.free.len());
                }
            }
        }
    }

    #[test]
    fn chained_substitution_resolves_to_free_vars() {
        // y0 = y1, y1 = y2: both must end up expressed in y2.
        let rows = vec![eq(&[(0, 1.0), (1, -1.0)], 0.0), eq(&[(1, 1.0), (2, -1.0)], 0.0)];
        let EliminationResult::Reduced(e) = eliminate(3, &rows) else { panic!() };
        assert_eq!(e.free, vec![2]);
        let y = e.expand(&[5.0]);
        assert_eq!(y, vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn redundant_rows_are_dropped_and_conflicts_detected() {
        let rows = vec![
            eq(&[(0, 1.0), (1, 1.0)], -1.0),
            eq(&[(0, 2.0), (1, 2.0)], -2.0), // same relation, scaled
        ];
        let EliminationResult::Reduced(e) = eliminate(2, &rows) else { panic!() };
        assert_eq!(e.free.len(), 1);

        let bad = vec![eq(&[(0, 1.0), (1, 1.0)], -1.0), eq(&[(0, 1.0), (1, 1.0)], -2.0)];
        assert!(matches!(eliminate(2, &bad), EliminationResult::Contradiction { .. }));
    }

    #[test]
    fn cancellation_during_backsubstitution_leaves_registry_consistent() {
        // Row 2 cancels y2 out of the expression for y0; the stale use-entry
        // must not derail the later pivot on y2.
        let rows = vec![
            eq(&[(0, 1.0), (1, -1.0), (2, -1.0)], 0.0),
            eq(&[(1, 1.0), (2, 1.0)], 0.0),
            eq(&[(2, 1.0), (3, -1.0)], 0.0),
        ];
        let EliminationResult::Reduced(e) = eliminate(4, &rows) else { panic!() };
        assert_eq!(e.free, vec![3]);
        let y = e.expand(&[0.4]);
        for r in &rows {
            assert!(r.eval(&y).abs() < 1e-12, "row violated at {y:?}");
        }
    }

    #[test]
    fn projection_is_transpose_of_expansion() {
        let rows = vec![eq(&[(0, 1.0), (1, -0.5), (2, -0.5)], 0.25)];
        let EliminationResult::Reduced(e) = eliminate(3, &rows) else { panic!() };
        // <Z^T v, u> == <v, Z u> for arbitrary vectors.
        let v = [1.0, 2.0, 3.0];
        let u = [0.5, -1.5];
        let zu: Vec<f64> =
            e.expand(&u).iter().zip(&e.y0).map(|(a, b)| a - b).collect();
        let lhs: f64 = e.project(&v).iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = v.iter().zip(&zu).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
