//! Named matrix instances: generators, file ingestion, and sanity checks.
//!
//! Every matrix family evaluated elsewhere in the crate is produced here by a
//! deterministic generator addressed by name, so the command line, tests, and
//! benchmarks all draw from one source. Matrices loaded from files carry
//! their path as provenance. Structural tags (symmetric, positive
//! semidefinite, entrywise nonnegative) are set only by explicit checks with
//! a fixed tolerance.

use nalgebra::DMatrix;

/// Relative tolerance for the structural checks behind [`Tags`].
const CHECK_TOL: f64 = 1e-9;

/// Errors from generation, loading, or normalization.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstanceError {
    /// The generator name is not registered.
    #[error("unknown family '{name}'; known families: {known}", known = family_names().join(", "))]
    UnknownFamily {
        /// The unrecognized name.
        name: String,
    },
    /// A parameter is structurally unusable (wrong count, non-finite,
    /// non-integral size, ...). Values that merely leave the documented
    /// region produce a warning on the instance instead.
    #[error("bad parameters for '{family}': {msg}")]
    ParamRange {
        /// Family name.
        family: String,
        /// What is wrong with the parameters.
        msg: String,
    },
    /// A matrix file could not be parsed.
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse {
        /// 1-based row in the file (counting data rows and comments alike).
        row: usize,
        /// 1-based column (entry position within the row).
        col: usize,
        /// What went wrong.
        msg: String,
    },
    /// A matrix file could not be read.
    #[error("cannot read '{path}': {msg}")]
    Io {
        /// Offending path.
        path: String,
        /// Operating-system error text.
        msg: String,
    },
    /// The matrix does not admit the requested operation.
    #[error("{0}")]
    Invalid(String),
}

/// Structural properties established by [`checks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tags {
    /// Square and equal to its transpose within tolerance.
    pub symmetric: bool,
    /// Symmetric with smallest eigenvalue at least `-1e-9 * ||A||`.
    pub psd: bool,
    /// All entries at least `-1e-9 * ||A||`.
    pub nonneg: bool,
}

/// A dense real matrix with provenance and checked structural tags.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixInstance {
    /// Entries, dense.
    pub values: DMatrix<f64>,
    /// Structural tags from [`checks`].
    pub tags: Tags,
    /// Where the matrix came from (generator call or file path).
    pub provenance: String,
    /// Notes about parameters outside the documented region.
    pub warnings: Vec<String>,
}

impl MatrixInstance {
    /// Wraps a matrix, running the structural checks.
    ///
    /// Fails on empty or non-finite input.
    pub fn from_values(
        values: DMatrix<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self, InstanceError> {
        if values.is_empty() {
            return Err(InstanceError::Invalid("matrix is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::Invalid("matrix has non-finite entries".into()));
        }
        let tags = checks(&values);
        Ok(Self { values, tags, provenance: provenance.into(), warnings: Vec::new() })
    }

    /// Rows of the matrix.
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Columns of the matrix.
    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// The transposed instance.
    pub fn transposed(&self) -> Self {
        let mut out = Self::from_values(self.values.transpose(), format!("{}^T", self.provenance))
            .expect("transpose of a valid instance is valid");
        out.warnings = self.warnings.clone();
        out
    }

    /// Scales row `i` by `d[i]`.
    ///
    /// Fails when the scale vector length does not match or has non-finite
    /// entries.
    pub fn row_scaled(&self, d: &[f64]) -> Result<Self, InstanceError> {
        if d.len() != self.nrows() {
            return Err(InstanceError::Invalid(format!(
                "row scale has {} entries for {} rows",
                d.len(),
                self.nrows()
            )));
        }
        let mut values = self.values.clone();
        for (i, &s) in d.iter().enumerate() {
            if !s.is_finite() {
                return Err(InstanceError::Invalid("row scale has non-finite entries".into()));
            }
            for j in 0..values.ncols() {
                values[(i, j)] *= s;
            }
        }
        let scales = d.iter().map(|v| trim(*v)).collect::<Vec<_>>().join(",");
        let mut out =
            Self::from_values(values, format!("diag({scales})*{}", self.provenance))?;
        out.warnings = self.warnings.clone();
        Ok(out)
    }

    /// Rescales a square matrix with positive diagonal to unit diagonal:
    /// `D^{-1/2} A D^{-1/2}` with `D = Diag(A_11, ..., A_nn)`.
    pub fn diagonal_normalized(&self) -> Result<Self, InstanceError> {
        let n = self.nrows();
        if n != self.ncols() {
            return Err(InstanceError::Invalid("diagonal normalization needs a square matrix".into()));
        }
        let mut s = Vec::with_capacity(n);
        for i in 0..n {
            let d = self.values[(i, i)];
            if d <= 0.0 {
                return Err(InstanceError::Invalid(format!(
                    "diagonal entry ({},{}) is {d}, not positive",
                    i + 1,
                    i + 1
                )));
            }
            s.push(d.sqrt());
        }
        let mut values = self.values.clone();
        for i in 0..n {
            for j in 0..n {
                values[(i, j)] /= s[i] * s[j];
            }
        }
        let mut out = Self::from_values(values, format!("unitdiag({})", self.provenance))?;
        out.warnings = self.warnings.clone();
        Ok(out)
    }
}

/// Formats a parameter the way provenance strings expect (shortest float).
fn trim(v: f64) -> String {
    format!("{v}")
}

/// Runs the structural checks and returns the resulting tags.
///
/// Symmetry compares `A` to its transpose, positive semidefiniteness places
/// the smallest eigenvalue above `-1e-9 * ||A||_F`, and nonnegativity places
/// every entry above the same threshold.
pub fn checks(a: &DMatrix<f64>) -> Tags {
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = CHECK_TOL * (1.0 + fro);
    let mut tags = Tags::default();
    tags.nonneg = a.iter().all(|&v| v >= -tol);
    if a.nrows() == a.ncols() {
        tags.symmetric = (0..a.nrows()).all(|i| {
            (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol)
        });
        if tags.symmetric {
            let sym = (a + a.transpose()) * 0.5;
            let eig = sym.symmetric_eigen().eigenvalues;
            tags.psd = eig.iter().all(|&v| v >= -tol);
        }
    }
    tags
}

/// One registered generator family.
#[derive(Debug, Clone, Copy)]
pub struct FamilyInfo {
    /// Canonical name used in `generate` and on the command line.
    pub name: &'static str,
    /// Parameter names, in order.
    pub params: &'static [&'static str],
    /// One-line description.
    pub describe: &'static str,
}

/// All registered families.
pub const FAMILIES: &[FamilyInfo] = &[
    FamilyInfo {
        name: "a_alpha",
        params: &["alpha"],
        describe: "2x2 symmetric [[1,a],[a,1]]; in the cpsd cone for a in [0,1]",
    },
    FamilyInfo {
        name: "nn_alpha",
        params: &["alpha"],
        describe: "2x2 nonnegative [[1,1],[1,a]] for a in [0,1]",
    },
    FamilyInfo {
        name: "circulant5",
        params: &["alpha"],
        describe: "5x5 symmetric circulant with first row (1,a,0,0,a); cpsd iff a in [0,1/2]",
    },
    FamilyInfo {
        name: "bipartite",
        params: &["a", "b"],
        describe: "5x5 [[(a+3)I_2, J],[J^T,(b+2)I_3]] for a,b >= 0; cp-rank 6",
    },
    FamilyInfo {
        name: "nested_slack",
        params: &["a", "b"],
        describe: "4x4 slack matrix of [-a,a]x[-b,b] inside [-1,1]^2; nonneg iff a,b in [0,1]",
    },
    FamilyInfo {
        name: "slack_quadrilateral",
        params: &[],
        describe: "4x4 slack matrix of the quadrilateral (0,0),(0,1),(1,0),(2,2)",
    },
    FamilyInfo {
        name: "slack_hexagon",
        params: &[],
        describe: "6x6 slack matrix of the regular hexagon",
    },
    FamilyInfo {
        name: "circulant3",
        params: &["b", "c"],
        describe: "3x3 circulant [[1,b,c],[c,1,b],[b,c,1]] for b,c >= 0",
    },
    FamilyInfo {
        name: "cos2_circulant",
        params: &[],
        describe: "5x5 circulant with entries cos((i-j)*4*pi/5)^2",
    },
    FamilyInfo {
        name: "identity",
        params: &["k"],
        describe: "k x k identity",
    },
    FamilyInfo {
        name: "ones",
        params: &["m", "n"],
        describe: "m x n all-ones matrix",
    },
];

fn family_names() -> Vec<&'static str> {
    FAMILIES.iter().map(|f| f.name).collect()
}

/// Generates a named instance.
///
/// Names are case-insensitive; `s_q` and `s_h` are accepted as shorthands
/// for the two polygon slack matrices. Parameters outside the documented
/// region attach a warning to the instance (the matrix is still produced);
/// structurally unusable parameters are errors.
pub fn generate(name: &str, params: &[f64]) -> Result<MatrixInstance, InstanceError> {
    let lname = name.to_ascii_lowercase();
    let canonical = match lname.as_str() {
        "s_q" | "sq" => "slack_quadrilateral",
        "s_h" | "sh" => "slack_hexagon",
        other => other,
    };
    let info = FAMILIES
        .iter()
        .find(|f| f.name == canonical)
        .ok_or_else(|| InstanceError::UnknownFamily { name: name.to_string() })?;
    let arity_err = |msg: String| InstanceError::ParamRange { family: info.name.into(), msg };
    if params.len() != info.params.len() {
        return Err(arity_err(format!(
            "expected {} parameter(s) ({}), got {}",
            info.params.len(),
            info.params.join(","),
            params.len()
        )));
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(arity_err("parameters must be finite".into()));
    }
    let shown: Vec<String> = info
        .params
        .iter()
        .zip(params)
        .map(|(n, v)| format!("{n}={}", trim(*v)))
        .collect();
    let provenance = format!("{}({})", info.name, shown.join(","));
    let mut warnings = Vec::new();
    let mut warn_range = |param: &str, v: f64, lo: f64, hi: f64, note: &str| {
        if v < lo || v > hi {
            warnings.push(format!(
                "{param}={} outside [{},{}]: {note}",
                trim(v),
                trim(lo),
                trim(hi)
            ));
        }
    };

    let values = match info.name {
        "a_alpha" => {
            let a = params[0];
            warn_range("alpha", a, 0.0, 1.0, "matrix leaves the cpsd cone");
            DMatrix::from_row_slice(2, 2, &[1.0, a, a, 1.0])
        }
        "nn_alpha" => {
            let a = params[0];
            warn_range("alpha", a, 0.0, 1.0, "outside the documented family");
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, a])
        }
        "circulant5" => {
            let a = params[0];
            warn_range("alpha", a, 0.0, 0.5, "matrix leaves the cpsd cone");
            circulant(&[1.0, a, 0.0, 0.0, a])
        }
        "bipartite" => {
            let (a, b) = (params[0], params[1]);
            warn_range("a", a, 0.0, f64::INFINITY, "family needs a >= 0");
            warn_range("b", b, 0.0, f64::INFINITY, "family needs b >= 0");
            let (p, q) = (2, 3);
            DMatrix::from_fn(p + q, p + q, |i, j| {
                if i < p && j < p {
                    if i == j { a + q as f64 } else { 0.0 }
                } else if i >= p && j >= p {
                    if i == j { b + p as f64 } else { 0.0 }
                } else {
                    1.0
                }
            })
        }
        "nested_slack" => {
            let (a, b) = (params[0], params[1]);
            warn_range("a", a, 0.0, 1.0, "slack matrix has negative entries");
            warn_range("b", b, 0.0, 1.0, "slack matrix has negative entries");
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0 - a, 1.0 + a, 1.0 - b, 1.0 + b,
                    1.0 + a, 1.0 - a, 1.0 - b, 1.0 + b,
                    1.0 + a, 1.0 - a, 1.0 + b, 1.0 - b,
                    1.0 - a, 1.0 + a, 1.0 + b, 1.0 - b,
                ],
            )
        }
        "slack_quadrilateral" => DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 2.0, 2.0,
                1.0, 0.0, 0.0, 3.0,
                0.0, 1.0, 3.0, 0.0,
                2.0, 2.0, 0.0, 0.0,
            ],
        ),
        "slack_hexagon" => DMatrix::from_row_slice(
            6,
            6,
            &[
                0.0, 1.0, 2.0, 2.0, 1.0, 0.0,
                0.0, 0.0, 1.0, 2.0, 2.0, 1.0,
                1.0, 0.0, 0.0, 1.0, 2.0, 2.0,
                2.0, 1.0, 0.0, 0.0, 1.0, 2.0,
                2.0, 2.0, 1.0, 0.0, 0.0, 1.0,
                1.0, 2.0, 2.0, 1.0, 0.0, 0.0,
            ],
        ),
        "circulant3" => {
            let (b, c) = (params[0], params[1]);
            warn_range("b", b, 0.0, f64::INFINITY, "family needs b >= 0");
            warn_range("c", c, 0.0, f64::INFINITY, "family needs c >= 0");
            DMatrix::from_row_slice(3, 3, &[1.0, b, c, c, 1.0, b, b, c, 1.0])
        }
        "cos2_circulant" => DMatrix::from_fn(5, 5, |i, j| {
            let d = i as f64 - j as f64;
            (d * 4.0 * std::f64::consts::PI / 5.0).cos().powi(2)
        }),
        "identity" => {
            let k = int_param(params[0], "k", info.name)?;
            DMatrix::identity(k, k)
        }
        "ones" => {
            let m = int_param(params[0], "m", info.name)?;
            let n = int_param(params[1], "n", info.name)?;
            DMatrix::from_element(m, n, 1.0)
        }
        _ => unreachable!("registered family without generator"),
    };
    let mut out = MatrixInstance::from_values(values, provenance)?;
    out.warnings = warnings;
    Ok(out)
}

/// Square circulant matrix from its first row: row `i` is the first row
/// rotated right by `i`.
fn circulant(first_row: &[f64]) -> DMatrix<f64> {
    let n = first_row.len();
    DMatrix::from_fn(n, n, |i, j| first_row[(j + n - i) % n])
}

fn int_param(v: f64, name: &str, family: &str) -> Result<usize, InstanceError> {
    let err = |msg: String| InstanceError::ParamRange { family: family.into(), msg };
    if v.fract() != 0.0 || v < 1.0 || v > 1e6 {
        return Err(err(format!("{name} must be a positive integer, got {}", trim(v))));
    }
    Ok(v as usize)
}

/// Parses a generator spec of the form `name` or `name:p1,p2,...`, as used
/// on the command line (`identity:4`, `bipartite:0.3,0.7`).
pub fn gen_spec(spec: &str) -> Result<MatrixInstance, InstanceError> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n, Some(r)),
        None => (spec, None),
    };
    let mut params = Vec::new();
    if let Some(r) = rest {
        for tok in r.split(',') {
            let tok = tok.trim();
            let v: f64 = tok.parse().map_err(|_| InstanceError::ParamRange {
                family: name.to_string(),
                msg: format!("cannot parse parameter '{tok}'"),
            })?;
            params.push(v);
        }
    }
    generate(name.trim(), &params)
}

/// Input layout for [`load`] and [`parse_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixFormat {
    /// Comma-separated values (whitespace around entries tolerated).
    #[default]
    Csv,
    /// Whitespace-separated values.
    Whitespace,
}

/// Parses matrix text: one row per line, `#` starts a comment, blank lines
/// are skipped, scientific notation accepted. All rows must agree in length.
pub fn parse_matrix(text: &str, format: MatrixFormat) -> Result<DMatrix<f64>, InstanceError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (ln, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = match format {
            MatrixFormat::Csv => line.split(',').map(str::trim).collect(),
            MatrixFormat::Whitespace => line.split_whitespace().collect(),
        };
        let mut row = Vec::with_capacity(toks.len());
        for (ci, tok) in toks.iter().enumerate() {
            if tok.is_empty() && matches!(format, MatrixFormat::Csv) && toks.len() == 1 {
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| InstanceError::Parse {
                row: ln + 1,
                col: ci + 1,
                msg: format!("cannot parse entry '{tok}'"),
            })?;
            if !v.is_finite() {
                return Err(InstanceError::Parse {
                    row: ln + 1,
                    col: ci + 1,
                    msg: "entry is not finite".into(),
                });
            }
            row.push(v);
        }
        if row.is_empty() {
            continue;
        }
        if rows.is_empty() {
            width = row.len();
        } else if row.len() != width {
            return Err(InstanceError::Parse {
                row: ln + 1,
                col: row.len().min(width) + 1,
                msg: format!("row has {} entries, expected {width}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(InstanceError::Parse { row: 1, col: 1, msg: "no data rows".into() });
    }
    let m = rows.len();
    Ok(DMatrix::from_fn(m, width, |i, j| rows[i][j]))
}

/// Loads a matrix file, tagging the instance with the path as provenance.
pub fn load(path: &str, format: MatrixFormat) -> Result<MatrixInstance, InstanceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| InstanceError::Io { path: path.to_string(), msg: e.to_string() })?;
    let values = parse_matrix(&text, format)?;
    MatrixInstance::from_values(values, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circulant5_matches_printed_matrix() {
        let inst = generate("circulant5", &[0.5]).unwrap();
        let expect = DMatrix::from_row_slice(
            5,
            5,
            &[
                1.0, 0.5, 0.0, 0.0, 0.5,
                0.5, 1.0, 0.5, 0.0, 0.0,
                0.0, 0.5, 1.0, 0.5, 0.0,
                0.0, 0.0, 0.5, 1.0, 0.5,
                0.5, 0.0, 0.0, 0.5, 1.0,
            ],
        );
        assert_eq!(inst.values, expect);
        assert!(inst.tags.symmetric && inst.tags.psd && inst.tags.nonneg);
        assert!(inst.warnings.is_empty());
    }

    #[test]
    fn circulant5_gram_factorization_reconstructs() {
        // Diagonal factors: X_i has sqrt(beta) at slot i and sqrt(1-beta) at
        // slot i+1 (cyclically), with beta = (1 + sqrt(1-4a^2)) / 2.
        for &a in &[0.0, 0.1, 0.25, 0.4, 0.5] {
            let inst = generate("circulant5", &[a]).unwrap();
            let beta: f64 = (1.0 + (1.0 - 4.0 * a * a).sqrt()) / 2.0;
            let mut x = vec![[0.0f64; 5]; 5];
            for i in 0..5 {
                x[i][i] = beta.sqrt();
                x[i][(i + 1) % 5] = (1.0 - beta).sqrt();
            }
            for i in 0..5 {
                for j in 0..5 {
                    let gram: f64 = (0..5).map(|k| x[i][k] * x[j][k]).sum();
                    assert!(
                        (gram - inst.values[(i, j)]).abs() < 1e-12,
                        "alpha={a} entry ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn polygon_slack_matrices_match_fixtures() {
        let q = generate("slack_quadrilateral", &[]).unwrap();
        assert_eq!(q.values.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 2.0, 2.0]);
        assert!(q.tags.nonneg && !q.tags.symmetric && !q.tags.psd);
        let h = generate("s_h", &[]).unwrap();
        assert_eq!(h.values.nrows(), 6);
        // Every row of the hexagon slack matrix is a rotation of (0,1,2,2,1,0).
        for i in 0..6 {
            for j in 0..6 {
                let expect = [0.0, 1.0, 2.0, 2.0, 1.0, 0.0][(j + 6 - i) % 6];
                assert_eq!(h.values[(i, j)], expect);
            }
        }
    }

    #[test]
    fn nested_slack_corner_entry_and_nonnegativity_region() {
        let s = generate("nested_slack", &[0.3, 0.7]).unwrap();
        assert!((s.values[(0, 0)] - 0.7).abs() < 1e-15);
        assert!((s.values[(0, 3)] - 1.7).abs() < 1e-15);
        assert!(s.tags.nonneg && s.warnings.is_empty());

        // Over the documented domain a,b >= 0, the matrix is entrywise
        // nonnegative exactly when both parameters stay at most 1.
        for &a in &[0.0, 0.5, 1.0, 1.1, 1.5] {
            for &b in &[0.0, 0.5, 1.0, 1.1, 1.5] {
                let m = generate("nested_slack", &[a, b]).unwrap();
                assert_eq!(m.tags.nonneg, a <= 1.0 && b <= 1.0, "a={a} b={b}");
            }
        }
        let neg = generate("nested_slack", &[-0.1, 0.5]).unwrap();
        assert_eq!(neg.warnings.len(), 1);
    }

    #[test]
    fn bipartite_block_structure() {
        let p = generate("bipartite", &[0.0, 0.0]).unwrap();
        let expect = DMatrix::from_row_slice(
            5,
            5,
            &[
                3.0, 0.0, 1.0, 1.0, 1.0,
                0.0, 3.0, 1.0, 1.0, 1.0,
                1.0, 1.0, 2.0, 0.0, 0.0,
                1.0, 1.0, 0.0, 2.0, 0.0,
                1.0, 1.0, 0.0, 0.0, 2.0,
            ],
        );
        assert_eq!(p.values, expect);
        assert!(p.tags.symmetric && p.tags.psd);
        let shifted = generate("bipartite", &[1.0, 0.5]).unwrap();
        assert_eq!(shifted.values[(0, 0)], 4.0);
        assert_eq!(shifted.values[(4, 4)], 2.5);
    }

    #[test]
    fn cos2_circulant_has_analytic_row_sums() {
        let a = generate("cos2_circulant", &[]).unwrap();
        assert!(a.tags.symmetric && a.tags.psd && a.tags.nonneg);
        for i in 0..5 {
            assert!((a.values[(i, i)] - 1.0).abs() < 1e-12);
            let row: f64 = a.values.row(i).iter().sum();
            assert!((row - 2.5).abs() < 1e-12, "row {i} sums to {row}");
        }
        // cos(4*pi/5)^2 = ((1+sqrt 5)/4)^2
        let c = ((1.0 + 5.0f64.sqrt()) / 4.0).powi(2);
        assert!((a.values[(0, 1)] - c).abs() < 1e-12);
    }

    #[test]
    fn identity_and_ones() {
        let i4 = generate("identity", &[4.0]).unwrap();
        assert_eq!(i4.values, DMatrix::identity(4, 4));
        let j = generate("ones", &[2.0, 3.0]).unwrap();
        assert_eq!(j.values, DMatrix::from_element(2, 3, 1.0));
        assert!(matches!(
            generate("identity", &[0.0]),
            Err(InstanceError::ParamRange { .. })
        ));
        assert!(matches!(
            generate("identity", &[2.5]),
            Err(InstanceError::ParamRange { .. })
        ));
    }

    #[test]
    fn unknown_families_and_arity_errors() {
        assert!(matches!(generate("nosuch", &[]), Err(InstanceError::UnknownFamily { .. })));
        assert!(matches!(generate("a_alpha", &[]), Err(InstanceError::ParamRange { .. })));
        assert!(matches!(
            generate("a_alpha", &[0.1, 0.2]),
            Err(InstanceError::ParamRange { .. })
        ));
        assert!(matches!(generate("a_alpha", &[f64::NAN]), Err(InstanceError::ParamRange { .. })));
    }

    #[test]
    fn out_of_region_parameters_warn_but_generate() {
        let m = generate("circulant5", &[0.7]).unwrap();
        assert_eq!(m.warnings.len(), 1);
        assert!(m.warnings[0].contains("alpha=0.7"));
        let a2 = generate("a_alpha", &[2.0]).unwrap();
        assert_eq!(a2.values[(0, 1)], 2.0);
        assert!(!a2.tags.psd);
        assert_eq!(a2.warnings.len(), 1);
    }

    #[test]
    fn checks_classify_fixtures() {
        let i3 = checks(&DMatrix::identity(3, 3));
        assert!(i3.symmetric && i3.psd && i3.nonneg);
        let m = checks(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(m.symmetric && m.nonneg && !m.psd);
        let sq = generate("slack_quadrilateral", &[]).unwrap();
        assert!(sq.tags.nonneg && !sq.tags.symmetric && !sq.tags.psd);
        let rect = checks(&DMatrix::from_element(2, 3, 1.0));
        assert!(rect.nonneg && !rect.symmetric && !rect.psd);
    }

    #[test]
    fn parses_csv_and_whitespace_grids() {
        let i2 = parse_matrix("1,0\n0,1", MatrixFormat::Csv).unwrap();
        assert_eq!(i2, DMatrix::identity(2, 2));
        let ws = parse_matrix(" 1 0\n 0 1 \n", MatrixFormat::Whitespace).unwrap();
        assert_eq!(ws, DMatrix::identity(2, 2));
        let sci = parse_matrix("1e-3, 2.5E2\n-1.5e0, 4", MatrixFormat::Csv).unwrap();
        assert_eq!(sci[(0, 0)], 1e-3);
        assert_eq!(sci[(0, 1)], 250.0);
        let commented = parse_matrix("# header\n1, 2 # trailing\n3, 4\n\n", MatrixFormat::Csv)
            .unwrap();
        assert_eq!(commented, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn ragged_and_malformed_grids_report_location() {
        match parse_matrix("1,2\n3", MatrixFormat::Csv) {
            Err(InstanceError::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_matrix("1,x\n", MatrixFormat::Csv) {
            Err(InstanceError::Parse { row, col, .. }) => {
                assert_eq!((row, col), (1, 2));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_matrix("# only comments\n", MatrixFormat::Csv).is_err());
        assert!(parse_matrix("1,inf\n", MatrixFormat::Csv).is_err());
    }

    #[test]
    fn loads_files_with_path_provenance() {
        let dir = std::env::temp_dir();
        let path = dir.join("facrank_instances_test.csv");
        std::fs::write(&path, "1,0\n0,1\n").unwrap();
        let inst = load(path.to_str().unwrap(), MatrixFormat::Csv).unwrap();
        assert_eq!(inst.values, DMatrix::identity(2, 2));
        assert_eq!(inst.provenance, path.to_str().unwrap());
        std::fs::remove_file(&path).ok();
        assert!(matches!(
            load("/nonexistent/facrank.csv", MatrixFormat::Csv),
            Err(InstanceError::Io { .. })
        ));
    }

    #[test]
    fn gen_specs_parse_like_the_cli() {
        let a = gen_spec("A_alpha:0.5").unwrap();
        assert_eq!(a.values[(0, 1)], 0.5);
        let i4 = gen_spec("identity:4").unwrap();
        assert_eq!(i4.values.nrows(), 4);
        let b = gen_spec("bipartite:0.3,0.7").unwrap();
        assert_eq!(b.values[(0, 0)], 3.3);
        let sq = gen_spec("slack_quadrilateral").unwrap();
        assert_eq!(sq.values.nrows(), 4);
        assert!(gen_spec("a_alpha:zzz").is_err());
    }

    #[test]
    fn transforms_update_provenance_and_tags() {
        let sq = generate("slack_quadrilateral", &[]).unwrap();
        let t = sq.transposed();
        assert_eq!(t.values[(1, 0)], 0.0);
        assert_eq!(t.values[(0, 1)], 1.0);
        assert!(t.provenance.ends_with("^T"));
        let h = generate("slack_hexagon", &[]).unwrap();
        let scaled = h.row_scaled(&[2.0, 2.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(scaled.values[(0, 1)], 2.0);
        assert_eq!(scaled.values[(2, 4)], 2.0);
        assert!(h.row_scaled(&[1.0]).is_err());
    }

    #[test]
    fn diagonal_normalization_reaches_unit_diagonal() {
        let a = MatrixInstance::from_values(
            DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 9.0]),
            "test",
        )
        .unwrap();
        let b = a.diagonal_normalized().unwrap();
        assert!((b.values[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((b.values[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((b.values[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        let zero_diag =
            MatrixInstance::from_values(DMatrix::from_row_slice(1, 1, &[0.0]), "z").unwrap();
        assert!(zero_diag.diagonal_normalized().is_err());
    }
}
