//! Moment tables and the affine building blocks of moment relaxations.
//!
//! A [`MomentTable`] fixes an equivalence mode, a level `t`, and data
//! substitutions, and assigns one scalar variable to every unfixed canonical
//! word class of degree at most `2t`. Builders then produce:
//!
//! * [`moment_block`] — the moment matrix `M_t(L)` with entries `L(u* v)`,
//! * [`localizing_block`] — `M_{t-dg}(g L)` for a constraint polynomial `g`,
//! * [`bilinear_block`] — the block whose PSD-ness encodes
//!   `L(p* g p g2) >= 0` over all admissible `p`,
//! * [`tensor_block`] — the monomial-compressed tensor constraint
//!   `Q_l A^(x l) Q_l^T - (L(m m')) >= 0`,
//! * [`ideal_rows`] / [`scalar_positivity_rows`] — linear equality and
//!   inequality rows.
//!
//! Everything here is symbolic: blocks and rows are affine in the moment
//! variables and are consumed by the solver layer. Tables are immutable after
//! construction and all builders are pure functions of the table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;

use crate::polyalg::{
    self, CMonomial, EquivalenceMode, NCWord, PolyError, canonical_word, enumerate_words,
};

/// Absolute tolerance under which two fixes of the same class are merged.
pub const FIX_MERGE_TOL: f64 = 1e-12;

/// Errors from table construction and block/row assembly.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MomentError {
    /// Two fixes landed in one canonical class with incompatible values.
    /// Signals non-symmetric input data for a symmetric rank.
    #[error("conflicting fixes for class {class}: {first} vs {second}")]
    ConflictingFix { class: String, first: f64, second: f64 },
    /// The empty-word class carries the objective and cannot be fixed.
    #[error("the unit class cannot be fixed")]
    FixedUnit,
    /// A word or polynomial exceeds the table degree `2t`.
    #[error("degree {0} exceeds table degree {1}")]
    DegreeTooLarge(usize, usize),
    /// The index basis of a block would have negative degree.
    #[error("block '{0}' has empty index basis at this level")]
    EmptyBlock(String),
    /// Operation requires a different equivalence mode.
    #[error("operation requires {0} mode")]
    ModeError(&'static str),
    /// Tensor level outside `2..=t`.
    #[error("tensor level {0} outside 2..={1}")]
    LevelError(usize, usize),
    /// Matrix dimensions do not match the table.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    /// A localizing or bilinear polynomial is not invariant under involution.
    #[error("polynomial '{0}' is not symmetric")]
    NonSymmetric(String),
    /// Underlying word/monomial error.
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// A polynomial in noncommuting variables: a word-to-coefficient map with no
/// zero terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<NCWord, f64>,
}

impl Polynomial {
    /// The zero polynomial.
    pub fn zero() -> Self {
        Polynomial { terms: BTreeMap::new() }
    }

    /// The constant polynomial `c`.
    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(NCWord::one(), c);
        p
    }

    /// The single-term polynomial `c * w`.
    pub fn monomial(w: NCWord, c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(w, c);
        p
    }

    /// Builds a polynomial from (word, coefficient) pairs, merging duplicates.
    pub fn from_terms(terms: impl IntoIterator<Item = (NCWord, f64)>) -> Self {
        let mut p = Self::zero();
        for (w, c) in terms {
            p.add_term(w, c);
        }
        p
    }

    /// Adds `c * w`, dropping the term if the coefficient cancels to zero.
    pub fn add_term(&mut self, w: NCWord, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(w) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
        }
    }

    /// The terms in graded word order.
    pub fn terms(&self) -> impl Iterator<Item = (&NCWord, f64)> {
        self.terms.iter().map(|(w, &c)| (w, c))
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(NCWord::degree).max().unwrap_or(0)
    }

    /// The involution `p*`: reverses every word.
    pub fn star(&self) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(w, &c)| (w.star(), c)))
    }

    /// True when `p = p*`.
    pub fn is_symmetric(&self) -> bool {
        *self == self.star()
    }

    /// True for the constant-one polynomial.
    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&NCWord::one()).copied() == Some(1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (w, c) in &self.terms {
            if first {
                if c < &0.0 {
                    write!(f, "-")?;
                }
            } else if c < &0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let a = c.abs();
            if w.is_one() {
                write!(f, "{a}")?;
            } else if a == 1.0 {
                write!(f, "{w}")?;
            } else {
                write!(f, "{a}*{w}")?;
            }
            first = false;
        }
        Ok(())
    }
}

/// Either a free moment variable or a data-substituted value.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Var(usize),
    Fixed(f64),
}

/// A truncated moment functional: one variable per unfixed canonical word
/// class of degree at most `2t`, with data fixes substituted in place.
#[derive(Debug, Clone)]
pub struct MomentTable {
    n: usize,
    t: usize,
    mode: EquivalenceMode,
    slots: BTreeMap<NCWord, Slot>,
    var_classes: Vec<NCWord>,
}

impl MomentTable {
    /// Builds a table over `n` letters at level `t` with the given data fixes.
    ///
    /// Fix words are canonicalized before insertion; duplicate fixes of one
    /// class merge when they agree within [`FIX_MERGE_TOL`]. The unit class is
    /// always variable 0 (it carries the objective `L(1)`).
    pub fn new_table(
        n: usize,
        t: usize,
        mode: EquivalenceMode,
        fixes: &[(NCWord, f64)],
    ) -> Result<MomentTable, MomentError> {
        if !(mode.symmetric || mode.commutative) {
            return Err(MomentError::ModeError("a symmetric or commutative"));
        }
        let classes = enumerate_words(n, 2 * t, mode)?;
        let mut fixed: BTreeMap<NCWord, f64> = BTreeMap::new();
        for (w, v) in fixes {
            if w.degree() > 2 * t {
                return Err(MomentError::DegreeTooLarge(w.degree(), 2 * t));
            }
            if w.max_letter() > n {
                return Err(PolyError::LetterOutOfRange(w.max_letter(), n).into());
            }
            let c = canonical_word(w, mode);
            if c.is_one() {
                return Err(MomentError::FixedUnit);
            }
            if let Some(&prev) = fixed.get(&c) {
                if (prev - v).abs() > FIX_MERGE_TOL {
                    return Err(MomentError::ConflictingFix {
                        class: c.to_string(),
                        first: prev,
                        second: *v,
                    });
                }
            } else {
                fixed.insert(c, *v);
            }
        }
        let mut slots = BTreeMap::new();
        let mut var_classes = Vec::new();
        for class in classes {
            if let Some(&v) = fixed.get(&class) {
                slots.insert(class, Slot::Fixed(v));
            } else {
                slots.insert(class.clone(), Slot::Var(var_classes.len()));
                var_classes.push(class);
            }
        }
        Ok(MomentTable { n, t, mode, slots, var_classes })
    }

    /// Number of algebra letters.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Relaxation level `t`; the table holds classes of degree `<= 2t`.
    pub fn t(&self) -> usize {
        self.t
    }

    /// The equivalence mode.
    pub fn mode(&self) -> EquivalenceMode {
        self.mode
    }

    /// Number of free moment variables.
    pub fn num_vars(&self) -> usize {
        self.var_classes.len()
    }

    /// The canonical class represented by variable `id`.
    pub fn var_class(&self, id: usize) -> &NCWord {
        &self.var_classes[id]
    }

    /// The variable id of the unit class (always 0).
    pub fn unit_var(&self) -> usize {
        0
    }

    /// The variable id of a word's class, or `None` if the class is fixed.
    pub fn var_of(&self, w: &NCWord) -> Option<usize> {
        match self.slots.get(&canonical_word(w, self.mode)) {
            Some(Slot::Var(id)) => Some(*id),
            _ => None,
        }
    }

    /// The fixed value of a word's class, or `None` if it is a variable.
    pub fn fixed_value(&self, w: &NCWord) -> Option<f64> {
        match self.slots.get(&canonical_word(w, self.mode)) {
            Some(Slot::Fixed(v)) => Some(*v),
            _ => None,
        }
    }

    fn slot(&self, w: &NCWord) -> Result<Slot, MomentError> {
        if w.degree() > 2 * self.t {
            return Err(MomentError::DegreeTooLarge(w.degree(), 2 * self.t));
        }
        let c = canonical_word(w, self.mode);
        self.slots
            .get(&c)
            .copied()
            .ok_or_else(|| PolyError::LetterOutOfRange(c.max_letter(), self.n).into())
    }

    /// Accumulates `coeff * L(w)` into an affine expression.
    pub fn accumulate(&self, w: &NCWord, coeff: f64, acc: &mut AffExpr) -> Result<(), MomentError> {
        match self.slot(w)? {
            Slot::Var(id) => {
                let e = acc.coeffs.entry(id).or_insert(0.0);
                *e += coeff;
                if *e == 0.0 {
                    acc.coeffs.remove(&id);
                }
            }
            Slot::Fixed(v) => acc.constant += coeff * v,
        }
        Ok(())
    }

    /// The affine expression of `L(p)`.
    pub fn poly_expr(&self, p: &Polynomial) -> Result<AffExpr, MomentError> {
        let mut acc = AffExpr::zero();
        for (w, c) in p.terms() {
            self.accumulate(w, c, &mut acc)?;
        }
        Ok(acc)
    }

    /// The affine expression of `L(u* g v g2)` (`g2` optional).
    pub fn entry_expr(
        &self,
        u: &NCWord,
        g: &Polynomial,
        v: &NCWord,
        g2: Option<&Polynomial>,
    ) -> Result<AffExpr, MomentError> {
        let us = u.star();
        let mut acc = AffExpr::zero();
        for (w, cg) in g.terms() {
            let prefix = us.concat(w).concat(v);
            match g2 {
                None => self.accumulate(&prefix, cg, &mut acc)?,
                Some(h) => {
                    for (w2, ch) in h.terms() {
                        self.accumulate(&prefix.concat(w2), cg * ch, &mut acc)?;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Index basis of degree at most `maxdeg`: all words in noncommutative
    /// modes, all monomials (as sorted words) in commutative mode.
    pub fn index_basis(&self, maxdeg: usize) -> Result<Vec<NCWord>, MomentError> {
        let mode =
            if self.mode.commutative { EquivalenceMode::COMMUTATIVE } else { EquivalenceMode::FREE };
        Ok(enumerate_words(self.n, maxdeg, mode)?)
    }
}

/// An affine expression `constant + sum coeffs[v] * y_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffExpr {
    /// Variable coefficients, sparse.
    pub coeffs: BTreeMap<usize, f64>,
    /// Constant term.
    pub constant: f64,
}

impl AffExpr {
    /// The zero expression.
    pub fn zero() -> Self {
        AffExpr { coeffs: BTreeMap::new(), constant: 0.0 }
    }

    /// Evaluates at a variable assignment.
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(&v, &c)| c * y[v]).sum::<f64>()
    }
}

/// Sparse symmetric matrix entries `(i, j, value)` with `i <= j`, sorted.
pub type SymEntries = Vec<(u32, u32, f64)>;

/// An affine-in-variables symmetric block `constant + sum y_v * coeffs[v]`,
/// constrained PSD.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    /// Side length of the block.
    pub dim: usize,
    /// Human-readable provenance of the block.
    pub label: String,
    /// Constant part, upper-triangular entries.
    pub constant: SymEntries,
    /// Per-variable coefficient matrices, sorted by variable id.
    pub coeffs: Vec<(usize, SymEntries)>,
}

impl AffineBlock {
    /// Materializes the full symmetric matrix at a variable assignment.
    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut scatter = |entries: &SymEntries, scale: f64| {
            for &(i, j, v) in entries {
                let (i, j) = (i as usize, j as usize);
                m[(i, j)] += scale * v;
                if i != j {
                    m[(j, i)] += scale * v;
                }
            }
        };
        scatter(&self.constant, 1.0);
        for (var, entries) in &self.coeffs {
            scatter(entries, y[*var]);
        }
        m
    }

    /// The coefficient entries of one variable, if present.
    pub fn coeffs_of(&self, var: usize) -> Option<&SymEntries> {
        self.coeffs
            .binary_search_by_key(&var, |(v, _)| *v)
            .ok()
            .map(|idx| &self.coeffs[idx].1)
    }
}

/// Sense of a [`LinearRow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowSense {
    /// `constant + coeffs . y = 0`
    Equality,
    /// `constant + coeffs . y >= 0`
    GeqZero,
}

/// A scalar affine constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    /// Variable coefficients, sorted by id.
    pub coeffs: Vec<(usize, f64)>,
    /// Constant term.
    pub constant: f64,
    /// Equality or inequality sense.
    pub sense: RowSense,
}

impl LinearRow {
    /// Evaluates the row's affine form at a variable assignment.
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(v, c)| c * y[v]).sum::<f64>()
    }
}

/// Builds a block over the given index basis with entry expressions from `f`.
fn assemble_block<F>(basis: &[NCWord], label: String, mut f: F) -> Result<AffineBlock, MomentError>
where
    F: FnMut(&NCWord, &NCWord) -> Result<AffExpr, MomentError>,
{
    let dim = basis.len();
    let mut constant: SymEntries = Vec::new();
    let mut coeffs: BTreeMap<usize, SymEntries> = BTreeMap::new();
    for i in 0..dim {
        for j in i..dim {
            let expr = f(&basis[i], &basis[j])?;
            if expr.constant != 0.0 {
                constant.push((i as u32, j as u32, expr.constant));
            }
            for (&var, &c) in &expr.coeffs {
                coeffs.entry(var).or_default().push((i as u32, j as u32, c));
            }
        }
    }
    Ok(AffineBlock { dim, label, constant, coeffs: coeffs.into_iter().collect() })
}

/// The moment matrix `M_t(L)`: indexed by the degree `<= t` basis, with entry
/// `(u, v)` the expression of the class of `u* v`.
pub fn moment_block(tab: &MomentTable) -> Result<AffineBlock, MomentError> {
    let basis = tab.index_basis(tab.t())?;
    let one = Polynomial::constant(1.0);
    assemble_block(&basis, "moment".into(), |u, v| tab.entry_expr(u, &one, v, None))
}

/// The localizing matrix `M_{t-dg}(g L)` with `dg = ceil(deg(g)/2)`: entry
/// `(u, v)` is `sum_w g_w L(u* w v)`.
///
/// `g` must be symmetric in noncommutative modes so the block is. Fails with
/// [`MomentError::EmptyBlock`] when the index degree `t - dg` is negative.
pub fn localizing_block(
    tab: &MomentTable,
    g: &Polynomial,
    label: &str,
) -> Result<AffineBlock, MomentError> {
    if g.degree() > 2 * tab.t() {
        return Err(MomentError::DegreeTooLarge(g.degree(), 2 * tab.t()));
    }
    if !tab.mode().commutative && !g.is_symmetric() {
        return Err(MomentError::NonSymmetric(g.to_string()));
    }
    let dg = g.degree().div_ceil(2);
    if dg > tab.t() {
        return Err(MomentError::EmptyBlock(label.into()));
    }
    let basis = tab.index_basis(tab.t() - dg)?;
    assemble_block(&basis, label.into(), |u, v| tab.entry_expr(u, g, v, None))
}

/// The bilinear block whose PSD-ness encodes `L(p* g p g2) >= 0` for all `p`
/// of degree at most `t - ceil((deg g + deg g2)/2)`: entry `(u, v)` is the
/// expression of `L(u* g v g2)`.
pub fn bilinear_block(
    tab: &MomentTable,
    g: &Polynomial,
    g2: &Polynomial,
    label: &str,
) -> Result<AffineBlock, MomentError> {
    let total = g.degree() + g2.degree();
    if total > 2 * tab.t() {
        return Err(MomentError::DegreeTooLarge(total, 2 * tab.t()));
    }
    if !tab.mode().commutative && (!g.is_symmetric() || !g2.is_symmetric()) {
        return Err(MomentError::NonSymmetric(format!("{g} / {g2}")));
    }
    let d = total.div_ceil(2);
    if d > tab.t() {
        return Err(MomentError::EmptyBlock(label.into()));
    }
    let basis = tab.index_basis(tab.t() - d)?;
    assemble_block(&basis, label.into(), |u, v| tab.entry_expr(u, g, v, Some(g2)))
}

/// Equality rows `L(p h) = 0` for every `h` in `ts` and every basis word `p`
/// with `deg(p h) <= 2t`, deduplicated.
pub fn ideal_rows(tab: &MomentTable, ts: &[Polynomial]) -> Result<Vec<LinearRow>, MomentError> {
    let mut rows = RowSet::new();
    for h in ts {
        if h.degree() > 2 * tab.t() {
            return Err(MomentError::DegreeTooLarge(h.degree(), 2 * tab.t()));
        }
        for p in tab.index_basis(2 * tab.t() - h.degree())? {
            let mut acc = AffExpr::zero();
            for (w, c) in h.terms() {
                tab.accumulate(&p.concat(w), c, &mut acc)?;
            }
            rows.insert(acc, RowSense::Equality);
        }
    }
    Ok(rows.into_rows())
}

/// Inequality rows `L(g u) >= 0` for `g` in `{1} union s` and every monomial
/// `u` with `deg(g u) <= 2t`. Commutative mode only.
pub fn scalar_positivity_rows(
    tab: &MomentTable,
    s: &[Polynomial],
) -> Result<Vec<LinearRow>, MomentError> {
    if !tab.mode().commutative {
        return Err(MomentError::ModeError("commutative"));
    }
    let one = Polynomial::constant(1.0);
    let mut rows = RowSet::new();
    for g in std::iter::once(&one).chain(s.iter()) {
        if g.degree() > 2 * tab.t() {
            return Err(MomentError::DegreeTooLarge(g.degree(), 2 * tab.t()));
        }
        for u in tab.index_basis(2 * tab.t() - g.degree())? {
            let mut acc = AffExpr::zero();
            for (w, c) in g.terms() {
                tab.accumulate(&w.concat(&u), c, &mut acc)?;
            }
            rows.insert(acc, RowSense::GeqZero);
        }
    }
    Ok(rows.into_rows())
}

/// The monomial-indexed tensor constraint at level `l`:
/// `Q_l A^(x l) Q_l^T - (L(m m'))` over monomials of degree exactly `l`,
/// constrained PSD. Commutative mode only, `2 <= l <= t`.
///
/// The constant entry at `(m, m')` averages `A^(x l)` over the word fibers of
/// `m` and `m'`; restricted to monomial space this compression preserves the
/// PSD status of the word-indexed constraint whenever `A` is PSD.
pub fn tensor_block(
    tab: &MomentTable,
    a: &DMatrix<f64>,
    l: usize,
) -> Result<AffineBlock, MomentError> {
    if !tab.mode().commutative {
        return Err(MomentError::ModeError("commutative"));
    }
    if l < 2 || l > tab.t() {
        return Err(MomentError::LevelError(l, tab.t()));
    }
    let n = tab.n();
    if a.nrows() != n || a.ncols() != n {
        return Err(MomentError::Dimension { expected: n, got: a.nrows() });
    }
    let monomials = polyalg::enumerate_monomials_exact(n, l)?;
    let fibers: Vec<Vec<NCWord>> = monomials.iter().map(CMonomial::fiber).collect();
    let basis: Vec<NCWord> = monomials.iter().map(CMonomial::to_word).collect();
    let dim = basis.len();

    let mut constant: SymEntries = Vec::new();
    let mut coeffs: BTreeMap<usize, SymEntries> = BTreeMap::new();
    for i in 0..dim {
        for j in i..dim {
            // (1/(d_m d_m')) sum over both fibers of prod_k A[w_k, w'_k]
            let mut avg = 0.0;
            for w in &fibers[i] {
                for w2 in &fibers[j] {
                    let mut prod = 1.0;
                    for (a_l, b_l) in w.letters().iter().zip(w2.letters()) {
                        prod *= a[((*a_l - 1) as usize, (*b_l - 1) as usize)];
                    }
                    avg += prod;
                }
            }
            avg /= (fibers[i].len() * fibers[j].len()) as f64;

            let mut expr = AffExpr::zero();
            tab.accumulate(&basis[i].concat(&basis[j]), -1.0, &mut expr)?;
            let c = avg + expr.constant;
            if c != 0.0 {
                constant.push((i as u32, j as u32, c));
            }
            for (&var, &cv) in &expr.coeffs {
                coeffs.entry(var).or_default().push((i as u32, j as u32, cv));
            }
        }
    }
    Ok(AffineBlock {
        dim,
        label: format!("tensor:l={l}"),
        constant,
        coeffs: coeffs.into_iter().collect(),
    })
}

/// Row collector with sign normalization and structural deduplication.
struct RowSet {
    seen: BTreeSet<(RowSense, Vec<(usize, u64)>, u64)>,
    rows: Vec<LinearRow>,
}

impl RowSet {
    fn new() -> Self {
        RowSet { seen: BTreeSet::new(), rows: Vec::new() }
    }

    fn insert(&mut self, expr: AffExpr, sense: RowSense) {
        let mut coeffs: Vec<(usize, f64)> = expr.coeffs.into_iter().collect();
        let mut constant = expr.constant;
        // Structurally trivial: no variables and a satisfied constant.
        if coeffs.is_empty() {
            let ok = match sense {
                RowSense::Equality => constant == 0.0,
                RowSense::GeqZero => constant >= 0.0,
            };
            if ok {
                return;
            }
        }
        // Equalities are sign-normalized so `r = 0` and `-r = 0` deduplicate.
        if sense == RowSense::Equality {
            let lead = coeffs.first().map(|&(_, c)| c).unwrap_or(constant);
            if lead < 0.0 {
                for (_, c) in &mut coeffs {
                    *c = -*c;
                }
                constant = -constant;
            }
        }
        let key = (
            sense,
            coeffs.iter().map(|&(v, c)| (v, c.to_bits())).collect::<Vec<_>>(),
            constant.to_bits(),
        );
        if self.seen.insert(key) {
            self.rows.push(LinearRow { coeffs, constant, sense });
        }
    }

    fn into_rows(self) -> Vec<LinearRow> {
        self.rows
    }
}

/// The moment vector of the trace evaluation at matrices `xs`:
/// `y[class] = scale * Tr(X_{w_1} ... X_{w_k})`, with `L(1) = scale * d`.
///
/// Returns the variable assignment and the largest absolute mismatch against
/// the table's fixed classes (0 when the factorization reproduces the data).
pub fn trace_moment_vector(
    tab: &MomentTable,
    xs: &[DMatrix<f64>],
    scale: f64,
) -> Result<(Vec<f64>, f64), MomentError> {
    if xs.len() != tab.n() {
        return Err(MomentError::Dimension { expected: tab.n(), got: xs.len() });
    }
    let d = xs.first().map(|m| m.nrows()).unwrap_or(0);
    let eval = |w: &NCWord| -> f64 {
        let mut m = DMatrix::<f64>::identity(d, d);
        for &l in w.letters() {
            m = &m * &xs[(l - 1) as usize];
        }
        scale * m.trace()
    };
    moment_vector_from(tab, eval)
}

/// The moment vector of a sum of point evaluations:
/// `y[class] = sum_k prod_i points[k][i]^(exponent of x_i)`, `L(1) = #points`.
///
/// This is the commutative-atom analogue of [`trace_moment_vector`].
pub fn point_moment_vector(
    tab: &MomentTable,
    points: &[Vec<f64>],
) -> Result<(Vec<f64>, f64), MomentError> {
    for p in points {
        if p.len() != tab.n() {
            return Err(MomentError::Dimension { expected: tab.n(), got: p.len() });
        }
    }
    let eval = |w: &NCWord| -> f64 {
        points
            .iter()
            .map(|p| w.letters().iter().map(|&l| p[(l - 1) as usize]).product::<f64>())
            .sum()
    };
    moment_vector_from(tab, eval)
}

fn moment_vector_from(
    tab: &MomentTable,
    eval: impl Fn(&NCWord) -> f64,
) -> Result<(Vec<f64>, f64), MomentError> {
    let mut y = vec![0.0; tab.num_vars()];
    let mut fix_residual: f64 = 0.0;
    for class in enumerate_words(tab.n(), 2 * tab.t(), tab.mode())? {
        let value = eval(&class);
        match tab.var_of(&class) {
            Some(id) => y[id] = value,
            None => {
                let fixed = tab.fixed_value(&class).expect("class is fixed");
                fix_residual = fix_residual.max((fixed - value).abs());
            }
        }
    }
    Ok((y, fix_residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::EquivalenceMode as EM;

    fn w(letters: &[u8]) -> NCWord {
        NCWord::from_letters(letters).unwrap()
    }

    fn example21_fixes() -> Vec<(NCWord, f64)> {
        vec![(w(&[1, 2]), 0.5), (w(&[1, 1]), 1.0), (w(&[2, 2]), 1.0)]
    }

    #[test]
    fn table_assigns_variables_to_unfixed_classes() {
        let tab = MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &example21_fixes()).unwrap();
        assert_eq!(tab.num_vars(), 3);
        assert_eq!(tab.var_class(0), &NCWord::one());
        assert_eq!(tab.var_class(1), &w(&[1]));
        assert_eq!(tab.var_class(2), &w(&[2]));
        assert_eq!(tab.fixed_value(&w(&[2, 1])), Some(0.5));
        assert_eq!(tab.var_of(&w(&[2, 1])), None);
        assert_eq!(tab.unit_var(), 0);
    }

    #[test]
    fn table_merges_consistent_fixes_and_rejects_conflicts() {
        let fixes = vec![(w(&[1, 2]), 0.5), (w(&[2, 1]), 0.5)];
        let tab = MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &fixes).unwrap();
        assert_eq!(tab.num_vars(), 5);

        let bad = vec![(w(&[1, 2]), 0.3), (w(&[2, 1]), 0.4)];
        assert!(matches!(
            MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &bad),
            Err(MomentError::ConflictingFix { .. })
        ));
        assert!(matches!(
            MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &[(NCWord::one(), 1.0)]),
            Err(MomentError::FixedUnit)
        ));
    }

    #[test]
    fn hankel_moment_block_in_one_variable() {
        let tab = MomentTable::new_table(1, 1, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        let b = moment_block(&tab).unwrap();
        assert_eq!(b.dim, 2);
        assert!(b.constant.is_empty());
        assert_eq!(b.coeffs_of(0).unwrap(), &vec![(0, 0, 1.0)]);
        assert_eq!(b.coeffs_of(1).unwrap(), &vec![(0, 1, 1.0)]);
        assert_eq!(b.coeffs_of(2).unwrap(), &vec![(1, 1, 1.0)]);
    }

    #[test]
    fn moment_block_substitutes_data_into_constant() {
        let tab = MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &example21_fixes()).unwrap();
        let b = moment_block(&tab).unwrap();
        assert_eq!(b.dim, 3);
        assert_eq!(b.constant, vec![(1, 1, 1.0), (1, 2, 0.5), (2, 2, 1.0)]);
        assert_eq!(b.coeffs_of(0).unwrap(), &vec![(0, 0, 1.0)]);
        assert_eq!(b.coeffs_of(1).unwrap(), &vec![(0, 1, 1.0)]);
        assert_eq!(b.coeffs_of(2).unwrap(), &vec![(0, 2, 1.0)]);
    }

    #[test]
    fn localizing_block_for_single_variable_constraint() {
        // g = 2 x1 - x1^2 with L(x1^2) fixed to 4: 1x1 block [2 y_{x1} - 4].
        let tab =
            MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &[(w(&[1, 1]), 4.0)]).unwrap();
        let g = Polynomial::from_terms([(w(&[1]), 2.0), (w(&[1, 1]), -1.0)]);
        let b = localizing_block(&tab, &g, "loc").unwrap();
        assert_eq!(b.dim, 1);
        assert_eq!(b.constant, vec![(0, 0, -4.0)]);
        assert_eq!(b.coeffs.len(), 1);
        let var_x1 = tab.var_of(&w(&[1])).unwrap();
        assert_eq!(b.coeffs_of(var_x1).unwrap(), &vec![(0, 0, 2.0)]);
    }

    #[test]
    fn localizing_with_unit_equals_moment_block() {
        let tab = MomentTable::new_table(2, 2, EM::TRACIAL_SYMMETRIC, &example21_fixes()).unwrap();
        let m = moment_block(&tab).unwrap();
        let l = localizing_block(&tab, &Polynomial::constant(1.0), "unit").unwrap();
        assert_eq!(m.dim, l.dim);
        assert_eq!(m.constant, l.constant);
        assert_eq!(m.coeffs, l.coeffs);
    }

    #[test]
    fn gram_vector_localizer_matches_hand_expansion() {
        // g_e = 3 - (x1+x2)^2 over a table fixing only x1x2 -> 1/2 at t=2:
        // (1,1) entry is 3 y_1 - y_{x1^2} - y_{x2^2} - 1.
        let tab =
            MomentTable::new_table(2, 2, EM::TRACIAL_SYMMETRIC, &[(w(&[1, 2]), 0.5)]).unwrap();
        let g = Polynomial::from_terms([
            (NCWord::one(), 3.0),
            (w(&[1, 1]), -1.0),
            (w(&[1, 2]), -1.0),
            (w(&[2, 1]), -1.0),
            (w(&[2, 2]), -1.0),
        ]);
        let b = localizing_block(&tab, &g, "g_e").unwrap();
        assert_eq!(b.dim, 3);
        let entry_11: Vec<(usize, f64)> = b
            .coeffs
            .iter()
            .filter_map(|(v, es)| {
                es.iter().find(|&&(i, j, _)| i == 0 && j == 0).map(|&(_, _, c)| (*v, c))
            })
            .collect();
        let y1 = tab.unit_var();
        let yx1sq = tab.var_of(&w(&[1, 1])).unwrap();
        let yx2sq = tab.var_of(&w(&[2, 2])).unwrap();
        assert_eq!(entry_11, vec![(y1, 3.0), (yx1sq, -1.0), (yx2sq, -1.0)]);
        let c00: f64 = b
            .constant
            .iter()
            .filter(|&&(i, j, _)| i == 0 && j == 0)
            .map(|&(_, _, c)| c)
            .sum();
        assert_eq!(c00, -1.0);
    }

    #[test]
    fn localizing_degree_bookkeeping() {
        let tab = MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        // deg(g) = 2 at t=1: basis degree 0, a 1x1 block.
        let g = Polynomial::from_terms([(w(&[1]), 1.0), (w(&[1, 1]), -1.0)]);
        assert_eq!(localizing_block(&tab, &g, "g").unwrap().dim, 1);
        // deg(g) = 3 would need t >= 2.
        let g3 = Polynomial::monomial(w(&[1, 2, 1]), 1.0);
        assert!(matches!(
            localizing_block(&tab, &g3, "g3"),
            Err(MomentError::DegreeTooLarge(3, 2))
        ));
        let tab2 = MomentTable::new_table(2, 2, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        let g4 = Polynomial::monomial(w(&[1, 1, 2, 2]), 1.0).star();
        // Degree 4 at t=2 still fits (1x1), but asymmetric g is rejected.
        assert!(matches!(
            localizing_block(&tab2, &Polynomial::monomial(w(&[1, 2]), 1.0), "as"),
            Err(MomentError::NonSymmetric(_))
        ));
        let _ = g4;
    }

    #[test]
    fn bilinear_block_degree_and_unit_behavior() {
        let tab = MomentTable::new_table(2, 2, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        let one = Polynomial::constant(1.0);
        let m = moment_block(&tab).unwrap();
        let b = bilinear_block(&tab, &one, &one, "unit").unwrap();
        assert_eq!(b.dim, m.dim);
        assert_eq!(b.coeffs, m.coeffs);

        // g = x1 - x1^2, g2 = x2 - x2^2 at t=2: only p = 1 fits.
        let g = Polynomial::from_terms([(w(&[1]), 1.0), (w(&[1, 1]), -1.0)]);
        let g2 = Polynomial::from_terms([(w(&[2]), 1.0), (w(&[2, 2]), -1.0)]);
        let bb = bilinear_block(&tab, &g, &g2, "cross").unwrap();
        assert_eq!(bb.dim, 1);
        // L(g g2) = L(x1x2) - L(x1 x2^2) - L(x1^2 x2) + L(x1^2 x2^2)
        let expect: Vec<(usize, f64)> = vec![
            (tab.var_of(&w(&[1, 2])).unwrap(), 1.0),
            (tab.var_of(&w(&[1, 2, 2])).unwrap(), -1.0),
            (tab.var_of(&w(&[1, 1, 2])).unwrap(), -1.0),
            (tab.var_of(&w(&[1, 1, 2, 2])).unwrap(), 1.0),
        ];
        let mut got: Vec<(usize, f64)> = bb
            .coeffs
            .iter()
            .map(|(v, es)| {
                assert_eq!(es.len(), 1);
                (*v, es[0].2)
            })
            .collect();
        got.sort_by_key(|&(v, _)| {
            expect.iter().position(|&(ev, _)| ev == v).unwrap_or(usize::MAX)
        });
        assert_eq!(got, expect);
    }

    #[test]
    fn ideal_rows_for_affine_ideal() {
        // T = {1 - x1 - x2} at t=1: rows for p in {1, x1, x2}.
        let tab = MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        let h = Polynomial::from_terms([
            (NCWord::one(), 1.0),
            (w(&[1]), -1.0),
            (w(&[2]), -1.0),
        ]);
        let rows = ideal_rows(&tab, &[h]).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert_eq!(r.sense, RowSense::Equality);
        }
        // p = 1: y_1 - y_{x1} - y_{x2} = 0
        let r0 = &rows[0];
        assert_eq!(r0.coeffs, vec![(0, 1.0), (1, -1.0), (2, -1.0)]);
        assert_eq!(r0.constant, 0.0);
    }

    #[test]
    fn ideal_rows_deduplicate_and_drop_trivial() {
        // A_12 = 0 kernel monomial: at t=1 only p=1 fits, and the row reduces
        // to the fixed value, which vanishes: no rows remain.
        let tab =
            MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &[(w(&[1, 2]), 0.0)]).unwrap();
        let rows = ideal_rows(&tab, &[Polynomial::monomial(w(&[1, 2]), 1.0)]).unwrap();
        assert!(rows.is_empty());

        // Without the fix the single row y_{x1x2} = 0 appears once even if
        // the generator is passed twice.
        let tab2 = MomentTable::new_table(2, 1, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        let g = Polynomial::monomial(w(&[1, 2]), 1.0);
        let rows2 = ideal_rows(&tab2, &[g.clone(), g]).unwrap();
        assert_eq!(rows2.len(), 1);
    }

    #[test]
    fn scalar_rows_require_commutative_mode() {
        let nc = MomentTable::new_table(2, 2, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        assert!(matches!(scalar_positivity_rows(&nc, &[]), Err(MomentError::ModeError(_))));

        let tab = MomentTable::new_table(2, 2, EM::COMMUTATIVE, &[]).unwrap();
        let rows = scalar_positivity_rows(&tab, &[]).unwrap();
        // One row per monomial of degree 1..=4 (the unit row L(1) >= 0 stays
        // as a variable row on y_1): binomial(2+4,4) = 15 monomials.
        assert_eq!(rows.len(), 15);
        let yx1x2 = tab.var_of(&w(&[1, 2])).unwrap();
        assert!(
            rows.iter()
                .any(|r| r.sense == RowSense::GeqZero
                    && r.constant == 0.0
                    && r.coeffs == vec![(yx1x2, 1.0)])
        );
    }

    #[test]
    fn tensor_block_constants_match_fiber_averages() {
        // l=2, n=2: entry at (x1x2, x1x2) is (A11 A22 + A12^2)/2.
        let tab = MomentTable::new_table(2, 2, EM::COMMUTATIVE, &[]).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 5.0, 5.0, 7.0]);
        let b = tensor_block(&tab, &a, 2).unwrap();
        assert_eq!(b.dim, 3);
        let c11: f64 = b
            .constant
            .iter()
            .filter(|&&(i, j, _)| i == 1 && j == 1)
            .map(|&(_, _, c)| c)
            .sum();
        assert_eq!(c11, (3.0 * 7.0 + 5.0 * 5.0) / 2.0);

        // Identity data: constants diag(1, 1/2, 1).
        let b2 = tensor_block(&tab, &DMatrix::identity(2, 2), 2).unwrap();
        let diag: Vec<f64> = (0..3)
            .map(|k| {
                b2.constant
                    .iter()
                    .filter(|&&(i, j, _)| i == k && j == k)
                    .map(|&(_, _, c)| c)
                    .sum()
            })
            .collect();
        assert_eq!(diag, vec![1.0, 0.5, 1.0]);

        // n=1, l=2: 1x1 block [A11^2 - y_{x1^4}].
        let tab1 = MomentTable::new_table(1, 2, EM::COMMUTATIVE, &[]).unwrap();
        let b3 = tensor_block(&tab1, &DMatrix::from_row_slice(1, 1, &[2.0]), 2).unwrap();
        assert_eq!(b3.dim, 1);
        assert_eq!(b3.constant, vec![(0, 0, 4.0)]);
        let yx4 = tab1.var_of(&w(&[1, 1, 1, 1])).unwrap();
        assert_eq!(b3.coeffs_of(yx4).unwrap(), &vec![(0, 0, -1.0)]);
    }

    #[test]
    fn tensor_block_guards() {
        let nc = MomentTable::new_table(2, 2, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        let a = DMatrix::identity(2, 2);
        assert!(matches!(tensor_block(&nc, &a, 2), Err(MomentError::ModeError(_))));
        let tab = MomentTable::new_table(2, 2, EM::COMMUTATIVE, &[]).unwrap();
        assert!(matches!(tensor_block(&tab, &a, 1), Err(MomentError::LevelError(1, 2))));
        assert!(matches!(tensor_block(&tab, &a, 3), Err(MomentError::LevelError(3, 2))));
        let a3 = DMatrix::identity(3, 3);
        assert!(matches!(tensor_block(&tab, &a3, 2), Err(MomentError::Dimension { .. })));
    }

    #[test]
    fn moment_entries_are_order_symmetric() {
        // entry (u,v) and entry (v,u) agree as affine expressions.
        let tab = MomentTable::new_table(3, 3, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        let one = Polynomial::constant(1.0);
        let g = Polynomial::from_terms([
            (NCWord::one(), 2.0),
            (w(&[1, 2]), -1.0),
            (w(&[2, 1]), -1.0),
        ]);
        let basis = tab.index_basis(2).unwrap();
        for u in &basis {
            for v in &basis {
                for gg in [&one, &g] {
                    let uv = tab.entry_expr(u, gg, v, None).unwrap();
                    let vu = tab.entry_expr(v, gg, u, None).unwrap();
                    assert_eq!(uv, vu, "asymmetry at ({u}, {v})");
                }
            }
        }
    }

    #[test]
    fn trace_evaluation_satisfies_data_blocks_and_ideal() {
        // Two diagonal PSD factors reproducing the 2x2 data with off-diagonal
        // value 1/2; the scaled trace evaluation is feasible for the blocks.
        let s = 1.0 / 2.0_f64.sqrt();
        let y1 = DMatrix::from_diagonal(&nalgebra::dvector![s, s, 0.0]);
        let y2 = DMatrix::from_diagonal(&nalgebra::dvector![s, 0.0, s]);
        let tab = MomentTable::new_table(2, 2, EM::TRACIAL_SYMMETRIC, &example21_fixes()).unwrap();
        let (y, resid) = trace_moment_vector(&tab, &[y1.clone(), y2.clone()], 1.0).unwrap();
        assert!(resid < 1e-12, "factorization should reproduce the data, resid={resid}");

        let m = moment_block(&tab).unwrap().eval(&y);
        let eig = m.symmetric_eigenvalues();
        assert!(eig.min() > -1e-12, "moment matrix PSD at trace evaluation");

        for i in 1..=2u8 {
            let g = Polynomial::from_terms([(w(&[i]), 1.0), (w(&[i, i]), -1.0)]);
            let lb = localizing_block(&tab, &g, "loc").unwrap().eval(&y);
            assert!(lb.symmetric_eigenvalues().min() > -1e-12);
        }

        // Factors summing to the identity annihilate the affine ideal rows.
        let x1 = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]);
        let x2 = DMatrix::from_diagonal(&nalgebra::dvector![0.0, 1.0]);
        let tab2 = MomentTable::new_table(2, 2, EM::TRACIAL_SYMMETRIC, &[]).unwrap();
        let (y2v, _) = trace_moment_vector(&tab2, &[x1, x2], 1.0).unwrap();
        let h = Polynomial::from_terms([
            (NCWord::one(), 1.0),
            (w(&[1]), -1.0),
            (w(&[2]), -1.0),
        ]);
        for r in ideal_rows(&tab2, &[h]).unwrap() {
            assert!(r.eval(&y2v).abs() < 1e-12);
        }
    }

    #[test]
    fn point_evaluation_matches_atomic_moments() {
        let tab = MomentTable::new_table(2, 2, EM::COMMUTATIVE, &[]).unwrap();
        let (y, _) = point_moment_vector(&tab, &[vec![1.0, 2.0], vec![3.0, 0.5]]).unwrap();
        assert_eq!(y[tab.unit_var()], 2.0);
        let yx1x2 = tab.var_of(&w(&[1, 2])).unwrap();
        assert_eq!(y[yx1x2], 1.0 * 2.0 + 3.0 * 0.5);
        let yx1sq = tab.var_of(&w(&[1, 1])).unwrap();
        assert_eq!(y[yx1sq], 1.0 + 9.0);
    }
}
