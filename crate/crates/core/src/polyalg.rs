//! Words and monomials for truncated polynomial spaces, with the canonical
//! forms induced by involution (reversal), trace (cyclic shifts), and
//! commutativity.
//!
//! Letters are 1-based: `x1, x2, ...`. The empty word is the unit.
//! All operations are pure; canonical forms are computed by explicit orbit
//! enumeration, which is exact and cheap at the degrees this crate targets
//! (orbit size is at most `2 * degree`).

use std::fmt;

/// Largest total degree a table or enumeration may use.
///
/// Orbit sizes and word counts stay desk-scale below this cap; beyond it the
/// dense enumeration strategy used here is the wrong tool.
pub const MAX_DEGREE: usize = 16;

/// Hard ceiling on the number of raw words an enumeration may visit.
const MAX_ENUMERATION: u128 = 20_000_000;

/// Errors from word/monomial construction and counting.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolyError {
    /// A letter was zero or exceeded the declared number of variables.
    #[error("letter {0} out of range 1..={1}")]
    LetterOutOfRange(usize, usize),
    /// Requested degree exceeds [`MAX_DEGREE`].
    #[error("degree {0} exceeds the supported cap {MAX_DEGREE}")]
    DegreeTooLarge(usize),
    /// An enumeration would visit more raw words than [`MAX_ENUMERATION`].
    #[error("enumeration of {0} words is too large")]
    EnumerationTooLarge(u128),
    /// Integer overflow in an exact count.
    #[error("arithmetic overflow in exact count")]
    Overflow,
    /// Multinomial weights do not sum to the declared length.
    #[error("multinomial weights sum to {0}, expected {1}")]
    WeightMismatch(usize, usize),
    /// Exponent vectors of different lengths were combined.
    #[error("exponent vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Which identifications the ambient algebra imposes on words.
///
/// `symmetric` identifies a word with its reversal, `tracial` with its cyclic
/// shifts, and `commutative` with every reordering (subsuming the other two).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EquivalenceMode {
    /// Identify `w` with its involution `w*` (letter reversal).
    pub symmetric: bool,
    /// Identify `w` with its cyclic shifts.
    pub tracial: bool,
    /// Identify `w` with every permutation of its letters.
    pub commutative: bool,
}

impl EquivalenceMode {
    /// No identifications: the free *-algebra word basis.
    pub const FREE: Self = Self { symmetric: false, tracial: false, commutative: false };
    /// Reversal and cyclic shifts: symmetric tracial functionals.
    pub const TRACIAL_SYMMETRIC: Self = Self { symmetric: true, tracial: true, commutative: false };
    /// Full commutativity: ordinary polynomials.
    pub const COMMUTATIVE: Self = Self { symmetric: true, tracial: true, commutative: true };
}

impl fmt::Display for EquivalenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.commutative {
            write!(f, "commutative")
        } else {
            match (self.symmetric, self.tracial) {
                (true, true) => write!(f, "tracial-symmetric"),
                (true, false) => write!(f, "symmetric"),
                (false, true) => write!(f, "tracial"),
                (false, false) => write!(f, "free"),
            }
        }
    }
}

/// A word in noncommuting letters; the empty word is the unit.
///
/// Ordering is graded: first by degree, then lexicographic on letters. This
/// ordering fixes variable ids and block indexing everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NCWord(Vec<u8>);

impl NCWord {
    /// The empty word (multiplicative unit).
    pub fn one() -> Self {
        NCWord(Vec::new())
    }

    /// The single-letter word `x_i` (1-based).
    pub fn generator(i: usize) -> Result<Self, PolyError> {
        if i == 0 || i > u8::MAX as usize {
            return Err(PolyError::LetterOutOfRange(i, u8::MAX as usize));
        }
        Ok(NCWord(vec![i as u8]))
    }

    /// Builds a word from 1-based letters.
    pub fn from_letters(letters: &[u8]) -> Result<Self, PolyError> {
        if letters.len() > MAX_DEGREE {
            return Err(PolyError::DegreeTooLarge(letters.len()));
        }
        for &l in letters {
            if l == 0 {
                return Err(PolyError::LetterOutOfRange(0, u8::MAX as usize));
            }
        }
        Ok(NCWord(letters.to_vec()))
    }

    /// The 1-based letters of the word.
    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    /// Total degree (word length).
    pub fn degree(&self) -> usize {
        self.0.len()
    }

    /// True for the empty word.
    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    /// The involution `w*`: letters in reverse order.
    pub fn star(&self) -> NCWord {
        let mut v = self.0.clone();
        v.reverse();
        NCWord(v)
    }

    /// Concatenation `self * other`.
    pub fn concat(&self, other: &NCWord) -> NCWord {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        NCWord(v)
    }

    /// Largest letter appearing, or 0 for the unit.
    pub fn max_letter(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0) as usize
    }

    /// Commutative image as an exponent vector over `n` variables.
    pub fn exponents(&self, n: usize) -> Result<CMonomial, PolyError> {
        let mut e = vec![0u32; n];
        for &l in &self.0 {
            let idx = l as usize;
            if idx > n {
                return Err(PolyError::LetterOutOfRange(idx, n));
            }
            e[idx - 1] += 1;
        }
        Ok(CMonomial(e))
    }
}

impl Ord for NCWord {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for NCWord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NCWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for &l in &self.0 {
            if !first {
                write!(f, "*")?;
            }
            write!(f, "x{l}")?;
            first = false;
        }
        Ok(())
    }
}

/// A commutative monomial stored as an exponent vector of fixed length.
///
/// Ordering is graded: by total degree, then lexicographic on the sorted-word
/// form (so `x1^2 < x1*x2 < x2^2`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CMonomial(Vec<u32>);

impl CMonomial {
    /// The unit monomial over `n` variables.
    pub fn one(n: usize) -> Self {
        CMonomial(vec![0; n])
    }

    /// The monomial `x_i` (1-based) over `n` variables.
    pub fn generator(n: usize, i: usize) -> Result<Self, PolyError> {
        if i == 0 || i > n {
            return Err(PolyError::LetterOutOfRange(i, n));
        }
        let mut e = vec![0; n];
        e[i - 1] = 1;
        Ok(CMonomial(e))
    }

    /// Builds a monomial from an exponent vector.
    pub fn from_exponents(e: Vec<u32>) -> Self {
        CMonomial(e)
    }

    /// The exponent vector.
    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// Number of variables the exponent vector ranges over.
    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    /// Total degree.
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// Product of two monomials over the same variables.
    pub fn mul(&self, other: &CMonomial) -> Result<CMonomial, PolyError> {
        if self.0.len() != other.0.len() {
            return Err(PolyError::LengthMismatch(self.0.len(), other.0.len()));
        }
        Ok(CMonomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    /// The sorted word with this commutative image.
    pub fn to_word(&self) -> NCWord {
        let mut letters = Vec::with_capacity(self.degree());
        for (i, &e) in self.0.iter().enumerate() {
            for _ in 0..e {
                letters.push((i + 1) as u8);
            }
        }
        NCWord(letters)
    }

    /// All distinct words with this commutative image, in graded order.
    ///
    /// The fiber size equals the multinomial coefficient
    /// [`multinomial_dm`]`(degree, exponents)`.
    pub fn fiber(&self) -> Vec<NCWord> {
        let sorted = self.to_word();
        let mut out = Vec::new();
        let mut current = sorted.0.clone();
        // Lexicographic next-permutation walk over the multiset.
        loop {
            out.push(NCWord(current.clone()));
            // Find the rightmost ascent.
            let n = current.len();
            if n < 2 {
                break;
            }
            let mut i = n - 1;
            while i > 0 && current[i - 1] >= current[i] {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            let mut j = n - 1;
            while current[j] <= current[i - 1] {
                j -= 1;
            }
            current.swap(i - 1, j);
            current[i..].reverse();
        }
        out
    }
}

impl Ord for CMonomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.to_word().letters().cmp(other.to_word().letters()))
    }
}

impl PartialOrd for CMonomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree() == 0 {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
            first = false;
        }
        Ok(())
    }
}

/// The canonical representative of `w` under the identifications of `mode`.
///
/// Commutative: letters sorted. Tracial: lex-min cyclic shift. Symmetric:
/// lex-min of the word and its reversal. Combined modes take the lex-min over
/// the whole orbit. Idempotent, and constant on each orbit.
pub fn canonical_word(w: &NCWord, mode: EquivalenceMode) -> NCWord {
    if mode.commutative {
        let mut v = w.0.clone();
        v.sort_unstable();
        return NCWord(v);
    }
    orbit(w, mode).into_iter().min().expect("orbit is nonempty")
}

/// The orbit of `w` under the identifications of `mode`, deduplicated and
/// sorted. For commutative mode this is the full multiset fiber.
pub fn orbit(w: &NCWord, mode: EquivalenceMode) -> Vec<NCWord> {
    if mode.commutative {
        return w
            .exponents(w.max_letter().max(1))
            .expect("letters are in range by construction")
            .fiber();
    }
    let mut set = std::collections::BTreeSet::new();
    let base: Vec<NCWord> = if mode.symmetric { vec![w.clone(), w.star()] } else { vec![w.clone()] };
    for b in base {
        if mode.tracial && !b.0.is_empty() {
            for s in 0..b.0.len() {
                let mut v = Vec::with_capacity(b.0.len());
                v.extend_from_slice(&b.0[s..]);
                v.extend_from_slice(&b.0[..s]);
                set.insert(NCWord(v));
            }
        } else {
            set.insert(b);
        }
    }
    set.into_iter().collect()
}

/// All canonical representatives of words of degree at most `t` over `n`
/// letters, in graded order.
///
/// In commutative mode the result is in bijection with monomials of degree at
/// most `t` (`binomial(n + t, t)` of them); in free mode it has
/// `(n^(t+1) - 1) / (n - 1)` elements.
pub fn enumerate_words(n: usize, t: usize, mode: EquivalenceMode) -> Result<Vec<NCWord>, PolyError> {
    if t > MAX_DEGREE {
        return Err(PolyError::DegreeTooLarge(t));
    }
    if n == 0 || n > u8::MAX as usize {
        return Err(PolyError::LetterOutOfRange(n, u8::MAX as usize));
    }
    if mode.commutative {
        let mut out = Vec::new();
        let mut stack = vec![(Vec::<u8>::new(), 1u8)];
        // Nondecreasing-letter words, generated in graded-lex order per degree
        // below; collect then sort to get the global graded order.
        while let Some((prefix, min_letter)) = stack.pop() {
            out.push(NCWord(prefix.clone()));
            if prefix.len() < t {
                for l in (min_letter..=n as u8).rev() {
                    let mut next = prefix.clone();
                    next.push(l);
                    stack.push((next, l));
                }
            }
        }
        out.sort();
        return Ok(out);
    }
    let mut total: u128 = 0;
    let mut pow: u128 = 1;
    for _ in 0..=t {
        total += pow;
        pow = pow.checked_mul(n as u128).ok_or(PolyError::Overflow)?;
    }
    if total > MAX_ENUMERATION {
        return Err(PolyError::EnumerationTooLarge(total));
    }
    let mut set = std::collections::BTreeSet::new();
    for d in 0..=t {
        let mut word = vec![1u8; d];
        'odometer: loop {
            let w = NCWord(word.clone());
            set.insert(canonical_word(&w, mode));
            // Advance the base-n odometer.
            for pos in (0..d).rev() {
                if word[pos] < n as u8 {
                    word[pos] += 1;
                    for later in word.iter_mut().skip(pos + 1) {
                        *later = 1;
                    }
                    continue 'odometer;
                }
            }
            break;
        }
    }
    Ok(set.into_iter().collect())
}

/// All monomials over `n` variables of degree at most `t`, in graded order.
pub fn enumerate_monomials(n: usize, t: usize) -> Result<Vec<CMonomial>, PolyError> {
    Ok(enumerate_words(n, t, EquivalenceMode::COMMUTATIVE)?
        .into_iter()
        .map(|w| w.exponents(n).expect("letters bounded by n"))
        .collect())
}

/// All monomials over `n` variables of degree exactly `l`, in graded order.
pub fn enumerate_monomials_exact(n: usize, l: usize) -> Result<Vec<CMonomial>, PolyError> {
    Ok(enumerate_monomials(n, l)?.into_iter().filter(|m| m.degree() == l).collect())
}

/// The multinomial coefficient `l! / (alpha_1! ... alpha_k!)`.
///
/// This is the fiber size of the monomial with exponents `alpha` inside the
/// words of degree `l`. Fails with [`PolyError::WeightMismatch`] if the
/// weights do not sum to `l`, and with [`PolyError::Overflow`] if the exact
/// value does not fit in `u64`.
pub fn multinomial_dm(l: usize, alpha: &[u32]) -> Result<u64, PolyError> {
    let sum: usize = alpha.iter().map(|&a| a as usize).sum();
    if sum != l {
        return Err(PolyError::WeightMismatch(sum, l));
    }
    // Product of binomials C(partial_sum, alpha_k) stays integral throughout.
    let mut acc: u128 = 1;
    let mut partial: u128 = 0;
    for &a in alpha {
        for i in 1..=a as u128 {
            partial += 1;
            acc = acc.checked_mul(partial).ok_or(PolyError::Overflow)?;
            acc /= i;
        }
    }
    u64::try_from(acc).map_err(|_| PolyError::Overflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(letters: &[u8]) -> NCWord {
        NCWord::from_letters(letters).unwrap()
    }

    #[test]
    fn involution_reverses_and_is_involutive() {
        let a = w(&[1, 2, 3]);
        assert_eq!(a.star(), w(&[3, 2, 1]));
        assert_eq!(a.star().star(), a);
        assert_eq!(NCWord::one().star(), NCWord::one());
    }

    #[test]
    fn graded_order_on_words() {
        assert!(w(&[2]) < w(&[1, 1]));
        assert!(w(&[1, 1]) < w(&[1, 2]));
        assert!(w(&[1, 2]) < w(&[2, 1]));
        assert!(NCWord::one() < w(&[1]));
    }

    #[test]
    fn canonical_forms_match_hand_computation() {
        let x121 = w(&[1, 2, 1]);
        assert_eq!(canonical_word(&x121, EquivalenceMode::TRACIAL_SYMMETRIC), w(&[1, 1, 2]));
        let tracial_only = EquivalenceMode { symmetric: false, tracial: true, commutative: false };
        assert_eq!(canonical_word(&x121, tracial_only), w(&[1, 1, 2]));
        let symmetric_only = EquivalenceMode { symmetric: true, tracial: false, commutative: false };
        assert_eq!(canonical_word(&x121, symmetric_only), x121);
        assert_eq!(canonical_word(&w(&[2, 1]), symmetric_only), w(&[1, 2]));
        assert_eq!(canonical_word(&w(&[3, 1, 2]), EquivalenceMode::COMMUTATIVE), w(&[1, 2, 3]));
        assert_eq!(canonical_word(&NCWord::one(), EquivalenceMode::TRACIAL_SYMMETRIC), NCWord::one());
    }

    #[test]
    fn canonicalization_is_idempotent_and_orbit_constant() {
        let modes = [
            EquivalenceMode::FREE,
            EquivalenceMode::TRACIAL_SYMMETRIC,
            EquivalenceMode::COMMUTATIVE,
            EquivalenceMode { symmetric: true, tracial: false, commutative: false },
            EquivalenceMode { symmetric: false, tracial: true, commutative: false },
        ];
        for mode in modes {
            for word in enumerate_words(3, 4, EquivalenceMode::FREE).unwrap() {
                let c = canonical_word(&word, mode);
                assert_eq!(canonical_word(&c, mode), c, "idempotence for {word} under {mode}");
                for o in orbit(&word, mode) {
                    assert_eq!(canonical_word(&o, mode), c, "orbit constancy for {word} under {mode}");
                }
            }
        }
    }

    #[test]
    fn free_word_counts_follow_geometric_series() {
        // (n^(t+1) - 1) / (n - 1)
        assert_eq!(enumerate_words(2, 3, EquivalenceMode::FREE).unwrap().len(), 15);
        assert_eq!(enumerate_words(3, 2, EquivalenceMode::FREE).unwrap().len(), 13);
        assert_eq!(enumerate_words(1, 4, EquivalenceMode::FREE).unwrap().len(), 5);
    }

    #[test]
    fn commutative_counts_follow_stars_and_bars() {
        // binomial(n + t, t)
        assert_eq!(enumerate_words(3, 2, EquivalenceMode::COMMUTATIVE).unwrap().len(), 10);
        assert_eq!(enumerate_words(2, 4, EquivalenceMode::COMMUTATIVE).unwrap().len(), 15);
        assert_eq!(enumerate_monomials(4, 3).unwrap().len(), 35);
    }

    #[test]
    fn tracial_symmetric_class_count_matches_bracelets() {
        // Hand count over two letters: degree 0..4 give 1, 2, 3, 4, 6 classes.
        let words = enumerate_words(2, 4, EquivalenceMode::TRACIAL_SYMMETRIC).unwrap();
        assert_eq!(words.len(), 16);
        let deg4: Vec<_> = words.iter().filter(|w| w.degree() == 4).collect();
        assert_eq!(deg4.len(), 6);
    }

    #[test]
    fn enumeration_is_sorted_canonical_and_deduplicated() {
        let words = enumerate_words(3, 3, EquivalenceMode::TRACIAL_SYMMETRIC).unwrap();
        for win in words.windows(2) {
            assert!(win[0] < win[1]);
        }
        for word in &words {
            assert_eq!(&canonical_word(word, EquivalenceMode::TRACIAL_SYMMETRIC), word);
        }
    }

    #[test]
    fn multinomial_values_and_guards() {
        assert_eq!(multinomial_dm(3, &[2, 1]).unwrap(), 3);
        assert_eq!(multinomial_dm(4, &[2, 2]).unwrap(), 6);
        assert_eq!(multinomial_dm(0, &[]).unwrap(), 1);
        assert_eq!(multinomial_dm(3, &[3]).unwrap(), 1);
        assert_eq!(multinomial_dm(3, &[1, 1]), Err(PolyError::WeightMismatch(2, 3)));
        assert!(matches!(multinomial_dm(100, &[50, 50]), Err(PolyError::Overflow)));
    }

    #[test]
    fn fiber_sizes_sum_to_total_word_count() {
        // sum over monomials of degree l of d_m equals n^l
        for (n, l) in [(3usize, 3usize), (2, 4)] {
            let mut total = 0u64;
            for m in enumerate_monomials_exact(n, l).unwrap() {
                let dm = multinomial_dm(l, m.exponents()).unwrap();
                assert_eq!(dm as usize, m.fiber().len(), "fiber size for {m}");
                total += dm;
            }
            assert_eq!(total, (n as u64).pow(l as u32));
        }
    }

    #[test]
    fn fibers_enumerate_distinct_arrangements() {
        let m = CMonomial::from_exponents(vec![2, 1]);
        let fiber = m.fiber();
        assert_eq!(fiber, vec![w(&[1, 1, 2]), w(&[1, 2, 1]), w(&[2, 1, 1])]);
    }

    #[test]
    fn monomial_word_roundtrip_and_product() {
        let m = CMonomial::from_exponents(vec![1, 0, 2]);
        assert_eq!(m.to_word(), w(&[1, 3, 3]));
        assert_eq!(m.to_word().exponents(3).unwrap(), m);
        let p = m.mul(&CMonomial::generator(3, 2).unwrap()).unwrap();
        assert_eq!(p.exponents(), &[1, 1, 2]);
        assert!(CMonomial::one(2).mul(&CMonomial::one(3)).is_err());
    }

    #[test]
    fn construction_guards() {
        assert!(NCWord::from_letters(&[0]).is_err());
        assert!(NCWord::generator(0).is_err());
        assert!(enumerate_words(2, MAX_DEGREE + 1, EquivalenceMode::FREE).is_err());
        assert!(w(&[1, 2, 3]).exponents(2).is_err());
    }
}
