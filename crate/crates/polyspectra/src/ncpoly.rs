//! Noncommutative *-polynomials in two self-adjoint variables `x` and `y`.
//!
//! A polynomial is a finite complex combination of words in the letters
//! `x` and `y`; multiplication concatenates words and is noncommutative.
//! The representation is canonical: words are kept in graded
//! lexicographic order and zero coefficients are never stored, so two
//! equal polynomials compare equal structurally.

use ndarray::{Array2, ArrayView2};
use ndarray_linalg::c64;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

mod parse;

pub use parse::parse;

/// First-variable letter in a [`Word`].
pub const LETTER_X: u8 = 1;
/// Second-variable letter in a [`Word`].
pub const LETTER_Y: u8 = 2;

/// A word in the letters `x` (1) and `y` (2); the empty word is the unit.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Word(Vec<u8>);

impl Word {
    /// The empty word.
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Builds a word, rejecting letters other than 1 and 2.
    pub fn new(letters: &[u8]) -> Result<Self> {
        if let Some(&bad) = letters.iter().find(|&&l| l != LETTER_X && l != LETTER_Y) {
            return Err(Error::Dim(format!(
                "invalid word letter {bad}; letters must be 1 or 2"
            )));
        }
        Ok(Word(letters.to_vec()))
    }

    /// The single-letter word `x`.
    pub fn x() -> Self {
        Word(vec![LETTER_X])
    }

    /// The single-letter word `y`.
    pub fn y() -> Self {
        Word(vec![LETTER_Y])
    }

    /// Word length (polynomial degree of the monomial).
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Whether this is the empty word.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The letters, each 1 (`x`) or 2 (`y`).
    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    /// The reversed word (adjoint of a word of self-adjoint letters).
    pub fn reversed(&self) -> Self {
        let mut v = self.0.clone();
        v.reverse();
        Word(v)
    }

    /// Concatenation `self · other`.
    pub fn concat(&self, other: &Word) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Whether the word reads the same in both directions.
    pub fn is_palindrome(&self) -> bool {
        self.0.iter().eq(self.0.iter().rev())
    }
}

impl Ord for Word {
    /// Graded lexicographic order: shorter words first, then lexicographic.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "1");
        }
        let s: Vec<&str> = self
            .0
            .iter()
            .map(|&l| if l == LETTER_X { "x" } else { "y" })
            .collect();
        write!(f, "{}", s.join("*"))
    }
}

/// A noncommutative polynomial: a finite map from words to nonzero
/// complex coefficients, kept in graded lexicographic order.
///
/// The type is immutable in use: all operations return new values, so
/// shared references are safe across threads.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct NCPolynomial {
    terms: BTreeMap<Word, Complex64>,
}

impl NCPolynomial {
    /// The zero polynomial.
    pub fn zero() -> Self {
        NCPolynomial {
            terms: BTreeMap::new(),
        }
    }

    /// The constant polynomial 1.
    pub fn one() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    /// The variable `x`.
    pub fn x() -> Self {
        Self::monomial(Word::x(), Complex64::new(1.0, 0.0))
    }

    /// The variable `y`.
    pub fn y() -> Self {
        Self::monomial(Word::y(), Complex64::new(1.0, 0.0))
    }

    /// A constant polynomial.
    pub fn constant(c: Complex64) -> Self {
        Self::monomial(Word::empty(), c)
    }

    /// A single term `c · w`.
    pub fn monomial(w: Word, c: Complex64) -> Self {
        let mut terms = BTreeMap::new();
        if c != Complex64::new(0.0, 0.0) {
            terms.insert(w, c);
        }
        NCPolynomial { terms }
    }

    /// Builds a polynomial from (word, coefficient) pairs, summing
    /// duplicates and dropping zeros.
    pub fn from_terms<I: IntoIterator<Item = (Word, Complex64)>>(iter: I) -> Self {
        let mut p = NCPolynomial::zero();
        for (w, c) in iter {
            p.add_term(w, c);
        }
        p
    }

    /// Adds `c · w` in place, merging with an existing term and dropping
    /// the slot if the coefficients cancel.
    pub fn add_term(&mut self, w: Word, c: Complex64) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(w) {
            Entry::Vacant(slot) => {
                if c != Complex64::new(0.0, 0.0) {
                    slot.insert(c);
                }
            }
            Entry::Occupied(mut slot) => {
                let sum = *slot.get() + c;
                if sum == Complex64::new(0.0, 0.0) {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    /// Terms in graded lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Complex64)> {
        self.terms.iter()
    }

    /// Number of stored terms.
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Whether this is the zero polynomial.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of a word (zero if absent).
    pub fn coeff(&self, w: &Word) -> Complex64 {
        self.terms
            .get(w)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Total degree: the longest stored word (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::len).max().unwrap_or(0)
    }

    /// The adjoint `p*`: coefficients conjugated, words reversed.
    pub fn adjoint(&self) -> Self {
        NCPolynomial {
            terms: self
                .terms
                .iter()
                .map(|(w, c)| (w.reversed(), c.conj()))
                .collect(),
        }
    }

    /// Whether `p* == p` exactly.
    pub fn is_selfadjoint(&self) -> bool {
        *self == self.adjoint()
    }

    /// Scales by a complex constant.
    pub fn scale(&self, c: Complex64) -> Self {
        if c == Complex64::new(0.0, 0.0) {
            return NCPolynomial::zero();
        }
        NCPolynomial {
            terms: self.terms.iter().map(|(w, v)| (w.clone(), v * c)).collect(),
        }
    }

    /// Evaluates at a pair of square matrices of equal dimension.
    ///
    /// The empty word contributes `coeff · I`. The matrices need not be
    /// Hermitian; evaluation is plain matrix arithmetic.
    pub fn evaluate(&self, s1: &ArrayView2<c64>, s2: &ArrayView2<c64>) -> Result<Array2<c64>> {
        let n = s1.nrows();
        if s1.ncols() != n || s2.nrows() != n || s2.ncols() != n {
            return Err(Error::Dim(format!(
                "evaluate requires square matrices of equal dimension, got {:?} and {:?}",
                s1.dim(),
                s2.dim()
            )));
        }
        let mut acc: Array2<c64> = Array2::zeros((n, n));
        for (w, &c) in &self.terms {
            if w.is_empty() {
                let mut ident: Array2<c64> = Array2::eye(n);
                ident *= c;
                acc += &ident;
                continue;
            }
            let mut prod: Option<Array2<c64>> = None;
            for &l in w.letters() {
                let factor = if l == LETTER_X { s1 } else { s2 };
                prod = Some(match prod {
                    None => factor.to_owned(),
                    Some(p) => p.dot(factor),
                });
            }
            let mut term = prod.expect("nonempty word");
            term *= c;
            acc += &term;
        }
        Ok(acc)
    }
}

impl std::ops::Add for &NCPolynomial {
    type Output = NCPolynomial;
    fn add(self, rhs: &NCPolynomial) -> NCPolynomial {
        let mut out = self.clone();
        for (w, &c) in &rhs.terms {
            out.add_term(w.clone(), c);
        }
        out
    }
}

impl std::ops::Sub for &NCPolynomial {
    type Output = NCPolynomial;
    fn sub(self, rhs: &NCPolynomial) -> NCPolynomial {
        let mut out = self.clone();
        for (w, &c) in &rhs.terms {
            out.add_term(w.clone(), -c);
        }
        out
    }
}

impl std::ops::Neg for &NCPolynomial {
    type Output = NCPolynomial;
    fn neg(self) -> NCPolynomial {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl std::ops::Mul for &NCPolynomial {
    type Output = NCPolynomial;
    fn mul(self, rhs: &NCPolynomial) -> NCPolynomial {
        let mut out = NCPolynomial::zero();
        for (w1, &c1) in &self.terms {
            for (w2, &c2) in &rhs.terms {
                out.add_term(w1.concat(w2), c1 * c2);
            }
        }
        out
    }
}

/// Formats one coefficient; `lone` means the term has an empty word.
fn fmt_coeff(c: Complex64, lone: bool) -> String {
    let is_one = c == Complex64::new(1.0, 0.0);
    if is_one && !lone {
        return String::new();
    }
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.re == 0.0 {
        if c.im == 1.0 {
            "i".to_string()
        } else if c.im == -1.0 {
            "-i".to_string()
        } else {
            format!("{}i", c.im)
        }
    } else if c.im < 0.0 {
        format!("({}-{}i)", c.re, -c.im)
    } else {
        format!("({}+{}i)", c.re, c.im)
    }
}

impl fmt::Display for NCPolynomial {
    /// Canonical text form; `parse` inverts it exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (w, &c) in &self.terms {
            // Pull an explicit minus out of negative real and negative
            // pure-imaginary coefficients; parenthesized complex
            // coefficients keep their signs inside.
            let (neg, c_abs) = if c.im == 0.0 && c.re < 0.0 {
                (true, -c)
            } else if c.re == 0.0 && c.im < 0.0 {
                (true, -c)
            } else {
                (false, c)
            };
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let cs = fmt_coeff(c_abs, w.is_empty());
            if w.is_empty() {
                write!(f, "{cs}")?;
            } else if cs.is_empty() {
                write!(f, "{w:?}")?;
            } else {
                write!(f, "{cs}*{w:?}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for NCPolynomial {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}
