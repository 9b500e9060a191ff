//! Exact sparse multivariate polynomials over the rationals.
//!
//! Terms are kept in a `BTreeMap` keyed by [`MultiIndex`], whose ordering is
//! graded lexicographic. Zero coefficients are never stored.

mod parse;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{max_variable_index, parse};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable `{name}` at position {pos} is out of range for {nvars} variable(s)")]
    VariableOutOfRange { name: String, pos: usize, nvars: usize },
    #[error("dimension mismatch: expected {expected} variable(s), found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Exponent vector of a monomial, one entry per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    /// The exponent vector of the single variable `x_{var+1}`.
    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        MultiIndex(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.0.len(), other.0.len());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }

    /// All multi-indices in `nvars` variables of total degree at most `max_degree`,
    /// in ascending graded-lex order.
    pub fn all_up_to(nvars: usize, max_degree: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for deg in 0..=max_degree {
            let mut level = Vec::new();
            let mut current = vec![0u32; nvars];
            compositions(deg, 0, &mut current, &mut level);
            level.sort();
            out.extend(level);
        }
        out
    }
}

fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if pos + 1 >= current.len() {
        if let Some(k) = current.len().checked_sub(1) {
            current[k] = remaining;
            out.push(MultiIndex(current.clone()));
            current[k] = 0;
        } else if remaining == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    for e in 0..=remaining {
        current[pos] = e;
        compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

impl Ord for MultiIndex {
    // Graded lex: total degree first, then larger exponent of x1, x2, ... wins.
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A point of R^n; evaluation at a point is a real algebra homomorphism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Sparse polynomial in `nvars` variables with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<MultiIndex, BigRational>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, BigRational::one())
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        Self::monomial(nvars, MultiIndex::zero(nvars), c)
    }

    pub fn from_int(nvars: usize, c: i64) -> Self {
        Self::constant(nvars, BigRational::from_integer(BigInt::from(c)))
    }

    /// Constant polynomial holding the exact binary value of `c`.
    pub fn from_f64(nvars: usize, c: f64) -> Self {
        Self::constant(nvars, rational_from_f64(c))
    }

    pub fn monomial(nvars: usize, exps: MultiIndex, c: BigRational) -> Self {
        assert_eq!(exps.nvars(), nvars, "multi-index length must equal nvars");
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(exps, c);
        }
        Polynomial { nvars, terms }
    }

    /// The coordinate function `x_{var+1}`.
    pub fn var(nvars: usize, var: usize) -> Self {
        Self::monomial(nvars, MultiIndex::unit(nvars, var), BigRational::one())
    }

    /// `x1^2 + ... + xn^2`.
    pub fn sum_of_squared_vars(nvars: usize) -> Self {
        let mut p = Polynomial::zero(nvars);
        for i in 0..nvars {
            let mut e = vec![0; nvars];
            e[i] = 2;
            p.add_term(MultiIndex(e), &BigRational::one());
        }
        p
    }

    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (MultiIndex, BigRational)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (e, c) in terms {
            if e.nvars() != nvars {
                return Err(PolyError::DimensionMismatch { expected: nvars, found: e.nvars() });
            }
            p.add_term(e, &c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().next_back().map_or(0, MultiIndex::degree)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&MultiIndex, &BigRational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, e: &MultiIndex) -> BigRational {
        self.terms.get(e).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn constant_term(&self) -> BigRational {
        self.coeff(&MultiIndex::zero(self.nvars))
    }

    pub(crate) fn add_term(&mut self, e: MultiIndex, c: &BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn check_dims(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: other.nvars });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c);
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), &-c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                out.add_term(e1.add(e2), &(c1 * c2));
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: &BigRational) -> Polynomial {
        if s.is_zero() {
            return Polynomial::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut acc = Polynomial::one(self.nvars);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Floating-point evaluation; coefficients are converted to `f64` per term.
    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: x.len() });
        }
        Ok(self
            .terms
            .iter()
            .map(|(e, c)| rational_to_f64(c) * e.eval(x))
            .sum())
    }

    /// Exact evaluation at a rational point.
    pub fn eval_exact(&self, x: &[BigRational]) -> Result<BigRational, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: x.len() });
        }
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e.exponents()) {
                for _ in 0..k {
                    t *= xi;
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Sum of absolute coefficients, exact.
    pub fn l1_norm_exact(&self) -> BigRational {
        self.terms.values().fold(BigRational::zero(), |acc, c| acc + c.abs())
    }

    pub fn l1_norm(&self) -> f64 {
        rational_to_f64(&self.l1_norm_exact())
    }

    /// Coefficients converted to `f64`, for repeated evaluation in hot loops.
    pub fn to_float(&self) -> FloatPoly {
        FloatPoly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), rational_to_f64(c)))
                .collect(),
        }
    }
}

/// Floating-point view of a [`Polynomial`].
#[derive(Debug, Clone)]
pub struct FloatPoly {
    nvars: usize,
    terms: Vec<(MultiIndex, f64)>,
}

impl FloatPoly {
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Panics if `x` has the wrong length.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "point dimension mismatch");
        self.terms.iter().map(|(e, c)| c * e.eval(x)).sum()
    }
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        if q.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact rational value of a finite `f64`.
pub fn rational_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// Nearest multiple of `10^-12` to `x`; used when certificates are rationalized.
pub fn rationalize(x: f64) -> BigRational {
    const SCALE: i128 = 1_000_000_000_000;
    let scaled = x * SCALE as f64;
    if !scaled.is_finite() || scaled.abs() > 1e36 {
        return rational_from_f64(x);
    }
    BigRational::new(BigInt::from(scaled.round() as i128), BigInt::from(SCALE))
}

macro_rules! binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl std::ops::$tr<&Polynomial> for &Polynomial {
            type Output = Polynomial;
            /// Panics when the operands have different variable counts.
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                self.$checked(rhs).expect("polynomial dimension mismatch")
            }
        }
        impl std::ops::$tr<Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$checked(&rhs).expect("polynomial dimension mismatch")
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(&-BigRational::one())
    }
}

impl std::ops::Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        -&self
    }
}

fn fmt_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl fmt::Display for Polynomial {
    /// Canonical form: graded-lex descending, explicit signs, variables `x1..xn`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let abs = c.abs();
            let mut factors: Vec<String> = Vec::new();
            if !abs.is_one() || e.degree() == 0 {
                factors.push(fmt_rational(&abs));
            }
            for (v, &k) in e.exponents().iter().enumerate() {
                match k {
                    0 => {}
                    1 => factors.push(format!("x{}", v + 1)),
                    _ => factors.push(format!("x{}^{}", v + 1, k)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}
