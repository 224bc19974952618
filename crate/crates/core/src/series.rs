//! Truncated multivariate series with exact rational coefficients.
//!
//! The carrier of densities, moves and coefficient recursions. Representation
//! is canonical sparse: a sorted map from exponent vectors to nonzero
//! rationals, every stored multi-index of total degree at most the truncation
//! order. Values are immutable after construction and all operations are pure.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Truncation order meaning "never truncate"; polynomial arithmetic stays exact.
pub const UNBOUNDED: u32 = u32::MAX;

/// Sparse truncated polynomial/series over `vars` with exact coefficients.
#[derive(Debug, Clone)]
pub struct TruncatedSeries {
    vars: Vec<String>,
    order: u32,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

/// Equality is coefficient-map equality: the truncation order is bookkeeping,
/// not part of the value.
impl PartialEq for TruncatedSeries {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.terms == other.terms
    }
}

impl Eq for TruncatedSeries {}

fn total_degree(exp: &[u32]) -> u32 {
    exp.iter().sum()
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl TruncatedSeries {
    pub fn zero(vars: &[&str], order: u32) -> Self {
        Self {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            order,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &[&str], order: u32, value: BigRational) -> Self {
        let mut s = Self::zero(vars, order);
        if !value.is_zero() {
            s.terms.insert(vec![0; s.vars.len()], value);
        }
        s
    }

    pub fn one(vars: &[&str], order: u32) -> Self {
        Self::constant(vars, order, BigRational::one())
    }

    /// The series consisting of the single monomial `var^1`.
    pub fn var(vars: &[&str], order: u32, var: &str) -> Result<Self> {
        let mut s = Self::zero(vars, order);
        let idx = s.var_index(var)?;
        if order >= 1 {
            let mut exp = vec![0; s.vars.len()];
            exp[idx] = 1;
            s.terms.insert(exp, BigRational::one());
        }
        Ok(s)
    }

    /// Build from raw terms; drops zeros and anything above the order.
    pub fn from_terms<I>(vars: &[&str], order: u32, terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, BigRational)>,
    {
        let mut s = Self::zero(vars, order);
        for (exp, c) in terms {
            assert_eq!(exp.len(), s.vars.len(), "exponent arity mismatch");
            if c.is_zero() || total_degree(&exp) > order {
                continue;
            }
            let entry = s.terms.entry(exp).or_insert_with(BigRational::zero);
            *entry += c;
            if entry.is_zero() {
                // re-fetch key removal below
            }
        }
        s.terms.retain(|_, c| !c.is_zero());
        s
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest total degree among stored terms (0 for the zero series).
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| total_degree(e)).max().unwrap_or(0)
    }

    pub fn coefficient(&self, exp: &[u32]) -> BigRational {
        self.terms.get(exp).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn var_index(&self, var: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| Error::UnknownVariable { var: var.to_string() })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.vars != other.vars {
            return Err(Error::VariableMismatch {
                left: self.vars.clone(),
                right: other.vars.clone(),
            });
        }
        if self.order != other.order {
            return Err(Error::OrderMismatch { left: self.order, right: other.order });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut terms = self.terms.clone();
        for (exp, c) in &other.terms {
            let entry = terms.entry(exp.clone()).or_insert_with(BigRational::zero);
            *entry += c;
        }
        terms.retain(|_, c| !c.is_zero());
        Ok(Self { vars: self.vars.clone(), order: self.order, terms })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect();
        Self { vars: self.vars.clone(), order: self.order, terms }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut terms: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exp: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                if total_degree(&exp) > self.order {
                    continue;
                }
                let entry = terms.entry(exp).or_insert_with(BigRational::zero);
                *entry += ca * cb;
            }
        }
        terms.retain(|_, c| !c.is_zero());
        Ok(Self { vars: self.vars.clone(), order: self.order, terms })
    }

    pub fn scale(&self, factor: &BigRational) -> Self {
        if factor.is_zero() {
            return Self { vars: self.vars.clone(), order: self.order, terms: BTreeMap::new() };
        }
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), c * factor)).collect();
        Self { vars: self.vars.clone(), order: self.order, terms }
    }

    pub fn pow(&self, n: u32) -> Result<Self> {
        let mut acc = Self::one(
            &self.vars.iter().map(String::as_str).collect::<Vec<_>>(),
            self.order,
        );
        for _ in 0..n {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    /// Formal partial derivative. The result order drops by one (clamped at 0).
    pub fn partial(&self, var: &str) -> Result<Self> {
        let idx = self.var_index(var)?;
        let order = self.order.saturating_sub(1).max(0);
        let mut terms = BTreeMap::new();
        for (exp, c) in &self.terms {
            let k = exp[idx];
            if k == 0 {
                continue;
            }
            let mut e = exp.clone();
            e[idx] = k - 1;
            if self.order != UNBOUNDED && total_degree(&e) > order {
                continue;
            }
            terms.insert(e, c * BigRational::from(BigInt::from(k)));
        }
        let order = if self.order == UNBOUNDED { UNBOUNDED } else { order };
        Ok(Self { vars: self.vars.clone(), order, terms })
    }

    /// Split into (even, odd) parts with respect to `var`; even + odd == self.
    pub fn parity_split(&self, var: &str) -> Result<(Self, Self)> {
        let idx = self.var_index(var)?;
        let mut even = Self { vars: self.vars.clone(), order: self.order, terms: BTreeMap::new() };
        let mut odd = even.clone();
        for (exp, c) in &self.terms {
            if exp[idx] % 2 == 0 {
                even.terms.insert(exp.clone(), c.clone());
            } else {
                odd.terms.insert(exp.clone(), c.clone());
            }
        }
        Ok((even, odd))
    }

    pub fn is_even_in(&self, var: &str) -> Result<bool> {
        let idx = self.var_index(var)?;
        Ok(self.terms.keys().all(|e| e[idx] % 2 == 0))
    }

    /// Exact evaluation at a rational point; every variable must be assigned.
    pub fn eval(&self, point: &BTreeMap<String, BigRational>) -> Result<BigRational> {
        let values: Vec<&BigRational> = self
            .vars
            .iter()
            .map(|v| point.get(v).ok_or_else(|| Error::MissingAssignment { var: v.clone() }))
            .collect::<Result<_>>()?;
        let mut acc = BigRational::zero();
        for (exp, c) in &self.terms {
            let mut term = c.clone();
            for (i, &k) in exp.iter().enumerate() {
                for _ in 0..k {
                    term *= values[i];
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Floating-point evaluation; `point` in variable order.
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.vars.len());
        let mut acc = 0.0;
        for (exp, c) in &self.terms {
            let mut term = c.to_f64().unwrap_or(f64::NAN);
            for (i, &k) in exp.iter().enumerate() {
                term *= point[i].powi(k as i32);
            }
            acc += term;
        }
        acc
    }

    /// Pre-converted f64 form for hot evaluation loops.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            n_vars: self.vars.len(),
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), c.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    /// Re-truncate to a (smaller or larger) order.
    pub fn truncate(&self, order: u32) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| total_degree(e) <= order)
            .map(|(e, c)| (e.clone(), c.clone()))
            .collect();
        Self { vars: self.vars.clone(), order, terms }
    }

    /// Same coefficients, declared order raised. Keeps polynomial ops exact.
    pub fn lift_order(&self, order: u32) -> Self {
        assert!(order >= self.degree());
        Self { vars: self.vars.clone(), order, terms: self.terms.clone() }
    }

    /// Reinterpret over a superset of variables (missing ones get exponent 0).
    pub fn extend_vars(&self, vars: &[&str]) -> Result<Self> {
        let map: Vec<usize> = self
            .vars
            .iter()
            .map(|v| {
                vars.iter()
                    .position(|w| w == v)
                    .ok_or_else(|| Error::UnknownVariable { var: v.clone() })
            })
            .collect::<Result<_>>()?;
        let mut out = Self::zero(vars, self.order);
        for (exp, c) in &self.terms {
            let mut e = vec![0u32; vars.len()];
            for (i, &k) in exp.iter().enumerate() {
                e[map[i]] = k;
            }
            out.terms.insert(e, c.clone());
        }
        Ok(out)
    }

    /// Substitute a polynomial for `var`, exactly. The result order is lifted
    /// far enough that no term is dropped.
    pub(crate) fn substitute(&self, var: &str, replacement: &Self) -> Result<Self> {
        let idx = self.var_index(var)?;
        if replacement.vars != self.vars {
            return Err(Error::VariableMismatch {
                left: self.vars.clone(),
                right: replacement.vars.clone(),
            });
        }
        let max_pow = self.terms.keys().map(|e| e[idx]).max().unwrap_or(0);
        let bound = self.degree() + max_pow.saturating_mul(replacement.degree().max(1)) + 1;
        let vars: Vec<&str> = self.vars.iter().map(String::as_str).collect();
        let repl = replacement.lift_order(bound.max(replacement.degree()));

        // Cache powers of the replacement.
        let mut powers: Vec<TruncatedSeries> = vec![Self::one(&vars, repl.order())];
        for k in 1..=max_pow {
            let next = powers[(k - 1) as usize].mul(&repl)?;
            powers.push(next);
        }

        let mut acc = Self::zero(&vars, repl.order());
        for (exp, c) in &self.terms {
            let mut e = exp.clone();
            let k = e[idx];
            e[idx] = 0;
            let mono = Self::from_terms(&vars, repl.order(), [(e, c.clone())]);
            acc = acc.add(&mono.mul(&powers[k as usize])?)?;
        }
        Ok(acc)
    }

    /// Antiderivative in `var` with zero constant; exact, order lifted by one.
    pub(crate) fn integrate(&self, var: &str) -> Result<Self> {
        let idx = self.var_index(var)?;
        let order = if self.order == UNBOUNDED { UNBOUNDED } else { self.order + 1 };
        let mut terms = BTreeMap::new();
        for (exp, c) in &self.terms {
            let mut e = exp.clone();
            e[idx] += 1;
            let den = BigRational::from(BigInt::from(e[idx]));
            terms.insert(e, c / den);
        }
        Ok(Self { vars: self.vars.clone(), order, terms })
    }

    /// Divide exactly by a monic-in-`var` linear polynomial `var - mu`, where
    /// `mu` does not involve `var`. Returns the quotient; the remainder
    /// (= self with `var := mu`) must vanish or an error is raised.
    pub(crate) fn divide_by_linear(&self, var: &str, mu: &Self) -> Result<Self> {
        let idx = self.var_index(var)?;
        if mu.terms.keys().any(|e| e[idx] != 0) {
            return Err(Error::InvalidParameter {
                reason: format!("divisor shift must not involve `{var}`"),
            });
        }
        let max_pow = self.terms.keys().map(|e| e[idx]).max().unwrap_or(0);
        let vars: Vec<&str> = self.vars.iter().map(String::as_str).collect();
        let bound = self.degree() + max_pow.saturating_mul(mu.degree().max(1)) + 2;
        let lifted = self.lift_order(bound);
        let mu = mu.lift_order(bound);

        // Synthetic division on coefficients of var^k: carry = carry*mu + c_k.
        let mut by_pow: Vec<TruncatedSeries> = vec![Self::zero(&vars, bound); (max_pow + 1) as usize];
        for (exp, c) in &lifted.terms {
            let mut e = exp.clone();
            let k = e[idx] as usize;
            e[idx] = 0;
            by_pow[k] = by_pow[k].add(&Self::from_terms(&vars, bound, [(e, c.clone())]))?;
        }
        let mut q_parts: Vec<TruncatedSeries> = vec![Self::zero(&vars, bound); max_pow as usize];
        let mut carry = Self::zero(&vars, bound);
        for k in (1..=max_pow as usize).rev() {
            carry = carry.mul(&mu)?.add(&by_pow[k])?;
            q_parts[k - 1] = carry.clone();
        }
        let rem = carry.mul(&mu)?.add(&by_pow[0])?;
        if !rem.is_zero() {
            return Err(Error::InexactDivision {
                divisor: format!("{var} - ({mu})"),
                remainder: rem.to_string(),
            });
        }
        let mut q = Self::zero(&vars, bound);
        for (k, part) in q_parts.iter().enumerate() {
            let v = Self::var(&vars, bound, var)?.pow(k as u32)?;
            q = q.add(&part.mul(&v)?)?;
        }
        Ok(q)
    }
}

/// Polynomial with f64 coefficients, for evaluation-heavy numerics.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    n_vars: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl CompiledPoly {
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.n_vars);
        let mut acc = 0.0;
        for (exp, c) in &self.terms {
            let mut term = *c;
            for (i, &k) in exp.iter().enumerate() {
                if k > 0 {
                    term *= point[i].powi(k as i32);
                }
            }
            acc += term;
        }
        acc
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (exp, c) in &self.terms {
            let neg = c.is_negative();
            let abs = c.abs();
            let mut mono = String::new();
            for (i, &k) in exp.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                if !mono.is_empty() {
                    mono.push('*');
                }
                mono.push_str(&self.vars[i]);
                if k > 1 {
                    mono.push_str(&format!("^{k}"));
                }
            }
            let coeff = if abs.is_one() && !mono.is_empty() {
                String::new()
            } else if mono.is_empty() {
                format!("{abs}")
            } else {
                format!("{abs}*")
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
            write!(f, "{coeff}{mono}")?;
        }
        Ok(())
    }
}

// --- JSON schema: {vars:[...], order:n, terms:[{exp:[...], num, den}]} ---

#[derive(Serialize, Deserialize)]
struct TermRepr {
    exp: Vec<u32>,
    num: String,
    den: String,
}

#[derive(Serialize, Deserialize)]
struct SeriesRepr {
    vars: Vec<String>,
    order: u32,
    terms: Vec<TermRepr>,
}

impl Serialize for TruncatedSeries {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| TermRepr {
                exp: e.clone(),
                num: c.numer().to_string(),
                den: c.denom().to_string(),
            })
            .collect();
        SeriesRepr { vars: self.vars.clone(), order: self.order, terms }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TruncatedSeries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SeriesRepr::deserialize(deserializer)?;
        let mut terms = BTreeMap::new();
        for t in repr.terms {
            if t.exp.len() != repr.vars.len() {
                return Err(D::Error::custom("exponent arity mismatch"));
            }
            let num = BigInt::from_str(&t.num).map_err(D::Error::custom)?;
            let den = BigInt::from_str(&t.den).map_err(D::Error::custom)?;
            if den.is_zero() {
                return Err(D::Error::custom("zero denominator"));
            }
            let c = BigRational::new(num, den);
            if c.is_zero() || total_degree(&t.exp) > repr.order {
                continue;
            }
            terms.insert(t.exp, c);
        }
        Ok(TruncatedSeries { vars: repr.vars, order: repr.order, terms })
    }
}

// --- Expression parsing -----------------------------------------------------

/// Parse a polynomial expression like `1 + 3/2*x^2*y - lambda` over `vars`.
pub fn parse(input: &str, vars: &[&str], order: u32) -> Result<TruncatedSeries> {
    Parser { input, pos: 0, vars, order }.parse_full()
}

struct Parser<'a> {
    input: &'a str,
    pos: usize,
    vars: &'a [&'a str],
    order: u32,
}

impl<'a> Parser<'a> {
    fn err(&self, reason: &str) -> Error {
        Error::Parse { input: self.input.to_string(), reason: format!("{reason} at byte {}", self.pos) }
    }

    fn peek(&self) -> Option<char> {
        self.input[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn parse_full(mut self) -> Result<TruncatedSeries> {
        let e = self.parse_sum()?;
        self.skip_ws();
        if self.pos != self.input.len() {
            return Err(self.err("trailing input"));
        }
        Ok(e)
    }

    fn parse_sum(&mut self) -> Result<TruncatedSeries> {
        let mut acc = if self.eat('-') { self.parse_product()?.neg() } else { self.parse_product()? };
        loop {
            if self.eat('+') {
                acc = acc.add(&self.parse_product()?)?;
            } else if self.eat('-') {
                acc = acc.sub(&self.parse_product()?)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn parse_product(&mut self) -> Result<TruncatedSeries> {
        let mut acc = self.parse_power()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    acc = acc.mul(&self.parse_power()?)?;
                }
                // implicit multiplication: `3x`, `x y`, `2(1+y)`
                Some(c) if c.is_alphabetic() || c == '(' => {
                    acc = acc.mul(&self.parse_power()?)?;
                }
                Some('/') => {
                    self.pos += 1;
                    let denom = self.parse_power()?;
                    let d = constant_value(&denom).ok_or_else(|| self.err("non-constant divisor"))?;
                    if d.is_zero() {
                        return Err(self.err("division by zero"));
                    }
                    acc = acc.scale(&d.recip());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_power(&mut self) -> Result<TruncatedSeries> {
        let base = self.parse_atom()?;
        self.skip_ws();
        if self.eat('^') {
            self.skip_ws();
            let start = self.pos;
            while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected exponent"));
            }
            let n: u32 = self.input[start..self.pos]
                .parse()
                .map_err(|_| self.err("bad exponent"))?;
            return base.pow(n);
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<TruncatedSeries> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.parse_sum()?;
                if !self.eat(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
                    self.pos += 1;
                }
                let n = BigInt::from_str(&self.input[start..self.pos])
                    .map_err(|_| self.err("bad integer"))?;
                Ok(TruncatedSeries::constant(self.vars, self.order, BigRational::from(n)))
            }
            Some(c) if c.is_alphabetic() => {
                let start = self.pos;
                while self
                    .peek()
                    .map(|c| c.is_alphanumeric() || c == '_')
                    .unwrap_or(false)
                {
                    self.pos += 1;
                }
                let name = &self.input[start..self.pos];
                if !self.vars.contains(&name) {
                    return Err(Error::UnknownVariable { var: name.to_string() });
                }
                TruncatedSeries::var(self.vars, self.order, name)
            }
            _ => Err(self.err("expected atom")),
        }
    }
}

fn constant_value(s: &TruncatedSeries) -> Option<BigRational> {
    if s.is_zero() {
        return Some(BigRational::zero());
    }
    if s.num_terms() == 1 {
        let (exp, c) = s.terms().next().unwrap();
        if total_degree(exp) == 0 {
            return Some(c.clone());
        }
    }
    None
}
