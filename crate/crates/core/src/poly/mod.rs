//! Sparse multivariate polynomials with complex coefficients.

mod eval;
mod io;

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{EvalError, Expr, MultiOrder, Var};

pub use eval::{dense_coefficients, eval_tensor, from_dense, mode_product, Horner};
pub use io::{read_json, write_json, PolyRecord};

/// Per-variable degree cap for fitted polynomials.
pub const DEFAULT_DEGREE_CAP: u32 = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("degree {degree} in {var} exceeds the cap {cap}")]
    DegreeCap { var: Var, degree: u32, cap: u32 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("malformed polynomial file: {0}")]
    Format(String),
}

/// Product of variable powers, stored sorted by variable with positive
/// exponents only.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: Var, exp: u32) -> Self {
        if exp == 0 {
            Self::one()
        } else {
            Monomial(vec![(v, exp)])
        }
    }

    pub fn from_pairs<I: IntoIterator<Item = (Var, u32)>>(pairs: I) -> Self {
        let order = MultiOrder::from_pairs(pairs);
        Monomial(order.iter().collect())
    }

    pub fn exponent(&self, v: Var) -> u32 {
        self.0
            .binary_search_by_key(&v, |&(w, _)| w)
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn pairs(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    /// Copy with the exponent of `v` replaced.
    pub fn with(&self, v: Var, exp: u32) -> Self {
        let mut pairs: Vec<(Var, u32)> = self.0.iter().copied().filter(|&(w, _)| w != v).collect();
        if exp > 0 {
            pairs.push((v, exp));
            pairs.sort_unstable();
        }
        Monomial(pairs)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial::from_pairs(self.0.iter().chain(other.0.iter()).copied())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CPoly {
    terms: BTreeMap<Monomial, Complex64>,
}

fn is_zero(c: Complex64) -> bool {
    c.re == 0.0 && c.im == 0.0
}

impl CPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        Self::term(Monomial::one(), c)
    }

    pub fn var(v: Var) -> Self {
        Self::term(Monomial::var(v, 1), Complex64::new(1.0, 0.0))
    }

    pub fn term(m: Monomial, c: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    /// `z_v^k / k!`
    pub fn scaled_power(v: Var, k: u32) -> Self {
        let fact: f64 = (1..=k).map(f64::from).product();
        Self::term(Monomial::var(v, k), Complex64::new(1.0 / fact, 0.0))
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, Complex64)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: Complex64) {
        if is_zero(c) {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += c;
                if is_zero(*slot.get()) {
                    slot.remove();
                }
            }
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
        }
    }

    pub fn coeff(&self, m: &Monomial) -> Complex64 {
        self.terms.get(m).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, Complex64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        self.terms.keys().flat_map(|m| m.0.iter().map(|&(v, _)| v)).collect()
    }

    pub fn degree(&self, v: Var) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).max().unwrap_or(0)
    }

    pub fn max_degree(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|&(_, e)| e))
            .max()
            .unwrap_or(0)
    }

    pub fn check_degree_cap(&self, cap: u32) -> Result<(), PolyError> {
        for v in self.free_vars() {
            let degree = self.degree(v);
            if degree > cap {
                return Err(PolyError::DegreeCap { var: v, degree, cap });
            }
        }
        Ok(())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        if is_zero(c) {
            return Self::zero();
        }
        Self::from_terms(self.terms.iter().map(|(m, &a)| (m.clone(), a * c)))
    }

    pub fn map_terms<F>(&self, mut f: F) -> Self
    where
        F: FnMut(&Monomial, Complex64) -> Option<(Monomial, Complex64)>,
    {
        Self::from_terms(self.terms.iter().filter_map(|(m, &c)| f(m, c)))
    }

    /// Partial derivative with respect to `v`.
    pub fn derive(&self, v: Var) -> Self {
        self.map_terms(|m, c| {
            let k = m.exponent(v);
            (k > 0).then(|| (m.with(v, k - 1), c * k as f64))
        })
    }

    pub fn derive_by(&self, d: &MultiOrder) -> Self {
        self.map_terms(|m, c| {
            let mut out = m.clone();
            let mut coef = c;
            for (v, k) in d.iter() {
                let e = out.exponent(v);
                if e < k {
                    return None;
                }
                let falling: f64 = ((e - k + 1)..=e).map(f64::from).product();
                coef *= falling;
                out = out.with(v, e - k);
            }
            Some((out, coef))
        })
    }

    /// `times`-fold antiderivative in `v` with every integration starting at
    /// `z_v = 0`: `z_v^k ↦ z_v^(k+times) · k!/(k+times)!`.
    pub fn antiderive_from_zero(&self, v: Var, times: u32) -> Self {
        if times == 0 {
            return self.clone();
        }
        self.map_terms(|m, c| {
            let k = m.exponent(v);
            let rising: f64 = ((k + 1)..=(k + times)).map(f64::from).product();
            Some((m.with(v, k + times), c / rising))
        })
    }

    /// Substitutes `z_v ↦ a·z_v + b` and expands.
    pub fn affine_substitute(&self, v: Var, a: Complex64, b: Complex64) -> Self {
        let mut out = Self::zero();
        for (m, &c) in &self.terms {
            let k = m.exponent(v);
            if k == 0 {
                out.add_term(m.clone(), c);
                continue;
            }
            // (a z + b)^k = Σ_j C(k, j) a^j b^(k-j) z^j
            let mut binom = 1.0;
            for j in 0..=k {
                if j > 0 {
                    binom = binom * (k - j + 1) as f64 / j as f64;
                }
                let coef = c * binom * a.powu(j) * b.powu(k - j);
                out.add_term(m.with(v, j), coef);
            }
        }
        out
    }

    /// Fixes `z_v` to a constant.
    pub fn restrict(&self, v: Var, value: Complex64) -> Self {
        self.affine_substitute(v, Complex64::new(0.0, 0.0), value)
    }

    pub fn eval<E: crate::expr::Env + ?Sized>(&self, env: &E) -> Result<Complex64, PolyError> {
        Horner::new(self).eval(env)
    }

    pub fn to_expr(&self) -> Expr {
        let mut acc = Expr::real(0.0);
        for (m, &c) in &self.terms {
            let mut t = Expr::Const(c);
            for &(v, e) in &m.0 {
                t = Expr::mul(t, Expr::pow(Expr::Var(v), e));
            }
            acc = Expr::add(acc, t);
        }
        acc
    }

    /// Exact conversion of polynomial expressions: sums, products, integer
    /// powers and division by nonzero constants. Returns `None` for anything
    /// else.
    pub fn from_expr(e: &Expr) -> Option<CPoly> {
        Some(match e {
            Expr::Const(c) => CPoly::constant(*c),
            Expr::Var(v) => CPoly::var(*v),
            Expr::Add(a, b) => &CPoly::from_expr(a)? + &CPoly::from_expr(b)?,
            Expr::Neg(a) => -&CPoly::from_expr(a)?,
            Expr::Mul(a, b) => &CPoly::from_expr(a)? * &CPoly::from_expr(b)?,
            Expr::Div(a, b) => {
                let den = CPoly::from_expr(b)?;
                if den.free_vars().is_empty() {
                    let c = den.coeff(&Monomial::one());
                    if is_zero(c) {
                        return None;
                    }
                    CPoly::from_expr(a)?.scale(1.0 / c)
                } else {
                    return None;
                }
            }
            Expr::Pow(a, k) => {
                let base = CPoly::from_expr(a)?;
                let mut acc = CPoly::constant(Complex64::new(1.0, 0.0));
                for _ in 0..*k {
                    acc = &acc * &base;
                }
                acc
            }
            Expr::Exp(_) | Expr::Sin(_) | Expr::Cos(_) => return None,
        })
    }

    /// Largest coefficient modulus; zero for the zero polynomial.
    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Max coefficient difference relative to the larger coefficient scale.
    pub fn relative_distance(&self, other: &CPoly) -> f64 {
        let diff = (self - other).max_coeff();
        let scale = self.max_coeff().max(other.max_coeff()).max(1e-300);
        diff / scale
    }
}

impl Add for &CPoly {
    type Output = CPoly;
    fn add(self, rhs: &CPoly) -> CPoly {
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), c);
        }
        out
    }
}

impl Sub for &CPoly {
    type Output = CPoly;
    fn sub(self, rhs: &CPoly) -> CPoly {
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Neg for &CPoly {
    type Output = CPoly;
    fn neg(self) -> CPoly {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &CPoly {
    type Output = CPoly;
    fn mul(self, rhs: &CPoly) -> CPoly {
        let mut out = CPoly::zero();
        for (ma, &a) in &self.terms {
            for (mb, &b) in &rhs.terms {
                out.add_term(ma.mul(mb), a * b);
            }
        }
        out
    }
}

impl fmt::Display for CPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({}{:+}i)", c.re, c.im)?;
            for &(v, e) in &m.0 {
                if e == 1 {
                    write!(f, "*{v}")?;
                } else {
                    write!(f, "*{v}^{e}")?;
                }
            }
        }
        Ok(())
    }
}
