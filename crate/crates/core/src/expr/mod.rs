//! Symbolic holomorphic expressions in finitely many indexed complex variables.
//!
//! Expressions serve as the exact oracle for a function and its mixed
//! derivatives. Parsing never simplifies; the smart constructors used by
//! differentiation and substitution fold constant subtrees and drop additive
//! zeros and multiplicative ones so that derivative trees stay small.

mod cauchy;
mod compiled;
mod diff;
mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cauchy::{numeric_derivative, CAUCHY_POINTS};
pub use compiled::Compiled;
pub use parse::{parse, ParseError};

/// Index of a complex variable `z<id>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var(pub u32);

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z{}", self.0)
    }
}

/// Finitely supported map from variables to derivative orders.
///
/// Zero orders are never stored, so two orders compare equal exactly when
/// they describe the same differential operator.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiOrder(BTreeMap<Var, u32>);

impl MultiOrder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(v: Var, order: u32) -> Self {
        let mut m = Self::new();
        m.set(v, order);
        m
    }

    pub fn from_pairs<I: IntoIterator<Item = (Var, u32)>>(pairs: I) -> Self {
        let mut m = Self::new();
        for (v, k) in pairs {
            m.set(v, m.get(v) + k);
        }
        m
    }

    /// The operator with order `n` in every listed variable.
    pub fn uniform(vars: &[Var], n: u32) -> Self {
        Self::from_pairs(vars.iter().map(|&v| (v, n)))
    }

    pub fn get(&self, v: Var) -> u32 {
        self.0.get(&v).copied().unwrap_or(0)
    }

    pub fn set(&mut self, v: Var, order: u32) {
        if order == 0 {
            self.0.remove(&v);
        } else {
            self.0.insert(v, order);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, u32)> + '_ {
        self.0.iter().map(|(&v, &k)| (v, k))
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every multi-order with `0 <= α_v <= n` for `v` in `vars`, in
    /// lexicographic order of `(α_{vars[0]}, α_{vars[1]}, ...)`.
    pub fn boxed(vars: &[Var], n: u32) -> Vec<MultiOrder> {
        let mut out = vec![MultiOrder::new()];
        for &v in vars {
            let mut next = Vec::with_capacity(out.len() * (n as usize + 1));
            for base in &out {
                for k in 0..=n {
                    let mut m = base.clone();
                    m.set(v, k);
                    next.push(m);
                }
            }
            out = next;
        }
        out
    }
}

impl fmt::Display for MultiOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, k)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}:{}", v.0, k)?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("no value assigned to variable {0}")]
    MissingVar(Var),
}

/// Source of variable values for evaluation.
pub trait Env {
    fn value(&self, v: Var) -> Option<Complex64>;
}

impl Env for BTreeMap<Var, Complex64> {
    fn value(&self, v: Var) -> Option<Complex64> {
        self.get(&v).copied()
    }
}

impl Env for HashMap<Var, Complex64> {
    fn value(&self, v: Var) -> Option<Complex64> {
        self.get(&v).copied()
    }
}

impl Env for [(Var, Complex64)] {
    fn value(&self, v: Var) -> Option<Complex64> {
        self.iter().find(|(w, _)| *w == v).map(|&(_, z)| z)
    }
}

impl<const N: usize> Env for [(Var, Complex64); N] {
    fn value(&self, v: Var) -> Option<Complex64> {
        self.as_slice().value(v)
    }
}

impl Env for Vec<(Var, Complex64)> {
    fn value(&self, v: Var) -> Option<Complex64> {
        self.as_slice().value(v)
    }
}

/// No variables bound; evaluating a closed expression.
pub struct NoVars;

impl Env for NoVars {
    fn value(&self, _: Var) -> Option<Complex64> {
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(Complex64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Non-negative integer power.
    Pow(Box<Expr>, u32),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl Expr {
    pub fn constant(c: Complex64) -> Expr {
        Expr::Const(c)
    }

    pub fn real(x: f64) -> Expr {
        Expr::Const(Complex64::new(x, 0.0))
    }

    pub fn var(id: u32) -> Expr {
        Expr::Var(Var(id))
    }

    pub fn as_const(&self) -> Option<Complex64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, c: Complex64) -> bool {
        matches!(self, Expr::Const(x) if *x == c)
    }

    // Folding constructors.

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            _ if a.is_const(ZERO) => b,
            _ if b.is_const(ZERO) => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(a, Expr::neg(b))
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(-x),
            _ => Expr::Neg(Box::new(a)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            _ if a.is_const(ZERO) || b.is_const(ZERO) => Expr::Const(ZERO),
            _ if a.is_const(ONE) => b,
            _ if b.is_const(ONE) => a,
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Const(x), Expr::Const(y)) if *y != ZERO => Expr::Const(x / y),
            _ if a.is_const(ZERO) && !b.is_const(ZERO) => Expr::Const(ZERO),
            _ if b.is_const(ONE) => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, k: u32) -> Expr {
        match (&a, k) {
            (_, 0) => Expr::Const(ONE),
            (_, 1) => a,
            (Expr::Const(x), _) => Expr::Const(x.powu(k)),
            _ => Expr::Pow(Box::new(a), k),
        }
    }

    pub fn exp(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(x.exp()),
            _ => Expr::Exp(Box::new(a)),
        }
    }

    pub fn sin(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(x.sin()),
            _ => Expr::Sin(Box::new(a)),
        }
    }

    pub fn cos(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(x.cos()),
            _ => Expr::Cos(Box::new(a)),
        }
    }

    /// Rebuilds the tree bottom-up through the folding constructors.
    pub fn fold(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Add(a, b) => Expr::add(a.fold(), b.fold()),
            Expr::Neg(a) => Expr::neg(a.fold()),
            Expr::Mul(a, b) => Expr::mul(a.fold(), b.fold()),
            Expr::Div(a, b) => Expr::div(a.fold(), b.fold()),
            Expr::Pow(a, k) => Expr::pow(a.fold(), *k),
            Expr::Exp(a) => Expr::exp(a.fold()),
            Expr::Sin(a) => Expr::sin(a.fold()),
            Expr::Cos(a) => Expr::cos(a.fold()),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => {
                a.collect_vars(out)
            }
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(v) || b.depends_on(v)
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => {
                a.depends_on(v)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.node_count() + b.node_count()
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => {
                1 + a.node_count()
            }
        }
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<Complex64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.value(*v).ok_or(EvalError::MissingVar(*v))?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let num = a.eval(env)?;
                let den = b.eval(env)?;
                if den == ZERO {
                    return Err(EvalError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, k) => a.eval(env)?.powu(*k),
            Expr::Exp(a) => a.eval(env)?.exp(),
            Expr::Sin(a) => a.eval(env)?.sin(),
            Expr::Cos(a) => a.eval(env)?.cos(),
        })
    }

    /// Replaces every occurrence of `v` by `replacement`, folding constants.
    pub fn substitute(&self, v: Var, replacement: &Expr) -> Expr {
        if !self.depends_on(v) {
            return self.clone();
        }
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(w) if *w == v => replacement.clone(),
            Expr::Var(_) => self.clone(),
            Expr::Add(a, b) => Expr::add(a.substitute(v, replacement), b.substitute(v, replacement)),
            Expr::Neg(a) => Expr::neg(a.substitute(v, replacement)),
            Expr::Mul(a, b) => Expr::mul(a.substitute(v, replacement), b.substitute(v, replacement)),
            Expr::Div(a, b) => Expr::div(a.substitute(v, replacement), b.substitute(v, replacement)),
            Expr::Pow(a, k) => Expr::pow(a.substitute(v, replacement), *k),
            Expr::Exp(a) => Expr::exp(a.substitute(v, replacement)),
            Expr::Sin(a) => Expr::sin(a.substitute(v, replacement)),
            Expr::Cos(a) => Expr::cos(a.substitute(v, replacement)),
        }
    }

    /// Fixes `v` to a constant value and folds constant subtrees.
    pub fn restrict(&self, v: Var, value: Complex64) -> Expr {
        self.substitute(v, &Expr::Const(value)).fold()
    }

    /// Replaces `z_v` by `a·z_v + b`.
    pub fn substitute_affine(&self, v: Var, a: Complex64, b: Complex64) -> Expr {
        let repl = Expr::add(Expr::mul(Expr::Const(a), Expr::Var(v)), Expr::Const(b));
        self.substitute(v, &repl)
    }

    pub fn differentiate(&self, d: &MultiOrder) -> Expr {
        diff::differentiate(self, d)
    }
}

impl From<Complex64> for Expr {
    fn from(c: Complex64) -> Self {
        Expr::Const(c)
    }
}

fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

/// Literal printing: non-negative reals and non-negative imaginaries print
/// bare; anything else prints in the parenthesized literal form `(re±imi)`,
/// which the lexer reads back as a single constant.
fn fmt_const(c: Complex64) -> String {
    let (re, im) = (c.re, c.im);
    if im == 0.0 && !im.is_sign_negative() && !re.is_sign_negative() {
        fmt_real(re)
    } else if re == 0.0 && !re.is_sign_negative() && !im.is_sign_negative() {
        format!("{}i", fmt_real(im))
    } else if im == 0.0 && !im.is_sign_negative() {
        format!("({})", fmt_real(re))
    } else {
        let sign = if im.is_sign_negative() { '-' } else { '+' };
        format!("({}{}{}i)", fmt_real(re), sign, fmt_real(im.abs()))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{}", fmt_const(*c)),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Neg(a) => write!(f, "(- {a})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a} ^ {k})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn evaluates_basic_examples() {
        let e = parse("exp(0)").unwrap();
        assert_eq!(e.eval(&NoVars).unwrap(), c(1.0, 0.0));

        let e = parse("1/(1 - z1)").unwrap();
        let v = e.eval(&[(Var(1), c(0.5, 0.0))]).unwrap();
        assert!((v - c(2.0, 0.0)).norm() < 1e-15);

        let e = parse("z1*z2").unwrap();
        let v = e.eval(&[(Var(1), c(0.0, 2.0)), (Var(2), c(3.0, 0.0))]).unwrap();
        assert_eq!(v, c(0.0, 6.0));
    }

    #[test]
    fn evaluation_errors() {
        let e = parse("1/(1 - z1)").unwrap();
        assert_eq!(e.eval(&[(Var(1), c(1.0, 0.0))]), Err(EvalError::DivisionByZero));
        assert_eq!(e.eval(&NoVars), Err(EvalError::MissingVar(Var(1))));
    }

    #[test]
    fn restrict_examples() {
        let e = parse("z1*z2").unwrap();
        assert_eq!(e.restrict(Var(2), c(0.0, 0.0)), Expr::Const(c(0.0, 0.0)));

        let e = parse("exp(z1)").unwrap();
        assert_eq!(e.restrict(Var(2), c(5.0, 0.0)), e);

        let e = parse("z3^4/4^2").unwrap();
        let r = e.restrict(Var(3), c(0.5, 0.5));
        let expect = c(0.5, 0.5).powu(4) / 16.0;
        match r {
            Expr::Const(v) => assert!((v - expect).norm() < 1e-15),
            other => panic!("expected constant, got {other}"),
        }
    }

    #[test]
    fn free_vars_and_substitution() {
        let e = parse("exp(z1*z2) + 1/(1 - z3)").unwrap();
        let vars: Vec<u32> = e.free_vars().iter().map(|v| v.0).collect();
        assert_eq!(vars, vec![1, 2, 3]);

        let s = e.substitute_affine(Var(1), c(2.0, 0.0), c(1.0, 0.0));
        let x = c(0.1, 0.2);
        let env = [(Var(1), x), (Var(2), c(0.3, 0.0)), (Var(3), c(0.0, 0.4))];
        let env2 = [(Var(1), x * 2.0 + 1.0), (Var(2), c(0.3, 0.0)), (Var(3), c(0.0, 0.4))];
        assert!((s.eval(&env).unwrap() - e.eval(&env2).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn multiorder_drops_zeros_and_boxes() {
        let m = MultiOrder::from_pairs([(Var(1), 0), (Var(2), 3)]);
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![(Var(2), 3)]);
        assert_eq!(m.total(), 3);
        let b = MultiOrder::boxed(&[Var(1), Var(2)], 2);
        assert_eq!(b.len(), 9);
        assert_eq!(b[0], MultiOrder::new());
        assert_eq!(b[8], MultiOrder::uniform(&[Var(1), Var(2)], 2));
    }

    #[test]
    fn literal_printing_forms() {
        assert_eq!(fmt_const(c(2.0, 0.0)), "2.0");
        assert_eq!(fmt_const(c(0.0, 0.5)), "0.5i");
        assert_eq!(fmt_const(c(-1.0, 0.0)), "(-1.0)");
        assert_eq!(fmt_const(c(1.0, -2.0)), "(1.0-2.0i)");
        assert_eq!(fmt_const(c(-0.0, 3.0)), "(-0.0+3.0i)");
    }
}
