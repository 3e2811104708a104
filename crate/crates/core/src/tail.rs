//! Functions of countably many variables given as series `Σ_n t_n(z_n)`,
//! their reduction to finitely many variables, and the directional
//! derivative family that grows without bound.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{parse, EvalError, Expr, ParseError, Var};

#[derive(Debug, Error)]
pub enum TailError {
    #[error("term {index}: {source}")]
    Template { index: u32, source: ParseError },
    #[error("term {index} depends on {var}")]
    ForeignVar { index: u32, var: Var },
    #[error("bound b_{index} = {value} is not a finite non-negative number")]
    BadBound { index: u32, value: f64 },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("unknown bound rule {0:?}")]
    UnknownRule(String),
    #[error("bound sequence has {bounds} entries for {terms} terms")]
    Length { terms: usize, bounds: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Closed-form bound sequences `b_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "rule")]
pub enum BoundRule {
    /// `scale / n^p`
    PSeries { scale: f64, p: f64 },
    /// `scale · ratio^n`
    Geometric { scale: f64, ratio: f64 },
}

impl BoundRule {
    pub fn bound(&self, n: u32) -> f64 {
        match *self {
            BoundRule::PSeries { scale, p } => scale / f64::from(n).powf(p),
            BoundRule::Geometric { scale, ratio } => scale * ratio.powi(n as i32),
        }
    }

    /// Parses `pseries SCALE P` or `geometric SCALE RATIO`.
    pub fn parse(text: &str) -> Result<Self, TailError> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| TailError::UnknownRule(text.to_string()));
        match words.as_slice() {
            ["pseries", a, b] => Ok(BoundRule::PSeries { scale: num(a)?, p: num(b)? }),
            ["geometric", a, b] => Ok(BoundRule::Geometric { scale: num(a)?, ratio: num(b)? }),
            _ => Err(TailError::UnknownRule(text.to_string())),
        }
    }
}

/// `f(z) = Σ_{n=1}^{N} t_n(z_n)` with `sup |t_n| ≤ b_n` on the closure.
#[derive(Clone, Debug)]
pub struct SeriesFunction {
    terms: Vec<Expr>,
    bounds: Vec<f64>,
}

impl SeriesFunction {
    /// Term `n` must depend on `z_n` alone (or be constant).
    pub fn new(terms: Vec<Expr>, bounds: Vec<f64>) -> Result<Self, TailError> {
        if terms.len() != bounds.len() {
            return Err(TailError::Length { terms: terms.len(), bounds: bounds.len() });
        }
        for (i, (t, &b)) in terms.iter().zip(&bounds).enumerate() {
            let index = i as u32 + 1;
            if let Some(&var) = t.free_vars().iter().find(|v| v.0 != index) {
                return Err(TailError::ForeignVar { index, var });
            }
            if !(b >= 0.0 && b.is_finite()) {
                return Err(TailError::BadBound { index, value: b });
            }
        }
        Ok(SeriesFunction { terms, bounds })
    }

    /// Instantiates `template` for `n = 1..=horizon`: `z_n` becomes the
    /// variable of index `n` and a standalone `n` becomes the integer.
    pub fn from_template(template: &str, rule: BoundRule, horizon: u32) -> Result<Self, TailError> {
        let var_re = Regex::new(r"z_n\b").expect("static regex");
        let n_re = Regex::new(r"\bn\b").expect("static regex");
        let mut terms = Vec::with_capacity(horizon as usize);
        for n in 1..=horizon {
            let text = var_re.replace_all(template, format!("z{n}").as_str());
            let text = n_re.replace_all(&text, n.to_string().as_str());
            terms.push(parse(&text).map_err(|source| TailError::Template { index: n, source })?);
        }
        let bounds = (1..=horizon).map(|n| rule.bound(n)).collect();
        Self::new(terms, bounds)
    }

    pub fn horizon(&self) -> u32 {
        self.terms.len() as u32
    }

    pub fn term(&self, n: u32) -> &Expr {
        &self.terms[n as usize - 1]
    }

    pub fn bound(&self, n: u32) -> f64 {
        self.bounds[n as usize - 1]
    }

    /// `Σ_{n∉F} 2·b_n`, the certified bound on `|f(z) − f(w(F,ζ,z))|`.
    pub fn tail_bound(&self, support: &BTreeSet<Var>) -> f64 {
        (1..=self.horizon())
            .filter(|n| !support.contains(&Var(*n)))
            .map(|n| 2.0 * self.bound(n))
            .sum()
    }

    /// The series as one expression in all its variables.
    pub fn to_expr(&self) -> Expr {
        self.terms
            .iter()
            .cloned()
            .reduce(Expr::add)
            .unwrap_or(Expr::real(0.0))
    }

    /// `z` holds `z_1, …, z_N`.
    pub fn eval(&self, z: &[Complex64]) -> Result<Complex64, TailError> {
        let mut sum = Complex64::new(0.0, 0.0);
        for (i, t) in self.terms.iter().enumerate() {
            sum += t.eval(&[(Var(i as u32 + 1), z[i])])?;
        }
        Ok(sum)
    }
}

/// Default coordinates `ζ`; unlisted variables sit at 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Anchor(pub BTreeMap<Var, Complex64>);

impl Anchor {
    pub fn get(&self, v: Var) -> Complex64 {
        self.0.get(&v).copied().unwrap_or_default()
    }

    /// `w(F, ζ, z)`: `z` on the support, `ζ` elsewhere.
    pub fn hybrid(&self, support: &BTreeSet<Var>, z: &[Complex64]) -> Vec<Complex64> {
        z.iter()
            .enumerate()
            .map(|(i, &zi)| {
                let v = Var(i as u32 + 1);
                if support.contains(&v) { zi } else { self.get(v) }
            })
            .collect()
    }
}

/// Smallest `k` with `Σ_{k<n≤N} 2·b_n < ε/2`; the support is the indices
/// up to `k` whose bound is nonzero.
pub fn select_finite_support(f: &SeriesFunction, eps: f64) -> Result<BTreeSet<Var>, TailError> {
    if !(eps > 0.0) {
        return Err(TailError::BadEpsilon(eps));
    }
    let mut tail = 0.0;
    let mut k = f.horizon();
    // Walk down from the horizon while the tail stays certified.
    while k > 0 {
        let next = tail + 2.0 * f.bound(k);
        if next >= eps / 2.0 {
            break;
        }
        tail = next;
        k -= 1;
    }
    Ok((1..=k).filter(|&n| f.bound(n) > 0.0).map(Var).collect())
}

/// Terms outside `support` are evaluated at the anchor and folded into one
/// constant.
pub fn restrict_to_finite(f: &SeriesFunction, support: &BTreeSet<Var>, anchor: &Anchor) -> Result<Expr, TailError> {
    let mut constant = Complex64::new(0.0, 0.0);
    let mut kept: Vec<Expr> = Vec::new();
    for n in 1..=f.horizon() {
        let v = Var(n);
        if support.contains(&v) {
            kept.push(f.term(n).clone());
        } else {
            constant += f.term(n).eval(&[(v, anchor.get(v))])?;
        }
    }
    if constant != Complex64::new(0.0, 0.0) || kept.is_empty() {
        kept.push(Expr::Const(constant));
    }
    Ok(kept.into_iter().reduce(Expr::add).expect("nonempty").fold())
}

/// `Σ_{n=1}^{m} (1 − 1/m)^{n−1}/n`: the directional derivative along
/// `(1, 1, …)` of `Σ_n z_n^n/n²` at the point with every coordinate `1 − 1/m`.
pub fn counterexample_directional(m: u32) -> f64 {
    assert!(m >= 1, "m must be positive");
    let x = 1.0 - 1.0 / f64::from(m);
    let mut power = 1.0;
    let mut sum = 0.0;
    for n in 1..=m {
        sum += power / f64::from(n);
        power *= x;
    }
    sum
}
