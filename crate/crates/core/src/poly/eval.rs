use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{CPoly, Monomial, PolyError};
use crate::expr::{Env, EvalError, Var};

/// Nested sparse Horner scheme, compiled once and evaluated many times.
#[derive(Clone, Debug)]
pub struct Horner {
    vars: Vec<Var>,
    root: Node,
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(Complex64),
    /// Children keyed by exponent of this level's variable, descending.
    Branch(Vec<(u32, Node)>),
}

impl Horner {
    pub fn new(p: &CPoly) -> Self {
        let vars: Vec<Var> = p.free_vars().into_iter().collect();
        let terms: Vec<(Vec<u32>, Complex64)> = p
            .terms()
            .map(|(m, c)| (vars.iter().map(|&v| m.exponent(v)).collect(), c))
            .collect();
        let root = build(0, vars.len(), terms);
        Horner { vars, root }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<Complex64, PolyError> {
        let values = self
            .vars
            .iter()
            .map(|&v| env.value(v).ok_or(EvalError::MissingVar(v)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.eval_values(&values))
    }

    /// Values in the order of [`Horner::vars`].
    pub fn eval_values(&self, values: &[Complex64]) -> Complex64 {
        eval_node(&self.root, 0, values)
    }
}

fn build(level: usize, nvars: usize, terms: Vec<(Vec<u32>, Complex64)>) -> Node {
    if level == nvars {
        return Node::Leaf(terms.iter().map(|(_, c)| c).sum());
    }
    let mut groups: BTreeMap<u32, Vec<(Vec<u32>, Complex64)>> = BTreeMap::new();
    for t in terms {
        groups.entry(t.0[level]).or_default().push(t);
    }
    Node::Branch(
        groups
            .into_iter()
            .rev()
            .map(|(e, ts)| (e, build(level + 1, nvars, ts)))
            .collect(),
    )
}

fn eval_node(node: &Node, level: usize, values: &[Complex64]) -> Complex64 {
    match node {
        Node::Leaf(c) => *c,
        Node::Branch(children) => {
            let x = values[level];
            let mut acc = Complex64::new(0.0, 0.0);
            let mut prev: Option<u32> = None;
            for (e, child) in children {
                if let Some(p) = prev {
                    acc *= x.powu(p - e);
                }
                acc += eval_node(child, level + 1, values);
                prev = Some(*e);
            }
            acc * x.powu(prev.unwrap_or(0))
        }
    }
}

/// Contracts `axis` of a row-major tensor with a row-major `rows × dims[axis]`
/// matrix, replacing that axis' extent by `rows`.
pub fn mode_product(
    tensor: &[Complex64],
    dims: &[usize],
    axis: usize,
    matrix: &[Complex64],
    rows: usize,
) -> Vec<Complex64> {
    let before: usize = dims[..axis].iter().product();
    let inner = dims[axis];
    let after: usize = dims[axis + 1..].iter().product();
    debug_assert_eq!(matrix.len(), rows * inner);
    let mut out = vec![Complex64::new(0.0, 0.0); before * rows * after];
    for a in 0..before {
        for i in 0..rows {
            let row = &matrix[i * inner..(i + 1) * inner];
            let dst = &mut out[(a * rows + i) * after..(a * rows + i + 1) * after];
            for (d, &m) in row.iter().enumerate() {
                if m.re == 0.0 && m.im == 0.0 {
                    continue;
                }
                let src = &tensor[(a * inner + d) * after..(a * inner + d + 1) * after];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += m * s;
                }
            }
        }
    }
    out
}

/// Dense coefficient tensor of `p` over `vars` with per-axis extents
/// `degrees[i] + 1`.
pub fn dense_coefficients(p: &CPoly, vars: &[Var], degrees: &[u32]) -> Vec<Complex64> {
    let dims: Vec<usize> = degrees.iter().map(|&d| d as usize + 1).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); dims.iter().product()];
    for (m, c) in p.terms() {
        let mut idx = 0;
        for (i, &v) in vars.iter().enumerate() {
            idx = idx * dims[i] + m.exponent(v) as usize;
        }
        out[idx] += c;
    }
    out
}

/// Inverse of [`dense_coefficients`].
pub fn from_dense(coeffs: &[Complex64], vars: &[Var], degrees: &[u32]) -> CPoly {
    let dims: Vec<usize> = degrees.iter().map(|&d| d as usize + 1).collect();
    let mut p = CPoly::zero();
    for (flat, &c) in coeffs.iter().enumerate() {
        let mut rem = flat;
        let mut exps = vec![0u32; vars.len()];
        for i in (0..vars.len()).rev() {
            exps[i] = (rem % dims[i]) as u32;
            rem /= dims[i];
        }
        p.add_term(Monomial::from_pairs(vars.iter().copied().zip(exps)), c);
    }
    p
}

/// Evaluates `p` on the tensor grid `axes[0] × axes[1] × …` (row-major,
/// last axis fastest) by successive mode products.
pub fn eval_tensor(p: &CPoly, vars: &[Var], axes: &[Vec<Complex64>]) -> Result<Vec<Complex64>, PolyError> {
    assert_eq!(vars.len(), axes.len(), "one axis per variable");
    if let Some(v) = p.free_vars().into_iter().find(|v| !vars.contains(v)) {
        return Err(EvalError::MissingVar(v).into());
    }
    let degrees: Vec<u32> = vars.iter().map(|&v| p.degree(v)).collect();
    let mut dims: Vec<usize> = degrees.iter().map(|&d| d as usize + 1).collect();
    let mut t = dense_coefficients(p, vars, &degrees);
    for (axis, points) in axes.iter().enumerate() {
        let d = dims[axis];
        let mut vander = Vec::with_capacity(points.len() * d);
        for &x in points {
            let mut pw = Complex64::new(1.0, 0.0);
            for _ in 0..d {
                vander.push(pw);
                pw *= x;
            }
        }
        t = mode_product(&t, &dims, axis, &vander, points.len());
        dims[axis] = points.len();
    }
    Ok(t)
}
