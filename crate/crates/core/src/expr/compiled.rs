//! Postfix form of an expression for repeated evaluation over point grids.

use num_complex::Complex64;

use super::{EvalError, Expr, Var};

#[derive(Clone, Debug)]
enum Op {
    Const(Complex64),
    Load(usize),
    Add,
    Neg,
    Mul,
    Div,
    Pow(u32),
    Exp,
    Sin,
    Cos,
}

/// An expression compiled against a fixed variable order. Evaluation gives
/// bit-identical results to [`Expr::eval`].
#[derive(Clone, Debug)]
pub struct Compiled {
    vars: Vec<Var>,
    code: Vec<Op>,
}

impl Compiled {
    /// Fails with `MissingVar` if `e` mentions a variable outside `vars`.
    pub fn new(e: &Expr, vars: &[Var]) -> Result<Self, EvalError> {
        let mut code = Vec::new();
        emit(e, vars, &mut code)?;
        Ok(Compiled { vars: vars.to_vec(), code })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// `values` in the order of [`Compiled::vars`].
    pub fn eval(&self, values: &[Complex64], stack: &mut Vec<Complex64>) -> Result<Complex64, EvalError> {
        stack.clear();
        for op in &self.code {
            match op {
                Op::Const(c) => stack.push(*c),
                Op::Load(i) => stack.push(values[*i]),
                Op::Add => {
                    let b = stack.pop().expect("operand");
                    let a = stack.last_mut().expect("operand");
                    *a += b;
                }
                Op::Mul => {
                    let b = stack.pop().expect("operand");
                    let a = stack.last_mut().expect("operand");
                    *a *= b;
                }
                Op::Div => {
                    let b = stack.pop().expect("operand");
                    if b == Complex64::new(0.0, 0.0) {
                        return Err(EvalError::DivisionByZero);
                    }
                    let a = stack.last_mut().expect("operand");
                    *a /= b;
                }
                Op::Neg => {
                    let a = stack.last_mut().expect("operand");
                    *a = -*a;
                }
                Op::Pow(k) => {
                    let a = stack.last_mut().expect("operand");
                    *a = a.powu(*k);
                }
                Op::Exp => {
                    let a = stack.last_mut().expect("operand");
                    *a = a.exp();
                }
                Op::Sin => {
                    let a = stack.last_mut().expect("operand");
                    *a = a.sin();
                }
                Op::Cos => {
                    let a = stack.last_mut().expect("operand");
                    *a = a.cos();
                }
            }
        }
        Ok(stack.pop().expect("result"))
    }

    /// Values on the tensor grid `axes[0] × axes[1] × …`, row-major with the
    /// last axis fastest.
    pub fn eval_tensor(&self, axes: &[Vec<Complex64>]) -> Result<Vec<Complex64>, EvalError> {
        assert_eq!(axes.len(), self.vars.len(), "one axis per variable");
        let total: usize = axes.iter().map(Vec::len).product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        let mut point: Vec<Complex64> = axes.iter().map(|a| a[0]).collect();
        let mut stack = Vec::new();
        for _ in 0..total {
            out.push(self.eval(&point, &mut stack)?);
            // Odometer increment, last axis fastest.
            for a in (0..axes.len()).rev() {
                idx[a] += 1;
                if idx[a] < axes[a].len() {
                    point[a] = axes[a][idx[a]];
                    break;
                }
                idx[a] = 0;
                point[a] = axes[a][0];
            }
        }
        Ok(out)
    }
}

fn emit(e: &Expr, vars: &[Var], code: &mut Vec<Op>) -> Result<(), EvalError> {
    match e {
        Expr::Const(c) => code.push(Op::Const(*c)),
        Expr::Var(v) => {
            let i = vars.iter().position(|w| w == v).ok_or(EvalError::MissingVar(*v))?;
            code.push(Op::Load(i));
        }
        Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            emit(a, vars, code)?;
            emit(b, vars, code)?;
            code.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Mul(..) => Op::Mul,
                _ => Op::Div,
            });
        }
        Expr::Neg(a) => {
            emit(a, vars, code)?;
            code.push(Op::Neg);
        }
        Expr::Pow(a, k) => {
            emit(a, vars, code)?;
            code.push(Op::Pow(*k));
        }
        Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => {
            emit(a, vars, code)?;
            code.push(match e {
                Expr::Exp(_) => Op::Exp,
                Expr::Sin(_) => Op::Sin,
                _ => Op::Cos,
            });
        }
    }
    Ok(())
}
