//! Iterated Cauchy-integral derivatives, independent of symbolic
//! differentiation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use super::{EvalError, Expr, MultiOrder, Var};

/// Trapezoid points per circle.
pub const CAUCHY_POINTS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CauchyError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Mixed derivative `d` of `e` at `point` via the trapezoid rule on circles of
/// the given radius, one circle per differentiated variable.
///
/// `e` must be holomorphic on the closed polydisc; the trapezoid rule then
/// converges geometrically.
pub fn numeric_derivative(
    e: &Expr,
    d: &MultiOrder,
    point: &BTreeMap<Var, Complex64>,
    radius: f64,
) -> Result<Complex64, CauchyError> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(CauchyError::NonPositiveRadius(radius));
    }
    let orders: Vec<(Var, u32)> = d.iter().collect();
    let mut env = point.clone();
    nested(e, &orders, &mut env, point, radius)
}

fn nested(
    e: &Expr,
    orders: &[(Var, u32)],
    env: &mut BTreeMap<Var, Complex64>,
    center: &BTreeMap<Var, Complex64>,
    radius: f64,
) -> Result<Complex64, CauchyError> {
    let Some((&(v, k), rest)) = orders.split_first() else {
        return Ok(e.eval(env)?);
    };
    let a = center.get(&v).copied().ok_or(EvalError::MissingVar(v))?;
    let n = CAUCHY_POINTS;
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let theta = 2.0 * PI * j as f64 / n as f64;
        let unit = Complex64::from_polar(1.0, theta);
        env.insert(v, a + radius * unit);
        let fv = nested(e, rest, env, center, radius)?;
        sum += fv * Complex64::from_polar(1.0, -(k as f64) * theta);
    }
    env.insert(v, a);
    let factorial: f64 = (1..=k).map(f64::from).product();
    Ok(sum * factorial / (n as f64 * radius.powi(k as i32)))
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn pt(pairs: &[(u32, Complex64)]) -> BTreeMap<Var, Complex64> {
        pairs.iter().map(|&(i, z)| (Var(i), z)).collect()
    }

    #[test]
    fn examples() {
        let zero = Complex64::new(0.0, 0.0);
        let e = parse("exp(z1)").unwrap();
        let v = numeric_derivative(&e, &MultiOrder::single(Var(1), 1), &pt(&[(1, zero)]), 0.5)
            .unwrap();
        assert!((v - 1.0).norm() < 1e-10);

        let e = parse("z1^3").unwrap();
        let v = numeric_derivative(&e, &MultiOrder::single(Var(1), 3), &pt(&[(1, zero)]), 0.5)
            .unwrap();
        assert!((v - 6.0).norm() < 1e-10);

        let e = parse("sin(z1)").unwrap();
        let p = pt(&[(1, Complex64::new(0.5, 0.0))]);
        let v = numeric_derivative(&e, &MultiOrder::single(Var(1), 1), &p, 0.5).unwrap();
        assert!((v - 0.5f64.cos()).norm() < 1e-8);
    }

    #[test]
    fn rejects_bad_radius() {
        let e = parse("z1").unwrap();
        let p = pt(&[(1, Complex64::new(0.0, 0.0))]);
        assert_eq!(
            numeric_derivative(&e, &MultiOrder::new(), &p, 0.0),
            Err(CauchyError::NonPositiveRadius(0.0))
        );
        assert!(numeric_derivative(&e, &MultiOrder::new(), &p, -1.0).is_err());
    }

    #[test]
    fn order_zero_is_evaluation() {
        let e = parse("z1*z2").unwrap();
        let p = pt(&[(1, Complex64::new(2.0, 0.0)), (2, Complex64::new(0.0, 1.0))]);
        let v = numeric_derivative(&e, &MultiOrder::new(), &p, 1.0).unwrap();
        assert_eq!(v, Complex64::new(0.0, 2.0));
    }
}
