//! Möbius transformations `w ↦ (a·w + b)/(c·w + d)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Mobius {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Mobius { a, b, c, d }
    }

    pub fn identity() -> Self {
        let (zero, one) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
        Mobius::new(one, zero, zero, one)
    }

    /// `w ↦ scale·w + shift`
    pub fn affine(scale: Complex64, shift: Complex64) -> Self {
        let (zero, one) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
        Mobius::new(scale, shift, zero, one)
    }

    pub fn determinant(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, w: Complex64) -> Complex64 {
        (self.a * w + self.b) / (self.c * w + self.d)
    }

    pub fn inverse(&self) -> Self {
        Mobius::new(self.d, -self.b, -self.c, self.a)
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &Mobius) -> Self {
        Mobius::new(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )
    }

    /// The pole `-d/c`, if any.
    pub fn pole(&self) -> Option<Complex64> {
        (self.c.norm() > 0.0).then(|| -self.d / self.c)
    }

    /// Expression for `self(arg)`.
    pub fn apply_expr(&self, arg: Expr) -> Expr {
        let num = Expr::add(Expr::mul(Expr::Const(self.a), arg.clone()), Expr::Const(self.b));
        if self.c.norm() == 0.0 {
            return Expr::div(num, Expr::Const(self.d));
        }
        let den = Expr::add(Expr::mul(Expr::Const(self.c), arg), Expr::Const(self.d));
        Expr::div(num, den)
    }

    /// Replaces `z_v` by `self(z_v)` in `e`.
    pub fn substitute_into(&self, e: &Expr, v: Var) -> Expr {
        e.substitute(v, &self.apply_expr(Expr::Var(v)))
    }

    /// Circle through the images of three points of the unit circle:
    /// `(center, radius)`. Meaningful only when the pole lies off the circle.
    pub fn image_of_unit_circle(&self) -> (Complex64, f64) {
        let p: Vec<Complex64> = [0.0, 2.0, 4.0]
            .iter()
            .map(|k| self.apply(Complex64::from_polar(1.0, k * std::f64::consts::PI / 3.0)))
            .collect();
        circumcircle(p[0], p[1], p[2])
    }
}

fn circumcircle(a: Complex64, b: Complex64, c: Complex64) -> (Complex64, f64) {
    let d = 2.0 * (a.re * (b.im - c.im) + b.re * (c.im - a.im) + c.re * (a.im - b.im));
    let (na, nb, nc) = (a.norm_sqr(), b.norm_sqr(), c.norm_sqr());
    let ux = (na * (b.im - c.im) + nb * (c.im - a.im) + nc * (a.im - b.im)) / d;
    let uy = (na * (c.re - b.re) + nb * (a.re - c.re) + nc * (b.re - a.re)) / d;
    let center = Complex64::new(ux, uy);
    (center, (a - center).norm())
}
