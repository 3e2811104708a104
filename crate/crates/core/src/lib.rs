//! Simultaneous polynomial approximation of separately holomorphic functions
//! on products of planar domains.
//!
//! The crate is organized bottom-up:
//!
//! - [`expr`]: symbolic holomorphic expressions (parse, differentiate, restrict,
//!   evaluate) plus an independent Cauchy-integral derivative oracle.
//! - [`poly`]: sparse multivariate complex polynomials, including
//!   antidifferentiation from the origin.
//! - [`domain`]: planar factor domains, grid hypothesis checks, intrinsic path
//!   bounds and normalization of product domains.
//! - [`backend`]: Taylor and least-squares polynomial fits measured on dense
//!   validation grids.
//! - [`lift`]: the derivative lift, producing one polynomial that approximates
//!   a function together with all mixed derivatives up to a given order.
//! - [`tail`]: reduction of countably-many-variable series to finitely many
//!   variables, and the unbounded directional derivative example.
//! - [`chordal`]: the chordal metric on the Riemann sphere and chordal
//!   polynomial approximation on products of Jordan domains.

pub mod backend;
pub mod chordal;
pub mod domain;
pub mod expr;
pub mod lift;
pub mod mobius;
pub mod poly;
pub mod quad;
pub mod tail;

pub use num_complex::Complex64;

pub use expr::{Expr, MultiOrder, Var};
pub use poly::CPoly;
