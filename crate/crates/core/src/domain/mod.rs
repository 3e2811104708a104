//! Planar factor domains and products of them.
//!
//! Every topological or metric statement made here about a domain is made
//! on a lattice of spacing `h` and holds "at resolution h" only.

mod grid;
mod product;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, NoVars, Var};
use crate::mobius::Mobius;

pub use grid::{
    check_hypotheses, check_topology, estimate_path_bound, sampled_diameter, HypothesisReport, PathBound,
    TopologyReport, PATH_SOURCES,
};
pub use product::{Factor, ProductDomain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid domain: {0}")]
    InvalidShape(String),
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("no interior lattice nodes at resolution {resolution}")]
    EmptyGrid { resolution: f64 },
    #[error("interior lattice splits into {components} components at resolution {resolution}")]
    Disconnected { components: usize, resolution: f64 },
    #[error("factor {var} fails the domain hypotheses at resolution {resolution}: {reason}")]
    Hypothesis { var: Var, resolution: f64, reason: String },
    #[error("variable {0} appears twice")]
    DuplicateVar(Var),
    #[error("unknown variable {0}")]
    UnknownVar(Var),
    #[error("domain config line {line}: {message}")]
    Config { line: usize, message: String },
}

/// Axis-aligned box `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Anything with a total membership test and a bounding box can be checked
/// on a lattice.
pub trait Region {
    fn contains(&self, z: Complex64) -> bool;
    fn bounding_box(&self) -> BBox;
}

/// `u = scale·(z − shift)` with `scale > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: Complex64,
}

impl AffineMap {
    pub fn identity() -> Self {
        AffineMap { scale: 1.0, shift: Complex64::new(0.0, 0.0) }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (z - self.shift) * self.scale
    }

    pub fn invert(&self, u: Complex64) -> Complex64 {
        u / self.scale + self.shift
    }

    pub fn inverse(&self) -> AffineMap {
        // z = u/s + t = (1/s)(u − (−s·t))
        AffineMap { scale: 1.0 / self.scale, shift: -self.shift * self.scale }
    }

    /// `self ∘ inner`
    pub fn after(&self, inner: &AffineMap) -> AffineMap {
        // s(s'(z − t') − t) = s·s'(z − (t' + t/s'))
        AffineMap {
            scale: self.scale * inner.scale,
            shift: inner.shift + self.shift / inner.scale,
        }
    }

    pub fn as_mobius(&self) -> Mobius {
        Mobius::affine(Complex64::new(self.scale, 0.0), -self.shift * self.scale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanarDomain {
    Disc { center: Complex64, radius: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Image of the open unit disc under a Möbius map whose pole lies
    /// outside the closed disc.
    MobiusDisc { map: Mobius },
    /// `{x + iy : 0 < x < 1, −5 < y < sin(1/x)}`; not a Jordan domain.
    SineComb,
    /// Not a catalog domain: its closure has a disconnected complement.
    Annulus { center: Complex64, inner: f64, outer: f64 },
    /// `{map(z) : z ∈ base}`.
    Affine { base: Box<PlanarDomain>, map: AffineMap },
}

impl PlanarDomain {
    pub fn disc(center: Complex64, radius: f64) -> Result<Self, DomainError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(DomainError::InvalidShape(format!("disc radius {radius}")));
        }
        Ok(PlanarDomain::Disc { center, radius })
    }

    pub fn unit_disc() -> Self {
        PlanarDomain::Disc { center: Complex64::new(0.0, 0.0), radius: 1.0 }
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, DomainError> {
        if !(x0 < x1 && y0 < y1) {
            return Err(DomainError::InvalidShape(format!("rect {x0} {y0} {x1} {y1}")));
        }
        Ok(PlanarDomain::Rect { x0, y0, x1, y1 })
    }

    pub fn mobius_disc(map: Mobius) -> Result<Self, DomainError> {
        if map.determinant().norm() == 0.0 {
            return Err(DomainError::InvalidShape("degenerate Möbius map".into()));
        }
        if map.c.norm() >= map.d.norm() {
            return Err(DomainError::InvalidShape(
                "Möbius pole must lie outside the closed unit disc (|c| < |d|)".into(),
            ));
        }
        Ok(PlanarDomain::MobiusDisc { map })
    }

    pub fn annulus(center: Complex64, inner: f64, outer: f64) -> Result<Self, DomainError> {
        if !(0.0 < inner && inner < outer) {
            return Err(DomainError::InvalidShape(format!("annulus radii {inner} {outer}")));
        }
        Ok(PlanarDomain::Annulus { center, inner, outer })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        match self {
            PlanarDomain::Disc { center, radius } => (z - center).norm() < *radius,
            PlanarDomain::Rect { x0, y0, x1, y1 } => {
                *x0 < z.re && z.re < *x1 && *y0 < z.im && z.im < *y1
            }
            PlanarDomain::MobiusDisc { map } => map.inverse().apply(z).norm() < 1.0,
            PlanarDomain::SineComb => {
                0.0 < z.re && z.re < 1.0 && -5.0 < z.im && z.im < (1.0 / z.re).sin()
            }
            PlanarDomain::Annulus { center, inner, outer } => {
                let r = (z - center).norm();
                *inner < r && r < *outer
            }
            PlanarDomain::Affine { base, map } => base.contains(map.invert(z)),
        }
    }

    pub fn bounding_box(&self) -> BBox {
        match self {
            PlanarDomain::Disc { center, radius } => BBox {
                x0: center.re - radius,
                y0: center.im - radius,
                x1: center.re + radius,
                y1: center.im + radius,
            },
            PlanarDomain::Rect { x0, y0, x1, y1 } => BBox { x0: *x0, y0: *y0, x1: *x1, y1: *y1 },
            PlanarDomain::MobiusDisc { map } => {
                let (c, r) = map.image_of_unit_circle();
                BBox { x0: c.re - r, y0: c.im - r, x1: c.re + r, y1: c.im + r }
            }
            PlanarDomain::SineComb => BBox { x0: 0.0, y0: -5.0, x1: 1.0, y1: 1.0 },
            PlanarDomain::Annulus { center, outer, .. } => BBox {
                x0: center.re - outer,
                y0: center.im - outer,
                x1: center.re + outer,
                y1: center.im + outer,
            },
            PlanarDomain::Affine { base, map } => {
                let b = base.bounding_box();
                let lo = map.apply(Complex64::new(b.x0, b.y0));
                let hi = map.apply(Complex64::new(b.x1, b.y1));
                BBox { x0: lo.re, y0: lo.im, x1: hi.re, y1: hi.im }
            }
        }
    }

    /// `count` points on the boundary of the closure (for the annulus, on
    /// both circles).
    pub fn boundary_points(&self, count: usize) -> Vec<Complex64> {
        let circle = |c: Complex64, r: f64, n: usize| -> Vec<Complex64> {
            (0..n)
                .map(|k| c + Complex64::from_polar(r, 2.0 * PI * k as f64 / n as f64))
                .collect()
        };
        match self {
            PlanarDomain::Disc { center, radius } => circle(*center, *radius, count),
            PlanarDomain::Rect { x0, y0, x1, y1 } => {
                let (w, h) = (x1 - x0, y1 - y0);
                let perimeter = 2.0 * (w + h);
                (0..count)
                    .map(|k| {
                        let s = perimeter * k as f64 / count as f64;
                        if s < w {
                            Complex64::new(x0 + s, *y0)
                        } else if s < w + h {
                            Complex64::new(*x1, y0 + (s - w))
                        } else if s < 2.0 * w + h {
                            Complex64::new(x1 - (s - w - h), *y1)
                        } else {
                            Complex64::new(*x0, y1 - (s - 2.0 * w - h))
                        }
                    })
                    .collect()
            }
            PlanarDomain::MobiusDisc { map } => circle(Complex64::new(0.0, 0.0), 1.0, count)
                .into_iter()
                .map(|w| map.apply(w))
                .collect(),
            PlanarDomain::SineComb => sine_comb_boundary(count),
            PlanarDomain::Annulus { center, inner, outer } => {
                let n_in = (count / 3).max(1);
                let mut pts = circle(*center, *outer, count.saturating_sub(n_in).max(1));
                pts.extend(circle(*center, *inner, n_in));
                pts
            }
            PlanarDomain::Affine { base, map } => {
                base.boundary_points(count).into_iter().map(|z| map.apply(z)).collect()
            }
        }
    }

    /// A point well inside the domain.
    pub fn interior_point(&self) -> Complex64 {
        match self {
            PlanarDomain::Disc { center, .. } => *center,
            PlanarDomain::Rect { x0, y0, x1, y1 } => Complex64::new(0.5 * (x0 + x1), 0.5 * (y0 + y1)),
            PlanarDomain::MobiusDisc { map } => map.apply(Complex64::new(0.0, 0.0)),
            PlanarDomain::SineComb => Complex64::new(0.5, -2.0),
            PlanarDomain::Annulus { center, inner, outer } => {
                center + Complex64::new(0.5 * (inner + outer), 0.0)
            }
            PlanarDomain::Affine { base, map } => map.apply(base.interior_point()),
        }
    }

    /// Closed-form intrinsic path bound for convex shapes.
    pub fn exact_path_bound(&self) -> Option<f64> {
        match self {
            PlanarDomain::Disc { radius, .. } => Some(2.0 * radius),
            PlanarDomain::Rect { x0, y0, x1, y1 } => Some((x1 - x0).hypot(y1 - y0)),
            PlanarDomain::MobiusDisc { map } => Some(2.0 * map.image_of_unit_circle().1),
            PlanarDomain::Affine { base, map } => base.exact_path_bound().map(|m| m * map.scale),
            PlanarDomain::SineComb | PlanarDomain::Annulus { .. } => None,
        }
    }

    /// Largest `|z|` over the closure (boundary-sampled for shapes without a
    /// closed form).
    pub fn max_modulus(&self) -> f64 {
        match self {
            PlanarDomain::Disc { center, radius } => center.norm() + radius,
            PlanarDomain::MobiusDisc { map } => {
                let (c, r) = map.image_of_unit_circle();
                c.norm() + r
            }
            PlanarDomain::Annulus { center, outer, .. } => center.norm() + outer,
            _ => {
                let b = self.bounding_box();
                let corners = [(b.x0, b.y0), (b.x1, b.y0), (b.x0, b.y1), (b.x1, b.y1)];
                let sampled = self
                    .boundary_points(4096)
                    .into_iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                // The bounding box caps the undershoot of boundary sampling.
                let boxed = corners.iter().map(|&(x, y)| x.hypot(y)).fold(0.0, f64::max);
                sampled.max(boxed.min(sampled * 1.0001))
            }
        }
    }

    /// Image under `map`, in closed form where the shape family allows it.
    pub fn affine_image(&self, map: &AffineMap) -> PlanarDomain {
        match self {
            PlanarDomain::Disc { center, radius } => PlanarDomain::Disc {
                center: map.apply(*center),
                radius: radius * map.scale,
            },
            PlanarDomain::Rect { x0, y0, x1, y1 } => {
                let lo = map.apply(Complex64::new(*x0, *y0));
                let hi = map.apply(Complex64::new(*x1, *y1));
                PlanarDomain::Rect { x0: lo.re, y0: lo.im, x1: hi.re, y1: hi.im }
            }
            PlanarDomain::MobiusDisc { map: m } => {
                PlanarDomain::MobiusDisc { map: map.as_mobius().compose(m) }
            }
            PlanarDomain::Annulus { center, inner, outer } => PlanarDomain::Annulus {
                center: map.apply(*center),
                inner: inner * map.scale,
                outer: outer * map.scale,
            },
            PlanarDomain::SineComb => {
                PlanarDomain::Affine { base: Box::new(PlanarDomain::SineComb), map: *map }
            }
            PlanarDomain::Affine { base, map: inner } => {
                PlanarDomain::Affine { base: base.clone(), map: map.after(inner) }
            }
        }
    }

    /// Conformal map of the closure onto the closed unit disc, available for
    /// discs and Möbius images of the disc. Returned as `φ` with `φ(domain) = 𝔻`.
    pub fn disc_map(&self) -> Option<Mobius> {
        match self {
            PlanarDomain::Disc { center, radius } => {
                Some(Mobius::affine(Complex64::new(1.0 / radius, 0.0), -center / radius))
            }
            PlanarDomain::MobiusDisc { map } => Some(map.inverse()),
            PlanarDomain::Affine { base, map } => {
                base.disc_map().map(|phi| phi.compose(&map.inverse().as_mobius()))
            }
            _ => None,
        }
    }

    /// Uniform random point of the domain by rejection from the bounding box.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let b = self.bounding_box();
        loop {
            let z = Complex64::new(rng.gen_range(b.x0..=b.x1), rng.gen_range(b.y0..=b.y1));
            if self.contains(z) {
                return z;
            }
        }
    }

    pub fn to_config(&self) -> String {
        match self {
            PlanarDomain::Disc { center, radius } => {
                format!("disc {} {} {}", center.re, center.im, radius)
            }
            PlanarDomain::Rect { x0, y0, x1, y1 } => format!("rect {x0} {y0} {x1} {y1}"),
            PlanarDomain::MobiusDisc { map } => format!(
                "mobius {} {} {} {}",
                fmt_complex(map.a),
                fmt_complex(map.b),
                fmt_complex(map.c),
                fmt_complex(map.d)
            ),
            PlanarDomain::SineComb => "sinecomb".into(),
            PlanarDomain::Annulus { center, inner, outer } => {
                format!("annulus {} {} {} {}", center.re, center.im, inner, outer)
            }
            PlanarDomain::Affine { .. } => format!("{self:?}"),
        }
    }
}

impl Region for PlanarDomain {
    fn contains(&self, z: Complex64) -> bool {
        PlanarDomain::contains(self, z)
    }

    fn bounding_box(&self) -> BBox {
        PlanarDomain::bounding_box(self)
    }
}

fn fmt_complex(c: Complex64) -> String {
    let sign = if c.im.is_sign_negative() { '-' } else { '+' };
    format!("({}{}{}i)", c.re, sign, c.im.abs())
}

fn sine_comb_boundary(count: usize) -> Vec<Complex64> {
    // Bottom, right, top curve, left edge, with the oscillating top curve
    // taking half of the samples.
    let count = count.max(8);
    let n_top = count / 2;
    let n_side = (count - n_top) / 3;
    let n_bottom = count - n_top - 2 * n_side;
    let mut pts = Vec::with_capacity(count);
    for k in 0..n_bottom {
        pts.push(Complex64::new(k as f64 / n_bottom as f64, -5.0));
    }
    let top_right = 1f64.sin();
    for k in 0..n_side {
        pts.push(Complex64::new(1.0, -5.0 + (top_right + 5.0) * k as f64 / n_side as f64));
    }
    for k in 0..n_top {
        let x = 1.0 - k as f64 / n_top as f64;
        pts.push(Complex64::new(x, (1.0 / x).sin()));
    }
    for k in 0..n_side {
        pts.push(Complex64::new(0.0, 1.0 - 6.0 * k as f64 / n_side as f64));
    }
    pts
}

fn parse_complex_token(tok: &str) -> Result<Complex64, String> {
    let e = expr::parse(tok).map_err(|e| format!("bad number `{tok}`: {e}"))?;
    e.eval(&NoVars).map_err(|e| format!("bad number `{tok}`: {e}"))
}

fn parse_real_token(tok: &str) -> Result<f64, String> {
    tok.parse::<f64>().map_err(|_| format!("bad number `{tok}`"))
}

/// Parses one factor line: `<var> <shape> <params…>` where `<var>` is `z3` or
/// `3` and `<shape>` is one of `disc cx cy r`, `rect x0 y0 x1 y1`,
/// `mobius a b c d`, `sinecomb`, `annulus cx cy r_in r_out`.
pub fn parse_factor_line(line: &str) -> Result<(Var, PlanarDomain), String> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let (var_tok, rest) = toks.split_first().ok_or("empty line")?;
    let id = var_tok.strip_prefix('z').unwrap_or(var_tok);
    let var = Var(id.parse::<u32>().map_err(|_| format!("bad variable `{var_tok}`"))?);
    let (shape, params) = rest.split_first().ok_or("missing shape")?;
    let want = |n: usize| -> Result<(), String> {
        if params.len() == n {
            Ok(())
        } else {
            Err(format!("`{shape}` takes {n} parameters, got {}", params.len()))
        }
    };
    let reals = || params.iter().map(|t| parse_real_token(t)).collect::<Result<Vec<_>, _>>();
    let domain = match *shape {
        "disc" => {
            want(3)?;
            let p = reals()?;
            PlanarDomain::disc(Complex64::new(p[0], p[1]), p[2])
        }
        "rect" => {
            want(4)?;
            let p = reals()?;
            PlanarDomain::rect(p[0], p[1], p[2], p[3])
        }
        "mobius" => {
            want(4)?;
            let p = params
                .iter()
                .map(|t| parse_complex_token(t))
                .collect::<Result<Vec<_>, _>>()?;
            PlanarDomain::mobius_disc(Mobius::new(p[0], p[1], p[2], p[3]))
        }
        "sinecomb" => {
            want(0)?;
            Ok(PlanarDomain::SineComb)
        }
        "annulus" => {
            want(4)?;
            let p = reals()?;
            PlanarDomain::annulus(Complex64::new(p[0], p[1]), p[2], p[3])
        }
        other => return Err(format!("unknown shape `{other}`")),
    }
    .map_err(|e| e.to_string())?;
    Ok((var, domain))
}

/// Parses a domain config: one factor per line, `#` comments and blank lines
/// ignored.
pub fn parse_domain_config(text: &str) -> Result<Vec<(Var, PlanarDomain)>, DomainError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let factor = parse_factor_line(line)
            .map_err(|message| DomainError::Config { line: i + 1, message })?;
        out.push(factor);
    }
    Ok(out)
}
