use num_complex::Complex64;
use serde::Serialize;

use super::{check_hypotheses, AffineMap, DomainError, HypothesisReport, PlanarDomain};
use crate::expr::{Expr, Var};
use crate::poly::CPoly;

/// One factor of a product. `domain` is expressed in the current coordinates
/// `u = map(z)`, where `z` are the caller's original coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Factor {
    pub var: Var,
    pub domain: PlanarDomain,
    pub map: AffineMap,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductDomain {
    factors: Vec<Factor>,
    normalized: bool,
}

impl ProductDomain {
    pub fn new(factors: Vec<(Var, PlanarDomain)>) -> Result<Self, DomainError> {
        let mut seen = std::collections::BTreeSet::new();
        for (v, _) in &factors {
            if !seen.insert(*v) {
                return Err(DomainError::DuplicateVar(*v));
            }
        }
        Ok(ProductDomain {
            factors: factors
                .into_iter()
                .map(|(var, domain)| Factor { var, domain, map: AffineMap::identity() })
                .collect(),
            normalized: false,
        })
    }

    /// `m` copies of the same shape on `z1 … zm`.
    pub fn power(domain: PlanarDomain, m: u32) -> Self {
        Self::new((1..=m).map(|i| (Var(i), domain.clone())).collect()).expect("distinct vars")
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn vars(&self) -> Vec<Var> {
        self.factors.iter().map(|f| f.var).collect()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factor(&self, v: Var) -> Option<&Factor> {
        self.factors.iter().find(|f| f.var == v)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Marks the product as normalized without checking; for callers that
    /// build already-normalized factors directly.
    pub fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    /// The sub-product on `vars` (in this product's order), keeping maps.
    pub fn sub_product(&self, vars: &[Var]) -> Result<Self, DomainError> {
        if let Some(v) = vars.iter().find(|v| self.factor(**v).is_none()) {
            return Err(DomainError::UnknownVar(*v));
        }
        Ok(ProductDomain {
            factors: self.factors.iter().filter(|f| vars.contains(&f.var)).cloned().collect(),
            normalized: self.normalized,
        })
    }

    /// Checks every factor at resolution `h` and rescales it by
    /// `s = 1/(2·max(M, diameter))` about an interior point.
    pub fn normalize(&self, h: f64) -> Result<(ProductDomain, Vec<HypothesisReport>), DomainError> {
        let mut factors = Vec::with_capacity(self.factors.len());
        let mut reports = Vec::with_capacity(self.factors.len());
        for f in &self.factors {
            let report = check_hypotheses(&f.domain, h)?;
            if let Some(reason) = report.failure() {
                return Err(DomainError::Hypothesis { var: f.var, resolution: h, reason });
            }
            let m = report.path_bound.expect("passing report has a bound");
            let s = 1.0 / (2.0 * m.max(report.diameter));
            let step = AffineMap { scale: s, shift: f.domain.interior_point() };
            factors.push(Factor {
                var: f.var,
                domain: f.domain.affine_image(&step),
                map: step.after(&f.map),
            });
            reports.push(report);
        }
        Ok((ProductDomain { factors, normalized: true }, reports))
    }

    /// Pulls a polynomial in current coordinates back to original ones.
    pub fn denormalize_poly(&self, p: &CPoly) -> CPoly {
        let mut out = p.clone();
        for f in &self.factors {
            let (s, t) = (f.map.scale, f.map.shift);
            out = out.affine_substitute(f.var, Complex64::new(s, 0.0), -t * s);
        }
        out
    }

    /// Rewrites an expression in original coordinates into current ones:
    /// `e(z)` becomes `e(u/s + t)`.
    pub fn normalize_expr(&self, e: &Expr) -> Expr {
        let mut out = e.clone();
        for f in &self.factors {
            if f.map == AffineMap::identity() {
                continue;
            }
            out = out.substitute_affine(f.var, Complex64::new(1.0 / f.map.scale, 0.0), f.map.shift);
        }
        out
    }

    /// Scale factor `s_v` of the map to current coordinates.
    pub fn scale(&self, v: Var) -> Option<f64> {
        self.factor(v).map(|f| f.map.scale)
    }

    /// Factor domains in original coordinates.
    pub fn original_domain(&self, v: Var) -> Option<PlanarDomain> {
        self.factor(v).map(|f| f.domain.affine_image(&f.map.inverse()))
    }
}
