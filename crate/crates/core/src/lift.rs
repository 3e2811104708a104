//! The derivative lift: one polynomial approximating a function together
//! with all of its mixed partial derivatives of order at most `n` in each
//! variable.
//!
//! With `g = ∂_1^n⋯∂_m^n f` and `Q ≈ g`, the polynomial is
//!
//! ```text
//! F = T[Q] + Σ_{∅≠S} (−1)^{|S|+1} (∏_{v∈S} P_v) f
//! ```
//!
//! where `T` integrates `n` times from 0 in every variable and
//! `P_v f = Σ_{k<n} z_v^k/k! · (∂_v^k f)|_{z_v=0}`. Each `(∏ P_v) f` is a sum of
//! monomials in `S` times functions of the remaining variables, and those
//! functions are lifted recursively.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::backend::{approx_to_tolerance, BackendConfig, BackendError, FitAttempt, FitMethod, GridSpec};
use crate::domain::{DomainError, HypothesisReport, ProductDomain};
use crate::expr::{Compiled, EvalError, Expr, MultiOrder, NoVars, Var};
use crate::poly::{eval_tensor, CPoly, PolyError};
use crate::quad::gauss_legendre_unit;

/// Gauss–Legendre nodes per variable in [`verify_t_identity`].
pub const QUADRATURE_NODES: usize = 24;

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("invalid lift request: {0}")]
    Request(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("segment from 0 to {point} leaves the factor of {var}")]
    SegmentLeavesDomain { var: Var, point: Complex64 },
}

#[derive(Clone, Debug)]
pub struct LiftRequest {
    pub f: Expr,
    pub domain: ProductDomain,
    pub n: u32,
    pub epsilon: f64,
}

#[derive(Clone, Debug)]
pub struct LiftOptions {
    pub backend: BackendConfig,
    /// Lattice spacing for the hypothesis checks run by normalization.
    pub resolution: f64,
    /// Target size of the per-α report grid; raised when needed so the
    /// report grid stays at least as dense as every fit's validation grid.
    pub report_points: usize,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions { backend: BackendConfig::default(), resolution: 0.01, report_points: 40_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaError {
    pub alpha: MultiOrder,
    /// Empirical sup of `|∂^α P − ∂^α f|` in original coordinates.
    pub error: f64,
}

/// One backend call of the recursion.
#[derive(Clone, Debug, Serialize)]
pub struct LedgerEntry {
    pub path: String,
    pub vars: Vec<Var>,
    pub depth: usize,
    pub allocated: f64,
    pub achieved: f64,
    pub method: FitMethod,
    pub degree: u32,
    pub success: bool,
    /// Degrees tried on the way, for error-vs-degree tables.
    pub history: Vec<FitAttempt>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TreeSummary {
    pub nodes: usize,
    pub max_depth: usize,
    pub fits: usize,
    pub exact_fits: usize,
    pub constant_leaves: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxReport {
    /// The approximant in original coordinates.
    #[serde(skip)]
    pub poly: CPoly,
    /// The approximant in normalized coordinates.
    #[serde(skip)]
    pub normalized_poly: CPoly,
    #[serde(skip)]
    pub normalized_domain: ProductDomain,
    pub n: u32,
    pub epsilon: f64,
    /// Budget used in normalized coordinates, shrunk when a scale factor
    /// exceeds 1 so that derivative errors stay within `epsilon` after
    /// denormalization.
    pub epsilon_normalized: f64,
    pub scales: Vec<(Var, f64)>,
    pub alpha_errors: Vec<AlphaError>,
    pub max_error: f64,
    pub report_points: usize,
    pub report_boundary_per_axis: usize,
    /// Largest per-variable fit boundary count anywhere in the recursion.
    pub max_fit_boundary: usize,
    pub ledger: Vec<LedgerEntry>,
    pub tree: TreeSummary,
    /// Every backend call met its allocation.
    pub budgets_met: bool,
    /// Every reported α-error is below `epsilon`.
    pub within_epsilon: bool,
    pub hypotheses: Vec<HypothesisReport>,
}

impl ApproxReport {
    pub fn success(&self) -> bool {
        self.budgets_met && self.within_epsilon
    }
}

/// `∂_1^n ⋯ ∂_m^n f` over `vars`.
pub fn top_derivative(f: &Expr, vars: &[Var], n: u32) -> Expr {
    f.differentiate(&MultiOrder::uniform(vars, n))
}

/// `n`-fold antiderivative from 0 in each of `vars`.
pub fn t_on_poly(q: &CPoly, vars: &[Var], n: u32) -> CPoly {
    vars.iter().fold(q.clone(), |acc, &v| acc.antiderive_from_zero(v, n))
}

/// The `n` terms `(z_v^k/k!, (∂_v^k f)|_{z_v=0})` for `k < n`.
pub fn taylor_section(f: &Expr, v: Var, n: u32) -> Vec<(CPoly, Expr)> {
    (0..n)
        .map(|k| {
            let d = f.differentiate(&MultiOrder::single(v, k));
            (CPoly::scaled_power(v, k), d.restrict(v, Complex64::new(0.0, 0.0)))
        })
        .collect()
}

/// One term `sign · monomial · coefficient` of `(∏_{v∈S} P_v) f` with
/// `sign = (−1)^{|S|}`, so that `B = f + Σ sign · monomial · coefficient`.
#[derive(Clone, Debug)]
pub struct ExpansionTerm {
    pub subset: Vec<Var>,
    pub orders: MultiOrder,
    pub sign: f64,
    pub monomial: CPoly,
    pub coefficient: Expr,
}

/// All terms over nonempty subsets `S ⊆ vars`, subsets in bitmask order.
pub fn expansion_terms(f: &Expr, vars: &[Var], n: u32) -> Vec<ExpansionTerm> {
    let m = vars.len();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    for mask in 1u64..(1 << m) {
        let subset: Vec<Var> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| vars[i]).collect();
        let sign = if subset.len().is_multiple_of(2) { 1.0 } else { -1.0 };
        for orders in MultiOrder::boxed(&subset, n - 1) {
            let mut coefficient = f.differentiate(&orders);
            for &v in &subset {
                coefficient = coefficient.restrict(v, Complex64::new(0.0, 0.0));
            }
            let monomial = subset
                .iter()
                .fold(CPoly::constant(Complex64::new(1.0, 0.0)), |acc, &v| {
                    &acc * &CPoly::scaled_power(v, orders.get(v))
                });
            out.push(ExpansionTerm { subset: subset.clone(), orders, sign, monomial, coefficient });
        }
    }
    out
}

struct Ctx<'a> {
    cfg: &'a BackendConfig,
    ledger: Vec<LedgerEntry>,
    tree: TreeSummary,
    max_fit_boundary: usize,
}

impl Ctx<'_> {
    fn fit(&mut self, e: &Expr, pd: &ProductDomain, eps: f64, depth: usize, path: String) -> Result<CPoly, LiftError> {
        self.tree.fits += 1;
        let (r, success) = match approx_to_tolerance(e, pd, eps, self.cfg) {
            Ok(r) => (r, true),
            Err(BackendError::Unreachable { best, .. }) => (*best, false),
            Err(other) => return Err(other.into()),
        };
        let degree = r.degrees.iter().map(|d| d.1).max().unwrap_or(0);
        if r.method == FitMethod::Exact {
            self.tree.exact_fits += 1;
        } else {
            self.max_fit_boundary = self.max_fit_boundary.max(self.cfg.grid.fit_count(degree, pd.len()));
        }
        self.ledger.push(LedgerEntry {
            path,
            vars: pd.vars(),
            depth,
            allocated: eps,
            achieved: r.error,
            method: r.method,
            degree,
            success,
            history: r.history,
        });
        Ok(r.poly)
    }

    fn lift(&mut self, f: &Expr, pd: &ProductDomain, n: u32, eps: f64, depth: usize, path: &str) -> Result<CPoly, LiftError> {
        self.tree.nodes += 1;
        self.tree.max_depth = self.tree.max_depth.max(depth);
        let free = f.free_vars();
        let vars: Vec<Var> = pd.vars().into_iter().filter(|v| free.contains(v)).collect();
        if vars.is_empty() {
            self.tree.constant_leaves += 1;
            self.ledger.push(LedgerEntry {
                path: format!("{path}/const"),
                vars: Vec::new(),
                depth,
                allocated: eps,
                achieved: 0.0,
                method: FitMethod::Exact,
                degree: 0,
                success: true,
                history: Vec::new(),
            });
            return Ok(CPoly::constant(f.eval(&NoVars)?));
        }
        // Derivatives in variables f ignores vanish on both sides.
        let sub = pd.sub_product(&vars)?;
        if n == 0 {
            return self.fit(f, &sub, eps, depth, format!("{path}/fit"));
        }
        let g = top_derivative(f, &vars, n);
        let q = self.fit(&g, &sub, eps / 2.0, depth, format!("{path}/Q"))?;
        let mut out = t_on_poly(&q, &vars, n);

        let share = eps / 2.0 / ((1u64 << vars.len()) - 1) as f64;
        let radii: Vec<(Var, f64)> = sub.factors().iter().map(|f| (f.var, f.domain.max_modulus())).collect();
        for term in expansion_terms(f, &vars, n) {
            let rest: Vec<Var> = vars.iter().copied().filter(|v| !term.subset.contains(v)).collect();
            let count = (n as f64).powi(term.subset.len() as i32);
            let budget = share / count / monomial_sup(&term.orders, &radii);
            let label = format!(
                "{path}/S{{{}}}k{}",
                term.subset.iter().map(|v| v.0.to_string()).collect::<Vec<_>>().join(","),
                term.orders
            );
            let child = self.lift(&term.coefficient, &sub.sub_product(&rest)?, n, budget, depth + 1, &label)?;
            // F subtracts B's terms, whose sign is (−1)^{|S|}.
            out = &out - &(&term.monomial * &child).scale(Complex64::new(term.sign, 0.0));
        }
        Ok(out)
    }
}

/// Largest sup over the closure of any derivative of `∏ z_v^{k_v}/k_v!`:
/// `∏_v max_{j≤k_v} ρ_v^j/j!`, equal to 1 once every `ρ_v ≤ 1`.
fn monomial_sup(orders: &MultiOrder, radii: &[(Var, f64)]) -> f64 {
    orders
        .iter()
        .map(|(v, k)| {
            let rho = radii.iter().find(|r| r.0 == v).map_or(1.0, |r| r.1);
            let mut term = 1.0;
            let mut best: f64 = 1.0;
            for j in 1..=k {
                term *= rho / j as f64;
                best = best.max(term);
            }
            best
        })
        .product()
}

/// Runs the lift: normalizes the domain (unless already normalized), lifts
/// in normalized coordinates, maps the result back and reports per-α
/// empirical errors in original coordinates.
pub fn lift(req: &LiftRequest, opts: &LiftOptions) -> Result<ApproxReport, LiftError> {
    if !(req.epsilon > 0.0) {
        return Err(LiftError::Request(format!("epsilon must be positive, got {}", req.epsilon)));
    }
    if let Some(v) = req.f.free_vars().into_iter().find(|v| req.domain.factor(*v).is_none()) {
        return Err(LiftError::Request(format!("{v} is not a factor of the domain")));
    }
    let (pdn, hypotheses) = if req.domain.is_normalized() {
        (req.domain.clone(), Vec::new())
    } else {
        req.domain.normalize(opts.resolution)?
    };
    let scales: Vec<(Var, f64)> = pdn.factors().iter().map(|f| (f.var, f.map.scale)).collect();
    let amplification: f64 = scales.iter().map(|s| s.1.max(1.0).powi(req.n as i32)).product();
    let eps_n = req.epsilon / amplification.max(1.0);

    let f_n = pdn.normalize_expr(&req.f);
    let mut ctx = Ctx { cfg: &opts.backend, ledger: Vec::new(), tree: TreeSummary::default(), max_fit_boundary: 0 };
    let normalized_poly = ctx.lift(&f_n, &pdn, req.n, eps_n, 0, "root")?;
    let poly = pdn.denormalize_poly(&normalized_poly);

    let original = pdn_original(&pdn)?;
    let (alpha_errors, report_points, report_boundary) =
        alpha_errors(&req.f, &poly, &original, req.n, &opts.backend.grid, opts.report_points, ctx.max_fit_boundary)?;
    let max_error = alpha_errors.iter().map(|a| a.error).fold(0.0, f64::max);
    let budgets_met = ctx.ledger.iter().all(|l| l.success);
    Ok(ApproxReport {
        poly,
        normalized_poly,
        normalized_domain: pdn,
        n: req.n,
        epsilon: req.epsilon,
        epsilon_normalized: eps_n,
        scales,
        within_epsilon: max_error < req.epsilon,
        alpha_errors,
        max_error,
        report_points,
        report_boundary_per_axis: report_boundary,
        max_fit_boundary: ctx.max_fit_boundary,
        ledger: ctx.ledger,
        tree: ctx.tree,
        budgets_met,
        hypotheses,
    })
}

fn pdn_original(pdn: &ProductDomain) -> Result<ProductDomain, LiftError> {
    let factors = pdn
        .factors()
        .iter()
        .map(|f| (f.var, pdn.original_domain(f.var).expect("own factor")))
        .collect();
    Ok(ProductDomain::new(factors)?)
}

/// Per-α empirical sup errors on a tensor grid over `pd`, with variables `f`
/// ignores pinned to one interior point.
pub fn alpha_errors(
    f: &Expr,
    p: &CPoly,
    pd: &ProductDomain,
    n: u32,
    grid: &GridSpec,
    target_points: usize,
    min_fit: usize,
) -> Result<(Vec<AlphaError>, usize, usize), LiftError> {
    let vars = pd.vars();
    let free: BTreeSet<Var> = f.free_vars().union(&p.free_vars()).copied().collect();
    let k = vars.iter().filter(|v| free.contains(v)).count().max(1);
    let per_fit = grid.validation_factor.max(2) + grid.interior_rings;
    let per_axis = (target_points as f64).powf(1.0 / k as f64);
    let budget_fit = (((per_axis - 1.0) / per_fit as f64).floor() as usize).clamp(4, 128);
    let mut n_fit = budget_fit.max(min_fit);
    // Keep the report tractable for three or more variables.
    if ((per_fit * n_fit + 1) as f64).powi(k as i32) > 4.0e6 {
        n_fit = budget_fit;
    }
    let axes: Vec<Vec<Complex64>> = pd
        .factors()
        .iter()
        .map(|fac| {
            if free.contains(&fac.var) {
                grid.validation_axis(&fac.domain, n_fit)
            } else {
                vec![fac.domain.interior_point()]
            }
        })
        .collect();
    let points: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::new();
    for alpha in MultiOrder::boxed(&vars, n) {
        let dp = eval_tensor(&p.derive_by(&alpha), &vars, &axes)?;
        let df = Compiled::new(&f.differentiate(&alpha), &vars)?.eval_tensor(&axes)?;
        let error = dp
            .iter()
            .zip(&df)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, |m: f64, x| if x.is_nan() { f64::INFINITY } else { m.max(x) });
        out.push(AlphaError { alpha, error });
    }
    Ok((out, points, grid.validation_factor.max(2) * n_fit))
}

/// Independent check of the expansion: at each sample point compares
/// `T[∂_1^n⋯∂_m^n f]`, computed by tensor Gauss–Legendre quadrature of the
/// repeated-integral kernel `z^n (1−t)^{n−1}/(n−1)!` along segments from 0,
/// with `f − Σ_{∅≠S} (−1)^{|S|+1} (∏_{v∈S} P_v) f`. Returns the largest
/// deviation. Samples are given in the order of `pd.vars()`.
pub fn verify_t_identity(f: &Expr, pd: &ProductDomain, n: u32, samples: &[Vec<Complex64>]) -> Result<f64, LiftError> {
    if n == 0 {
        return Err(LiftError::Request("the identity needs n ≥ 1".into()));
    }
    let vars = pd.vars();
    let m = vars.len();
    let (t, w) = gauss_legendre_unit(QUADRATURE_NODES);
    let fact: f64 = (1..n).map(f64::from).product();
    let kernel: Vec<f64> = t.iter().zip(&w).map(|(t, w)| w * (1.0 - t).powi(n as i32 - 1) / fact).collect();

    let g = Compiled::new(&top_derivative(f, &vars, n), &vars)?;
    let fc = Compiled::new(f, &vars)?;
    let terms: Vec<(ExpansionTerm, Compiled)> = expansion_terms(f, &vars, n)
        .into_iter()
        .map(|term| {
            let c = Compiled::new(&term.coefficient, &vars)?;
            Ok((term, c))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut stack = Vec::new();
    let mut worst: f64 = 0.0;
    for z in samples {
        assert_eq!(z.len(), m, "one coordinate per factor");
        for (fac, &zv) in pd.factors().iter().zip(z) {
            if t.iter().any(|&tj| !fac.domain.contains(zv * tj)) {
                return Err(LiftError::SegmentLeavesDomain { var: fac.var, point: zv });
            }
        }
        let axes: Vec<Vec<Complex64>> = z.iter().map(|&zv| t.iter().map(|&tj| zv * tj).collect()).collect();
        let values = g.eval_tensor(&axes)?;
        let q = t.len();
        let mut quad = Complex64::new(0.0, 0.0);
        for (flat, val) in values.iter().enumerate() {
            let mut weight = Complex64::new(1.0, 0.0);
            let mut rem = flat;
            for i in (0..m).rev() {
                weight *= kernel[rem % q] * z[i].powu(n);
                rem /= q;
            }
            quad += weight * val;
        }

        let env: Vec<(Var, Complex64)> = vars.iter().copied().zip(z.iter().copied()).collect();
        let mut expansion = fc.eval(z, &mut stack)?;
        for (term, c) in &terms {
            expansion += term.sign * term.monomial.eval(&env)? * c.eval(z, &mut stack)?;
        }
        worst = worst.max((quad - expansion).norm());
    }
    Ok(worst)
}
