//! Polynomial fits of an expression on a product of closures, with errors
//! measured as an empirical sup over a validation grid denser than the fit
//! grid. Errors reported here are empirical, never certified.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{PlanarDomain, ProductDomain};
use crate::expr::{Compiled, EvalError, Expr, Var};
use crate::poly::{eval_tensor, CPoly, PolyError, DEFAULT_DEGREE_CAP};
use crate::poly::{from_dense, mode_product};

/// Environment variable overriding the per-variable degree cap.
pub const DEGREE_CAP_ENV: &str = "MERGLIFT_MAX_DEGREE";

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone)]
pub enum BackendError {
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("expression uses {0}, which is not a factor of the product")]
    UnknownVar(Var),
    #[error("cannot evaluate the function on the closure grid: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("sampled basis is rank deficient in {var} at degree {degree}")]
    RankDeficient { var: Var, degree: u32 },
    #[error("tolerance {target:e} unreachable within degree cap; best empirical error {:e}", best.error)]
    Unreachable { target: f64, best: Box<FitResult> },
}

/// Sampling layout. Per variable, a fit at degree `d` uses
/// `max(2(d+1)+2, fit_boundary / 2^(k−1))` boundary points, where `k` is
/// the number of variables being fitted; the validation axis has
/// `validation_factor` times as many boundary points plus `interior_rings`
/// scaled copies of the fit boundary and one interior point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub fit_boundary: usize,
    pub validation_factor: usize,
    pub interior_rings: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { fit_boundary: 64, validation_factor: 4, interior_rings: 2 }
    }
}

impl GridSpec {
    pub fn fit_count(&self, degree: u32, nvars: usize) -> usize {
        let floor = (self.fit_boundary >> nvars.saturating_sub(1).min(16)).max(8);
        (2 * (degree as usize + 1) + 2).max(floor)
    }

    /// One validation axis for `domain` at fit count `n_fit`.
    pub fn validation_axis(&self, domain: &PlanarDomain, n_fit: usize) -> Vec<Complex64> {
        let factor = self.validation_factor.max(2);
        let mut pts = domain.boundary_points(factor * n_fit);
        let center = domain.interior_point();
        let ring = domain.boundary_points(n_fit);
        for r in 1..=self.interior_rings {
            let rho = r as f64 / (self.interior_rings + 1) as f64;
            pts.extend(
                ring.iter()
                    .map(|b| center + (b - center) * rho)
                    .filter(|z| domain.contains(*z)),
            );
        }
        pts.push(center);
        pts
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackendConfig {
    pub degree_cap: u32,
    pub grid: GridSpec,
    pub use_taylor: bool,
    pub use_lsq: bool,
}

impl Default for BackendConfig {
    /// Honors [`DEGREE_CAP_ENV`].
    fn default() -> Self {
        let degree_cap = std::env::var(DEGREE_CAP_ENV)
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(DEFAULT_DEGREE_CAP);
        BackendConfig { degree_cap, grid: GridSpec::default(), use_taylor: true, use_lsq: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// The expression is a polynomial and was converted exactly.
    Exact,
    Taylor,
    Lsq,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMethod::Exact => "exact",
            FitMethod::Taylor => "taylor",
            FitMethod::Lsq => "lsq",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitAttempt {
    pub method: FitMethod,
    pub degree: u32,
    /// Empirical sup error; infinite when the method could not run.
    pub error: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub poly: CPoly,
    /// Empirical sup error on the validation grid.
    pub error: f64,
    pub degrees: Vec<(Var, u32)>,
    pub method: FitMethod,
    pub history: Vec<FitAttempt>,
    pub validation_points: usize,
}

/// Truncated Taylor expansion at the origin with coefficients from the FFT
/// of samples on the torus `|z_i| = radii[i]`.
pub fn taylor_approx(
    e: &Expr,
    vars: &[Var],
    degrees: &[u32],
    radii: &[f64],
) -> Result<CPoly, BackendError> {
    let compiled = Compiled::new(e, vars)?;
    let counts: Vec<usize> = degrees.iter().map(|&d| taylor_count(d)).collect();
    let axes: Vec<Vec<Complex64>> = counts
        .iter()
        .zip(radii)
        .map(|(&n, &r)| circle(r, n))
        .collect();
    let values = compiled.eval_tensor(&axes)?;
    Ok(taylor_from_samples(values, vars, degrees, radii, &counts))
}

fn taylor_count(degree: u32) -> usize {
    (2 * (degree as usize + 1)).max(16).next_power_of_two()
}

fn circle(radius: f64, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|j| Complex64::from_polar(radius, 2.0 * PI * j as f64 / n as f64))
        .collect()
}

fn taylor_from_samples(
    mut values: Vec<Complex64>,
    vars: &[Var],
    degrees: &[u32],
    radii: &[f64],
    counts: &[usize],
) -> CPoly {
    let mut planner = FftPlanner::<f64>::new();
    let mut dims = counts.to_vec();
    for axis in 0..dims.len() {
        let n = dims[axis];
        let fft = planner.plan_fft_forward(n);
        let before: usize = dims[..axis].iter().product();
        let after: usize = dims[axis + 1..].iter().product();
        let mut buf = vec![ZERO; n];
        for a in 0..before {
            for c in 0..after {
                for (k, slot) in buf.iter_mut().enumerate() {
                    *slot = values[(a * n + k) * after + c];
                }
                fft.process(&mut buf);
                for (k, v) in buf.iter().enumerate() {
                    values[(a * n + k) * after + c] = *v;
                }
            }
        }
        // Keep modes 0..=d, scaled to Taylor coefficients.
        let d = degrees[axis] as usize;
        let mut select = vec![ZERO; (d + 1) * n];
        let mut scale = 1.0 / n as f64;
        for k in 0..=d {
            select[k * n + k] = Complex64::new(scale, 0.0);
            scale /= radii[axis];
        }
        values = mode_product(&values, &dims, axis, &select, d + 1);
        dims[axis] = d + 1;
    }
    from_dense(&values, vars, degrees)
}

/// Per-axis Vandermonde–Arnoldi factors: `q` is `n × (d+1)` column-major with
/// columns of norm `√n`, `h` the `(d+2) × (d+1)` Hessenberg recurrence.
struct Arnoldi {
    n: usize,
    d: usize,
    q: Vec<Vec<Complex64>>,
    h: Vec<Vec<Complex64>>,
}

fn arnoldi(x: &[Complex64], d: usize, var: Var) -> Result<Arnoldi, BackendError> {
    let n = x.len();
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.iter().zip(b).map(|(a, b)| a.conj() * b).sum::<Complex64>() / n as f64
    };
    let scale = x.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut q = vec![vec![Complex64::new(1.0, 0.0); n]];
    let mut h = vec![vec![ZERO; d + 1]; d + 2];
    for k in 0..d {
        let mut v: Vec<Complex64> = x.iter().zip(&q[k]).map(|(x, q)| x * q).collect();
        // Two passes of Gram–Schmidt.
        for _ in 0..2 {
            for j in 0..=k {
                let c = dot(&q[j], &v);
                h[j][k] += c;
                for (vi, qi) in v.iter_mut().zip(&q[j]) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = dot(&v, &v).re.sqrt();
        if !(norm > 1e-13 * scale) {
            return Err(BackendError::RankDeficient { var, degree: d as u32 });
        }
        h[k + 1][k] = Complex64::new(norm, 0.0);
        q.push(v.into_iter().map(|vi| vi / norm).collect());
    }
    Ok(Arnoldi { n, d, q, h })
}

impl Arnoldi {
    /// Row-major `(d+1) × n` projection `Q^* / n`.
    fn projector(&self) -> Vec<Complex64> {
        let mut m = Vec::with_capacity((self.d + 1) * self.n);
        for col in &self.q {
            m.extend(col.iter().map(|c| c.conj() / self.n as f64));
        }
        m
    }

    /// Row-major `(d+1) × (d+1)` map from basis coefficients to monomial
    /// coefficients: column `k` holds the monomial coefficients of `φ_k`.
    fn to_monomial(&self) -> Vec<Complex64> {
        let d = self.d;
        let mut phi: Vec<Vec<Complex64>> = vec![vec![ZERO; d + 1]; d + 1];
        phi[0][0] = Complex64::new(1.0, 0.0);
        for k in 0..d {
            let mut next = vec![ZERO; d + 1];
            for p in 0..d {
                next[p + 1] += phi[k][p];
            }
            for j in 0..=k {
                for p in 0..=d {
                    next[p] -= self.h[j][k] * phi[j][p];
                }
            }
            let hk = self.h[k + 1][k];
            phi[k + 1] = next.into_iter().map(|c| c / hk).collect();
        }
        let mut m = vec![ZERO; (d + 1) * (d + 1)];
        for (k, col) in phi.iter().enumerate() {
            for (p, &c) in col.iter().enumerate() {
                m[p * (d + 1) + k] = c;
            }
        }
        m
    }
}

/// Sampled function values, cached per grid so escalation re-evaluates the
/// expression only when the grid changes.
struct Sampler<'a> {
    compiled: Compiled,
    domains: Vec<&'a PlanarDomain>,
    vars: Vec<Var>,
    grid: GridSpec,
    fit: HashMap<usize, Rc<(Vec<Vec<Complex64>>, Vec<Complex64>)>>,
    validation: HashMap<usize, Rc<(Vec<Vec<Complex64>>, Vec<Complex64>)>>,
    taylor: HashMap<usize, Option<Rc<Vec<Complex64>>>>,
}

impl<'a> Sampler<'a> {
    /// Sets up sampling over the factors of `pd` on which `e` depends.
    fn new(e: &Expr, pd: &'a ProductDomain, grid: &GridSpec) -> Result<Self, BackendError> {
        let free = e.free_vars();
        if let Some(v) = free.iter().find(|v| pd.factor(**v).is_none()) {
            return Err(BackendError::UnknownVar(*v));
        }
        let factors: Vec<_> = pd.factors().iter().filter(|f| free.contains(&f.var)).collect();
        let vars: Vec<Var> = factors.iter().map(|f| f.var).collect();
        Ok(Sampler {
            compiled: Compiled::new(e, &vars)?,
            domains: factors.iter().map(|f| &f.domain).collect(),
            vars,
            grid: grid.clone(),
            fit: HashMap::new(),
            validation: HashMap::new(),
            taylor: HashMap::new(),
        })
    }

    fn fit_count(&self, degree: u32) -> usize {
        self.grid.fit_count(degree, self.vars.len())
    }

    fn fit_samples(&mut self, n: usize) -> Result<Rc<(Vec<Vec<Complex64>>, Vec<Complex64>)>, BackendError> {
        if let Some(s) = self.fit.get(&n) {
            return Ok(s.clone());
        }
        let axes: Vec<Vec<Complex64>> = self.domains.iter().map(|d| d.boundary_points(n)).collect();
        let values = self.compiled.eval_tensor(&axes)?;
        let s = Rc::new((axes, values));
        self.fit.insert(n, s.clone());
        Ok(s)
    }

    fn validation_samples(
        &mut self,
        n_fit: usize,
    ) -> Result<Rc<(Vec<Vec<Complex64>>, Vec<Complex64>)>, BackendError> {
        if let Some(s) = self.validation.get(&n_fit) {
            return Ok(s.clone());
        }
        let axes: Vec<Vec<Complex64>> =
            self.domains.iter().map(|d| self.grid.validation_axis(d, n_fit)).collect();
        let values = self.compiled.eval_tensor(&axes)?;
        let s = Rc::new((axes, values));
        self.validation.insert(n_fit, s.clone());
        Ok(s)
    }

    /// Torus samples, or `None` if the expression cannot be evaluated there
    /// (the torus may leave the domain).
    fn taylor_samples(&mut self, n: usize) -> Option<Rc<Vec<Complex64>>> {
        if let Some(s) = self.taylor.get(&n) {
            return s.clone();
        }
        let axes: Vec<Vec<Complex64>> =
            self.domains.iter().map(|d| circle(d.max_modulus(), n)).collect();
        let s = self
            .compiled
            .eval_tensor(&axes)
            .ok()
            .filter(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
            .map(Rc::new);
        self.taylor.insert(n, s.clone());
        s
    }

    fn measure(&mut self, p: &CPoly, degree: u32) -> Result<(f64, usize), BackendError> {
        let s = self.validation_samples(self.fit_count(degree))?;
        let (axes, values) = (&s.0, &s.1);
        let fitted = eval_tensor(p, &self.vars, axes)?;
        let err = fitted
            .iter()
            .zip(values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, |m: f64, x| if x.is_nan() { f64::INFINITY } else { m.max(x) });
        Ok((err, values.len()))
    }

    fn taylor(&mut self, degree: u32) -> Option<CPoly> {
        let n = taylor_count(degree);
        let values = self.taylor_samples(n)?;
        let k = self.vars.len();
        let radii: Vec<f64> = self.domains.iter().map(|d| d.max_modulus()).collect();
        Some(taylor_from_samples(
            (*values).clone(),
            &self.vars,
            &vec![degree; k],
            &radii,
            &vec![n; k],
        ))
    }

    fn lsq(&mut self, degree: u32) -> Result<CPoly, BackendError> {
        let n = self.fit_count(degree);
        let s = self.fit_samples(n)?;
        let (axes, values) = (&s.0, &s.1);
        let mut dims: Vec<usize> = axes.iter().map(Vec::len).collect();
        let mut t = values.clone();
        let d = degree as usize;
        for (axis, x) in axes.iter().enumerate() {
            let arn = arnoldi(x, d, self.vars[axis])?;
            t = mode_product(&t, &dims, axis, &arn.projector(), d + 1);
            dims[axis] = d + 1;
            t = mode_product(&t, &dims, axis, &arn.to_monomial(), d + 1);
        }
        Ok(from_dense(&t, &self.vars, &vec![degree; self.vars.len()]))
    }
}

fn degrees_for(pd: &ProductDomain, fitted: &[Var], degree: u32) -> Vec<(Var, u32)> {
    pd.vars()
        .into_iter()
        .map(|v| (v, if fitted.contains(&v) { degree } else { 0 }))
        .collect()
}

/// Least-squares fit of uniform per-variable degree on the tensor of factor
/// boundary samples, in a per-axis Arnoldi-orthogonalized basis.
pub fn lsq_approx(
    e: &Expr,
    pd: &ProductDomain,
    degree: u32,
    grid: &GridSpec,
) -> Result<FitResult, BackendError> {
    let mut s = Sampler::new(e, pd, grid)?;
    let poly = s.lsq(degree)?;
    let (error, validation_points) = s.measure(&poly, degree)?;
    Ok(FitResult {
        poly,
        error,
        degrees: degrees_for(pd, &s.vars, degree),
        method: FitMethod::Lsq,
        history: vec![FitAttempt { method: FitMethod::Lsq, degree, error }],
        validation_points,
    })
}

/// Escalates a uniform degree `0, 1, 2, 4, …` up to the cap, trying Taylor
/// then least squares at each degree, until the empirical sup error drops
/// below `eps`; then bisects down to the smallest passing degree.
/// Polynomial expressions are converted exactly without fitting.
pub fn approx_to_tolerance(
    e: &Expr,
    pd: &ProductDomain,
    eps: f64,
    cfg: &BackendConfig,
) -> Result<FitResult, BackendError> {
    if !(eps > 0.0) {
        return Err(BackendError::BadTolerance(eps));
    }
    let e = e.fold();
    if let Some(v) = e.free_vars().into_iter().find(|v| pd.factor(*v).is_none()) {
        return Err(BackendError::UnknownVar(v));
    }
    if let Some(poly) = CPoly::from_expr(&e) {
        poly.check_degree_cap(cfg.degree_cap)?;
        let degrees = pd.vars().into_iter().map(|v| (v, poly.degree(v))).collect();
        return Ok(FitResult {
            poly,
            error: 0.0,
            degrees,
            method: FitMethod::Exact,
            history: vec![FitAttempt { method: FitMethod::Exact, degree: 0, error: 0.0 }],
            validation_points: 0,
        });
    }

    let mut s = Sampler::new(&e, pd, &cfg.grid)?;
    let mut history = Vec::new();
    let mut attempt = |s: &mut Sampler, degree: u32| -> Result<(CPoly, f64, FitMethod, usize), BackendError> {
        let mut best: Option<(CPoly, f64, FitMethod, usize)> = None;
        if cfg.use_taylor {
            let (err, pts, poly) = match s.taylor(degree) {
                Some(p) => {
                    let (err, pts) = s.measure(&p, degree)?;
                    (err, pts, Some(p))
                }
                None => (f64::INFINITY, 0, None),
            };
            history.push(FitAttempt { method: FitMethod::Taylor, degree, error: err });
            if let Some(p) = poly {
                best = Some((p, err, FitMethod::Taylor, pts));
            }
        }
        let taylor_done = best.as_ref().is_some_and(|b| b.1 < eps);
        if cfg.use_lsq && !taylor_done {
            match s.lsq(degree) {
                Ok(p) => {
                    let (err, pts) = s.measure(&p, degree)?;
                    history.push(FitAttempt { method: FitMethod::Lsq, degree, error: err });
                    if best.as_ref().is_none_or(|b| err < b.1) {
                        best = Some((p, err, FitMethod::Lsq, pts));
                    }
                }
                Err(BackendError::RankDeficient { .. }) => {
                    history.push(FitAttempt { method: FitMethod::Lsq, degree, error: f64::INFINITY });
                }
                Err(other) => return Err(other),
            }
        }
        Ok(best.unwrap_or((CPoly::zero(), f64::INFINITY, FitMethod::Lsq, 0)))
    };

    let mut schedule = vec![0u32];
    let mut d = 1;
    while d < cfg.degree_cap {
        schedule.push(d);
        d *= 2;
    }
    schedule.push(cfg.degree_cap);
    schedule.dedup();

    let mut best: Option<(CPoly, f64, FitMethod, usize, u32)> = None;
    let mut trail: Vec<f64> = Vec::new();
    let mut prev_fail: Option<u32> = None;
    let mut found: Option<(CPoly, f64, FitMethod, usize, u32)> = None;
    for &d in &schedule {
        let (p, err, m, pts) = attempt(&mut s, d)?;
        if best.as_ref().is_none_or(|b| err < b.1) {
            best = Some((p.clone(), err, m, pts, d));
        }
        if err < eps {
            found = Some((p, err, m, pts, d));
            break;
        }
        prev_fail = Some(d);
        trail.push(err);
        // No progress over two doublings: the tolerance is below what the
        // fits can resolve.
        let k = trail.len();
        if k >= 3 && d >= 4 && trail[k - 1] >= 0.99 * trail[k - 2] && trail[k - 1] >= 0.99 * trail[k - 3] {
            break;
        }
    }

    let vars = s.vars.clone();
    let Some(mut win) = found else {
        let (poly, error, method, validation_points, d) = best.expect("at least one attempt");
        return Err(BackendError::Unreachable {
            target: eps,
            best: Box::new(FitResult {
                poly,
                error,
                degrees: degrees_for(pd, &vars, d),
                method,
                history,
                validation_points,
            }),
        });
    };
    if let Some(mut lo) = prev_fail {
        let mut hi = win.4;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let (p, err, m, pts) = attempt(&mut s, mid)?;
            if err < eps {
                hi = mid;
                win = (p, err, m, pts, mid);
            } else {
                lo = mid;
            }
        }
    }
    let (poly, error, method, validation_points, d) = win;
    Ok(FitResult { poly, error, degrees: degrees_for(pd, &vars, d), method, history, validation_points })
}

/// Validation axes that [`approx_to_tolerance`] would use for `vars` at
/// `degree`, for callers measuring their own errors.
pub fn validation_axes(pd: &ProductDomain, vars: &[Var], degree: u32, grid: &GridSpec) -> Vec<Vec<Complex64>> {
    let n = grid.fit_count(degree, vars.len());
    vars.iter()
        .map(|v| {
            let f = pd.factor(*v).expect("variable of the product");
            grid.validation_axis(&f.domain, n)
        })
        .collect()
}
