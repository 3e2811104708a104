//! The chordal metric on the Riemann sphere and polynomial sequences that
//! converge in it on products of discs and Möbius discs.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::backend::{approx_to_tolerance, lsq_approx, taylor_approx, BackendConfig, BackendError, GridSpec};
use crate::domain::{PlanarDomain, ProductDomain};
use crate::expr::{Compiled, EvalError, Expr, Var};
use crate::mobius::Mobius;
use crate::poly::{eval_tensor, CPoly};

/// Above this, `min |P_n|` on the interior counts as escaping to ∞.
pub const INFINITY_THRESHOLD: f64 = 1e3;
/// χ-distance between the last two members below which a sequence counts
/// as Cauchy.
pub const CAUCHY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ChordalError {
    #[error("{var}: {domain} has no closed-form conformal map to the disc")]
    NotJordanCatalog { var: Var, domain: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("fit for step {n} did not reach {target:e} (best {best:e})")]
    Fit { n: u32, target: f64, best: f64 },
    #[error("{0}")]
    Request(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SphereValue {
    Finite(Complex64),
    Infinity,
}

impl SphereValue {
    /// Non-finite numbers map to ∞.
    pub fn from_complex(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            SphereValue::Finite(z)
        } else {
            SphereValue::Infinity
        }
    }
}

impl From<Complex64> for SphereValue {
    fn from(z: Complex64) -> Self {
        SphereValue::from_complex(z)
    }
}

/// `√(1 + |a|²)` without overflow.
fn lift_norm(a: Complex64) -> f64 {
    let s = a.norm_sqr();
    if s.is_finite() { (1.0 + s).sqrt() } else { a.norm() }
}

/// Chordal distance: `|a−b|/√((1+|a|²)(1+|b|²))`, `χ(a,∞) = 1/√(1+|a|²)`.
pub fn chi(a: SphereValue, b: SphereValue) -> f64 {
    match (a, b) {
        (SphereValue::Infinity, SphereValue::Infinity) => 0.0,
        (SphereValue::Finite(a), SphereValue::Infinity) | (SphereValue::Infinity, SphereValue::Finite(a)) => {
            1.0 / lift_norm(a)
        }
        (SphereValue::Finite(a), SphereValue::Finite(b)) => {
            if a.norm() > 1e100 && b.norm() > 1e100 {
                // Same chord seen through z ↦ 1/z.
                return chi(SphereValue::Finite(a.inv()), SphereValue::Finite(b.inv()));
            }
            // Fixed operand order keeps χ(a,b) and χ(b,a) bit-identical.
            let (la, lb) = (lift_norm(a), lift_norm(b));
            let (lo, hi) = if la <= lb { (la, lb) } else { (lb, la) };
            ((a - b).norm() / hi / lo).min(1.0)
        }
    }
}

/// A conformal map of a factor onto the unit disc and its inverse.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformalPair {
    pub forward: Mobius,
    pub inverse: Mobius,
    pub domain: PlanarDomain,
}

impl ConformalPair {
    /// `(max |φ⁻¹(φ(z)) − z|, max ||φ(b)| − 1|)` over `count` closure points
    /// and `count` boundary points.
    pub fn check(&self, count: usize) -> (f64, f64) {
        let boundary = self.domain.boundary_points(count);
        let side = (count as f64).sqrt().ceil() as usize;
        let interior: Vec<Complex64> = (0..count)
            .map(|k| {
                let rho = ((k / side) as f64 + 0.5) / side as f64;
                let theta = 2.0 * std::f64::consts::PI * (k % side) as f64 / side as f64;
                self.inverse.apply(Complex64::from_polar(rho, theta))
            })
            .collect();
        let round = interior
            .iter()
            .chain(&boundary)
            .map(|&z| (self.inverse.apply(self.forward.apply(z)) - z).norm())
            .fold(0.0, f64::max);
        let circle = boundary.iter().map(|&b| (self.forward.apply(b).norm() - 1.0).abs()).fold(0.0, f64::max);
        (round, circle)
    }

    fn is_affine(&self) -> bool {
        self.forward.c == Complex64::new(0.0, 0.0)
    }
}

/// Closed-form map for discs, Möbius discs and their affine images.
pub fn conformal(var: Var, d: &PlanarDomain) -> Result<ConformalPair, ChordalError> {
    let forward = d.disc_map().ok_or_else(|| ChordalError::NotJordanCatalog { var, domain: d.to_config() })?;
    Ok(ConformalPair { forward, inverse: forward.inverse(), domain: d.clone() })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChordalStep {
    pub n: u32,
    /// Dilation radius `1 − 2^{−n}`.
    pub r: f64,
    /// χ target for the fit of the dilated pullback.
    pub target: f64,
    pub degree: u32,
    /// χ-sup of the disc fit against the dilated pullback.
    pub fit_chi: f64,
    /// Sup of `|P_n − Q_n∘φ|` when the composition needed its own fit.
    pub replacement_error: f64,
    /// Empirical `sup χ(P_n, f)` on the closure grid.
    pub chi_error: f64,
    /// Empirical `sup |P_n − f|` over grid points where `f` is finite.
    pub euclidean_error: f64,
    /// Grid points where `f` evaluates to ∞.
    pub poles_on_grid: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChordalSeq {
    #[serde(skip)]
    pub polys: Vec<CPoly>,
    pub steps: Vec<ChordalStep>,
    pub grid_points: usize,
}

impl ChordalSeq {
    pub fn chi_errors(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.chi_error).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].chi_error <= w[0].chi_error)
    }
}

#[derive(Clone, Debug)]
pub struct ChordalOptions {
    pub steps: u32,
    /// χ targets per step; defaults to `2^{−n}/3`.
    pub targets: Option<Vec<f64>>,
    pub backend: BackendConfig,
    /// Boundary samples per factor on the validation grid; each factor also
    /// gets five interior rings of the same size.
    pub boundary: Option<usize>,
}

impl Default for ChordalOptions {
    fn default() -> Self {
        ChordalOptions { steps: 5, targets: None, backend: BackendConfig::default(), boundary: None }
    }
}

const RINGS: [f64; 5] = [0.5, 0.9, 0.99, 0.999, 0.9999];

fn closure_axis(pair: &ConformalPair, boundary: usize) -> Vec<Complex64> {
    let mut axis = pair.domain.boundary_points(boundary);
    for rho in RINGS {
        for k in 0..boundary {
            let w = Complex64::from_polar(rho, 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / boundary as f64);
            axis.push(pair.inverse.apply(w));
        }
    }
    axis.push(pair.inverse.apply(Complex64::new(0.0, 0.0)));
    axis
}

fn sphere_values(c: &Compiled, axes: &[Vec<Complex64>]) -> Vec<SphereValue> {
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut stack = Vec::new();
    let mut point = vec![Complex64::new(0.0, 0.0); axes.len()];
    for flat in 0..total {
        let mut rem = flat;
        for i in (0..axes.len()).rev() {
            point[i] = axes[i][rem % axes[i].len()];
            rem /= axes[i].len();
        }
        out.push(match c.eval(&point, &mut stack) {
            Ok(z) => SphereValue::from_complex(z),
            Err(EvalError::DivisionByZero) => SphereValue::Infinity,
            Err(e) => panic!("compiled against its own variables: {e}"),
        });
    }
    out
}

fn chi_sup(p: &[Complex64], f: &[SphereValue]) -> f64 {
    p.iter().zip(f).map(|(&a, &b)| chi(SphereValue::from_complex(a), b)).fold(0.0, f64::max)
}

/// Builds `P_n` for `n = 1..=steps`: fits the dilated pullback
/// `g_r(w) = f(φ⁻¹(r·w))`, `r = 1 − 2^{−n}`, on the closed unit polydisc,
/// escalating the degree until its χ-sup error is below the step target,
/// then composes with `φ` (exactly for affine maps, by a fit otherwise) and
/// measures `sup χ(P_n, f)` on a closure grid with near-boundary rings.
pub fn chordal_approx(f: &Expr, pd: &ProductDomain, opts: &ChordalOptions) -> Result<ChordalSeq, ChordalError> {
    let vars = pd.vars();
    if let Some(v) = f.free_vars().into_iter().find(|v| !vars.contains(v)) {
        return Err(ChordalError::Request(format!("{v} is not a factor of the domain")));
    }
    let pairs: Vec<ConformalPair> = pd
        .factors()
        .iter()
        .map(|fac| conformal(fac.var, &fac.domain))
        .collect::<Result<_, _>>()?;
    let m = vars.len().max(1);
    let boundary = opts.boundary.unwrap_or(match m {
        1 => 4096,
        2 => 96,
        _ => 16,
    });
    let axes: Vec<Vec<Complex64>> = pairs.iter().map(|p| closure_axis(p, boundary)).collect();
    let f_values = sphere_values(&Compiled::new(f, &vars)?, &axes);
    let poles = f_values.iter().filter(|v| **v == SphereValue::Infinity).count();

    let disc = ProductDomain::new(vars.iter().map(|&v| (v, PlanarDomain::unit_disc())).collect()).expect("distinct");
    let disc_pairs: Vec<ConformalPair> = vars.iter().map(|&v| conformal(v, &PlanarDomain::unit_disc())).collect::<Result<_, _>>()?;
    let disc_boundary = match m {
        1 => 1024,
        2 => 64,
        _ => 12,
    };
    let disc_axes: Vec<Vec<Complex64>> = disc_pairs.iter().map(|p| closure_axis(p, disc_boundary)).collect();

    let mut seq = ChordalSeq { polys: Vec::new(), steps: Vec::new(), grid_points: f_values.len() };
    for n in 1..=opts.steps {
        let r = 1.0 - 0.5f64.powi(n as i32);
        let target = match &opts.targets {
            Some(t) => *t.get(n as usize - 1).ok_or_else(|| ChordalError::Request(format!("no target for step {n}")))?,
            None => 0.5f64.powi(n as i32) / 3.0,
        };
        let mut pullback = f.clone();
        for (pair, &v) in pairs.iter().zip(&vars) {
            let dilated = pair.inverse.compose(&Mobius::affine(Complex64::new(r, 0.0), Complex64::new(0.0, 0.0)));
            pullback = dilated.substitute_into(&pullback, v);
        }
        let g_values = sphere_values(&Compiled::new(&pullback, &vars)?, &disc_axes);
        let (q, degree, fit_chi) = fit_in_chi(&pullback, &vars, &disc, &disc_axes, &g_values, target, &opts.backend, n)?;

        let (p, replacement_error) = if pairs.iter().all(ConformalPair::is_affine) {
            let mut p = q.clone();
            for (pair, &v) in pairs.iter().zip(&vars) {
                let d = pair.forward.d;
                p = p.affine_substitute(v, pair.forward.a / d, pair.forward.b / d);
            }
            (p, 0.0)
        } else {
            let mut composed = q.to_expr();
            for (pair, &v) in pairs.iter().zip(&vars) {
                composed = pair.forward.substitute_into(&composed, v);
            }
            match approx_to_tolerance(&composed, pd, target, &opts.backend) {
                Ok(fit) => (fit.poly, fit.error),
                Err(BackendError::Unreachable { best, .. }) => {
                    return Err(ChordalError::Fit { n, target, best: best.error })
                }
                Err(e) => return Err(e.into()),
            }
        };

        let p_values = eval_tensor(&p, &vars, &axes).map_err(|e| ChordalError::Request(e.to_string()))?;
        let chi_error = chi_sup(&p_values, &f_values);
        let euclidean_error = p_values
            .iter()
            .zip(&f_values)
            .filter_map(|(a, b)| match b {
                SphereValue::Finite(b) => Some((a - b).norm()),
                SphereValue::Infinity => None,
            })
            .fold(0.0, f64::max);
        seq.steps.push(ChordalStep { n, r, target, degree, fit_chi, replacement_error, chi_error, euclidean_error, poles_on_grid: poles });
        seq.polys.push(p);
    }
    Ok(seq)
}

/// Degree escalation `0, 1, 2, 4, …, cap` with Taylor then least squares,
/// measuring χ-sup against `g` on the closed polydisc.
#[allow(clippy::too_many_arguments)]
fn fit_in_chi(
    g: &Expr,
    vars: &[Var],
    disc: &ProductDomain,
    axes: &[Vec<Complex64>],
    g_values: &[SphereValue],
    target: f64,
    cfg: &BackendConfig,
    n: u32,
) -> Result<(CPoly, u32, f64), ChordalError> {
    let mut degrees = vec![0u32];
    let mut d = 1;
    while d < cfg.degree_cap {
        degrees.push(d);
        d *= 2;
    }
    degrees.push(cfg.degree_cap);
    let mut best: Option<(CPoly, u32, f64)> = None;
    for &d in &degrees {
        let mut candidates = Vec::new();
        if cfg.use_taylor {
            candidates.push(taylor_approx(g, vars, &vec![d; vars.len()], &vec![1.0; vars.len()])?);
        }
        if cfg.use_lsq {
            match lsq_approx(g, disc, d, &GridSpec::default()) {
                Ok(fit) => candidates.push(fit.poly),
                Err(BackendError::RankDeficient { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        for q in candidates {
            let values = eval_tensor(&q, vars, axes).map_err(|e| ChordalError::Request(e.to_string()))?;
            let err = chi_sup(&values, g_values);
            if best.as_ref().is_none_or(|b| err < b.2) {
                best = Some((q, d, err));
            }
            if err <= target {
                return Ok(best.expect("just set"));
            }
        }
    }
    let best = best.map_or(f64::INFINITY, |b| b.2);
    Err(ChordalError::Fit { n, target, best })
}

/// `P_n ≡ n` for `n = 1..=count`, the polynomial sequence tending to the
/// constant ∞; its χ-error is `χ(n, ∞) = 1/√(1+n²)`.
pub fn constant_infinity_sequence(count: u32) -> ChordalSeq {
    let steps = (1..=count)
        .map(|n| ChordalStep {
            n,
            r: 1.0,
            target: 0.0,
            degree: 0,
            fit_chi: 0.0,
            replacement_error: 0.0,
            chi_error: chi(SphereValue::Finite(Complex64::new(f64::from(n), 0.0)), SphereValue::Infinity),
            euclidean_error: f64::INFINITY,
            poles_on_grid: 0,
        })
        .collect();
    ChordalSeq {
        polys: (1..=count).map(|n| CPoly::constant(Complex64::new(f64::from(n), 0.0))).collect(),
        steps,
        grid_points: 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LimitType {
    Finite,
    Infinity,
    Undetermined,
}

/// Reads the tail of a sequence on interior grid points: escaping minimum
/// modulus means ∞, χ-Cauchy with finite values means a finite limit.
pub fn classify_limit(seq: &[CPoly], pd: &ProductDomain, boundary: usize) -> Result<LimitType, ChordalError> {
    if seq.len() < 2 {
        return Err(ChordalError::Request("need at least two members".into()));
    }
    let vars = pd.vars();
    let axes: Vec<Vec<Complex64>> = pd
        .factors()
        .iter()
        .map(|fac| {
            let center = fac.domain.interior_point();
            let mut axis = vec![center];
            for b in fac.domain.boundary_points(boundary) {
                for rho in [0.3, 0.6, 0.9] {
                    let z = center + (b - center) * rho;
                    if fac.domain.contains(z) {
                        axis.push(z);
                    }
                }
            }
            axis
        })
        .collect();
    let values: Vec<Vec<Complex64>> = seq
        .iter()
        .map(|p| eval_tensor(p, &vars, &axes).map_err(|e| ChordalError::Request(e.to_string())))
        .collect::<Result<_, _>>()?;
    let minima: Vec<f64> = values.iter().map(|v| v.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)).collect();
    let last = minima.len() - 1;
    // Monotone escape past the threshold from some index on.
    let start = (0..=last).rev().take_while(|&i| i == last || minima[i] <= minima[i + 1]).last().unwrap_or(last);
    if minima[last] > INFINITY_THRESHOLD && start < last {
        return Ok(LimitType::Infinity);
    }
    let gap = chi_sup(&values[last], &values[last - 1].iter().map(|&z| SphereValue::from_complex(z)).collect::<Vec<_>>());
    let finite = values[last].iter().all(|z| z.norm() < INFINITY_THRESHOLD);
    if gap < CAUCHY_TOLERANCE && finite {
        Ok(LimitType::Finite)
    } else {
        Ok(LimitType::Undetermined)
    }
}
