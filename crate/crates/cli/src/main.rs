//! `merglift`: batch runs of domain checks, derivative lifts, chordal
//! sequences and the directional-derivative table.
//!
//! Exit codes: 0 success, 2 budget failure, 3 config error, 4 hypothesis
//! failure, 1 anything else.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use merglift::backend::BackendConfig;
use merglift::chordal::{chordal_approx, constant_infinity_sequence, ChordalError, ChordalOptions, ChordalSeq};
use merglift::domain::{check_hypotheses, DomainError};
use merglift::lift::{lift, verify_t_identity, ApproxReport, LiftError, LiftOptions, LiftRequest};
use merglift::poly::write_json;
use merglift::tail::{counterexample_directional, restrict_to_finite, select_finite_support, Anchor};
use merglift::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use config::{check_vars, ConfigError, RunConfig, Target};

#[derive(Parser)]
#[command(name = "merglift", version, about = "Polynomial approximation with derivatives on product domains")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `out` from the config, else `merglift-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for all random sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Lattice spacing for domain checks.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    /// Validation boundary samples per fit boundary sample.
    #[arg(long = "validate-density", global = true)]
    validate_density: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the path-bound and topology hypotheses of every factor.
    CheckDomain,
    /// Lift a function (or a reduced series) to one polynomial.
    Lift,
    /// Build a chordal approximation sequence.
    Chordal,
    /// Tabulate the directional derivative values.
    Counterexample {
        /// Values of m; overrides the config.
        #[arg(long, value_delimiter = ',')]
        m: Option<Vec<u32>>,
    },
}

enum Failure {
    Budget(String),
    Config(String),
    Hypothesis(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Budget(_) => 2,
            Failure::Config(_) => 3,
            Failure::Hypothesis(_) => 4,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(e.into())
    }
}

fn domain_failure(e: DomainError) -> Failure {
    match e {
        DomainError::Hypothesis { .. } | DomainError::Disconnected { .. } => Failure::Hypothesis(e.to_string()),
        other => Failure::Config(other.to_string()),
    }
}

fn lift_failure(e: LiftError) -> Failure {
    match e {
        LiftError::Domain(d) => domain_failure(d),
        LiftError::Request(m) => Failure::Config(m),
        other => Failure::Other(other.into()),
    }
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    resolution: f64,
    validate_density: Option<usize>,
}

impl Run {
    fn new(cli: &Cli, need_config: bool) -> Result<Self, Failure> {
        let cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None if need_config => return Err(Failure::Config("--config is required".into())),
            None => RunConfig::default(),
        };
        let out = cli
            .out
            .clone()
            .or_else(|| cfg.out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("merglift-out"));
        let resolution = cli.resolution.or(cfg.resolution).unwrap_or(0.01);
        if !(resolution > 0.0) {
            return Err(Failure::Config(format!("resolution must be positive, got {resolution}")));
        }
        if cli.validate_density.is_some_and(|k| k < 2) {
            return Err(Failure::Config("validate-density must be at least 2".into()));
        }
        std::fs::create_dir_all(&out)?;
        Ok(Run { seed: cli.seed.or(cfg.seed).unwrap_or(0), cfg, out, resolution, validate_density: cli.validate_density })
    }

    fn write(&self, name: &str, text: &str) -> Result<(), Failure> {
        std::fs::write(self.out.join(name), text)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn backend(&self) -> BackendConfig {
        let mut b = BackendConfig::default();
        if let Some(k) = self.validate_density {
            b.grid.validation_factor = k;
        }
        b
    }
}

#[derive(Serialize)]
struct FactorCheck {
    var: String,
    domain: String,
    passes: bool,
    report: Option<merglift::domain::HypothesisReport>,
    error: Option<String>,
}

fn cmd_check_domain(run: &Run) -> Result<(), Failure> {
    let pd = run.cfg.domain()?;
    let mut rows = Vec::new();
    for f in pd.factors() {
        let (report, error) = match check_hypotheses(&f.domain, run.resolution) {
            Ok(r) => {
                let err = r.failure();
                (Some(r), err)
            }
            Err(e @ DomainError::Disconnected { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(domain_failure(e)),
        };
        let passes = error.is_none();
        println!(
            "{:>4}  {:<32} {}  M={}",
            f.var.to_string(),
            f.domain.to_config(),
            if passes { "pass" } else { "FAIL" },
            report.as_ref().and_then(|r| r.path_bound).map_or("-".into(), |m| format!("{m:.4}"))
        );
        if let Some(e) = &error {
            println!("      {e}");
        }
        rows.push(FactorCheck { var: f.var.to_string(), domain: f.domain.to_config(), passes, report, error });
    }
    run.write_json("hypotheses.json", &rows)?;
    match rows.iter().find(|r| !r.passes) {
        Some(r) => Err(Failure::Hypothesis(format!("{} fails its hypotheses", r.var))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct TailInfo {
    support: Vec<String>,
    tail_bound: f64,
    lift_epsilon: f64,
}

#[derive(Serialize)]
struct IdentityCheck {
    samples: usize,
    seed: u64,
    deviation: Option<f64>,
    skipped: Option<String>,
}

#[derive(Serialize)]
struct LiftOutput<'a> {
    function: String,
    tail: Option<TailInfo>,
    success: bool,
    report: &'a ApproxReport,
    identity: Option<IdentityCheck>,
}

fn cmd_lift(run: &Run) -> Result<(), Failure> {
    let cfg = &run.cfg;
    let pd = cfg.domain()?;
    let eps = cfg.lift.epsilon;
    if !(eps > 0.0) {
        return Err(Failure::Config(format!("epsilon must be positive, got {eps}")));
    }
    let (f, pd, eps_lift, tail) = match cfg.target()? {
        Target::Expr(e) => {
            check_vars(&e, &pd)?;
            (e, pd, eps, None)
        }
        Target::Series(series) => {
            let support = select_finite_support(&series, eps).map_err(|e| Failure::Config(e.to_string()))?;
            let e = restrict_to_finite(&series, &support, &Anchor::default()).map_err(|e| Failure::Other(e.into()))?;
            let vars: Vec<_> = support.iter().copied().collect();
            let sub = pd.sub_product(&vars).map_err(domain_failure)?;
            let info = TailInfo {
                support: vars.iter().map(ToString::to_string).collect(),
                tail_bound: series.tail_bound(&support),
                lift_epsilon: eps / 2.0,
            };
            (e, sub, eps / 2.0, Some(info))
        }
    };
    let mut opts = LiftOptions { backend: run.backend(), resolution: run.resolution, ..LiftOptions::default() };
    if let Some(p) = cfg.lift.report_points {
        opts.report_points = p;
    }
    let req = LiftRequest { f: f.clone(), domain: pd, n: cfg.lift.n, epsilon: eps_lift };
    let report = lift(&req, &opts).map_err(lift_failure)?;
    let identity = identity_check(run, &f, &report);

    run.write("poly.json", &write_json(&report.poly))?;
    run.write_json(
        "report.json",
        &LiftOutput { function: f.to_string(), tail, success: report.success(), report: &report, identity },
    )?;
    // One order column per variable, then the error.
    let vars: Vec<_> = report.scales.iter().map(|s| s.0).collect();
    let mut csv = String::new();
    for v in &vars {
        let _ = write!(csv, "{v},");
    }
    csv.push_str("error\n");
    for a in &report.alpha_errors {
        for v in &vars {
            let _ = write!(csv, "{},", a.alpha.get(*v));
        }
        let _ = writeln!(csv, "{:e}", a.error);
    }
    run.write("alpha_errors.csv", &csv)?;
    let mut csv = String::from("path,vars,depth,allocated,achieved,method,degree,success\n");
    let mut hist = String::from("path,method,degree,error\n");
    for l in &report.ledger {
        let vars: Vec<String> = l.vars.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{:e},{:e},{},{},{}",
            l.path,
            vars.join(" "),
            l.depth,
            l.allocated,
            l.achieved,
            l.method,
            l.degree,
            l.success
        );
        for h in &l.history {
            let _ = writeln!(hist, "{},{},{},{:e}", l.path, h.method, h.degree, h.error);
        }
    }
    run.write("ledger.csv", &csv)?;
    run.write("error_vs_degree.csv", &hist)?;

    println!("{:<24} {:>12}", "alpha", "error");
    for a in &report.alpha_errors {
        println!("{:<24} {:>12.3e}", a.alpha.to_string(), a.error);
    }
    println!("max error {:.3e} (epsilon {:.3e}), {} backend fits", report.max_error, eps_lift, report.tree.fits);
    if report.success() {
        Ok(())
    } else {
        Err(Failure::Budget(format!(
            "budget not met: max error {:.3e}, {} of {} fits missed their share",
            report.max_error,
            report.ledger.iter().filter(|l| !l.success).count(),
            report.ledger.len()
        )))
    }
}

/// Compares the closed-form expansion with quadrature at seeded random
/// points of the normalized product.
fn identity_check(run: &Run, f: &merglift::Expr, report: &ApproxReport) -> Option<IdentityCheck> {
    let count = run.cfg.lift.identity_samples;
    if count == 0 || report.n == 0 {
        return None;
    }
    let pdn = &report.normalized_domain;
    let vars: Vec<_> = pdn.vars().into_iter().filter(|v| f.free_vars().contains(v)).collect();
    let sub = pdn.sub_product(&vars).ok()?;
    let f_n = pdn.normalize_expr(f);
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let samples: Vec<Vec<Complex64>> = (0..count)
        .map(|_| sub.factors().iter().map(|fac| fac.domain.sample_point(&mut rng)).collect())
        .collect();
    let (deviation, skipped) = match verify_t_identity(&f_n, &sub, report.n, &samples) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Some(IdentityCheck { samples: count, seed: run.seed, deviation, skipped })
}

fn cmd_chordal(run: &Run) -> Result<(), Failure> {
    let cfg = &run.cfg;
    let steps = cfg.chordal.steps.unwrap_or(5);
    let seq = if cfg.chordal.infinity {
        constant_infinity_sequence(steps)
    } else {
        let Target::Expr(f) = cfg.target()? else {
            return Err(Failure::Config("chordal needs a `function`".into()));
        };
        let pd = cfg.domain()?;
        check_vars(&f, &pd)?;
        let opts = ChordalOptions {
            steps,
            targets: cfg.chordal.targets.clone(),
            backend: run.backend(),
            boundary: cfg.chordal.boundary,
        };
        chordal_approx(&f, &pd, &opts).map_err(|e| match e {
            ChordalError::NotJordanCatalog { .. } | ChordalError::Request(_) => Failure::Config(e.to_string()),
            ChordalError::Fit { .. } => Failure::Budget(e.to_string()),
            other => Failure::Other(other.into()),
        })?
    };
    write_chordal(run, &seq)
}

fn write_chordal(run: &Run, seq: &ChordalSeq) -> Result<(), Failure> {
    let mut csv = String::from("n,r,target,degree,fit_chi,replacement_error,chi_error,euclidean_error\n");
    println!("{:>3} {:>10} {:>7} {:>12} {:>12}", "n", "r", "degree", "chi", "euclidean");
    for (s, p) in seq.steps.iter().zip(&seq.polys) {
        let _ = writeln!(
            csv,
            "{},{},{:e},{},{:e},{:e},{:e},{:e}",
            s.n, s.r, s.target, s.degree, s.fit_chi, s.replacement_error, s.chi_error, s.euclidean_error
        );
        println!("{:>3} {:>10.6} {:>7} {:>12.4e} {:>12.4e}", s.n, s.r, s.degree, s.chi_error, s.euclidean_error);
        run.write(&format!("P_{}.json", s.n), &write_json(p))?;
    }
    run.write("chordal.csv", &csv)?;
    run.write_json("chordal.json", seq)
}

fn cmd_counterexample(run: &Run, ms: Option<Vec<u32>>) -> Result<(), Failure> {
    let ms = ms.unwrap_or_else(|| run.cfg.counterexample.m.clone());
    if ms.contains(&0) {
        return Err(Failure::Config("m must be positive".into()));
    }
    let mut csv = String::from("m,value\n");
    for m in ms {
        let v = counterexample_directional(m);
        println!("{m:>8} {v:.6}");
        let _ = writeln!(csv, "{m},{v}");
    }
    run.write("counterexample.csv", &csv)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let need_config = !matches!(cli.command, Command::Counterexample { .. });
    let run = Run::new(cli, need_config)?;
    match &cli.command {
        Command::CheckDomain => cmd_check_domain(&run),
        Command::Lift => cmd_lift(&run),
        Command::Chordal => cmd_chordal(&run),
        Command::Counterexample { m } => cmd_counterexample(&run, m.clone()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Budget(m) | Failure::Config(m) | Failure::Hypothesis(m) => eprintln!("merglift: {m}"),
                Failure::Other(e) => eprintln!("merglift: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
