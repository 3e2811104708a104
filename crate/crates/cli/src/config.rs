use std::path::Path;

use merglift::domain::{parse_domain_config, parse_factor_line, PlanarDomain, ProductDomain};
use merglift::expr::{parse, Expr, Var};
use merglift::tail::{BoundRule, SeriesFunction};
use serde::Deserialize;

/// A bad or inconsistent config; maps to exit code 3.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> ConfigError + '_ {
    move |e| ConfigError(format!("{what}: {e}"))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Factor lines, one per variable: `z1 disc 0 0 0.5`.
    pub domain: Option<String>,
    pub function: Option<String>,
    pub series: Option<SeriesConfig>,
    #[serde(default)]
    pub lift: LiftConfig,
    #[serde(default)]
    pub chordal: ChordalConfig,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
    pub seed: Option<u64>,
    pub resolution: Option<f64>,
    pub out: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    /// Term template in `z_n` and `n`, e.g. `z_n^n/n^2`.
    pub template: String,
    /// `pseries SCALE P` or `geometric SCALE RATIO`.
    pub bound: String,
    pub horizon: u32,
    /// Shape shared by every factor when `domain` is absent, e.g. `disc 0 0 1`.
    pub factor: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftConfig {
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub report_points: Option<usize>,
    /// Random points for the quadrature cross-check; 0 disables it.
    #[serde(default = "default_identity_samples")]
    pub identity_samples: usize,
}

fn default_n() -> u32 {
    1
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_identity_samples() -> usize {
    20
}

impl Default for LiftConfig {
    fn default() -> Self {
        LiftConfig { n: default_n(), epsilon: default_epsilon(), report_points: None, identity_samples: default_identity_samples() }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChordalConfig {
    pub steps: Option<u32>,
    pub targets: Option<Vec<f64>>,
    pub boundary: Option<usize>,
    /// Emit the sequence `P_n ≡ n` for the constant ∞ instead of fitting.
    #[serde(default)]
    pub infinity: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    #[serde(default = "default_ms")]
    pub m: Vec<u32>,
}

fn default_ms() -> Vec<u32> {
    vec![1, 10, 100, 1000, 10_000]
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig { m: default_ms() }
    }
}

/// What to approximate.
pub enum Target {
    Expr(Expr),
    Series(SeriesFunction),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(bad(&path.display().to_string()))?;
        toml::from_str(&text).map_err(bad("config"))
    }

    pub fn target(&self) -> Result<Target, ConfigError> {
        match (&self.function, &self.series) {
            (Some(f), None) => Ok(Target::Expr(parse(f).map_err(bad("function"))?)),
            (None, Some(s)) => {
                let rule = BoundRule::parse(&s.bound).map_err(bad("series bound"))?;
                let series = SeriesFunction::from_template(&s.template, rule, s.horizon).map_err(bad("series"))?;
                Ok(Target::Series(series))
            }
            (Some(_), Some(_)) => Err(ConfigError("give either `function` or `[series]`, not both".into())),
            (None, None) => Err(ConfigError("missing `function` or `[series]`".into())),
        }
    }

    /// Factors from `domain`, or for a series the shared `factor` shape on
    /// `z1 … z_horizon`.
    pub fn domain(&self) -> Result<ProductDomain, ConfigError> {
        let factors: Vec<(Var, PlanarDomain)> = match (&self.domain, &self.series) {
            (Some(text), _) => parse_domain_config(text).map_err(bad("domain"))?,
            (None, Some(SeriesConfig { factor: Some(shape), horizon, .. })) => (1..=*horizon)
                .map(|n| parse_factor_line(&format!("z{n} {shape}")).map_err(bad("series factor")))
                .collect::<Result<_, _>>()?,
            _ => return Err(ConfigError("missing `domain`".into())),
        };
        if factors.is_empty() {
            return Err(ConfigError("domain has no factors".into()));
        }
        ProductDomain::new(factors).map_err(bad("domain"))
    }
}

/// Every variable of `e` must be a factor of `pd`.
pub fn check_vars(e: &Expr, pd: &ProductDomain) -> Result<(), ConfigError> {
    match e.free_vars().into_iter().find(|v| pd.factor(*v).is_none()) {
        Some(v) => Err(ConfigError(format!("function uses {v}, which has no domain factor"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = r#"
domain = """
z1 disc 0 0 0.5
z2 disc 0 0 0.5
"""
function = "exp(z1+z2)"
seed = 3

[lift]
n = 2
epsilon = 1e-4
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.lift.n, 2);
        assert_eq!(cfg.domain().unwrap().len(), 2);
        let Target::Expr(e) = cfg.target().unwrap() else { panic!("expression target") };
        check_vars(&e, &cfg.domain().unwrap()).unwrap();
        assert_eq!(cfg.counterexample.m.len(), 5);
    }

    #[test]
    fn series_config_builds_its_own_domain() {
        let text = r#"
[series]
template = "z_n^n/n^2"
bound = "pseries 1 2"
horizon = 5
factor = "disc 0 0 1"
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.domain().unwrap().vars(), (1..=5).map(Var).collect::<Vec<_>>());
        assert!(matches!(cfg.target().unwrap(), Target::Series(_)));
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let cfg: RunConfig = toml::from_str("domain = \"z1 disc 0 0 1\"\nfunction = \"z2\"").unwrap();
        let Target::Expr(e) = cfg.target().unwrap() else { panic!() };
        assert!(check_vars(&e, &cfg.domain().unwrap()).is_err());
        assert!(toml::from_str::<RunConfig>("colour = 1").is_err());
        let cfg: RunConfig = toml::from_str("function = \"z1 +\"").unwrap();
        assert!(cfg.target().is_err());
        assert!(cfg.domain().is_err());
    }
}
