//! Run configuration from flags and `key = value` files.
//!
//! Config files hold one `key = value` per line; `#` starts a comment.
//! Keys mirror the long flag names with `-` or `_`. Flags given on the
//! command line override the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use transport_bounds::simulation::{CovariateLaw, DgpConfig, Setup};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: PathBuf,
    pub target: PathBuf,
    /// `identity`, `intercept` or `poly:k`.
    pub basis: String,
    /// γ = log Γ values.
    pub gamma_grid: Vec<f64>,
    pub m: f64,
    /// Number of bootstrap resamples; 0 disables the bootstrap.
    pub bootstrap: usize,
    pub level: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub propensity: f64,
}

pub const DEFAULT_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

/// Settings collected before defaults are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub basis: Option<String>,
    pub gamma_grid: Option<Vec<f64>>,
    pub m: Option<f64>,
    pub bootstrap: Option<usize>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub propensity: Option<f64>,
}

impl RunSettings {
    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: RunSettings) -> RunSettings {
        RunSettings {
            source: over.source.or(self.source),
            target: over.target.or(self.target),
            basis: over.basis.or(self.basis),
            gamma_grid: over.gamma_grid.or(self.gamma_grid),
            m: over.m.or(self.m),
            bootstrap: over.bootstrap.or(self.bootstrap),
            level: over.level.or(self.level),
            seed: over.seed.or(self.seed),
            out: over.out.or(self.out),
            propensity: over.propensity.or(self.propensity),
        }
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut s = RunSettings::default();
        for (key, value) in pairs {
            match key.as_str() {
                "source" => s.source = Some(value.into()),
                "target" => s.target = Some(value.into()),
                "basis" => s.basis = Some(value.clone()),
                "gamma_grid" => s.gamma_grid = Some(parse_list(key, value)?),
                "m" => s.m = Some(parse_value(key, value)?),
                "bootstrap" => s.bootstrap = Some(parse_value(key, value)?),
                "level" => s.level = Some(parse_value(key, value)?),
                "seed" => s.seed = Some(parse_value(key, value)?),
                "out" => s.out = Some(value.into()),
                "propensity" => s.propensity = Some(parse_value(key, value)?),
                other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
            }
        }
        Ok(s)
    }

    pub fn finish(self) -> Result<RunConfig, CliError> {
        let source = self.source.ok_or_else(|| CliError::Usage("missing --source".into()))?;
        let target = self.target.ok_or_else(|| CliError::Usage("missing --target".into()))?;
        let cfg = RunConfig {
            source,
            target,
            basis: self.basis.unwrap_or_else(|| "identity".into()),
            gamma_grid: self.gamma_grid.unwrap_or_else(|| DEFAULT_GRID.to_vec()),
            m: self.m.unwrap_or(1.0),
            bootstrap: self.bootstrap.unwrap_or(0),
            level: self.level.unwrap_or(0.95),
            seed: self.seed.unwrap_or(0),
            out: self.out.unwrap_or_else(|| "out".into()),
            propensity: self.propensity.unwrap_or(0.5),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.gamma_grid.is_empty() {
            return Err(CliError::Usage("gamma grid is empty".into()));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(CliError::Usage(format!("gamma grid values must be >= 0, got {g}")));
        }
        if !(self.m.is_finite() && self.m >= 1.0) {
            return Err(CliError::Usage(format!("--m must be >= 1, got {}", self.m)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Usage(format!("--level must be in (0, 1), got {}", self.level)));
        }
        if !(self.propensity > 0.0 && self.propensity < 1.0) {
            return Err(CliError::Usage(format!("--propensity must be in (0, 1), got {}", self.propensity)));
        }
        Ok(())
    }

    /// γ grid sorted ascending with duplicates removed.
    pub fn sorted_grid(&self) -> Vec<f64> {
        let mut g = self.gamma_grid.clone();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulateSettings {
    pub setup: Option<String>,
    pub n_total: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// log Γ*.
    pub gamma_star: Option<f64>,
    pub alpha0: Option<f64>,
    pub sigma: Option<f64>,
    pub mu: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub covariates: Option<String>,
}

impl SimulateSettings {
    pub fn merge(self, over: SimulateSettings) -> SimulateSettings {
        SimulateSettings {
            setup: over.setup.or(self.setup),
            n_total: over.n_total.or(self.n_total),
            seed: over.seed.or(self.seed),
            out: over.out.or(self.out),
            gamma_star: over.gamma_star.or(self.gamma_star),
            alpha0: over.alpha0.or(self.alpha0),
            sigma: over.sigma.or(self.sigma),
            mu: over.mu.or(self.mu),
            beta: over.beta.or(self.beta),
            covariates: over.covariates.or(self.covariates),
        }
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut s = SimulateSettings::default();
        for (key, value) in pairs {
            match key.as_str() {
                "setup" => s.setup = Some(value.clone()),
                "n_total" => s.n_total = Some(parse_value(key, value)?),
                "seed" => s.seed = Some(parse_value(key, value)?),
                "out" => s.out = Some(value.into()),
                "gamma_star" => s.gamma_star = Some(parse_value(key, value)?),
                "alpha0" => s.alpha0 = Some(parse_value(key, value)?),
                "sigma" => s.sigma = Some(parse_value(key, value)?),
                "mu" => s.mu = Some(parse_list(key, value)?),
                "beta" => s.beta = Some(parse_list(key, value)?),
                "covariates" => s.covariates = Some(value.clone()),
                other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
            }
        }
        Ok(s)
    }

    /// Builds the generator configuration. `custom` starts from Setup A and
    /// applies every override; named setups also accept overrides.
    pub fn finish(self) -> Result<(DgpConfig, PathBuf), CliError> {
        let seed = self.seed.unwrap_or(0);
        let name = self.setup.as_deref().unwrap_or("a").to_ascii_lowercase();
        let mut cfg = match name.as_str() {
            "a" => DgpConfig::setup_a(seed),
            "b" => DgpConfig::setup_b(seed),
            "custom" => DgpConfig {
                setup: Setup::Custom,
                ..DgpConfig::setup_a(seed)
            },
            other => return Err(CliError::Usage(format!("unknown setup `{other}` (expected a, b or custom)"))),
        };
        if let Some(n) = self.n_total {
            cfg.n_total = n;
        }
        if let Some(g) = self.gamma_star {
            cfg.gamma_star = g.exp();
        }
        if let Some(a) = self.alpha0 {
            cfg.alpha0 = a;
        }
        if let Some(s) = self.sigma {
            cfg.sigma = s;
        }
        if let Some(mu) = self.mu {
            cfg.mu = four("mu", &mu)?;
        }
        if let Some(beta) = self.beta {
            cfg.beta = four("beta", &beta)?;
        }
        if let Some(law) = self.covariates {
            cfg.covariate_law = match law.as_str() {
                "uniform" => CovariateLaw::Uniform,
                "arcsine" | "beta" => CovariateLaw::Beta { a: 0.5, b: 0.5 },
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown covariate law `{other}` (expected uniform or beta)"
                    )))
                }
            };
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((cfg, self.out.unwrap_or_else(|| "data".into())))
    }
}

fn four(key: &str, v: &[f64]) -> Result<[f64; 4], CliError> {
    v.try_into()
        .map_err(|_| CliError::Usage(format!("{key} needs 4 values, got {}", v.len())))
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{value}` for `{key}`")))
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Parses `key = value` lines. Keys are normalized to snake case.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('-', "_");
        if out.insert(key.clone(), v.trim().to_owned()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key `{key}`", n + 1)));
        }
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_pairs(&text)
}
