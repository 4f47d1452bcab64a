//! Two-location data-generating processes with a known sensitivity bound.
//!
//! For covariates X ∈ R⁴ and a = α0 + xᵀμ:
//!
//! ```text
//! S  ~ Bernoulli(q(x)),  q(x) = (1 − Γ⁻¹ + (Γ − 1)eᵃ) / ((Γ − Γ⁻¹)(1 + eᵃ))
//! U' ~ N(0, (1 + 0.5 sin(2.5 X1))²),  U = (2S − 1)|U'|
//! W  ~ Bernoulli(0.5)
//! L  ~ Bernoulli(logistic(a + log Γ · (1{U ≥ 0} − 1{U < 0})))
//! τ  = X1 + U + 4
//! Y  = (X + 4)ᵀβ + U + Wτ + σε
//! ```
//!
//! q simplifies to (1 + Γeᵃ) / ((Γ + 1)(1 + eᵃ)), which makes
//! P(L = 1 | x) = logistic(a) exactly and the conditional law of U shift by
//! exactly Γ^{±1} between locations. The simplified form is what is
//! evaluated; at Γ = 1 it equals 1/2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{hajek_difference, SourceDataset, SourceUnit, TargetDataset, TargetUnit};
use crate::error::{Error, Result};

pub const DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setup {
    A,
    B,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum CovariateLaw {
    /// Independent Beta(a, b) coordinates.
    Beta { a: f64, b: f64 },
    /// Independent Uniform[0, 1] coordinates.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub setup: Setup,
    pub n_total: usize,
    /// Γ*, the true sensitivity bound.
    pub gamma_star: f64,
    pub alpha0: f64,
    pub mu: [f64; DIM],
    pub beta: [f64; DIM],
    pub sigma: f64,
    pub covariate_law: CovariateLaw,
    pub seed: u64,
}

const BETA_COEF: [f64; DIM] = [0.513, 0.045, 0.7, 0.646];

impl DgpConfig {
    /// Beta(0.5, 0.5) covariates, μ = [2, 2, −2, −2], σ = 3, α0 = 0,
    /// Γ* = e^0.2.
    pub fn setup_a(seed: u64) -> Self {
        Self {
            setup: Setup::A,
            n_total: 1000,
            gamma_star: 0.2f64.exp(),
            alpha0: 0.0,
            mu: [2.0, 2.0, -2.0, -2.0],
            beta: BETA_COEF,
            sigma: 3.0,
            covariate_law: CovariateLaw::Beta { a: 0.5, b: 0.5 },
            seed,
        }
    }

    /// Uniform[0, 1] covariates, μ = [0.709, 0.438, 0.2, 0.767], σ = 0.5,
    /// α0 = −2, Γ* = e^0.5.
    pub fn setup_b(seed: u64) -> Self {
        Self {
            setup: Setup::B,
            n_total: 1000,
            gamma_star: 0.5f64.exp(),
            alpha0: -2.0,
            mu: [0.709, 0.438, 0.2, 0.767],
            beta: BETA_COEF,
            sigma: 0.5,
            covariate_law: CovariateLaw::Uniform,
            seed,
        }
    }

    pub fn with_n_total(mut self, n_total: usize) -> Self {
        self.n_total = n_total;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// γ* = log Γ*.
    pub fn log_gamma_star(&self) -> f64 {
        self.gamma_star.ln()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.gamma_star.is_finite() && self.gamma_star >= 1.0) {
            return bad(format!("gamma_star must be >= 1, got {}", self.gamma_star));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !self.alpha0.is_finite() || self.mu.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return bad("alpha0, mu and beta must be finite".into());
        }
        if let CovariateLaw::Beta { a, b } = self.covariate_law {
            if !(a > 0.0 && b > 0.0) {
                return bad(format!("beta law parameters must be positive, got ({a}, {b})"));
            }
        }
        Ok(())
    }

    /// α0 + xᵀμ.
    pub fn location_logit(&self, x: &[f64]) -> f64 {
        self.alpha0 + x.iter().zip(&self.mu).map(|(a, b)| a * b).sum::<f64>()
    }

    /// P(S = 1 | x).
    pub fn selection_probability(&self, x: &[f64]) -> f64 {
        selection_probability(self.gamma_star, self.location_logit(x))
    }

    /// P(L = 1 | x) after integrating out U.
    pub fn target_probability(&self, x: &[f64]) -> f64 {
        logistic(self.location_logit(x))
    }
}

/// P(S = 1) for logit `a`: (1 + Γeᵃ) / ((Γ + 1)(1 + eᵃ)), written in terms
/// of the logistic function to stay finite for large |a|.
pub fn selection_probability(gamma_star: f64, a: f64) -> f64 {
    let l = logistic(a);
    // (1 + Γeᵃ)/(1 + eᵃ) = (1 − l) + Γ l
    ((1.0 - l) + gamma_star * l) / (gamma_star + 1.0)
}

pub fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimUnit {
    pub x: [f64; DIM],
    pub u: f64,
    pub s: bool,
    pub treated: bool,
    /// true for the target location (L = 1).
    pub target: bool,
    pub tau: f64,
    pub y: f64,
    /// Standard-normal outcome noise ε.
    pub noise: f64,
    /// P(U = u | x, L = 1) / P(U = u | x, L = 0).
    pub z_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPopulation {
    pub config: DgpConfig,
    pub units: Vec<SimUnit>,
    /// P(L = 1), estimated as the population average of P(L = 1 | X_i).
    pub target_share: f64,
}

impl SimulatedPopulation {
    /// r(x) = dP1(X)/dP0(X) = [l(x) / (1 − l(x))] · [P(L = 0) / P(L = 1)].
    pub fn oracle_density_ratio(&self, x: &[f64]) -> f64 {
        let odds = self.config.location_logit(x).exp();
        odds * (1.0 - self.target_share) / self.target_share
    }

    pub fn target_count(&self) -> usize {
        self.units.iter().filter(|u| u.target).count()
    }
}

pub fn generate(config: &DgpConfig) -> Result<SimulatedPopulation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let beta_law = match config.covariate_law {
        CovariateLaw::Beta { a, b } => {
            Some(Beta::new(a, b).map_err(|e| Error::InvalidConfig(e.to_string()))?)
        }
        CovariateLaw::Uniform => None,
    };
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let g = config.gamma_star;
    let log_g = g.ln();

    let mut units = Vec::with_capacity(config.n_total);
    for _ in 0..config.n_total {
        let mut x = [0.0; DIM];
        for xk in &mut x {
            *xk = match &beta_law {
                Some(law) => law.sample(&mut rng),
                None => rng.random::<f64>(),
            };
        }
        let a = config.location_logit(&x);
        let s = rng.random::<f64>() < selection_probability(g, a);
        let sd = 1.0 + 0.5 * (2.5 * x[0]).sin();
        let u_prime = sd * std_normal.sample(&mut rng);
        let u = if s { u_prime.abs() } else { -u_prime.abs() };
        let treated = rng.random::<f64>() < 0.5;
        let shift = if u >= 0.0 { log_g } else { -log_g };
        let target = rng.random::<f64>() < logistic(a + shift);
        let noise = std_normal.sample(&mut rng);
        let tau = x[0] + u + 4.0;
        let base: f64 = x.iter().zip(&config.beta).map(|(xk, bk)| (xk + 4.0) * bk).sum();
        let y = base + u + if treated { tau } else { 0.0 } + config.sigma * noise;
        let z_star = if u >= 0.0 { g } else { g.recip() };
        units.push(SimUnit {
            x,
            u,
            s,
            treated,
            target,
            tau,
            y,
            noise,
            z_star,
        });
    }

    let target_share = if units.is_empty() {
        0.5
    } else {
        units.iter().map(|u| config.target_probability(&u.x)).sum::<f64>() / units.len() as f64
    };
    Ok(SimulatedPopulation {
        config: config.clone(),
        units,
        target_share,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleUnit {
    pub u: f64,
    pub tau: f64,
    pub z_star: f64,
}

/// Quantities hidden from the estimators, aligned row-by-row with the
/// source and target datasets returned by [`split`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub source: Vec<OracleUnit>,
    pub target: Vec<OracleUnit>,
    /// Mean of τ_i over the target location.
    pub target_mean_tau: f64,
}

/// Separates the observed data of the two locations. The source is
/// randomized with propensity 0.5.
pub fn split(pop: &SimulatedPopulation) -> Result<(SourceDataset, TargetDataset, OracleRecord)> {
    let mut src = Vec::new();
    let mut tgt = Vec::new();
    let mut oracle_src = Vec::new();
    let mut oracle_tgt = Vec::new();
    for unit in &pop.units {
        let oracle = OracleUnit {
            u: unit.u,
            tau: unit.tau,
            z_star: unit.z_star,
        };
        if unit.target {
            tgt.push(TargetUnit::new(unit.x.to_vec()));
            oracle_tgt.push(oracle);
        } else {
            src.push(SourceUnit::new(unit.x.to_vec(), unit.treated, unit.y));
            oracle_src.push(oracle);
        }
    }
    if src.is_empty() {
        return Err(Error::EmptyLocation("source"));
    }
    if tgt.is_empty() {
        return Err(Error::EmptyLocation("target"));
    }
    let target_mean_tau = oracle_tgt.iter().map(|o| o.tau).sum::<f64>() / oracle_tgt.len() as f64;
    Ok((
        SourceDataset::new(src, 0.5)?,
        TargetDataset::new(tgt)?,
        OracleRecord {
            source: oracle_src,
            target: oracle_tgt,
            target_mean_tau,
        },
    ))
}

/// Oracle weights r(X_i) z*_i for the source units, in source order.
pub fn oracle_weights(pop: &SimulatedPopulation) -> Vec<f64> {
    pop.units
        .iter()
        .filter(|u| !u.target)
        .map(|u| pop.oracle_density_ratio(&u.x) * u.z_star)
        .collect()
}

/// Self-normalized inverse-weighting estimate of the target effect using
/// the true weights r(X_i, U_i) = r(X_i) z*_i.
pub fn oracle_ipw(pop: &SimulatedPopulation) -> Result<f64> {
    let (src, _, _) = split(pop)?;
    hajek_difference(&src, &oracle_weights(pop))
}
