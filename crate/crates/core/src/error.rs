use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid propensity {0}: must lie strictly inside (0, 1)")]
    InvalidPropensity(f64),

    #[error("row {row} has {found} covariates, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("covariate dimension mismatch: source has {source_dim}, target has {target_dim}")]
    DimensionMismatch { source_dim: usize, target_dim: usize },

    #[error("the {0} arm is empty")]
    EmptyArm(Arm),

    #[error("the {0} location has no units")]
    EmptyLocation(&'static str),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid sensitivity parameter: {0}")]
    InvalidSensitivity(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("row {row}: feature {feature} evaluated to a non-finite value")]
    NonFiniteFeature { row: usize, feature: usize },

    #[error(
        "density ratio is not identified on the {arm} arm: feature {feature} separates the \
         locations (coefficient diverging while the objective keeps falling)"
    )]
    Separation { arm: Arm, feature: usize },

    #[error("density ratio fit on the {0} arm did not converge")]
    NotConverged(Arm),

    #[error("weight vector has length {found}, expected {expected}")]
    WeightLength { expected: usize, found: usize },

    #[error("weights must be strictly positive and finite (unit {0})")]
    NonPositiveWeight(usize),

    #[error(
        "linear program infeasible even at equality tolerance {tolerance:e}; \
         minimum total infeasibility {min_infeasibility:e}"
    )]
    Infeasible {
        tolerance: f64,
        min_infeasibility: f64,
    },

    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),

    #[error("bootstrap: {failed} of {total} replicates failed, above the tolerated rate")]
    TooManyBootstrapFailures { failed: usize, total: usize },

    #[error("invalid bootstrap settings: {0}")]
    InvalidBootstrap(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Treatment arm within the source location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn matches(self, treated: bool) -> bool {
        matches!((self, treated), (Arm::Treated, true) | (Arm::Control, false))
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treated => "treated",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
