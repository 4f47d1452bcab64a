//! Datasets for the two locations, sensitivity parameters and bound results.
//!
//! Location 0 hosts the randomized trial: every unit carries covariates, a
//! treatment indicator and an outcome. Location 1 is the target and only its
//! covariates are observed.

use serde::{Deserialize, Serialize};

use crate::error::{Arm, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub x: Vec<f64>,
    pub treated: bool,
    pub y: f64,
}

impl SourceUnit {
    pub fn new(x: Vec<f64>, treated: bool, y: f64) -> Self {
        Self { x, treated, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetUnit {
    pub x: Vec<f64>,
}

impl TargetUnit {
    pub fn new(x: Vec<f64>) -> Self {
        Self { x }
    }
}

/// Trial data from the source location together with the known
/// randomization probability.
///
/// Construction only checks structure (rectangular covariates, propensity in
/// (0, 1)). Empty arms and non-finite values are representable so that
/// [`validate_pair`] can report them, and so that bootstrap resamples with an
/// empty arm can be detected rather than panicking.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDataset {
    units: Vec<SourceUnit>,
    propensity: f64,
    dim: usize,
}

impl SourceDataset {
    pub fn new(units: Vec<SourceUnit>, propensity: f64) -> Result<Self> {
        if !(propensity > 0.0 && propensity < 1.0) {
            return Err(Error::InvalidPropensity(propensity));
        }
        let dim = common_dim(units.iter().map(|u| u.x.len()))?;
        Ok(Self {
            units,
            propensity,
            dim,
        })
    }

    pub fn units(&self) -> &[SourceUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn propensity(&self) -> f64 {
        self.propensity
    }

    /// Covariate dimension (0 for an empty dataset).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arm_size(&self, arm: Arm) -> usize {
        self.units.iter().filter(|u| arm.matches(u.treated)).count()
    }

    /// Indices of the units in `arm`, in dataset order.
    pub fn arm_indices(&self, arm: Arm) -> Vec<usize> {
        self.units
            .iter()
            .enumerate()
            .filter(|(_, u)| arm.matches(u.treated))
            .map(|(i, _)| i)
            .collect()
    }

    /// Resample by index (indices may repeat).
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
            propensity: self.propensity,
            dim: self.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetDataset {
    units: Vec<TargetUnit>,
    dim: usize,
}

impl TargetDataset {
    pub fn new(units: Vec<TargetUnit>) -> Result<Self> {
        let dim = common_dim(units.iter().map(|u| u.x.len()))?;
        Ok(Self { units, dim })
    }

    pub fn units(&self) -> &[TargetUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
            dim: self.dim,
        }
    }
}

fn common_dim(mut dims: impl Iterator<Item = usize>) -> Result<usize> {
    let Some(first) = dims.next() else {
        return Ok(0);
    };
    for (i, d) in dims.enumerate() {
        if d != first {
            return Err(Error::RaggedRows {
                row: i + 1,
                expected: first,
                found: d,
            });
        }
    }
    Ok(first)
}

/// Sensitivity parameters: the transport bound Γ and the misspecification
/// multiplier M. The weight box used by both estimators is
/// `[1/(Γ·M), Γ·M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    gamma: f64,
    misspecification: f64,
}

impl SensitivityParams {
    pub fn new(gamma: f64, misspecification: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 1.0) {
            return Err(Error::InvalidSensitivity(format!(
                "gamma must be finite and >= 1, got {gamma}"
            )));
        }
        if !(misspecification.is_finite() && misspecification >= 1.0) {
            return Err(Error::InvalidSensitivity(format!(
                "misspecification multiplier must be finite and >= 1, got {misspecification}"
            )));
        }
        Ok(Self {
            gamma,
            misspecification,
        })
    }

    /// Γ with M = 1.
    pub fn with_gamma(gamma: f64) -> Result<Self> {
        Self::new(gamma, 1.0)
    }

    /// Γ = exp(log_gamma), the parameterization used on sweep axes.
    pub fn from_log_gamma(log_gamma: f64, misspecification: f64) -> Result<Self> {
        if !(log_gamma >= 0.0) {
            return Err(Error::InvalidSensitivity(format!(
                "log gamma must be >= 0, got {log_gamma}"
            )));
        }
        Self::new(log_gamma.exp(), misspecification)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn misspecification(&self) -> f64 {
        self.misspecification
    }

    pub fn effective_gamma(&self) -> f64 {
        self.gamma * self.misspecification
    }

    /// `(lower, upper)` box for each per-unit weight z.
    pub fn weight_box(&self) -> (f64, f64) {
        let g = self.effective_gamma();
        (g.recip(), g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    ToleranceRelaxed,
    Infeasible,
}

impl SolveStatus {
    /// The less favourable of two statuses.
    pub fn worst(self, other: Self) -> Self {
        self.max(other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::ToleranceRelaxed => "tolerance-relaxed",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// Identification interval for one sensitivity setting.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsResult {
    pub lower: f64,
    pub upper: f64,
    /// Per-source-unit weights attaining the infimum.
    pub weights_lower: Vec<f64>,
    /// Per-source-unit weights attaining the supremum.
    pub weights_upper: Vec<f64>,
    pub status: SolveStatus,
}

impl BoundsResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    DimensionMismatch { source_dim: usize, target_dim: usize },
    EmptyArm(Arm),
    EmptyTarget,
    NoCovariates,
    NonFinite {
        location: &'static str,
        row: usize,
        column: Option<usize>,
    },
    ConstantColumn(usize),
}

impl Issue {
    pub fn severity(&self) -> Severity {
        match self {
            Issue::ConstantColumn(_) => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Issue::DimensionMismatch {
                source_dim,
                target_dim,
            } => write!(
                f,
                "covariate dimension mismatch: source {source_dim}, target {target_dim}"
            ),
            Issue::EmptyArm(arm) => write!(f, "source {arm} arm is empty"),
            Issue::EmptyTarget => f.write_str("target dataset is empty"),
            Issue::NoCovariates => f.write_str("datasets have no covariate columns"),
            Issue::NonFinite {
                location,
                row,
                column: Some(c),
            } => write!(f, "{location} row {row}: covariate x{} is not finite", c + 1),
            Issue::NonFinite {
                location,
                row,
                column: None,
            } => write!(f, "{location} row {row}: outcome is not finite"),
            Issue::ConstantColumn(c) => write!(
                f,
                "covariate x{} is constant across both locations (absorbed by the intercept)",
                c + 1
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| i.severity() == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| i.severity() == Severity::Warning)
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    /// Converts the first error into an [`Error`].
    pub fn into_result(self) -> Result<()> {
        match self.errors().next() {
            None => Ok(()),
            Some(Issue::DimensionMismatch {
                source_dim,
                target_dim,
            }) => Err(Error::DimensionMismatch {
                source_dim: *source_dim,
                target_dim: *target_dim,
            }),
            Some(Issue::EmptyArm(arm)) => Err(Error::EmptyArm(*arm)),
            Some(Issue::EmptyTarget) => Err(Error::EmptyLocation("target")),
            Some(other) => Err(Error::InvalidData(other.to_string())),
        }
    }
}

/// Checks that a source/target pair is usable by the estimators.
pub fn validate_pair(src: &SourceDataset, tgt: &TargetDataset) -> ValidationReport {
    let mut issues = Vec::new();

    if !src.is_empty() && !tgt.is_empty() && src.dim() != tgt.dim() {
        issues.push(Issue::DimensionMismatch {
            source_dim: src.dim(),
            target_dim: tgt.dim(),
        });
    }
    for arm in Arm::BOTH {
        if src.arm_size(arm) == 0 {
            issues.push(Issue::EmptyArm(arm));
        }
    }
    if tgt.is_empty() {
        issues.push(Issue::EmptyTarget);
    }
    if (!src.is_empty() && src.dim() == 0) || (!tgt.is_empty() && tgt.dim() == 0) {
        issues.push(Issue::NoCovariates);
    }

    for (row, u) in src.units().iter().enumerate() {
        if let Some(c) = u.x.iter().position(|v| !v.is_finite()) {
            issues.push(Issue::NonFinite {
                location: "source",
                row,
                column: Some(c),
            });
        }
        if !u.y.is_finite() {
            issues.push(Issue::NonFinite {
                location: "source",
                row,
                column: None,
            });
        }
    }
    for (row, u) in tgt.units().iter().enumerate() {
        if let Some(c) = u.x.iter().position(|v| !v.is_finite()) {
            issues.push(Issue::NonFinite {
                location: "target",
                row,
                column: Some(c),
            });
        }
    }

    if src.dim() == tgt.dim() {
        let rows = src
            .units()
            .iter()
            .map(|u| &u.x)
            .chain(tgt.units().iter().map(|u| &u.x));
        let mut first: Option<&Vec<f64>> = None;
        let mut constant = vec![true; src.dim()];
        for x in rows {
            match first {
                None => first = Some(x),
                Some(f) => {
                    for (c, flag) in constant.iter_mut().enumerate() {
                        *flag &= x[c] == f[c];
                    }
                }
            }
        }
        if first.is_some() {
            issues.extend(
                constant
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c)
                    .map(|(i, _)| Issue::ConstantColumn(i)),
            );
        }
    }

    ValidationReport { issues }
}

/// Mean outcome of the treated minus mean outcome of the controls.
pub fn difference_in_means(data: &SourceDataset) -> Result<f64> {
    let (mut sum_t, mut n_t, mut sum_c, mut n_c) = (0.0, 0usize, 0.0, 0usize);
    for u in data.units() {
        if u.treated {
            sum_t += u.y;
            n_t += 1;
        } else {
            sum_c += u.y;
            n_c += 1;
        }
    }
    if n_t == 0 {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    if n_c == 0 {
        return Err(Error::EmptyArm(Arm::Control));
    }
    Ok(sum_t / n_t as f64 - sum_c / n_c as f64)
}

/// Hajek (self-normalized) weighted difference in arm means:
/// `Σ_t w y / Σ_t w − Σ_c w y / Σ_c w`.
pub fn hajek_difference(data: &SourceDataset, weights: &[f64]) -> Result<f64> {
    if weights.len() != data.len() {
        return Err(Error::WeightLength {
            expected: data.len(),
            found: weights.len(),
        });
    }
    let mut acc = [(0.0, 0.0); 2];
    for (u, &w) in data.units().iter().zip(weights) {
        let slot = &mut acc[u.treated as usize];
        slot.0 += w * u.y;
        slot.1 += w;
    }
    if acc[1].1 <= 0.0 {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    if acc[0].1 <= 0.0 {
        return Err(Error::EmptyArm(Arm::Control));
    }
    Ok(acc[1].0 / acc[1].1 - acc[0].0 / acc[0].1)
}
