//! Bounds on the average treatment effect in a target location, transported
//! from a randomized trial in a source location, under a marginal
//! sensitivity model for unmeasured effect modifiers.
//!
//! The pipeline is:
//!
//! 1. [`density_ratio::fit`] estimates r(x) = dP1(X)/dP0(X) per arm by
//!    covariate balancing on a [`basis::BasisSpec`].
//! 2. [`unbalanced::solve_unbalanced`] bounds the effect when each unit's
//!    weight may move within `[1/Γ, Γ]` around r̂.
//! 3. [`balanced::solve_balanced`] additionally requires the perturbed
//!    weights to keep balancing the target feature means, which gives a
//!    shorter interval.
//! 4. [`bootstrap`] wraps either estimator in a percentile bootstrap.
//!
//! [`simulation`] generates the synthetic two-location designs used to
//! validate the estimators.

pub mod balanced;
pub mod basis;
pub mod bootstrap;
pub mod data;
pub mod density_ratio;
pub mod error;
pub mod simulation;
mod simplex;
pub mod unbalanced;

pub use balanced::{solve_balanced, ArmLp, Direction, LpOptions, LpSolution};
pub use basis::{BasisSpec, FeatureMatrix};
pub use data::{
    difference_in_means, validate_pair, BoundsResult, SensitivityParams, SolveStatus,
    SourceDataset, SourceUnit, TargetDataset, TargetUnit,
};
pub use density_ratio::{DensityRatioFit, FitOptions};
pub use error::{Arm, Error, Result};
pub use unbalanced::solve_unbalanced;
