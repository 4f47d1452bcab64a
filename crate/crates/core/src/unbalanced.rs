//! Identification interval without balance constraints.
//!
//! The program is linear in z with only box constraints, so each z_i sits at
//! whichever end of `[1/Γ_eff, Γ_eff]` favours the objective. The sign of
//! unit i's coefficient `±r̂_i Y_i / n_arm` decides the end; zero
//! coefficients take z = 1.

use crate::data::{BoundsResult, SensitivityParams, SolveStatus, SourceDataset};
use crate::error::{Arm, Error, Result};

pub fn check_weights(src: &SourceDataset, rhat: &[f64]) -> Result<()> {
    if rhat.len() != src.len() {
        return Err(Error::WeightLength {
            expected: src.len(),
            found: rhat.len(),
        });
    }
    if let Some(i) = rhat.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::NonPositiveWeight(i));
    }
    Ok(())
}

/// Per-unit objective coefficients: `+r̂ Y / n_treated` for treated units,
/// `−r̂ Y / n_control` for controls.
pub fn objective_coefficients(src: &SourceDataset, rhat: &[f64]) -> Result<Vec<f64>> {
    check_weights(src, rhat)?;
    let n_t = src.arm_size(Arm::Treated);
    let n_c = src.arm_size(Arm::Control);
    if n_t == 0 {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    if n_c == 0 {
        return Err(Error::EmptyArm(Arm::Control));
    }
    Ok(src
        .units()
        .iter()
        .zip(rhat)
        .map(|(u, r)| {
            if u.treated {
                r * u.y / n_t as f64
            } else {
                -r * u.y / n_c as f64
            }
        })
        .collect())
}

pub fn solve_unbalanced(
    src: &SourceDataset,
    rhat: &[f64],
    sens: &SensitivityParams,
) -> Result<BoundsResult> {
    let coef = objective_coefficients(src, rhat)?;
    let (lo, hi) = sens.weight_box();
    let pick = |c: f64, maximize: bool| {
        if c == 0.0 {
            1.0
        } else if (c > 0.0) == maximize {
            hi
        } else {
            lo
        }
    };
    let weights_upper: Vec<f64> = coef.iter().map(|&c| pick(c, true)).collect();
    let weights_lower: Vec<f64> = coef.iter().map(|&c| pick(c, false)).collect();
    let value = |z: &[f64]| coef.iter().zip(z).map(|(c, z)| c * z).sum::<f64>();
    Ok(BoundsResult {
        lower: value(&weights_lower),
        upper: value(&weights_upper),
        weights_lower,
        weights_upper,
        status: SolveStatus::Optimal,
    })
}
