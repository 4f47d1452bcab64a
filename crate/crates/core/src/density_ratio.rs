//! Covariate-balancing estimate of the observed-covariate density ratio
//! r(x) = dP1(X)/dP0(X).
//!
//! For each arm w the log ratio is modelled as g(x) = φ(x)ᵀβ⁽ʷ⁾, with β⁽ʷ⁾
//! minimizing the strictly convex objective
//!
//! ```text
//! F_w(β) = (1/n_w) Σ_{i in arm w} exp(φ(X_i)ᵀβ) − c̄ᵀβ,   c̄ = (1/n1) Σ_{target} φ(X_i)
//! ```
//!
//! Its gradient is the arm's exp-weighted feature mean minus c̄, so at the
//! minimizer the weighted source moments match the target moments exactly.
//! Because φ carries an intercept, the fitted weights average to one within
//! each arm.

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisSpec, FeatureMatrix};
use crate::data::{validate_pair, SourceDataset, TargetDataset};
use crate::error::{Arm, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub balance_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor during backtracking.
    pub backtrack: f64,
    /// Above this Hessian condition number Newton falls back to the
    /// steepest-descent direction.
    pub max_condition: f64,
    /// A fit whose linear predictor exceeds this magnitude on some unit is
    /// treated as diverging.
    pub divergence_limit: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            balance_tol: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            max_condition: 1e12,
            divergence_limit: 100.0,
        }
    }
}

/// F_w restricted to one arm's features.
#[derive(Debug, Clone, Copy)]
pub struct BalancingObjective<'a> {
    features: &'a FeatureMatrix,
    target_mean: &'a [f64],
}

impl<'a> BalancingObjective<'a> {
    pub fn new(features: &'a FeatureMatrix, target_mean: &'a [f64]) -> Self {
        assert_eq!(features.cols(), target_mean.len());
        Self {
            features,
            target_mean,
        }
    }

    pub fn dim(&self) -> usize {
        self.target_mean.len()
    }

    fn n(&self) -> f64 {
        self.features.rows() as f64
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        let sum: f64 = self
            .features
            .iter_rows()
            .map(|phi| dot(phi, beta).exp())
            .sum();
        sum / self.n() - dot(self.target_mean, beta)
    }

    /// Weighted feature mean minus target mean.
    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for phi in self.features.iter_rows() {
            let w = dot(phi, beta).exp();
            for (gj, pj) in g.iter_mut().zip(phi) {
                *gj += w * pj;
            }
        }
        let n = self.n();
        for (gj, cj) in g.iter_mut().zip(self.target_mean) {
            *gj = *gj / n - cj;
        }
        g
    }

    pub fn hessian(&self, beta: &[f64]) -> DMatrix<f64> {
        let p = self.dim();
        let mut h = DMatrix::<f64>::zeros(p, p);
        for phi in self.features.iter_rows() {
            let w = dot(phi, beta).exp();
            for a in 0..p {
                let wa = w * phi[a];
                for b in a..p {
                    h[(a, b)] += wa * phi[b];
                }
            }
        }
        let n = self.n();
        for a in 0..p {
            for b in a..p {
                let v = h[(a, b)] / n;
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        h
    }

    fn max_abs_predictor(&self, beta: &[f64]) -> f64 {
        self.features
            .iter_rows()
            .map(|phi| dot(phi, beta).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Outcome of the optimizer on one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmFit {
    pub beta: Vec<f64>,
    /// Gradient of F_w at `beta`: weighted arm feature mean minus target mean.
    pub balance_residual: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Objective after every accepted step, starting at β = 0.
    pub objective_trace: Vec<f64>,
    /// Number of steps that used the gradient-descent fallback.
    pub fallback_steps: usize,
}

impl ArmFit {
    pub fn max_residual(&self) -> f64 {
        max_norm(&self.balance_residual)
    }
}

/// Minimizes F_w from β = 0.
pub fn minimize(objective: &BalancingObjective<'_>, arm: Arm, opts: &FitOptions) -> Result<ArmFit> {
    let p = objective.dim();
    let mut beta = vec![0.0; p];
    let mut value = objective.value(&beta);
    let mut grad = objective.gradient(&beta);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut fallback_steps = 0;
    // Iterate past the tolerance while Newton still makes progress.
    let polish_target = opts.balance_tol * 1e-4;
    let mut converged = max_norm(&grad) <= opts.balance_tol;

    while max_norm(&grad) > polish_target && iterations < opts.max_iter {
        iterations += 1;
        let g = DVector::from_column_slice(&grad);
        let (direction, fallback) = match newton_direction(&objective.hessian(&beta), &g, opts) {
            Some(d) => (d, false),
            None => (-&g, true),
        };
        fallback_steps += fallback as usize;

        let slope = g.dot(&direction);
        if slope >= 0.0 {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let trial: Vec<f64> = beta
                .iter()
                .zip(direction.iter())
                .map(|(b, d)| b + step * d)
                .collect();
            let trial_value = objective.value(&trial);
            let sufficient = trial_value <= value + opts.armijo * step * slope;
            // Near the optimum the decrease in F drops below its rounding
            // error; a full step that shrinks the gradient is then taken.
            let polishing = step == 1.0
                && !sufficient
                && trial_value <= value + 1e-12 * value.abs().max(1.0)
                && max_norm(&objective.gradient(&trial)) < max_norm(&grad);
            if trial_value.is_finite() && (sufficient || polishing) {
                accepted = Some((trial, trial_value));
                break;
            }
            step *= opts.backtrack;
        }
        let Some((next, next_value)) = accepted else {
            // No decrease possible at working precision.
            break;
        };
        if converged && max_norm(&objective.gradient(&next)) >= max_norm(&grad) {
            break;
        }
        beta = next;
        value = next_value;
        grad = objective.gradient(&beta);
        trace.push(value);
        converged = max_norm(&grad) <= opts.balance_tol;

        if !converged && objective.max_abs_predictor(&beta) > opts.divergence_limit {
            return Err(Error::Separation {
                arm,
                feature: offending_feature(objective.features, &beta),
            });
        }
    }

    Ok(ArmFit {
        balance_residual: grad,
        beta,
        iterations,
        converged,
        objective: value,
        objective_trace: trace,
        fallback_steps,
    })
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, opts: &FitOptions) -> Option<DVector<f64>> {
    let eig = h.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 0.0) || hi / lo > opts.max_condition {
        return None;
    }
    let chol = h.clone().cholesky()?;
    Some(-chol.solve(g))
}

/// Non-intercept feature contributing most to the diverging predictor.
fn offending_feature(features: &FeatureMatrix, beta: &[f64]) -> usize {
    let p = beta.len();
    if p == 1 {
        return 0;
    }
    let mut scale = vec![0.0f64; p];
    for phi in features.iter_rows() {
        for (s, v) in scale.iter_mut().zip(phi) {
            *s = s.max(v.abs());
        }
    }
    (1..p)
        .max_by(|&a, &b| {
            (beta[a].abs() * scale[a])
                .partial_cmp(&(beta[b].abs() * scale[b]))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0)
}

/// Fitted coefficients for both arms plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRatioFit {
    control: ArmFit,
    treated: ArmFit,
    target_mean: Vec<f64>,
    balance_tol: f64,
    /// Largest absolute feature value over both locations.
    pub feature_sup: f64,
    /// Whether `feature_sup` respects the basis' declared bound, if any.
    pub within_declared_bound: Option<bool>,
}

impl DensityRatioFit {
    /// Builds a fit from given coefficients; residuals are computed from
    /// the data and `converged` reflects whether they meet `balance_tol`.
    pub fn from_coefficients(
        src: &SourceDataset,
        tgt: &TargetDataset,
        spec: &BasisSpec,
        beta_control: Vec<f64>,
        beta_treated: Vec<f64>,
        balance_tol: f64,
    ) -> Result<Self> {
        let design = Design::new(src, tgt, spec)?;
        let make = |arm: Arm, beta: Vec<f64>| {
            let feats = &design.arm_features[arm as usize];
            let obj = BalancingObjective::new(feats, &design.target_mean);
            let residual = obj.gradient(&beta);
            ArmFit {
                converged: max_norm(&residual) <= balance_tol,
                objective: obj.value(&beta),
                objective_trace: Vec::new(),
                balance_residual: residual,
                beta,
                iterations: 0,
                fallback_steps: 0,
            }
        };
        Ok(Self {
            control: make(Arm::Control, beta_control),
            treated: make(Arm::Treated, beta_treated),
            target_mean: design.target_mean.clone(),
            balance_tol,
            feature_sup: design.feature_sup,
            within_declared_bound: design.within_bound,
        })
    }

    pub fn arm(&self, arm: Arm) -> &ArmFit {
        match arm {
            Arm::Control => &self.control,
            Arm::Treated => &self.treated,
        }
    }

    pub fn beta(&self, arm: Arm) -> &[f64] {
        &self.arm(arm).beta
    }

    pub fn converged(&self) -> bool {
        self.control.converged && self.treated.converged
    }

    /// c̄, the target feature mean.
    pub fn target_mean(&self) -> &[f64] {
        &self.target_mean
    }

    pub fn balance_tol(&self) -> f64 {
        self.balance_tol
    }

    /// Largest balance residual over both arms.
    pub fn max_residual(&self) -> f64 {
        self.control.max_residual().max(self.treated.max_residual())
    }
}

struct Design {
    arm_features: [FeatureMatrix; 2],
    target_mean: Vec<f64>,
    feature_sup: f64,
    within_bound: Option<bool>,
}

impl Design {
    fn new(src: &SourceDataset, tgt: &TargetDataset, spec: &BasisSpec) -> Result<Self> {
        validate_pair(src, tgt).into_result()?;
        let src_rows: Vec<&[f64]> = src.units().iter().map(|u| u.x.as_slice()).collect();
        let tgt_rows: Vec<&[f64]> = tgt.units().iter().map(|u| u.x.as_slice()).collect();
        let src_feats = spec.expand_dataset(&src_rows)?;
        let tgt_feats = spec.expand_dataset(&tgt_rows)?;
        let feature_sup = src_feats.max_abs().max(tgt_feats.max_abs());
        let arm_features = [
            src_feats.select(&src.arm_indices(Arm::Control)),
            src_feats.select(&src.arm_indices(Arm::Treated)),
        ];
        Ok(Self {
            arm_features,
            target_mean: tgt_feats.column_means(),
            feature_sup,
            within_bound: spec.bound.map(|b| feature_sup <= b),
        })
    }
}

/// Fits β⁽⁰⁾ and β⁽¹⁾. A non-converged arm is reported through
/// `converged = false`, not as an error; divergence is an error.
pub fn fit(
    src: &SourceDataset,
    tgt: &TargetDataset,
    spec: &BasisSpec,
    opts: &FitOptions,
) -> Result<DensityRatioFit> {
    let design = Design::new(src, tgt, spec)?;
    let run = |arm: Arm| {
        let obj = BalancingObjective::new(&design.arm_features[arm as usize], &design.target_mean);
        minimize(&obj, arm, opts)
    };
    let (control, treated) = rayon::join(|| run(Arm::Control), || run(Arm::Treated));
    Ok(DensityRatioFit {
        control: control?,
        treated: treated?,
        target_mean: design.target_mean,
        balance_tol: opts.balance_tol,
        feature_sup: design.feature_sup,
        within_declared_bound: design.within_bound,
    })
}

/// r̂(X_i) = exp(φ(X_i)ᵀβ⁽ʷⁱ⁾) for every source unit, in dataset order.
pub fn weights(fit: &DensityRatioFit, src: &SourceDataset, spec: &BasisSpec) -> Result<Vec<f64>> {
    for arm in Arm::BOTH {
        if !fit.arm(arm).converged {
            return Err(Error::NotConverged(arm));
        }
    }
    src.units()
        .iter()
        .enumerate()
        .map(|(row, u)| {
            let phi = spec.expand(&u.x).map_err(|e| match e {
                Error::NonFiniteFeature { feature, .. } => Error::NonFiniteFeature { row, feature },
                other => other,
            })?;
            let arm = if u.treated { Arm::Treated } else { Arm::Control };
            Ok(dot(&phi, fit.beta(arm)).exp())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRow {
    pub arm: Arm,
    pub feature: String,
    pub weighted_source_mean: f64,
    pub target_mean: f64,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub tolerance: f64,
    pub rows: Vec<BalanceRow>,
}

impl BalanceReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.residual.abs()))
    }

    /// Plain CSV: `arm,feature,weighted_source_mean,target_mean,residual,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,feature,weighted_source_mean,target_mean,residual,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{}\n",
                r.arm, r.feature, r.weighted_source_mean, r.target_mean, r.residual, r.pass
            ));
        }
        out
    }
}

/// Recomputes both sides of the empirical moment condition directly from
/// the data (independently of the residuals stored in `fit`).
pub fn balance_report(
    fit: &DensityRatioFit,
    src: &SourceDataset,
    tgt: &TargetDataset,
    spec: &BasisSpec,
) -> Result<BalanceReport> {
    let p = spec.dim();
    let names = spec.feature_names();
    let mut target_mean = vec![0.0; p];
    for u in tgt.units() {
        for (m, v) in target_mean.iter_mut().zip(spec.expand(&u.x)?) {
            *m += v;
        }
    }
    let n1 = tgt.len().max(1) as f64;
    target_mean.iter_mut().for_each(|m| *m /= n1);

    let mut rows = Vec::with_capacity(2 * p);
    for arm in Arm::BOTH {
        let beta = fit.beta(arm);
        let mut sums = vec![0.0; p];
        let mut count = 0usize;
        for u in src.units().iter().filter(|u| arm.matches(u.treated)) {
            let phi = spec.expand(&u.x)?;
            let w = dot(&phi, beta).exp();
            for (s, v) in sums.iter_mut().zip(&phi) {
                *s += w * v;
            }
            count += 1;
        }
        let n = count.max(1) as f64;
        for j in 0..p {
            let weighted = sums[j] / n;
            let residual = weighted - target_mean[j];
            rows.push(BalanceRow {
                arm,
                feature: names[j].clone(),
                weighted_source_mean: weighted,
                target_mean: target_mean[j],
                residual,
                pass: residual.abs() <= fit.balance_tol(),
            });
        }
    }
    Ok(BalanceReport {
        tolerance: fit.balance_tol(),
        rows,
    })
}
