//! Covariate-balanced identification interval.
//!
//! Adds the moment constraints `Σ_i γ_i z_i φ(X_i) = c̄` (one block per arm,
//! γ_i = r̂_i / n_arm) to the box-constrained program. Treated weights only
//! enter the treated term and the treated constraints, and likewise for the
//! controls, so the interval splits into four independent linear programs:
//!
//! ```text
//! upper = max(treated) − min(control)
//! lower = min(treated) − max(control)
//! ```
//!
//! Equalities are enforced as `|lhs − rhs| ≤ ε` with ε = 1e-6. If that is
//! infeasible, ε is doubled up to 1e-3 and the result is flagged
//! [`SolveStatus::ToleranceRelaxed`].

use crate::basis::BasisSpec;
use crate::data::{BoundsResult, SensitivityParams, SolveStatus, SourceDataset, TargetDataset};
use crate::density_ratio::{weights, DensityRatioFit};
use crate::error::{Arm, Error, Result};
use crate::simplex::{self, Outcome, Problem};
use crate::unbalanced::check_weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Starting tolerance on the moment equalities.
    pub eps_feas: f64,
    /// Largest tolerance tried before declaring infeasibility.
    pub max_eps: f64,
    pub max_iter: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            eps_feas: 1e-6,
            max_eps: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// One arm's program: optimize `Σ objective_i z_i` subject to
/// `Σ z_i column_i = rhs` (within tolerance) and `z ∈ [lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmLp {
    /// γ_i Y_i.
    pub objective: Vec<f64>,
    /// n × p, column i (γ_i φ(X_i)) stored contiguously.
    pub columns: Vec<f64>,
    /// c̄.
    pub rhs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    /// Source-dataset index of each column.
    pub units: Vec<usize>,
}

impl ArmLp {
    /// Builds a program from explicit data. `columns[i]` is the constraint
    /// column of unit i.
    pub fn new(objective: Vec<f64>, columns: &[Vec<f64>], rhs: Vec<f64>, lower: f64, upper: f64) -> Self {
        let p = rhs.len();
        assert_eq!(objective.len(), columns.len());
        let mut flat = Vec::with_capacity(columns.len() * p);
        for c in columns {
            assert_eq!(c.len(), p);
            flat.extend_from_slice(c);
        }
        Self {
            units: (0..objective.len()).collect(),
            objective,
            columns: flat,
            rhs,
            lower,
            upper,
        }
    }

    pub fn n(&self) -> usize {
        self.objective.len()
    }

    /// Number of moment rows.
    pub fn p(&self) -> usize {
        self.rhs.len()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.columns[i * p..(i + 1) * p]
    }

    /// Row j of the constraint matrix.
    pub fn constraint_row(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.column(i)[j]).collect()
    }

    /// `A z − rhs`.
    pub fn residual(&self, z: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.rhs.iter().map(|b| -b).collect();
        for (i, zi) in z.iter().enumerate() {
            for (rj, a) in r.iter_mut().zip(self.column(i)) {
                *rj += a * zi;
            }
        }
        r
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, z)| c * z).sum()
    }

    /// Lagrangian dual function at row multipliers `y` for the program with
    /// equality slack `eps`:
    ///
    /// `D(y) = Σ_k ext_k(y_k (rhs_k ± eps)) + Σ_i ext_i((c_i − y·a_i) z_i)`,
    ///
    /// with `ext` = max over the box for `Direction::Max` and min for
    /// `Direction::Min`. Weak duality gives `D(y) ≥ max` (resp. `≤ min`)
    /// for any y; equality certifies optimality.
    pub fn dual_value(&self, direction: Direction, eps: f64, y: &[f64]) -> f64 {
        let ext = |a: f64, b: f64| match direction {
            Direction::Max => a.max(b),
            Direction::Min => a.min(b),
        };
        let mut total = 0.0;
        for (&b, &yk) in self.rhs.iter().zip(y) {
            total += ext(yk * (b - eps), yk * (b + eps));
        }
        for i in 0..self.n() {
            let d = self.objective[i] - self.column(i).iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
            total += ext(d * self.lower, d * self.upper);
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub z: Vec<f64>,
    pub status: SolveStatus,
    /// Equality tolerance the solution satisfies.
    pub tolerance: f64,
    /// Row multipliers for the requested direction; see
    /// [`ArmLp::dual_value`].
    pub duals: Vec<f64>,
    pub iterations: usize,
}

/// Builds the program for one arm: γ_i = r̂_i / n_arm, objective γ_i Y_i,
/// columns γ_i φ(X_i), right-hand side the target feature mean.
pub fn build_arm_lp(
    src: &SourceDataset,
    rhat: &[f64],
    target_mean: &[f64],
    spec: &BasisSpec,
    arm: Arm,
    sens: &SensitivityParams,
) -> Result<ArmLp> {
    check_weights(src, rhat)?;
    let units = src.arm_indices(arm);
    if units.is_empty() {
        return Err(Error::EmptyArm(arm));
    }
    let p = spec.dim();
    if target_mean.len() != p {
        return Err(Error::InvalidBasis(format!(
            "target mean has length {}, basis has {p} features",
            target_mean.len()
        )));
    }
    let n_arm = units.len() as f64;
    let mut objective = Vec::with_capacity(units.len());
    let mut columns = Vec::with_capacity(units.len() * p);
    for &i in &units {
        let u = &src.units()[i];
        let gamma = rhat[i] / n_arm;
        objective.push(gamma * u.y);
        columns.extend(spec.expand(&u.x)?.into_iter().map(|v| gamma * v));
    }
    let (lower, upper) = sens.weight_box();
    Ok(ArmLp {
        objective,
        columns,
        rhs: target_mean.to_vec(),
        lower,
        upper,
        units,
    })
}

/// Optimizes one arm's program, relaxing the equality tolerance if needed.
pub fn solve_lp(lp: &ArmLp, direction: Direction, opts: &LpOptions) -> Result<LpSolution> {
    let sign = match direction {
        Direction::Max => 1.0,
        Direction::Min => -1.0,
    };
    let cost: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();
    let prob = Problem {
        objective: &cost,
        columns: &lp.columns,
        rhs: &lp.rhs,
        lower: lp.lower,
        upper: lp.upper,
    };

    let mut eps = opts.eps_feas;
    loop {
        match simplex::maximize(prob, eps, opts.max_iter) {
            Outcome::Optimal(opt) => {
                let status = if eps > opts.eps_feas {
                    SolveStatus::ToleranceRelaxed
                } else {
                    SolveStatus::Optimal
                };
                return Ok(LpSolution {
                    value: lp.value(&opt.z),
                    z: opt.z,
                    status,
                    tolerance: eps,
                    duals: opt.duals.into_iter().map(|y| sign * y).collect(),
                    iterations: opt.iterations,
                });
            }
            Outcome::IterationLimit(it) => return Err(Error::IterationLimit(it)),
            Outcome::Infeasible(min_infeasibility) => {
                if eps >= opts.max_eps || eps <= 0.0 {
                    return Err(Error::Infeasible {
                        tolerance: eps,
                        min_infeasibility,
                    });
                }
                eps = (eps * 2.0).min(opts.max_eps);
            }
        }
    }
}

/// Balanced interval from an already-computed r̂ and target feature mean.
pub fn solve_balanced_with_weights(
    src: &SourceDataset,
    rhat: &[f64],
    target_mean: &[f64],
    spec: &BasisSpec,
    sens: &SensitivityParams,
    opts: &LpOptions,
) -> Result<BoundsResult> {
    let treated = build_arm_lp(src, rhat, target_mean, spec, Arm::Treated, sens)?;
    let control = build_arm_lp(src, rhat, target_mean, spec, Arm::Control, sens)?;

    let t_max = solve_lp(&treated, Direction::Max, opts)?;
    let t_min = solve_lp(&treated, Direction::Min, opts)?;
    let c_max = solve_lp(&control, Direction::Max, opts)?;
    let c_min = solve_lp(&control, Direction::Min, opts)?;

    let scatter = |t: &LpSolution, c: &LpSolution| {
        let mut z = vec![1.0; src.len()];
        for (&i, &v) in treated.units.iter().zip(&t.z) {
            z[i] = v;
        }
        for (&i, &v) in control.units.iter().zip(&c.z) {
            z[i] = v;
        }
        z
    };
    let status = [&t_max, &t_min, &c_max, &c_min]
        .iter()
        .fold(SolveStatus::Optimal, |s, sol| s.worst(sol.status));

    Ok(BoundsResult {
        lower: t_min.value - c_max.value,
        upper: t_max.value - c_min.value,
        weights_lower: scatter(&t_min, &c_max),
        weights_upper: scatter(&t_max, &c_min),
        status,
    })
}

/// Balanced interval using the fitted balancing weights.
pub fn solve_balanced(
    src: &SourceDataset,
    tgt: &TargetDataset,
    fit: &DensityRatioFit,
    spec: &BasisSpec,
    sens: &SensitivityParams,
    opts: &LpOptions,
) -> Result<BoundsResult> {
    if tgt.is_empty() {
        return Err(Error::EmptyLocation("target"));
    }
    let rhat = weights(fit, src, spec)?;
    solve_balanced_with_weights(src, &rhat, fit.target_mean(), spec, sens, opts)
}
