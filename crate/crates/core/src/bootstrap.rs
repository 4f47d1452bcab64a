//! Percentile bootstrap for bound endpoints.
//!
//! Every replicate resamples both locations with replacement, refits the
//! density ratio and re-solves the bounds. Replicate `b` draws its indices
//! from a ChaCha8 generator seeded with `seed` on stream `b`, so results do
//! not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balanced::{solve_balanced, LpOptions};
use crate::basis::BasisSpec;
use crate::data::{BoundsResult, SensitivityParams, SourceDataset, TargetDataset};
use crate::density_ratio::{self, FitOptions};
use crate::error::{Error, Result};
use crate::unbalanced::solve_unbalanced;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Unbalanced,
    Balanced,
}

impl Estimator {
    pub const BOTH: [Estimator; 2] = [Estimator::Unbalanced, Estimator::Balanced];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Unbalanced => "unbalanced",
            Estimator::Balanced => "balanced",
        }
    }
}

/// Linear interpolation between order statistics (type 7). `q` in [0, 1].
pub fn percentile_type7(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Supplies the resampled row indices for one replicate.
pub trait ResampleSource: Sync {
    fn draw(&self, replicate: usize, n_source: usize, n_target: usize) -> (Vec<usize>, Vec<usize>);
}

#[derive(Debug, Clone, Copy)]
pub struct SeededResampler {
    pub seed: u64,
}

impl ResampleSource for SeededResampler {
    fn draw(&self, replicate: usize, n_source: usize, n_target: usize) -> (Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);
        let src = (0..n_source).map(|_| rng.random_range(0..n_source)).collect();
        let tgt = (0..n_target).map(|_| rng.random_range(0..n_target)).collect();
        (src, tgt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub level: f64,
    pub n_resamples: usize,
    pub lower_ci: f64,
    pub upper_ci: f64,
    pub replicates_lower: Vec<f64>,
    pub replicates_upper: Vec<f64>,
    pub seed: u64,
    pub failures: usize,
}

impl BootstrapResult {
    pub fn successes(&self) -> usize {
        self.replicates_lower.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
    /// Largest tolerated fraction of failed replicates.
    pub max_failure_rate: f64,
}

impl BootstrapOptions {
    pub fn new(n_resamples: usize, level: f64, seed: u64) -> Result<Self> {
        if n_resamples == 0 {
            return Err(Error::InvalidBootstrap("need at least one resample".into()));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidBootstrap(format!("level must be in (0, 1), got {level}")));
        }
        Ok(Self {
            n_resamples,
            level,
            seed,
            max_failure_rate: 0.05,
        })
    }
}

/// Bootstraps a statistic that returns several `(lower, upper)` pairs at
/// once, e.g. one per γ and estimator. Returns one result per pair.
pub fn bootstrap_intervals<R, F>(
    src: &SourceDataset,
    tgt: &TargetDataset,
    opts: &BootstrapOptions,
    resampler: &R,
    statistic: F,
) -> Result<Vec<BootstrapResult>>
where
    R: ResampleSource,
    F: Fn(&SourceDataset, &TargetDataset) -> Result<Vec<(f64, f64)>> + Sync,
{
    let outcomes: Vec<Option<Vec<(f64, f64)>>> = (0..opts.n_resamples)
        .into_par_iter()
        .map(|b| {
            let (si, ti) = resampler.draw(b, src.len(), tgt.len());
            statistic(&src.select(&si), &tgt.select(&ti)).ok()
        })
        .collect();

    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    if failures as f64 > opts.max_failure_rate * opts.n_resamples as f64 || failures == opts.n_resamples {
        return Err(Error::TooManyBootstrapFailures {
            failed: failures,
            total: opts.n_resamples,
        });
    }
    let ok: Vec<&Vec<(f64, f64)>> = outcomes.iter().flatten().collect();
    let k = ok[0].len();
    if ok.iter().any(|v| v.len() != k) {
        return Err(Error::InvalidBootstrap("statistic changed length between replicates".into()));
    }

    let alpha = (1.0 - opts.level) / 2.0;
    Ok((0..k)
        .map(|j| {
            let replicates_lower: Vec<f64> = ok.iter().map(|v| v[j].0).collect();
            let replicates_upper: Vec<f64> = ok.iter().map(|v| v[j].1).collect();
            BootstrapResult {
                level: opts.level,
                n_resamples: opts.n_resamples,
                lower_ci: percentile_type7(&replicates_lower, alpha),
                upper_ci: percentile_type7(&replicates_upper, 1.0 - alpha),
                replicates_lower,
                replicates_upper,
                seed: opts.seed,
                failures,
            }
        })
        .collect())
}

/// Point bounds for every (sensitivity, estimator) pair from a single
/// density-ratio fit, ordered sensitivity-major.
pub fn bounds_grid(
    src: &SourceDataset,
    tgt: &TargetDataset,
    spec: &BasisSpec,
    grid: &[SensitivityParams],
    estimators: &[Estimator],
    fit_opts: &FitOptions,
    lp_opts: &LpOptions,
) -> Result<Vec<BoundsResult>> {
    let fit = density_ratio::fit(src, tgt, spec, fit_opts)?;
    let rhat = density_ratio::weights(&fit, src, spec)?;
    let cells: Vec<(SensitivityParams, Estimator)> = grid
        .iter()
        .flat_map(|s| estimators.iter().map(move |e| (*s, *e)))
        .collect();
    cells
        .par_iter()
        .map(|(sens, est)| match est {
            Estimator::Unbalanced => solve_unbalanced(src, &rhat, sens),
            Estimator::Balanced => solve_balanced(src, tgt, &fit, spec, sens, lp_opts),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn bootstrap_bounds(
    src: &SourceDataset,
    tgt: &TargetDataset,
    spec: &BasisSpec,
    sens: &SensitivityParams,
    estimator: Estimator,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    let opts = BootstrapOptions::new(n_resamples, level, seed)?;
    let fit_opts = FitOptions::default();
    let lp_opts = LpOptions::default();
    let mut out = bootstrap_intervals(src, tgt, &opts, &SeededResampler { seed }, |s, t| {
        let b = bounds_grid(s, t, spec, &[*sens], &[estimator], &fit_opts, &lp_opts)?;
        Ok(vec![(b[0].lower, b[0].upper)])
    })?;
    Ok(out.remove(0))
}
