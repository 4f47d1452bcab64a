use std::fs;
use std::path::Path;

use serde_json::json;
use transport_bounds::balanced::LpOptions;
use transport_bounds::basis::BasisSpec;
use transport_bounds::bootstrap::{
    bootstrap_intervals, bounds_grid, percentile_type7, BootstrapOptions, BootstrapResult, Estimator,
    SeededResampler,
};
use transport_bounds::density_ratio::{self, BalanceReport, FitOptions};
use transport_bounds::simulation::{self, DgpConfig};
use transport_bounds::{
    validate_pair, BoundsResult, SensitivityParams, SolveStatus, SourceDataset, TargetDataset,
};

use crate::config::RunConfig;
use crate::io::{self, fmt_f64};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub gamma: f64,
    pub estimator: Estimator,
    pub bounds: BoundsResult,
    pub bootstrap: Option<BootstrapResult>,
}

/// Bounds for every γ and estimator plus fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub grid: Vec<f64>,
    /// γ-major, estimators in [`Estimator::BOTH`] order.
    pub cells: Vec<Cell>,
    pub balance: BalanceReport,
    pub warnings: Vec<String>,
    pub bootstrap_failures: Option<usize>,
    pub n_source: usize,
    pub n_target: usize,
}

impl Analysis {
    pub fn cell(&self, gamma_index: usize, estimator: Estimator) -> &Cell {
        let k = Estimator::BOTH.iter().position(|e| *e == estimator).unwrap_or(0);
        &self.cells[gamma_index * Estimator::BOTH.len() + k]
    }
}

pub fn load(cfg: &RunConfig) -> Result<(SourceDataset, TargetDataset, Vec<String>), CliError> {
    let src = io::read_source(&cfg.source, cfg.propensity)?;
    let tgt = io::read_target(&cfg.target)?;
    let report = validate_pair(&src, &tgt);
    let warnings = report.warnings().map(|w| w.to_string()).collect();
    report.into_result()?;
    Ok((src, tgt, warnings))
}

pub fn analyze(cfg: &RunConfig) -> Result<Analysis, CliError> {
    let (src, tgt, warnings) = load(cfg)?;
    let spec = BasisSpec::parse(&cfg.basis, src.dim())?;
    let grid = cfg.sorted_grid();
    let sens: Vec<SensitivityParams> = grid
        .iter()
        .map(|&g| SensitivityParams::from_log_gamma(g, cfg.m))
        .collect::<Result<_, _>>()?;
    let fit_opts = FitOptions::default();
    let lp_opts = LpOptions::default();

    let fit = density_ratio::fit(&src, &tgt, &spec, &fit_opts)?;
    let balance = density_ratio::balance_report(&fit, &src, &tgt, &spec)?;
    let points = bounds_grid(&src, &tgt, &spec, &sens, &Estimator::BOTH, &fit_opts, &lp_opts)?;

    let boot = if cfg.bootstrap > 0 {
        let opts = BootstrapOptions::new(cfg.bootstrap, cfg.level, cfg.seed)?;
        let resampler = SeededResampler { seed: cfg.seed };
        let results = bootstrap_intervals(&src, &tgt, &opts, &resampler, |s, t| {
            let b = bounds_grid(s, t, &spec, &sens, &Estimator::BOTH, &fit_opts, &lp_opts)?;
            Ok(b.iter().map(|r| (r.lower, r.upper)).collect())
        })?;
        Some(results)
    } else {
        None
    };
    let bootstrap_failures = boot.as_ref().map(|b| b.first().map_or(0, |r| r.failures));

    let mut boot_iter = boot.map(|v| v.into_iter());
    let mut cells = Vec::with_capacity(points.len());
    let mut point_iter = points.into_iter();
    for &gamma in &grid {
        for estimator in Estimator::BOTH {
            cells.push(Cell {
                gamma,
                estimator,
                bounds: point_iter.next().expect("one result per cell"),
                bootstrap: boot_iter.as_mut().and_then(Iterator::next),
            });
        }
    }
    Ok(Analysis {
        grid,
        cells,
        balance,
        warnings,
        bootstrap_failures,
        n_source: src.len(),
        n_target: tgt.len(),
    })
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_balance(dir: &Path, report: &BalanceReport) -> Result<(), CliError> {
    let header = ["arm", "feature", "weighted_source_mean", "target_mean", "residual", "pass"].map(String::from);
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.arm.name().to_owned(),
                r.feature.clone(),
                fmt_f64(r.weighted_source_mean),
                fmt_f64(r.target_mean),
                fmt_f64(r.residual),
                r.pass.to_string(),
            ]
        })
        .collect();
    io::write_rows(dir.join("balance.csv"), &header, &rows)
}

fn run_manifest(command: &str, cfg: &RunConfig, a: &Analysis) -> serde_json::Value {
    let fit = FitOptions::default();
    let lp = LpOptions::default();
    let statuses: Vec<serde_json::Value> = a
        .cells
        .iter()
        .map(|c| json!({"gamma": c.gamma, "estimator": c.estimator.name(), "status": c.bounds.status.as_str()}))
        .collect();
    json!({
        "tool": "transport-bounds",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "inputs": {"source": cfg.source, "target": cfg.target, "n_source": a.n_source, "n_target": a.n_target},
        "basis": cfg.basis,
        "gamma_grid": a.grid,
        "m": cfg.m,
        "propensity": cfg.propensity,
        "seed": cfg.seed,
        "bootstrap": {
            "n_resamples": cfg.bootstrap,
            "level": cfg.level,
            "failures": a.bootstrap_failures,
            "rng": "ChaCha8, stream = replicate index",
            "percentile": "type 7",
        },
        "tolerances": {
            "balance_tol": fit.balance_tol,
            "fit_max_iter": fit.max_iter,
            "max_condition": fit.max_condition,
            "divergence_limit": fit.divergence_limit,
            "lp_eps_feas": lp.eps_feas,
            "lp_max_eps": lp.max_eps,
            "lp_max_iter": lp.max_iter,
        },
        "balance_max_abs_residual": a.balance.max_abs_residual(),
        "statuses": statuses,
        "warnings": a.warnings,
    })
}

/// Writes `bounds.csv` (one row per γ), `balance.csv` and `manifest.json`.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<Analysis, CliError> {
    let a = analyze(cfg)?;
    prepare_out(&cfg.out)?;
    let with_ci = cfg.bootstrap > 0;
    let mut header: Vec<String> = ["gamma", "unbalanced_lower", "unbalanced_upper", "balanced_lower", "balanced_upper"]
        .map(String::from)
        .to_vec();
    if with_ci {
        header.extend(
            ["unbalanced_ci_lo", "unbalanced_ci_hi", "balanced_ci_lo", "balanced_ci_hi"].map(String::from),
        );
    }
    header.push("status".into());
    let rows: Vec<Vec<String>> = (0..a.grid.len())
        .map(|g| {
            let u = a.cell(g, Estimator::Unbalanced);
            let b = a.cell(g, Estimator::Balanced);
            let mut row = vec![
                fmt_f64(a.grid[g]),
                fmt_f64(u.bounds.lower),
                fmt_f64(u.bounds.upper),
                fmt_f64(b.bounds.lower),
                fmt_f64(b.bounds.upper),
            ];
            if with_ci {
                for c in [u, b] {
                    let r = c.bootstrap.as_ref().expect("bootstrap enabled");
                    row.push(fmt_f64(r.lower_ci));
                    row.push(fmt_f64(r.upper_ci));
                }
            }
            row.push(u.bounds.status.worst(b.bounds.status).as_str().to_owned());
            row
        })
        .collect();
    io::write_rows(cfg.out.join("bounds.csv"), &header, &rows)?;
    write_balance(&cfg.out, &a.balance)?;
    io::write_json(cfg.out.join("manifest.json"), &run_manifest("estimate", cfg, &a))?;
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub estimator: Estimator,
    /// "lower" or "upper".
    pub side: &'static str,
    pub value: f64,
    pub ci: Option<(f64, f64)>,
    pub status: SolveStatus,
}

/// Long-format rows sorted by γ, estimator name, then side. Each row's CI is
/// the percentile interval of that endpoint's replicates, so the interval
/// CI is `[ci_lo of lower, ci_hi of upper]`.
pub fn sweep_rows(a: &Analysis, level: f64) -> Vec<SweepRow> {
    let alpha = (1.0 - level) / 2.0;
    let mut rows = Vec::with_capacity(a.cells.len() * 2);
    for c in &a.cells {
        for (side, value, reps) in [
            ("lower", c.bounds.lower, c.bootstrap.as_ref().map(|b| &b.replicates_lower)),
            ("upper", c.bounds.upper, c.bootstrap.as_ref().map(|b| &b.replicates_upper)),
        ] {
            rows.push(SweepRow {
                gamma: c.gamma,
                estimator: c.estimator,
                side,
                value,
                ci: reps.map(|r| (percentile_type7(r, alpha), percentile_type7(r, 1.0 - alpha))),
                status: c.bounds.status,
            });
        }
    }
    rows.sort_by(|x, y| {
        x.gamma
            .total_cmp(&y.gamma)
            .then(x.estimator.name().cmp(y.estimator.name()))
            .then(x.side.cmp(y.side))
    });
    rows
}

/// Writes `sweep.csv` (gamma, estimator, side, value, ci_lo, ci_hi),
/// `balance.csv` and `manifest.json`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let a = analyze(cfg)?;
    prepare_out(&cfg.out)?;
    let rows = sweep_rows(&a, cfg.level);
    let header = ["gamma", "estimator", "side", "value", "ci_lo", "ci_hi"].map(String::from);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let (lo, hi) = r.ci.map_or((String::new(), String::new()), |(l, h)| (fmt_f64(l), fmt_f64(h)));
            vec![fmt_f64(r.gamma), r.estimator.name().into(), r.side.into(), fmt_f64(r.value), lo, hi]
        })
        .collect();
    io::write_rows(cfg.out.join("sweep.csv"), &header, &table)?;
    write_balance(&cfg.out, &a.balance)?;
    io::write_json(cfg.out.join("manifest.json"), &run_manifest("sweep", cfg, &a))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub n_source: usize,
    pub n_target: usize,
    pub target_mean_tau: f64,
}

/// Writes `source.csv`, `target.csv`, `oracle.csv` and `manifest.json`.
pub fn cmd_simulate(cfg: &DgpConfig, out: &Path) -> Result<SimulateSummary, CliError> {
    let pop = simulation::generate(cfg)?;
    let (src, tgt, oracle) = simulation::split(&pop).map_err(|e| {
        CliError::Data(format!("{e}; increase n_total or change the seed"))
    })?;
    prepare_out(out)?;
    io::write_source(&out.join("source.csv"), &src)?;
    io::write_target(&out.join("target.csv"), &tgt)?;

    let header = ["location", "row", "u", "tau", "z_star", "density_ratio"].map(String::from);
    let mut rows = Vec::with_capacity(pop.units.len());
    for (location, units, xs) in [
        ("source", &oracle.source, src.units().iter().map(|u| &u.x).collect::<Vec<_>>()),
        ("target", &oracle.target, tgt.units().iter().map(|u| &u.x).collect::<Vec<_>>()),
    ] {
        for (i, (o, x)) in units.iter().zip(xs).enumerate() {
            rows.push(vec![
                location.to_owned(),
                (i + 1).to_string(),
                fmt_f64(o.u),
                fmt_f64(o.tau),
                fmt_f64(o.z_star),
                fmt_f64(pop.oracle_density_ratio(x)),
            ]);
        }
    }
    io::write_rows(out.join("oracle.csv"), &header, &rows)?;

    let manifest = json!({
        "tool": "transport-bounds",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "simulate",
        "config": cfg,
        "log_gamma_star": cfg.log_gamma_star(),
        "mu": cfg.mu,
        "n_source": src.len(),
        "n_target": tgt.len(),
        "target_share": pop.target_share,
        "target_mean_tau": oracle.target_mean_tau,
        "rng": "ChaCha8 seeded with config.seed",
    });
    io::write_json(out.join("manifest.json"), &manifest)?;
    Ok(SimulateSummary {
        n_source: src.len(),
        n_target: tgt.len(),
        target_mean_tau: oracle.target_mean_tau,
    })
}
