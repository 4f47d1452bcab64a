//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transport_bounds::balanced::{solve_balanced, solve_lp, ArmLp, Direction, LpOptions};
use transport_bounds::basis::BasisSpec;
use transport_bounds::bootstrap::{bootstrap_bounds, percentile_type7, Estimator};
use transport_bounds::data::hajek_difference;
use transport_bounds::density_ratio::{self, balance_report, BalancingObjective, DensityRatioFit, FitOptions};
use transport_bounds::simulation::{generate, split, DgpConfig, SimulatedPopulation};
use transport_bounds::{
    solve_unbalanced, Arm, SensitivityParams, SourceDataset, SourceUnit, TargetDataset,
};
use transport_bounds_cli::commands::{cmd_simulate, cmd_sweep};
use transport_bounds_cli::config::RunConfig;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

const GRID_A: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
const GRID_B: [f64; 8] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

struct Replicate {
    pop: SimulatedPopulation,
    src: SourceDataset,
    tgt: TargetDataset,
    truth: f64,
}

fn replicate(cfg: DgpConfig) -> Replicate {
    let pop = generate(&cfg).expect("valid config");
    let (src, tgt, oracle) = split(&pop).expect("both locations populated");
    Replicate {
        truth: oracle.target_mean_tau,
        pop,
        src,
        tgt,
    }
}

fn identity() -> BasisSpec {
    BasisSpec::identity(4)
}

fn fit_and_weights(r: &Replicate, spec: &BasisSpec) -> Result<(DensityRatioFit, Vec<f64>), String> {
    let fit = density_ratio::fit(&r.src, &r.tgt, spec, &FitOptions::default()).map_err(|e| e.to_string())?;
    let w = density_ratio::weights(&fit, &r.src, spec).map_err(|e| e.to_string())?;
    Ok((fit, w))
}

fn sens(log_gamma: f64, m: f64) -> SensitivityParams {
    SensitivityParams::from_log_gamma(log_gamma, m).expect("valid sensitivity")
}

fn balance_exactness() -> Verdict {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (name, make) in [("A", DgpConfig::setup_a as fn(u64) -> DgpConfig), ("B", DgpConfig::setup_b)] {
        for seed in 0..10 {
            let r = replicate(make(seed));
            match fit_and_weights(&r, &identity()) {
                Ok((fit, _)) => {
                    let report = balance_report(&fit, &r.src, &r.tgt, &identity()).expect("report");
                    worst = worst.max(report.max_abs_residual());
                }
                Err(e) => failures.push(format!("{name}/{seed}: {e}")),
            }
        }
    }
    verdict(
        failures.is_empty() && worst <= 1e-8,
        format!("20 replicates, max |residual| {worst:.2e} (limit 1e-8), fit failures {failures:?}"),
    )
}

fn unit_gamma_degeneracy() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        for cfg in [DgpConfig::setup_a(seed), DgpConfig::setup_b(seed)] {
            let r = replicate(cfg);
            let (fit, w) = match fit_and_weights(&r, &identity()) {
                Ok(v) => v,
                Err(e) => return verdict(false, format!("fit failed: {e}")),
            };
            let hajek = hajek_difference(&r.src, &w).expect("hajek");
            let s = sens(0.0, 1.0);
            let u = solve_unbalanced(&r.src, &w, &s).expect("unbalanced");
            let b = solve_balanced(&r.src, &r.tgt, &fit, &identity(), &s, &LpOptions::default()).expect("balanced");
            for v in [u.lower, u.upper, b.lower, b.upper] {
                worst = worst.max((v - hajek).abs());
            }
        }
    }
    verdict(worst <= 1e-9, format!("10 replicates, max |bound - Hajek| {worst:.2e} (limit 1e-9)"))
}

/// k×k Gaussian elimination with partial pivoting.
fn gauss(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let k = rhs.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[piv][c].abs() < 1e-10 {
            return None;
        }
        m.swap(c, piv);
        rhs.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..k {
                    m[r][j] -= f * m[c][j];
                }
                rhs[r] -= f * rhs[c];
            }
        }
    }
    Some((0..k).map(|i| rhs[i] / m[i][i]).collect())
}

/// Best objective over all basic feasible points of the arm program.
fn vertex_optimum(lp: &ArmLp, eps: f64, dir: Direction) -> Option<f64> {
    let (n, p) = (lp.n(), lp.p());
    let rows: Vec<Vec<f64>> = (0..p).map(|j| lp.constraint_row(j)).collect();
    let better = |a: f64, b: f64| if dir == Direction::Max { a > b } else { a < b };
    let mut best: Option<f64> = None;
    for pattern in 0..3usize.pow(p as u32) {
        let active: Vec<(usize, f64)> = (0..p)
            .filter_map(|j| match (pattern / 3usize.pow(j as u32)) % 3 {
                1 => Some((j, lp.rhs[j] - eps)),
                2 => Some((j, lp.rhs[j] + eps)),
                _ => None,
            })
            .collect();
        let k = active.len();
        for free_mask in (0..1usize << n).filter(|m| m.count_ones() as usize == k) {
            let free: Vec<usize> = (0..n).filter(|i| free_mask >> i & 1 == 1).collect();
            let fixed: Vec<usize> = (0..n).filter(|i| free_mask >> i & 1 == 0).collect();
            for bounds in 0..1usize << fixed.len() {
                let mut z = vec![0.0; n];
                for (t, &i) in fixed.iter().enumerate() {
                    z[i] = if bounds >> t & 1 == 1 { lp.upper } else { lp.lower };
                }
                if k > 0 {
                    let m = active.iter().map(|&(j, _)| free.iter().map(|&i| rows[j][i]).collect()).collect();
                    let rhs = active
                        .iter()
                        .map(|&(j, t)| t - fixed.iter().map(|&i| rows[j][i] * z[i]).sum::<f64>())
                        .collect();
                    let Some(sol) = gauss(m, rhs) else { continue };
                    for (&i, v) in free.iter().zip(sol) {
                        z[i] = v;
                    }
                }
                let feasible = z.iter().all(|&v| v >= lp.lower - 1e-9 && v <= lp.upper + 1e-9)
                    && lp.residual(&z).iter().all(|r| r.abs() <= eps + 1e-9);
                if feasible {
                    let v = lp.value(&z);
                    if best.is_none_or(|b| better(v, b)) {
                        best = Some(v);
                    }
                }
            }
        }
    }
    best
}

fn lp_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut worst_lp = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=8usize);
        let p = rng.random_range(1..=3usize.min(n));
        let gamma = rng.random_range(1.05..3.0f64);
        let (lo, hi) = (1.0 / gamma, gamma);
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let g = rng.random_range(0.05..0.5);
                std::iter::once(g).chain((1..p).map(|_| g * rng.random_range(-1.0..1.0))).collect()
            })
            .collect();
        let z0: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        let rhs = (0..p).map(|j| cols.iter().zip(&z0).map(|(c, z)| c[j] * z).sum()).collect();
        let obj = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lp = ArmLp::new(obj, &cols, rhs, lo, hi);
        for dir in [Direction::Max, Direction::Min] {
            let sol = match solve_lp(&lp, dir, &LpOptions::default()) {
                Ok(s) => s,
                Err(e) => return verdict(false, format!("solver error on feasible instance: {e}")),
            };
            let Some(oracle) = vertex_optimum(&lp, sol.tolerance, dir) else {
                return verdict(false, "oracle found no vertex".into());
            };
            worst_lp = worst_lp.max((sol.value - oracle).abs());
        }
    }

    let mut worst_unb = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=10usize);
        let mut units: Vec<SourceUnit> = (0..n)
            .map(|_| SourceUnit::new(vec![0.0], rng.random_bool(0.5), rng.random_range(-10.0..10.0)))
            .collect();
        units[0].treated = true;
        units[1].treated = false;
        let rhat: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let gamma = rng.random_range(1.0..4.0f64);
        let src = SourceDataset::new(units.clone(), 0.5).expect("dataset");
        let res = solve_unbalanced(&src, &rhat, &SensitivityParams::with_gamma(gamma).expect("gamma")).expect("solve");
        let n1 = units.iter().filter(|u| u.treated).count() as f64;
        let n0 = n as f64 - n1;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for mask in 0..1usize << n {
            let v: f64 = units
                .iter()
                .zip(&rhat)
                .enumerate()
                .map(|(i, (u, r))| {
                    let z = if mask >> i & 1 == 1 { gamma } else { 1.0 / gamma };
                    if u.treated { z * r * u.y / n1 } else { -z * r * u.y / n0 }
                })
                .sum();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst_unb = worst_unb.max((res.lower - lo).abs()).max((res.upper - hi).abs());
    }
    verdict(
        worst_lp <= 1e-9 && worst_unb <= 1e-12,
        format!(
            "200 LP instances x 2 directions, max gap {worst_lp:.2e} (limit 1e-9); \
             200 box instances, max gap {worst_unb:.2e} (limit 1e-12)"
        ),
    )
}

struct SweepStats {
    cells: usize,
    nest_violations: usize,
    strict_shorter: usize,
    positive_cells: usize,
    monotone_violations: usize,
    fit_failures: Vec<String>,
}

fn nesting_and_monotonicity_runs() -> &'static SweepStats {
    static STATS: OnceLock<SweepStats> = OnceLock::new();
    STATS.get_or_init(|| {
        let mut s = SweepStats {
            cells: 0,
            nest_violations: 0,
            strict_shorter: 0,
            positive_cells: 0,
            monotone_violations: 0,
            fit_failures: Vec::new(),
        };
        for seed in 0..100u64 {
            let (cfg, grid): (DgpConfig, &[f64]) = if seed % 2 == 0 {
                (DgpConfig::setup_a(1000 + seed), &GRID_A)
            } else {
                (DgpConfig::setup_b(1000 + seed), &GRID_B)
            };
            let r = replicate(cfg);
            let (fit, w) = match fit_and_weights(&r, &identity()) {
                Ok(v) => v,
                Err(e) => {
                    s.fit_failures.push(format!("seed {seed}: {e}"));
                    continue;
                }
            };
            let mut prev: Option<[f64; 4]> = None;
            for &g in grid {
                let sp = sens(g, 1.0);
                let u = solve_unbalanced(&r.src, &w, &sp).expect("unbalanced");
                let b = solve_balanced(&r.src, &r.tgt, &fit, &identity(), &sp, &LpOptions::default()).expect("balanced");
                s.cells += 1;
                if b.lower < u.lower - 1e-6 || b.upper > u.upper + 1e-6 {
                    s.nest_violations += 1;
                }
                if g > 0.0 {
                    s.positive_cells += 1;
                    if b.width() < u.width() {
                        s.strict_shorter += 1;
                    }
                }
                let now = [u.lower, u.upper, b.lower, b.upper];
                if let Some(p) = prev {
                    let widened = now[0] <= p[0] + 1e-9 && now[1] >= p[1] - 1e-9 && now[2] <= p[2] + 1e-9 && now[3] >= p[3] - 1e-9;
                    s.monotone_violations += usize::from(!widened);
                }
                prev = Some(now);
            }
        }
        s
    })
}

fn nesting() -> Verdict {
    let s = nesting_and_monotonicity_runs();
    let share = s.strict_shorter as f64 / s.positive_cells.max(1) as f64;
    verdict(
        s.fit_failures.is_empty() && s.nest_violations == 0 && share >= 0.95,
        format!(
            "{} cells from 100 replicates: {} nesting violations, strictly shorter in {:.1}% of gamma>0 cells (need 95%), fit failures {:?}",
            s.cells,
            s.nest_violations,
            100.0 * share,
            s.fit_failures
        ),
    )
}

fn monotonicity() -> Verdict {
    let s = nesting_and_monotonicity_runs();
    verdict(
        s.fit_failures.is_empty() && s.monotone_violations == 0,
        format!("{} grid steps checked, {} violations", s.cells - 100, s.monotone_violations),
    )
}

struct Coverage {
    replicates: usize,
    at_zero: usize,
    at_point_three: usize,
    coarse: usize,
    max_m: f64,
    failures: Vec<String>,
}

/// Largest e^{g}/e^{g_φ} over the population for the intercept-only basis:
/// g_φ is constant and E0[r(X)] = 1 pins it to zero.
fn misspecification_ratio(pop: &SimulatedPopulation) -> f64 {
    pop.units
        .iter()
        .map(|u| {
            let r = pop.oracle_density_ratio(&u.x);
            r.max(1.0 / r)
        })
        .fold(1.0, f64::max)
}

fn coverage_runs() -> &'static Coverage {
    static COV: OnceLock<Coverage> = OnceLock::new();
    COV.get_or_init(|| {
        let mut c = Coverage {
            replicates: 200,
            at_zero: 0,
            at_point_three: 0,
            coarse: 0,
            max_m: 1.0,
            failures: Vec::new(),
        };
        let intercept = BasisSpec::intercept_only(4);
        for seed in 0..200u64 {
            let r = replicate(DgpConfig::setup_a(5000 + seed).with_n_total(4000));
            let covers = |b: &transport_bounds::BoundsResult| b.lower <= r.truth && r.truth <= b.upper;
            match fit_and_weights(&r, &identity()) {
                Ok((fit, _)) => {
                    for (g, slot) in [(0.0, &mut c.at_zero), (0.3, &mut c.at_point_three)] {
                        let b = solve_balanced(&r.src, &r.tgt, &fit, &identity(), &sens(g, 1.0), &LpOptions::default());
                        *slot += usize::from(b.is_ok_and(|b| covers(&b)));
                    }
                }
                Err(e) => c.failures.push(format!("identity seed {seed}: {e}")),
            }
            let m = misspecification_ratio(&r.pop);
            c.max_m = c.max_m.max(m);
            match fit_and_weights(&r, &intercept) {
                Ok((fit, _)) => {
                    let s = SensitivityParams::new(r.pop.config.gamma_star, m).expect("sensitivity");
                    let b = solve_balanced(&r.src, &r.tgt, &fit, &intercept, &s, &LpOptions::default());
                    c.coarse += usize::from(b.is_ok_and(|b| covers(&b)));
                }
                Err(e) => c.failures.push(format!("intercept seed {seed}: {e}")),
            }
        }
        c
    })
}

fn coverage_at_true_gamma() -> Verdict {
    let c = coverage_runs();
    let hi = c.at_point_three as f64 / c.replicates as f64;
    let lo = c.at_zero as f64 / c.replicates as f64;
    verdict(
        hi >= 0.9 && lo < 0.6,
        format!(
            "Setup A, n=4000, {} replicates: coverage {:.1}% at gamma=0.3 (need 90%), {:.1}% at gamma=0 (need < 60%), fit failures {}",
            c.replicates,
            100.0 * hi,
            100.0 * lo,
            c.failures.len()
        ),
    )
}

fn coverage_with_coarse_basis() -> Verdict {
    let c = coverage_runs();
    let share = c.coarse as f64 / c.replicates as f64;
    verdict(
        share >= 0.9,
        format!(
            "intercept-only basis, box Gamma*·M with per-replicate oracle M (max {:.1}): coverage {:.1}% (need 90%)",
            c.max_m,
            100.0 * share
        ),
    )
}

fn gradient_check() -> Verdict {
    let r = replicate(DgpConfig::setup_b(77));
    let spec = identity();
    let rows: Vec<Vec<f64>> = r.tgt.units().iter().map(|u| u.x.clone()).collect();
    let target_mean = spec.expand_dataset(&rows).expect("features").column_means();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for arm in Arm::BOTH {
        let arm_rows: Vec<Vec<f64>> = r.src.arm_indices(arm).iter().map(|&i| r.src.units()[i].x.clone()).collect();
        let feats = spec.expand_dataset(&arm_rows).expect("features");
        let obj = BalancingObjective::new(&feats, &target_mean);
        for _ in 0..5 {
            let beta: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = obj.gradient(&beta);
            let h = 1e-5;
            let fd: Vec<f64> = (0..beta.len())
                .map(|k| {
                    let mut up = beta.clone();
                    let mut dn = beta.clone();
                    up[k] += h;
                    dn[k] -= h;
                    (obj.value(&up) - obj.value(&dn)) / (2.0 * h)
                })
                .collect();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = fd.iter().zip(&g).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&diff) / norm(&g));
        }
    }
    verdict(worst <= 1e-5, format!("10 points over both arms, max relative error {worst:.2e} (limit 1e-5)"))
}

fn bootstrap_contract() -> Verdict {
    let seq: Vec<f64> = (1..=1000).map(f64::from).collect();
    let lo = percentile_type7(&seq, 0.025);
    let hi = percentile_type7(&seq, 0.975);
    let pct_ok = (lo - 25.975).abs() < 1e-9 && (hi - 975.025).abs() < 1e-9;

    let r = replicate(DgpConfig::setup_a(2024));
    let s = sens(0.2, 1.0);
    let start = Instant::now();
    let run = || bootstrap_bounds(&r.src, &r.tgt, &identity(), &s, Estimator::Balanced, 1000, 0.95, 99);
    let (a, b) = match (run(), run()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return verdict(false, format!("bootstrap failed: {e}")),
    };
    let per_run = start.elapsed() / 2;
    let same = serde_json::to_vec(&a).expect("json") == serde_json::to_vec(&b).expect("json");
    let median = |v: &[f64]| percentile_type7(v, 0.5);
    let widened = a.lower_ci <= median(&a.replicates_lower) && a.upper_ci >= median(&a.replicates_upper);
    let accounted = a.successes() + a.failures == a.n_resamples;
    verdict(
        pct_ok && same && widened && accounted && per_run < Duration::from_secs(300),
        format!(
            "type-7 percentiles {lo} / {hi}; 1000-resample run on n_total=1000 took {:.1}s, \
             byte-identical rerun: {same}, CI [{:.3}, {:.3}], failures {}",
            per_run.as_secs_f64(),
            a.lower_ci,
            a.upper_ci,
            a.failures
        ),
    )
}

fn figure_shape() -> Verdict {
    let dir = std::env::temp_dir().join(format!("transport-bounds-acceptance-{}", std::process::id()));
    let mut width = vec![[0.0f64; 2]; GRID_A.len()];
    let seeds = 20;
    for seed in 0..seeds {
        let data = dir.join(format!("data{seed}"));
        if let Err(e) = cmd_simulate(&DgpConfig::setup_a(seed), &data) {
            return verdict(false, format!("simulate failed: {e}"));
        }
        let cfg = RunConfig {
            source: data.join("source.csv"),
            target: data.join("target.csv"),
            basis: "identity".into(),
            gamma_grid: GRID_A.to_vec(),
            m: 1.0,
            bootstrap: 0,
            level: 0.95,
            seed,
            out: dir.join(format!("sweep{seed}")),
            propensity: 0.5,
        };
        if let Err(e) = cmd_sweep(&cfg) {
            return verdict(false, format!("sweep failed: {e}"));
        }
        let text = fs::read_to_string(cfg.out.join("sweep.csv")).expect("sweep table");
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let g: f64 = f[0].parse().expect("gamma");
            let k = GRID_A.iter().position(|&x| (x - g).abs() < 1e-12).expect("grid value");
            let est = usize::from(f[1] == "balanced");
            let v: f64 = f[3].parse().expect("value");
            width[k][est] += if f[2] == "upper" { v } else { -v } / seeds as f64;
        }
    }
    let _ = fs::remove_dir_all(&dir);
    let ok = GRID_A.iter().zip(&width).all(|(&g, w)| g == 0.0 || w[1] < w[0]);
    let summary: Vec<String> = GRID_A
        .iter()
        .zip(&width)
        .map(|(g, w)| format!("{g}: {:.2} vs {:.2}", w[1], w[0]))
        .collect();
    verdict(ok, format!("mean width balanced vs unbalanced over {seeds} seeds by gamma: {}", summary.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict, Duration); 10] = [
        ("balance exactness", balance_exactness, Duration::from_secs(1)),
        ("unit-Gamma degeneracy", unit_gamma_degeneracy, Duration::from_secs(1)),
        ("LP oracle equivalence", lp_oracle_equivalence, Duration::from_secs(30)),
        ("nesting", nesting, Duration::from_secs(120)),
        ("monotonicity in Gamma", monotonicity, Duration::from_secs(120)),
        ("coverage at gamma >= gamma*", coverage_at_true_gamma, Duration::from_secs(600)),
        ("coverage under coarse basis", coverage_with_coarse_basis, Duration::from_secs(600)),
        ("gradient check", gradient_check, Duration::from_secs(1)),
        ("bootstrap determinism and percentiles", bootstrap_contract, Duration::from_secs(600)),
        ("figure shape end to end", figure_shape, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let in_budget = took <= *budget;
        let pass = v.pass && in_budget;
        failed += usize::from(!pass);
        println!(
            "[{}] {:>2}. {name}: {} ({:.2}s of {}s budget{})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            took.as_secs_f64(),
            budget.as_secs(),
            if in_budget { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
