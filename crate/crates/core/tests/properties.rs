use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transport_bounds::balanced::{build_arm_lp, solve_balanced, LpOptions};
use transport_bounds::basis::BasisSpec;
use transport_bounds::density_ratio::{self, BalancingObjective, FitOptions};
use transport_bounds::simulation::{generate, split, DgpConfig};
use transport_bounds::{solve_unbalanced, Arm, SensitivityParams, SourceDataset, SourceUnit, TargetDataset};

fn replicate(setup_b: bool, seed: u64, n: usize) -> (SourceDataset, TargetDataset) {
    let cfg = if setup_b { DgpConfig::setup_b(seed) } else { DgpConfig::setup_a(seed) };
    let pop = generate(&cfg.with_n_total(n)).unwrap();
    let (s, t, _) = split(&pop).unwrap();
    (s, t)
}

#[test]
fn gradient_matches_central_differences() {
    let (src, tgt) = replicate(false, 3, 1000);
    let spec = BasisSpec::identity(4);
    let target_mean = spec.expand_dataset(&tgt.units().iter().map(|u| u.x.clone()).collect::<Vec<_>>()).unwrap().column_means();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for arm in Arm::BOTH {
        let rows: Vec<Vec<f64>> = src.arm_indices(arm).iter().map(|&i| src.units()[i].x.clone()).collect();
        let feats = spec.expand_dataset(&rows).unwrap();
        let obj = BalancingObjective::new(&feats, &target_mean);
        for _ in 0..5 {
            let beta: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = obj.gradient(&beta);
            for k in 0..beta.len() {
                let h = 1e-5;
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
                assert!(rel <= 1e-5, "{arm} coord {k}: analytic {} vs fd {fd}", g[k]);
            }
        }
    }
}

#[test]
fn setup_b_features_are_bounded() {
    let (src, tgt) = replicate(true, 8, 1000);
    let spec = BasisSpec::identity(4).with_bound(1.0).unwrap();
    let fit = density_ratio::fit(&src, &tgt, &spec, &FitOptions::default()).unwrap();
    assert_eq!(fit.within_declared_bound, Some(true));
    assert!(fit.feature_sup <= 1.0);
}

#[test]
fn unit_weights_are_feasible_for_balanced_program() {
    let (src, tgt) = replicate(true, 4, 1000);
    let spec = BasisSpec::identity(4);
    let fit = density_ratio::fit(&src, &tgt, &spec, &FitOptions::default()).unwrap();
    let rhat = density_ratio::weights(&fit, &src, &spec).unwrap();
    let sens = SensitivityParams::from_log_gamma(0.3, 1.0).unwrap();
    for arm in Arm::BOTH {
        let lp = build_arm_lp(&src, &rhat, fit.target_mean(), &spec, arm, &sens).unwrap();
        let ones = vec![1.0; lp.n()];
        assert!(lp.residual(&ones).iter().all(|r| r.abs() <= 1e-7), "{arm}");
    }
}

fn sweep(src: &SourceDataset, tgt: &TargetDataset, gammas: &[f64]) -> Vec<(f64, f64, f64, f64)> {
    sweep_with(src, tgt, gammas, &LpOptions::default())
}

fn sweep_with(src: &SourceDataset, tgt: &TargetDataset, gammas: &[f64], lp: &LpOptions) -> Vec<(f64, f64, f64, f64)> {
    let spec = BasisSpec::identity(4);
    let fit = density_ratio::fit(src, tgt, &spec, &FitOptions::default()).unwrap();
    let rhat = density_ratio::weights(&fit, src, &spec).unwrap();
    gammas
        .iter()
        .map(|&g| {
            let sens = SensitivityParams::from_log_gamma(g, 1.0).unwrap();
            let u = solve_unbalanced(src, &rhat, &sens).unwrap();
            let b = solve_balanced(src, tgt, &fit, &spec, &sens, lp).unwrap();
            (u.lower, u.upper, b.lower, b.upper)
        })
        .collect()
}

#[test]
fn balanced_nested_and_monotone_on_small_replicates() {
    let gammas = [0.0, 0.1, 0.2, 0.3, 0.5, 0.7];
    for seed in 0..6 {
        let (src, tgt) = replicate(seed % 2 == 0, seed, 400);
        let rows = sweep(&src, &tgt, &gammas);
        for (k, &(ul, uu, bl, bu)) in rows.iter().enumerate() {
            assert!(ul <= bl + 1e-6 && bu <= uu + 1e-6, "seed {seed} gamma {}", gammas[k]);
            assert!(bl <= bu + 1e-9);
            if k > 0 {
                let prev = rows[k - 1];
                assert!(ul <= prev.0 + 1e-9 && uu >= prev.1 - 1e-9);
                assert!(bl <= prev.2 + 1e-9 && bu >= prev.3 - 1e-9);
            }
        }
    }
}

fn scaled(src: &SourceDataset, k: f64, shift: f64) -> SourceDataset {
    SourceDataset::new(
        src.units().iter().map(|u| SourceUnit::new(u.x.clone(), u.treated, k * u.y + shift)).collect(),
        src.propensity(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bounds_are_outcome_scale_equivariant(seed in 0u64..1000, k in 0.2f64..5.0, g in 0.05f64..0.6) {
        let (src, tgt) = replicate(seed % 2 == 1, seed, 300);
        let spec = BasisSpec::identity(4);
        // Small Setup A draws can leave the target mean outside an arm's hull.
        prop_assume!(density_ratio::fit(&src, &tgt, &spec, &FitOptions::default()).is_ok());
        let base = sweep(&src, &tgt, &[g])[0];
        let pos = sweep(&scaled(&src, k, 0.0), &tgt, &[g])[0];
        let neg = sweep(&scaled(&src, -k, 0.0), &tgt, &[g])[0];
        let tol = 1e-7 * k * (1.0 + base.1.abs() + base.0.abs());
        prop_assert!((pos.0 - k * base.0).abs() <= tol && (pos.1 - k * base.1).abs() <= tol);
        prop_assert!((pos.2 - k * base.2).abs() <= tol && (pos.3 - k * base.3).abs() <= tol);
        prop_assert!((neg.0 + k * base.1).abs() <= tol && (neg.1 + k * base.0).abs() <= tol);
        prop_assert!((neg.2 + k * base.3).abs() <= tol && (neg.3 + k * base.2).abs() <= tol);
    }

    #[test]
    fn balanced_bounds_shift_with_outcome_constant(seed in 0u64..1000, c in -20.0f64..20.0, g in 0.05f64..0.6) {
        // The balance row on the intercept pins each arm's weight total to
        // within eps, so a constant added to Y cancels up to 2|c|eps.
        let (src, tgt) = replicate(seed % 2 == 0, seed, 300);
        prop_assume!(density_ratio::fit(&src, &tgt, &BasisSpec::identity(4), &FitOptions::default()).is_ok());
        let lp = LpOptions { eps_feas: 1e-10, ..LpOptions::default() };
        let base = sweep_with(&src, &tgt, &[g], &lp)[0];
        let moved = sweep_with(&scaled(&src, 1.0, c), &tgt, &[g], &lp)[0];
        let tol = 1e-8 * (1.0 + c.abs() + base.3.abs());
        prop_assert!((moved.2 - base.2).abs() <= tol, "{} vs {}", moved.2, base.2);
        prop_assert!((moved.3 - base.3).abs() <= tol);
    }
}
