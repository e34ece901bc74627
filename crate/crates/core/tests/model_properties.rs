use glassrisk::experiments::{run_margin_sweep, run_scaling, ScalingConfig, SweepConfig};
use glassrisk::instances::{random_instance, random_spins};
use glassrisk::solvers::{is_local_minimum, UpdateOrder};
use glassrisk::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn factor_universe(n: usize, t: usize, seed: u64) -> PriceMatrix {
    synth_prices(n, t, CorrelationModel::RandomFactor { factors: 3 }, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tap_fixed_points_are_local_minima(
        seed in 0u64..100_000,
        n in 2usize..20,
        ratio in 0.05f64..20.0,
        sequential in any::<bool>(),
    ) {
        let inst = random_instance(n, ratio, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = random_spins(n, &mut rng);
        let order = if sequential { UpdateOrder::Sequential } else { UpdateOrder::RandomPermutation };
        let report = tap_solve(&inst, &start, &TapSettings { update_order: order, seed, ..Default::default() }).unwrap();
        prop_assert!(!report.converged || report.is_local_min);
        prop_assert!(report.config.risk <= spin_risk(&inst, &start) + 1e-12);
        prop_assert!((report.config.risk - spin_risk(&inst, &report.config.spins)).abs() < 1e-12);
    }

    #[test]
    fn convex_surrogate_tracks_twice_the_risk_on_sampled_spins(seed in 0u64..100_000, n in 11usize..40) {
        let inst = random_instance(n, 1.3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let a = random_spins(n, &mut rng);
        let b = random_spins(n, &mut rng);
        let x = |s: &[i8]| s.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        let convex_gap = convex_risk(&inst, &x(&a)) - convex_risk(&inst, &x(&b));
        let risk_gap = spin_risk(&inst, &a) - spin_risk(&inst, &b);
        let scale = 1.0 + convex_gap.abs();
        prop_assert!((convex_gap - 2.0 * risk_gap).abs() < 1e-9 * scale);
    }
}

#[test]
fn ground_state_is_a_local_minimum() {
    for seed in 0..30 {
        let inst = random_instance(10, 0.3 * seed as f64 + 0.1, seed);
        let g = exhaustive_ground_state(&inst).unwrap();
        assert!(is_local_minimum(&inst, &g.spins));
    }
}

#[test]
fn decoupled_baseline_equals_oracle() {
    for seed in 0..20 {
        let inst = random_instance(9, 0.5, seed).with_gamma(0.0).unwrap();
        assert_eq!(local_field_baseline(&inst).spins, exhaustive_ground_state(&inst).unwrap().spins);
    }
}

#[test]
fn subcritical_sweep_trials_have_positive_hessian() {
    let prices = factor_universe(60, 500, 4);
    let cfg = SweepConfig {
        n: 10,
        gamma_ratios: vec![0.3, 0.9, 2.0],
        trials: 24,
        master_seed: 3,
        ..SweepConfig::default()
    };
    let result = run_margin_sweep(&prices, &cfg).unwrap();
    for row in &result.rows {
        if row.stats.key < 1.0 {
            assert!(row.min_hessian_eigenvalue > 0.0);
        }
        assert!(row.stats.std >= 0.0);
        assert!(row.stats.trials_defined + row.stats.trials_excluded == 24);
    }
}

#[test]
fn critical_margin_declines_with_size() {
    let prices = factor_universe(200, 1000, 8);
    let cfg = ScalingConfig {
        sizes: vec![4, 8, 16, 32, 64, 128],
        trials: 24,
        master_seed: 2,
        ..ScalingConfig::default()
    };
    let fit = run_scaling(&prices, &cfg).unwrap();
    let pairs = fit.points.windows(2).count();
    let violations = fit
        .points
        .windows(2)
        .filter(|w| w[1].mean > w[0].mean + w[0].std)
        .count();
    assert!(violations * 10 <= pairs, "{:?}", fit.points);
    assert!(fit.alpha() < 0.0);
}
