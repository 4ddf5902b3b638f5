//! Randomized structural invariants: properties that must hold for every
//! valid input, independent of any particular numeric fixture.

use dplab_core::attacks::{mse_max_attack, BudgetSpec};
use dplab_core::detection::{correlations, lag_correlation_test, portmanteau_test};
use dplab_core::lti::{example_scalar, gaussian_input, simulate, DisturbanceSet, LtiSystem};
use dplab_core::numerics::{
    chi2_cdf, derive_seed, expm, f_cdf, pinv, seeded_rng, standard_normal_matrix,
};
use dplab_core::regression::ls_fit;
use dplab_core::{Matrix, Vector};
use proptest::prelude::*;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    standard_normal_matrix(rows, cols, &mut rng)
}

fn scalar_dataset(t: usize, seed: u64) -> dplab_core::lti::Dataset {
    let sys = example_scalar();
    let u = gaussian_input(1, t, &Matrix::identity(1, 1), derive_seed(seed, 0)).unwrap();
    simulate(&sys, &u, &Vector::zeros(1), derive_seed(seed, 1)).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn pseudoinverse_satisfies_penrose_conditions(
        rows in 1usize..5,
        cols in 1usize..5,
        seed in 0u64..10_000,
    ) {
        let a = random_matrix(rows, cols, seed);
        let p = pinv(&a, None);
        let scale = 1.0 + a.norm();
        prop_assert!((&a * &p * &a - &a).norm() <= 1e-9 * scale);
        prop_assert!((&p * &a * &p - &p).norm() <= 1e-9 * scale);
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!((&ap - ap.transpose()).norm() <= 1e-9 * scale);
        prop_assert!((&pa - pa.transpose()).norm() <= 1e-9 * scale);
    }

    #[test]
    fn matrix_exponential_inverts_by_negation(n in 1usize..4, seed in 0u64..10_000) {
        let a = random_matrix(n, n, seed) * 0.5;
        let forward = expm(&a).unwrap();
        let backward = expm(&(-&a)).unwrap();
        prop_assert!((forward * backward - Matrix::identity(n, n)).norm() <= 1e-9);
    }

    #[test]
    fn cdfs_are_monotone_and_bounded(
        x1 in 1e-6f64..100.0,
        gap in 0.0f64..50.0,
        k in 1u64..300,
        d2 in 1u64..300,
    ) {
        let x2 = x1 + gap;
        let (c1, c2) = (chi2_cdf(x1, k).unwrap(), chi2_cdf(x2, k).unwrap());
        prop_assert!((0.0..=1.0).contains(&c1) && (0.0..=1.0).contains(&c2));
        prop_assert!(c1 <= c2 + 1e-12);
        let (f1, f2) = (f_cdf(x1, k, d2).unwrap(), f_cdf(x2, k, d2).unwrap());
        prop_assert!((0.0..=1.0).contains(&f1) && (0.0..=1.0).contains(&f2));
        prop_assert!(f1 <= f2 + 1e-12);
    }

    #[test]
    fn simulation_satisfies_the_recursion(
        n in 1usize..4,
        m in 1usize..3,
        t in 10usize..40,
        seed in 0u64..10_000,
    ) {
        let a = random_matrix(n, n, derive_seed(seed, 0)) * 0.3;
        let b = random_matrix(n, m, derive_seed(seed, 1));
        let sys = LtiSystem::new(a, b, Matrix::identity(n, n), DisturbanceSet::Unbounded).unwrap();
        let u = gaussian_input(m, t, &Matrix::identity(m, m), derive_seed(seed, 2)).unwrap();
        let (d, noise) = simulate(&sys, &u, &Vector::zeros(n), derive_seed(seed, 3)).unwrap();
        let predicted = &sys.a * d.x_minus() + &sys.b * &d.u + &noise.w;
        let scale = 1.0 + d.x.norm();
        prop_assert!((d.x_plus() - predicted).norm() <= 1e-12 * scale);
    }

    #[test]
    fn leverage_is_bounded_and_sums_to_parameter_count(t in 20usize..60, seed in 0u64..10_000) {
        let d = scalar_dataset(t, seed);
        let fit = ls_fit(&d).unwrap();
        prop_assume!(fit.rank_ok);
        let mut total = 0.0;
        for i in 0..t {
            let h = fit.leverage[i];
            prop_assert!((-1e-10..=1.0 + 1e-10).contains(&h), "leverage {h} out of range");
            total += h;
        }
        prop_assert!((total - 2.0).abs() <= 1e-8);
    }

    #[test]
    fn portmanteau_window_one_is_the_lag_one_test(
        n in 1usize..4,
        t in 30usize..120,
        seed in 0u64..10_000,
    ) {
        let r = random_matrix(n, t, seed);
        let cs = correlations(&r, 1).unwrap();
        let a = lag_correlation_test(&cs, t, 1, 0.05).unwrap();
        let b = portmanteau_test(&cs, t, 1, 0.05).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() <= 1e-12 * (1.0 + a.statistic.abs()));
        prop_assert_eq!(a.null_params, b.null_params);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(16) })]

    #[test]
    fn mse_max_solutions_sit_on_the_budget_boundary(
        seed in 0u64..10_000,
        dx_budget in 0.02f64..0.2,
        du_budget in 0.02f64..0.2,
    ) {
        let d = scalar_dataset(30, seed);
        let budget = BudgetSpec::new(dx_budget, du_budget).unwrap();
        let result = mse_max_attack(&d, &budget, 25, 1e-9, 1, seed).unwrap();
        let rx = dx_budget * d.x.norm();
        let ru = du_budget * d.u.norm();
        prop_assert!((result.delta.dx.norm() - rx).abs() <= 1e-6 * rx);
        prop_assert!((result.delta.du.norm() - ru).abs() <= 1e-6 * ru);
    }
}
