mod common;

use proptest::prelude::*;
use thinning_core::isotonic::pava_decreasing;
use thinning_core::model::{layer_moments, raw_power_sums};
use thinning_core::{
    asymptotic_covariance, build_hankel, det_factorization_ratio, implicit_derivatives, jacobian, phi_map,
    project_decreasing, solve_power_sums, DoubleDouble, FlatPartition, ModelParams, Scalar,
};

use common::{brute_force_decreasing, max_abs_diff, random_model, rng, vandermonde_gram};

fn model(seed: u64, s: usize) -> ModelParams<f64> {
    random_model(&mut rng(seed), s, 0.05, 0.05)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn telescoping_and_monotonicity(seed: u64, s in 1usize..=5, k in 1usize..=12) {
        let m = model(seed, s);
        let moments = m.forward_moments(k).0;
        let a = m.power_sums(k + 1).0;
        prop_assert_eq!(a[0], 1.0);
        for i in 0..k {
            prop_assert!((a[i + 1] - (a[i] - moments[i])).abs() <= 1e-12);
            prop_assert!(moments[i] > 0.0);
            prop_assert!(a[i + 1] < a[i]);
        }
        // sum of m telescopes to 1 - a_{k+1}, which may round to exactly one
        let total: f64 = moments.iter().sum();
        prop_assert!((total - (1.0 - a[k])).abs() <= 1e-12);
        prop_assert!(total <= 1.0 + 1e-15);
    }

    #[test]
    fn forward_map_ignores_mode_labels(seed: u64, s in 2usize..=5, rot in 1usize..5) {
        let m = model(seed, s);
        let mut q = m.q().to_vec();
        let mut p = m.p().to_vec();
        q.rotate_left(rot % s);
        p.rotate_left(rot % s);
        let permuted = layer_moments(&q, &p, 7);
        prop_assert!(max_abs_diff(&permuted, &m.forward_moments(7).0) <= 1e-15);
    }

    #[test]
    fn solver_round_trip_f64(seed: u64, s in 1usize..=3) {
        let m = model(seed, s);
        let sol = solve_power_sums(&m.power_sums(2 * s).0, s).unwrap();
        prop_assert!(sol.feasible);
        prop_assert!(max_abs_diff(&sol.stacked(), &m.stacked()) <= 1e-8);
        let total: f64 = sol.y.iter().sum();
        prop_assert!((total - sol.coefficients.d[0]).abs() <= 1e-12);
    }

    #[test]
    fn solver_is_invariant_to_input_order(seed: u64, s in 2usize..=3, rot in 1usize..3) {
        let m = model(seed, s);
        let mut q = m.q().to_vec();
        let mut p = m.p().to_vec();
        q.rotate_left(rot % s);
        p.rotate_left(rot % s);
        let a = solve_power_sums(&raw_power_sums(&q, &p, 2 * s), s).unwrap();
        let b = solve_power_sums(&m.power_sums(2 * s).0, s).unwrap();
        // the two inputs differ only by summation-order rounding
        prop_assert!(max_abs_diff(&a.stacked(), &b.stacked()) <= 1e-8);
    }

    #[test]
    fn solver_is_invariant_to_input_order_extended(seed: u64, s in 2usize..=4, rot in 1usize..4) {
        let m: ModelParams<DoubleDouble> = random_model(&mut rng(seed), s, 0.05, 0.05);
        let mut q = m.q().to_vec();
        let mut p = m.p().to_vec();
        q.rotate_left(rot % s);
        p.rotate_left(rot % s);
        let a = solve_power_sums(&raw_power_sums(&q, &p, 2 * s), s).unwrap().stacked();
        let b = solve_power_sums(&m.power_sums(2 * s).0, s).unwrap().stacked();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((*x - *y).abs().to_f64_lossy() <= 1e-14);
        }
    }

    #[test]
    fn recurrence_residuals_vanish(seed: u64, s in 1usize..=4) {
        let m = model(seed, s);
        let u = m.power_sums(2 * s).0;
        let sol = solve_power_sums(&u, s).unwrap();
        let c = &sol.coefficients.c;
        for i in 0..s {
            let mut r = u[s + i];
            for (l, cl) in c.iter().enumerate() {
                r += cl * u[s + i - l - 1];
            }
            prop_assert!(r.abs() <= 1e-10, "residual {}", r);
        }
    }

    #[test]
    fn hankel_form_is_vandermonde_gram(seed: u64, s in 1usize..=5) {
        let m = model(seed, s);
        let sys = build_hankel(&m.power_sums(2 * s).0, s).unwrap();
        let h = sys.hankel_form();
        let g = vandermonde_gram(m.q(), m.p());
        for i in 0..s {
            for j in 0..s {
                prop_assert!((h[(i, j)] - g[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_times_dpsi_is_identity(seed: u64, s in 1usize..=2) {
        let m = model(seed, s);
        let prod = jacobian(&m).matrix.matmul(&implicit_derivatives(&m).unwrap());
        for i in 0..2 * s {
            for j in 0..2 * s {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((prod[(i, j)] - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn jacobian_times_dpsi_is_identity_extended(seed: u64, s in 3usize..=4) {
        // from s = 3 on cond(J) can pass 1e6, and rounding dpsi to f64 alone breaks 1e-10
        let m: ModelParams<DoubleDouble> = random_model(&mut rng(seed), s, 0.05, 0.05);
        let prod = jacobian(&m).matrix.matmul(&implicit_derivatives(&m).unwrap());
        for i in 0..2 * s {
            for j in 0..2 * s {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((prod[(i, j)].to_f64_lossy() - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn covariance_is_psd_and_scales(seed: u64, s in 1usize..=3, lt in 1.0f64..1e5) {
        let m = model(seed, s);
        let a = asymptotic_covariance(&m, lt).unwrap();
        let b = asymptotic_covariance(&m, 2.0 * lt).unwrap();
        prop_assert!(a.sigma_sq.asymmetry() <= 1e-10);
        for (x, y) in a.sigma_sq.as_slice().iter().zip(b.sigma_sq.as_slice()) {
            prop_assert!((x - 2.0 * y).abs() <= 1e-9 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn det_ratio_is_label_free(seed: u64) {
        let a = det_factorization_ratio(&model(seed, 2));
        let b = det_factorization_ratio(&model(seed.wrapping_add(1), 2));
        prop_assert!(((a - b) / a).abs() <= 1e-6);
    }

    #[test]
    fn pava_is_an_idempotent_bounded_projection(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let once = project_decreasing(&v).q_star;
        prop_assert!(once.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(max_abs_diff(&pava_decreasing(&once), &once) <= 1e-15);
        prop_assert!((once.iter().sum::<f64>() - v.iter().sum::<f64>()).abs() <= 1e-12);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(once.iter().all(|&x| x >= lo - 1e-15 && x <= hi + 1e-15));
    }

    #[test]
    fn pava_matches_block_oracle(v in prop::collection::vec(-1.0f64..1.0, 1..=6)) {
        prop_assert!(max_abs_diff(&pava_decreasing(&v), &brute_force_decreasing(&v)) <= 1e-12);
    }

    #[test]
    fn phi_with_one_region_is_pava(v in prop::collection::vec(-1.0f64..1.0, 1..8)) {
        let single = FlatPartition::single(v.len());
        prop_assert_eq!(phi_map(&v, &single).unwrap(), pava_decreasing(&v));
        prop_assert_eq!(phi_map(&v, &FlatPartition::singletons(v.len())).unwrap(), v.clone());
    }
}
