use afm_core::iomap::{estimate_memory_horizon, estimate_modulus, IoMap, SamplerSpec};
use afm_core::stability::{dtbr_solve, R0Search};
use afm_core::statespace::{io_map_of, thm4_bounds, SystemSpec};
use afm_core::tcn::{relu_filter_map, term_count, truncate_filter, ExpFilter};
use afm_core::{InputBall, Sequence};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn truncated_filter_error_within_bound(
        c in 0.1f64..2.0,
        lambda in 0.1f64..0.9,
        m in 0usize..12,
        values in prop::collection::vec(-1.0f64..=1.0, 40),
    ) {
        let horizon = values.len() - 1;
        let filter = ExpFilter::geometric(c, lambda, horizon + 1).unwrap();
        let (model, bound) = truncate_filter(&filter, m).unwrap();
        let target = relu_filter_map(c, lambda, horizon).unwrap();
        let u = Sequence::new(values).unwrap();
        let y = target.eval_all(&u, horizon).unwrap();
        let y_hat = model.eval_all(&u, horizon).unwrap();
        for (a, b) in y.iter().zip(&y_hat) {
            prop_assert!((a - b).abs() <= bound * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn memory_deviations_shrink_with_context(a in 0.1f64..0.9, eps in 1e-4f64..0.5) {
        let spec = SystemSpec::Linear { a, b: 1.0 - a, c: 1.0 };
        let map = io_map_of(spec.build().unwrap());
        let ball = InputBall::new(1.0).unwrap();
        let sampler = SamplerSpec { horizon: 80, signs: 4, uniform: 4, ..SamplerSpec::default() };
        let est = estimate_memory_horizon(&map, eps, ball, 200, &sampler, 1).unwrap();
        prop_assert!(est.worst_deviation <= eps);
        prop_assert!(est.deviations.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        // the constant input realizes the tail (1 - a) a^m / (1 - a) = a^m
        let exact = (0..).find(|&m| a.powi(m) <= eps).unwrap() as usize;
        prop_assert!(est.m_hat.abs_diff(exact) <= 1, "m_hat {} vs {}", est.m_hat, exact);
    }

    #[test]
    fn sampled_modulus_is_monotone(a in 0.1f64..0.9, t in 1usize..8) {
        let spec = SystemSpec::ContractiveTanh { a, b: 1.0 };
        let map = io_map_of(spec.build().unwrap());
        let grid = [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0];
        let rep = estimate_modulus(&map, t, &grid, InputBall::new(1.0).unwrap(), 40, 2).unwrap();
        prop_assert!(rep.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(rep.values.iter().zip(&grid).all(|(v, d)| *v <= d / (1.0 - a) + 1e-12));
    }

    #[test]
    fn memory_bound_decreases_in_eps(mu in 0.05f64..0.95, eps in 1e-6f64..1.0) {
        let lo = thm4_bounds(1.0, mu, 1.0, 1.0, 1.0, eps, 0.0).unwrap();
        let hi = thm4_bounds(1.0, mu, 1.0, 1.0, 1.0, eps / 2.0, 0.0).unwrap();
        prop_assert!(hi.m_star_bound > lo.m_star_bound);
    }

    #[test]
    fn term_count_is_symmetric_binomial(m in 0usize..30, d in 0usize..30) {
        // C(m + 1 + d, d) = C(m + 1 + d, m + 1)
        let n = m + 1 + d;
        let direct = (1..=d as u64).fold(1u128, |acc, k| acc * (n as u128 - d as u128 + k as u128) / k as u128);
        prop_assert_eq!(term_count(m, d).map(u128::from), Some(direct));
    }

    #[test]
    fn scalar_bounded_real_residuals(a in -0.9f64..0.9, c in 0.2f64..2.0) {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        // |G| peaks at 1 / (1 - |a|); keep gamma ||G|| at one half
        let gamma = 0.5 * (1.0 - a.abs()) / c;
        let sol = dtbr_solve(&one(a), &one(1.0), &one(c), gamma, &R0Search::default()).unwrap();
        prop_assert!(sol.max_residual() < 1e-10, "{:?}", sol.residuals);
        prop_assert!(sol.mu > a * a && sol.mu < 1.0);
    }
}
