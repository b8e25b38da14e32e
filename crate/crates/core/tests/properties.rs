use mimicry_core::mimic::hermite;
use mimicry_core::rng::stream;
use mimicry_core::subordinator::calibrate_to;
use mimicry_core::{
    calibrate, ks_two_sample, laplace_exponent, sample_r, simulate_ensemble, FreeParam, ReferenceProcess, Route,
    SubordinatorSpec, TimeGrid,
};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = SubordinatorSpec> {
    let beta = 0.0..0.5f64;
    prop_oneof![
        (beta.clone(), 0.1..5.0f64).prop_map(|(b, r)| SubordinatorSpec::poisson(b, r).unwrap()),
        (beta.clone(), 0.1..5.0f64, 0.2..5.0f64)
            .prop_map(|(b, r, th)| SubordinatorSpec::compound_poisson_exponential(b, r, th).unwrap()),
        (beta.clone(), 0.1..5.0f64, 0.2..5.0f64).prop_map(|(b, c, th)| SubordinatorSpec::gamma(b, c, th).unwrap()),
        (beta, 0.05..0.95f64, 0.1..3.0f64).prop_map(|(b, a, c)| SubordinatorSpec::stable(b, a, c).unwrap()),
    ]
}

proptest! {
    #[test]
    fn ks_statistic_is_bounded_and_symmetric(
        a in prop::collection::vec(-10.0..10.0f64, 1..60),
        b in prop::collection::vec(-10.0..10.0f64, 1..60),
    ) {
        let (d_ab, p_ab) = ks_two_sample(&a, &b).unwrap();
        let (d_ba, p_ba) = ks_two_sample(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&d_ab));
        prop_assert!((0.0..=1.0).contains(&p_ab));
        prop_assert_eq!(d_ab, d_ba);
        prop_assert_eq!(p_ab, p_ba);
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap().0, 0.0);
    }

    #[test]
    fn laplace_exponent_is_increasing_and_concave(spec in family()) {
        prop_assert_eq!(laplace_exponent(&spec, 0.0).unwrap(), 0.0);
        let grid: Vec<f64> = (1..=40).map(|i| 0.1 * f64::from(i)).collect();
        let psi: Vec<f64> = grid.iter().map(|&l| laplace_exponent(&spec, l).unwrap()).collect();
        for w in psi.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
        for w in psi.windows(3) {
            prop_assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-12 * w[1].abs().max(1.0));
        }
    }

    #[test]
    fn calibration_hits_target(spec in family(), kappa in 0.2..2.0f64) {
        let calibrated = calibrate(&spec, kappa, FreeParam::Rate);
        prop_assume!(calibrated.is_ok());
        let calibrated = calibrated.unwrap();
        prop_assert!((calibrated.psi(kappa) - kappa).abs() < 1e-12 * kappa.max(1.0));
        prop_assert_eq!(calibrated.beta, spec.beta);
    }

    #[test]
    fn calibration_through_drift(spec in family(), kappa in 0.2..2.0f64, factor in 0.3..0.99f64) {
        let target = spec.jumps.jump_exponent(kappa) / factor;
        let calibrated = calibrate_to(&spec, kappa, target, FreeParam::Beta).unwrap();
        prop_assert!((calibrated.psi(kappa) - target).abs() < 1e-12 * target.max(1.0));
    }

    #[test]
    fn hermite_recursion_matches_closed_forms(x in -5.0..5.0f64, t in 0.01..4.0f64) {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * (1.0 + b.abs());
        prop_assert_eq!(hermite(0, x, t), 1.0);
        prop_assert_eq!(hermite(1, x, t), x);
        prop_assert!(close(hermite(2, x, t), x * x - t));
        prop_assert!(close(hermite(3, x, t), x.powi(3) - 3.0 * t * x));
        prop_assert!(close(hermite(4, x, t), x.powi(4) - 6.0 * t * x * x + 3.0 * t * t));
    }

    #[test]
    fn randomizer_lies_in_unit_interval(spec in family(), u in 1.0..50.0f64, seed in any::<u64>()) {
        let r = sample_r(&spec, u, &mut stream(seed, 0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert_eq!(sample_r(&spec, 1.0, &mut stream(seed, 1)).unwrap(), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ensembles_are_reproducible(seed in any::<u64>(), route_index in 0usize..3) {
        let route = [Route::Timechange, Route::Markov, Route::RandomizedTransition][route_index];
        let reference = ReferenceProcess::gaussian(0.0).unwrap();
        let spec = calibrate(&SubordinatorSpec::poisson(0.0, 1.0).unwrap(), 0.5, FreeParam::Rate).unwrap();
        let grid = TimeGrid::geometric(0.25, 4.0, 6).unwrap();
        let a = simulate_ensemble(&reference, &spec, &grid, route, 64, seed).unwrap();
        let b = simulate_ensemble(&reference, &spec, &grid, route, 64, seed).unwrap();
        prop_assert!(a.paths().eq(b.paths()));
        let prefix = simulate_ensemble(&reference, &spec, &grid, route, 16, seed).unwrap();
        prop_assert!(prefix.paths().eq(a.paths().take(16)));
    }
}
