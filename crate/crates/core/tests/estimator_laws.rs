use percolab_core::estimators::{
    estimate_theta, giant_statistics, mecke_check_ns, mecke_check_second, CrossingCriterion,
};
use percolab_core::growth::StoppingRule;
use percolab_core::model::ConnectionFunction;
use percolab_core::stats::combined_sigma;
use proptest::prelude::*;

fn disk() -> ConnectionFunction {
    ConnectionFunction::unit_disk()
}

#[test]
fn subcritical_theta_is_small() {
    let th = estimate_theta(&disk(), 0.5, &StoppingRule::default(), 10_000, 41).unwrap();
    assert!(th.theta_hat.value <= 0.01, "theta {}", th.theta_hat.value);
}

#[test]
fn supercritical_theta_is_stable_under_truncation() {
    let short = estimate_theta(&disk(), 2.0, &StoppingRule::new(10_000, 60.0).unwrap(), 4_000, 42).unwrap();
    let long = estimate_theta(&disk(), 2.0, &StoppingRule::new(10_000, 120.0).unwrap(), 4_000, 43).unwrap();
    for th in [&short, &long] {
        assert!(th.theta_hat.value > 0.5 && th.theta_hat.value < 1.0);
    }
    let gap = (short.theta_hat.value - long.theta_hat.value).abs();
    assert!(gap <= 3.0 * combined_sigma(&short.theta_hat, &long.theta_hat));
}

#[test]
fn theta_is_scale_equivariant() {
    let phi = ConnectionFunction::linear_ramp(1.0).unwrap();
    let wide = phi.rescaled(2.0).unwrap();
    let a = estimate_theta(&phi, 3.2, &StoppingRule::new(2_000, 15.0).unwrap(), 3_000, 44).unwrap();
    let b = estimate_theta(&wide, 0.8, &StoppingRule::new(2_000, 30.0).unwrap(), 3_000, 45).unwrap();
    assert!(a.theta_hat.value > 0.05 && a.theta_hat.value < 0.95);
    let gap = (a.theta_hat.value - b.theta_hat.value).abs();
    assert!(gap <= 3.0 * combined_sigma(&a.theta_hat, &b.theta_hat), "{a:?} vs {b:?}", a = a.theta_hat, b = b.theta_hat);
}

#[test]
fn subcritical_median_largest_component_shrinks() {
    let medians: Vec<f64> = [32.0, 64.0, 128.0]
        .iter()
        .map(|&s| giant_statistics(&disk(), 0.5, s, 200, 46).unwrap().median_l1)
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn spanning_saturates_far_above_the_threshold() {
    let upper = 1.5;
    let hits = (0..50)
        .filter(|&r| {
            let pts = percolab_core::model::sample_points(
                4.0 * upper,
                percolab_core::model::BoxSpec::new(64.0).unwrap(),
                47,
                r,
            )
            .unwrap();
            percolab_core::estimators::spans_left_right(&pts, &disk())
        })
        .count();
    assert_eq!(hits, 50);
    assert_eq!(CrossingCriterion::default().target(), 0.5);
}

#[test]
fn first_mecke_identity_holds() {
    let report = mecke_check_ns(&disk(), 1.0, 1.0, 16.0, 2_000, 48).unwrap();
    assert!(report.compatible, "{report:?}");
    assert!(report.lhs.value > 0.0);
}

#[test]
fn second_mecke_identity_holds() {
    let report = mecke_check_second(&disk(), 2.0, 32.0, 2_000, 49).unwrap();
    assert!(report.identity.compatible, "{report:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn theta_outcomes_partition_to_one(lambda in 0.0f64..2.5, seed in 0u64..1_000) {
        let rule = StoppingRule::new(300, 8.0).unwrap();
        let th = estimate_theta(&disk(), lambda, &rule, 100, seed).unwrap();
        let finite: f64 = th.pi_hat.values().sum();
        prop_assert!((th.theta_hat.value + finite - 1.0).abs() < 1e-12);
        prop_assert!((th.escaped_frequency + th.capped_frequency - th.theta_hat.value).abs() < 1e-12);
    }
}
