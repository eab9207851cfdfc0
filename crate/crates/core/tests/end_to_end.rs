use std::sync::Arc;

use slate_ope_core::estimators::{self, EstimatorKind, EstimatorSpec};
use slate_ope_core::{stats, CascadeMode, PolicySpec, RipsConfig, SimWorld};

#[test]
fn on_policy_logs_give_the_online_mean_for_every_weighted_estimator() {
    let world = SimWorld::generate(6, 6, CascadeMode::Hard, 21).unwrap();
    let scores = Arc::new(world.score_table());
    let policy = PolicySpec::softmax(0.7).build(Some(scores)).unwrap();
    let ds = world.log_impressions(&policy, 4, 3_000, 8).unwrap();
    let online = estimators::on_policy_mean(&ds).unwrap().value;
    for kind in [
        EstimatorKind::Ips,
        EstimatorKind::Nis,
        EstimatorKind::Iips,
        EstimatorKind::IipsNormalized,
        EstimatorKind::RipsClosed,
        EstimatorKind::Rips,
    ] {
        let v = EstimatorSpec::new(kind)
            .evaluate(&ds, &policy, None)
            .unwrap()
            .value;
        assert!((v - online).abs() < 1e-9, "{kind}: {v} vs {online}");
    }
}

#[test]
fn uncapped_rips_is_centred_on_the_exact_value() {
    // mean over repeats of uncapped RIPS against the enumerated truth (M = 5)
    let world = SimWorld::generate(4, 5, CascadeMode::Hard, 3).unwrap();
    let scores = Arc::new(world.score_table());
    let logging = PolicySpec::uniform().build(None).unwrap();
    let target = PolicySpec::softmax(0.5).build(Some(scores)).unwrap();
    let k = 3;
    let truth = world.true_value(&target, k, None, 0).unwrap().value;
    let config = RipsConfig::new(0.0).unwrap();
    let values: Vec<f64> = (0..60)
        .map(|r| {
            let ds = world.log_impressions(&logging, k, 2_000, 100 + r).unwrap();
            estimators::rips_closed_form(&ds, &target).unwrap().value
        })
        .collect();
    let z = (stats::mean(&values) - truth) / stats::std_error(&values);
    assert!(z.abs() < 4.0, "z = {z}, truth {truth}");
    let ds = world.log_impressions(&logging, k, 2_000, 7).unwrap();
    assert!(estimators::rips(&ds, &target, &config)
        .unwrap()
        .value
        .is_finite());
}
