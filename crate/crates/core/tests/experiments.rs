//! Moderate-size statistical runs of the harness on honest and deviating
//! profiles.

use rcl_core::harness::{deviation_gain, expost_exhibit, monte_carlo, ExperimentConfig, Verdict};
use rcl_core::sim::{estimate_reachability, PiParams, ReachScenario};
use rcl_core::types::UtilityParams;

#[test]
fn honest_monte_carlo_has_no_violations() {
    let cfg = ExperimentConfig::new(5, 2, PiParams::new(5, 2, 0.05, 0.5), 10_000, 11);
    let report = monte_carlo(&cfg).unwrap();
    assert_eq!(report.violations.total(), 0, "{}", report.table());
    assert_eq!(report.runs_with_detection, 0);
    assert!(!report.honest_violation());
    let decided = report.consensus_zero.estimate + report.consensus_one.estimate;
    assert!((decided + report.no_consensus.estimate - 1.0).abs() < 1e-9);
    assert_eq!(report.no_consensus.successes, 0);
}

#[test]
fn exhibit_deviation_does_not_pay_on_average() {
    let ex = expost_exhibit(3, 1, UtilityParams::default(), 0).unwrap().expect("exhibit at n=3, f=1");
    assert!(ex.gain > 0.0);
    let mut cfg = ExperimentConfig::new(3, 1, PiParams::new(3, 1, 0.05, 0.5), 20_000, 12);
    cfg.deviation = Some(ex.deviation.clone());
    let report = deviation_gain(&cfg).unwrap();
    assert!(report.gain.ci_high <= report.epsilon, "{}", report.table());
    assert_ne!(report.verdict, Verdict::Gain);
}

#[test]
fn information_reaches_a_correct_agent_with_high_probability() {
    let pi = PiParams::new(5, 2, 0.05, 0.5);
    let scenario = ReachScenario {
        source: 0,
        avoid: 1,
        from_round: 1,
        known_faulty: Default::default(),
        forced: Vec::new(),
    };
    let est = estimate_reachability(&pi, &scenario, 20_000, 13).unwrap();
    assert!(est.supports_reachability, "{est:?}");
    assert!(est.estimate <= est.bound);
    assert_eq!(est.bound, 0.1);
}
