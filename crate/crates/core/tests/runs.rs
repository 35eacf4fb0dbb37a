//! End-to-end runs of the honest protocol: delivery, reproducibility and the
//! worked examples for single runs.

use std::collections::BTreeSet;

use rcl_core::deviations::{DeviationKind, DeviationSpec, ProtocolKind, StrategyProfile};
use rcl_core::sim::{run, sample_context, PiParams, RunOptions, RunRecord};
use rcl_core::types::{Classification, Context, Decision, Failure, FailurePattern};
use rcl_core::RunSeed;

fn honest(n: usize) -> StrategyProfile {
    StrategyProfile::honest(n, ProtocolKind::Cons)
}

fn traced() -> RunOptions {
    RunOptions {
        trace: true,
        ..RunOptions::default()
    }
}

fn sent(rec: &RunRecord) -> Vec<(usize, usize, u32, bool)> {
    rec.trace
        .as_ref()
        .unwrap()
        .iter()
        .flat_map(|ev| ev.messages.iter().flatten())
        .map(|m| (m.message.from, m.message.to, m.message.round, m.delivered))
        .collect()
}

#[test]
fn failure_free_consensus_is_dictators_preference() {
    let ctx = Context::failure_free(vec![1, 0, 0, 1], 1).unwrap();
    for s in 0..50 {
        let rec = run(&ctx, &honest(4), RunSeed::new(3, s), &RunOptions::default()).unwrap();
        let d = rec.dictator().expect("agreed dictator");
        assert_eq!(rec.outcome.classification, Classification::Consensus(ctx.prefs[d]));
        assert!(!rec.outcome.violations.any());
    }
}

#[test]
fn silent_first_round_crash_is_excluded() {
    let ctx = Context::new(4, 1, FailurePattern::new(vec![Failure::new(2, 1, [])]), vec![1, 1, 0, 1]).unwrap();
    let mut seen = BTreeSet::new();
    for s in 0..300 {
        let rec = run(&ctx, &honest(4), RunSeed::new(8, s), &RunOptions::default()).unwrap();
        assert_eq!(rec.outcome.classification, Classification::Consensus(1));
        let info = rec.info[0].as_ref().unwrap();
        assert_eq!(info.survivors, vec![0, 1, 3]);
        seen.insert(info.dictator);
    }
    assert_eq!(seen, BTreeSet::from([0, 1, 3]));
}

#[test]
fn early_bottom_decision_breaks_consensus() {
    let ctx = Context::failure_free(vec![0, 1, 0, 1], 1).unwrap();
    let p = honest(4).with_deviation(&DeviationSpec::new(1, DeviationKind::WrongDecide { round: 1, value: Decision::Bottom }));
    let rec = run(&ctx, &p, RunSeed::new(1, 1), &RunOptions::default()).unwrap();
    assert_eq!(rec.outcome.classification, Classification::NoConsensus);
    assert!(!rec.outcome.violations.any());
}

#[test]
fn crashes_deliver_exactly_to_recipients() {
    let pattern = FailurePattern::new(vec![Failure::new(1, 2, [0, 3]), Failure::new(4, 1, [2])]);
    let ctx = Context::new(5, 2, pattern, vec![0, 1, 1, 0, 1]).unwrap();
    let rec = run(&ctx, &honest(5), RunSeed::new(2, 0), &traced()).unwrap();
    let log = sent(&rec);
    for &(from, to, round, delivered) in &log {
        match (from, round) {
            (1, 1) => assert!(delivered),
            (1, 2) => assert_eq!(delivered, to == 0 || to == 3),
            (1, _) => panic!("agent 1 sent after its crash round"),
            (4, 1) => assert_eq!(delivered, to == 2),
            (4, _) => panic!("agent 4 sent after its crash round"),
            _ => assert!(delivered),
        }
    }
    let delivered_from_1: BTreeSet<usize> = log.iter().filter(|m| m.0 == 1 && m.2 == 2 && m.3).map(|m| m.1).collect();
    assert_eq!(delivered_from_1, BTreeSet::from([0, 3]));
    assert!(!rec.outcome.violations.any());
}

#[test]
fn identical_inputs_serialise_identically() {
    let pi = PiParams::new(5, 2, 0.2, 0.5);
    for t in 0..20 {
        let seed = RunSeed::new(99, t);
        let ctx = sample_context(&pi, &mut seed.context_stream()).unwrap();
        let a = run(&ctx, &honest(5), seed, &traced()).unwrap();
        let b = run(&ctx, &honest(5), seed, &traced()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let (mut ta, mut tb) = (Vec::new(), Vec::new());
        a.write_trace(&mut ta).unwrap();
        b.write_trace(&mut tb).unwrap();
        assert_eq!(ta, tb);
    }
}

#[test]
fn trace_lines_are_json_with_context_and_outcome() {
    let ctx = Context::failure_free(vec![0, 1, 1, 0], 1).unwrap();
    let rec = run(&ctx, &honest(4), RunSeed::new(5, 5), &traced()).unwrap();
    let mut buf = Vec::new();
    rec.write_trace(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2 + 2 * 2);
    assert_eq!(lines[0]["phase"], "context");
    assert_eq!(lines[1]["phase"], "send");
    assert_eq!(lines[2]["phase"], "update");
    assert_eq!(lines.last().unwrap()["phase"], "outcome");
}

#[test]
fn no_op_deviation_is_extensionally_honest() {
    let pi = PiParams::new(5, 2, 0.1, 0.5);
    let noop = honest(5).with_deviation(&DeviationSpec::new(3, DeviationKind::NoOp));
    for t in 0..30 {
        let seed = RunSeed::new(4, t);
        let ctx = sample_context(&pi, &mut seed.context_stream()).unwrap();
        assert_eq!(run(&ctx, &honest(5), seed, &traced()).unwrap(), run(&ctx, &noop, seed, &traced()).unwrap());
    }
}

#[test]
fn invalid_context_is_rejected() {
    let ctx = Context {
        n: 4,
        f: 1,
        pattern: FailurePattern::new(vec![Failure::new(0, 1, []), Failure::new(1, 1, [])]),
        prefs: vec![0, 1, 0, 1],
    };
    assert!(run(&ctx, &honest(4), RunSeed::new(0, 0), &RunOptions::default()).is_err());
}

#[test]
fn sampler_is_symmetric_across_agents() {
    let (n, samples) = (5usize, 100_000u64);
    let pi = PiParams::new(n, 2, 0.1, 0.5);
    let mut faulty = vec![0u64; n];
    let mut rng = RunSeed::new(17, 0).context_stream();
    for _ in 0..samples {
        let ctx = sample_context(&pi, &mut rng).unwrap();
        for a in ctx.pattern.faulty() {
            faulty[a] += 1;
        }
    }
    let pooled = faulty.iter().sum::<u64>() as f64 / (n as u64 * samples) as f64;
    let se = (2.0 * pooled * (1.0 - pooled) / samples as f64).sqrt();
    for i in 0..n {
        for j in i + 1..n {
            let diff = (faulty[i] as f64 - faulty[j] as f64) / samples as f64;
            assert!(diff.abs() <= 3.0 * se, "agents {i} and {j}: {faulty:?}");
        }
    }
}
