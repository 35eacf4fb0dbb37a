use std::collections::BTreeSet;

use rcl_core::deviations::{DeviationKind, DeviationSpec, LieVariant, Player, ProtocolKind, ShareTamper, StrategyProfile};
use rcl_core::protocol::messages::Message;
use rcl_core::protocol::ProtocolParams;
use rcl_core::sharing::PrimeField;
use rcl_core::sim::{run, RunOptions, RunRecord};
use rcl_core::types::{Classification, Context, Failure, FailurePattern};
use rcl_core::RunSeed;

fn traced() -> RunOptions {
    RunOptions {
        trace: true,
        ..RunOptions::default()
    }
}

fn profile(n: usize, spec: &DeviationSpec) -> StrategyProfile {
    StrategyProfile::honest(n, ProtocolKind::Cons).with_deviation(spec)
}

/// (round, recipient, kind, pref) of every message `from` tried to send.
fn sends_of(rec: &RunRecord, from: usize) -> Vec<(u32, usize, String, Option<u8>)> {
    rec.trace
        .as_ref()
        .unwrap()
        .iter()
        .flat_map(|ev| ev.messages.iter().flatten())
        .filter(|m| m.message.from == from)
        .map(|m| (m.message.round, m.message.to, m.message.kind.clone(), m.message.pref))
        .collect()
}

#[test]
fn pretend_crash_sends_round_one_then_nothing() {
    let ctx = Context::failure_free(vec![0, 1, 0, 1, 0], 2).unwrap();
    let spec = DeviationSpec::new(1, DeviationKind::PretendCrash { round: 2, recipients: BTreeSet::new() });
    let rec = run(&ctx, &profile(5, &spec), RunSeed::new(1, 0), &traced()).unwrap();
    let sends = sends_of(&rec, 1);
    assert_eq!(sends.len(), 4);
    assert!(sends.iter().all(|s| s.0 == 1));
    assert!(!rec.decisions[1].decision.is_decided());
}

#[test]
fn lie_initial_value_flips_round_one_preference() {
    let ctx = Context::failure_free(vec![0, 1, 0, 1], 1).unwrap();
    let spec = DeviationSpec::new(1, DeviationKind::LieInitialValue { targets: BTreeSet::from([0, 2, 3]) });
    let rec = run(&ctx, &profile(4, &spec), RunSeed::new(2, 0), &traced()).unwrap();
    let round_one: Vec<_> = sends_of(&rec, 1).into_iter().filter(|s| s.0 == 1).collect();
    assert_eq!(round_one.len(), 3);
    assert!(round_one.iter().all(|s| s.3 == Some(0)));
}

#[test]
fn tampered_shares_are_detected_and_give_bottom() {
    let ctx = Context::failure_free(vec![0, 1, 0, 1], 1).unwrap();
    let spec = DeviationSpec::new(2, DeviationKind::BadShares { mode: ShareTamper::NonCollinear });
    for s in 0..20 {
        let rec = run(&ctx, &profile(4, &spec), RunSeed::new(3, s), &RunOptions::default()).unwrap();
        assert_eq!(rec.outcome.classification, Classification::NoConsensus);
        assert!(rec.detections.iter().enumerate().filter(|(a, _)| *a != 2).all(|(_, d)| d.map(|x| x.1) == Some(4)));
    }
}

#[test]
fn malformed_payload_triggers_rule_one() {
    let ctx = Context::failure_free(vec![0, 1, 0, 1], 1).unwrap();
    let spec = DeviationSpec::new(0, DeviationKind::Malformed { round: 1, target: 3 });
    let rec = run(&ctx, &profile(4, &spec), RunSeed::new(4, 0), &RunOptions::default()).unwrap();
    assert_eq!(rec.detections[3], Some((1, 1)));
}

#[test]
fn claiming_a_live_agent_crashed_is_caught() {
    let ctx = Context::failure_free(vec![0, 1, 0, 1, 1], 2).unwrap();
    let spec = DeviationSpec::new(
        1,
        DeviationKind::StatusLie {
            variant: LieVariant::ClaimCrashed,
            subject: 2,
            target: 3,
            round: Some(2),
        },
    );
    let rec = run(&ctx, &profile(5, &spec), RunSeed::new(5, 0), &RunOptions::default()).unwrap();
    assert!(rec.detections[3].is_some());
    assert_eq!(rec.outcome.classification, Classification::NoConsensus);
}

#[test]
fn naive_exploit_goes_silent_only_in_the_minority() {
    let n = 5;
    let exploit = StrategyProfile::honest(n, ProtocolKind::Naive).with_deviation(&DeviationSpec::new(0, DeviationKind::NaiveExploit));
    let minority = Context::failure_free(vec![1, 0, 0, 0, 0], 3).unwrap();
    let rec = run(&minority, &exploit, RunSeed::new(6, 0), &traced()).unwrap();
    assert!(sends_of(&rec, 0).iter().all(|s| s.0 == 1));
    assert!(!rec.decisions[0].decision.is_decided());

    let unanimous = Context::failure_free(vec![0; 5], 3).unwrap();
    let honest = StrategyProfile::honest(n, ProtocolKind::Naive);
    let a = run(&unanimous, &exploit, RunSeed::new(6, 1), &traced()).unwrap();
    let b = run(&unanimous, &honest, RunSeed::new(6, 1), &traced()).unwrap();
    assert_eq!(a.decisions, b.decisions);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn naive_exploit_hides_a_minority_crash() {
    // Agent 1 crashes in round 1 reaching only the deviator; the deviator's
    // silence removes agent 1's tuple, shrinking the lottery to four agents
    // (its own round-1 tuple already went out).
    let ctx = Context::new(5, 3, FailurePattern::new(vec![Failure::new(1, 1, [0])]), vec![1, 0, 0, 0, 0]).unwrap();
    let exploit = StrategyProfile::honest(5, ProtocolKind::Naive).with_deviation(&DeviationSpec::new(0, DeviationKind::NaiveExploit));
    let rec = run(&ctx, &exploit, RunSeed::new(7, 0), &RunOptions::default()).unwrap();
    let info = rec.info[2].as_ref().unwrap();
    assert_eq!(info.survivors, vec![0, 2, 3, 4]);
}

/// Drives a run by hand, recording what agent `who` received each round.
fn drive(ctx: &Context, profile: &StrategyProfile, seed: RunSeed, who: usize) -> (Vec<Vec<Message>>, Vec<Vec<Message>>) {
    let params = ProtocolParams::new(ctx.n, ctx.f, PrimeField::default()).unwrap();
    let mut players: Vec<Player> = (0..ctx.n)
        .map(|i| Player::new(&params, i, ctx.prefs[i], seed, &profile.strategies[i], None).unwrap())
        .collect();
    let (mut inboxes_seen, mut sent) = (Vec::new(), Vec::new());
    for round in 1..=params.rounds() {
        let mut inboxes = vec![Vec::new(); ctx.n];
        for (i, p) in players.iter_mut().enumerate() {
            let out = p.send(round);
            if i == who {
                sent.push(out.clone());
            }
            for m in out {
                inboxes[m.to].push(m);
            }
        }
        inboxes_seen.push(inboxes[who].clone());
        for (p, inbox) in players.iter_mut().zip(inboxes) {
            p.receive(round, inbox);
        }
    }
    (inboxes_seen, sent)
}

#[test]
fn deviator_messages_depend_only_on_its_stream_and_inbox() {
    let ctx = Context::failure_free(vec![1, 0, 1, 0, 1], 2).unwrap();
    let spec = DeviationSpec::new(
        2,
        DeviationKind::CrashThenSend {
            omit_round: 2,
            omit_targets: BTreeSet::from([0]),
            resume_round: 3,
            resume_target: 0,
        },
    );
    let prof = profile(5, &spec);
    let seed = RunSeed::new(8, 3);
    let (inboxes, sent) = drive(&ctx, &prof, seed, 2);

    let params = ProtocolParams::new(5, 2, PrimeField::default()).unwrap();
    let mut replay = Player::new(&params, 2, ctx.prefs[2], seed, &prof.strategies[2], None).unwrap();
    for (r, inbox) in inboxes.into_iter().enumerate() {
        let round = r as u32 + 1;
        assert_eq!(replay.send(round), sent[r], "round {round}");
        replay.receive(round, inbox);
    }
}
