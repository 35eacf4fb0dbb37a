//! Strategies, deviation injection and the per-agent player that runs them.
//!
//! A strategy is the honest protocol plus an ordered list of deviations.
//! Each deviation rewrites the agent's outgoing messages, filters what it
//! receives or overrides its decision; a list is applied left to right.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::messages::{wire_status, Message, Payload, StatusEntry, WireEntry, ZVector};
use crate::protocol::{AgentSetup, ConsAgent, DecisionInfo, NaiveAgent, ProtocolError, ProtocolParams, Rule};
use crate::rng::{Purpose, RunSeed};
use crate::types::{AgentId, Decision, DecisionRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    #[default]
    Cons,
    Naive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareTamper {
    /// Adds one to a single share so the shares no longer lie on a line.
    NonCollinear,
    /// Uses slope zero, so every share equals the secret.
    NonRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LieVariant {
    /// Reports a crashed agent as alive, guessing its authentication vector.
    #[serde(alias = "a")]
    ClaimAlive,
    /// Reports an agent it heard from as crashed in the previous round.
    #[serde(alias = "b")]
    ClaimCrashed,
    /// Alters the vector of an alive agent, or the named source of a crash.
    #[serde(alias = "c")]
    AlterEvidence,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeviationKind {
    NoOp,
    /// Sends round `round` only to `recipients`, then stays silent and never
    /// decides.
    PretendCrash {
        round: u32,
        recipients: BTreeSet<AgentId>,
    },
    /// Flips its preference in round-1 messages to `targets`.
    LieInitialValue { targets: BTreeSet<AgentId> },
    /// Sends `target` a payload of the wrong shape in `round`.
    Malformed { round: u32, target: AgentId },
    BadShares { mode: ShareTamper },
    /// Repeats its previous authentication value instead of a fresh one.
    BadZ,
    /// Decides `value` at the end of `round` and stops.
    WrongDecide { round: u32, value: Decision },
    /// Adds one to every forwarded share of `subject` sent to `target`.
    LieForwardedShare { subject: AgentId, target: AgentId },
    /// Skips `omit_targets` in `omit_round`, stays silent, then sends a
    /// single message to `resume_target` in `resume_round`. Never decides.
    CrashThenSend {
        omit_round: u32,
        omit_targets: BTreeSet<AgentId>,
        resume_round: u32,
        resume_target: AgentId,
    },
    /// Lies to `target` about `subject` in `round` (every round from 2 on
    /// when absent).
    StatusLie {
        variant: LieVariant,
        subject: AgentId,
        target: AgentId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        round: Option<u32>,
    },
    /// Acts as if nothing from `sender` arrived from `round` on.
    IgnoreMessage { sender: AgentId, round: u32 },
    /// Plays round 1 honestly, then goes silent and never decides if its
    /// preference is held by fewer agents than the other value.
    NaiveExploit,
}

/// Which agent deviates and how.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviationSpec {
    pub deviator: AgentId,
    pub kind: DeviationKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeviationError {
    #[error("agent {0} out of range")]
    AgentOutOfRange(AgentId),
    #[error("round {0} outside 1..=f+1")]
    RoundOutOfRange(u32),
    #[error("a deviation may not target the deviator itself")]
    SelfTarget,
    #[error("resume round must come after the omission round")]
    ResumeOrder,
}

impl DeviationSpec {
    pub fn new(deviator: AgentId, kind: DeviationKind) -> Self {
        DeviationSpec { deviator, kind }
    }

    pub fn validate(&self, n: usize, f: usize) -> Result<(), DeviationError> {
        let me = self.deviator;
        let agent = |a: AgentId| if a < n { Ok(()) } else { Err(DeviationError::AgentOutOfRange(a)) };
        let other = |a: AgentId| {
            agent(a)?;
            if a == me {
                Err(DeviationError::SelfTarget)
            } else {
                Ok(())
            }
        };
        let round = |r: u32| {
            if r >= 1 && r as usize <= f + 1 {
                Ok(())
            } else {
                Err(DeviationError::RoundOutOfRange(r))
            }
        };
        agent(me)?;
        match &self.kind {
            DeviationKind::NoOp | DeviationKind::BadShares { .. } | DeviationKind::BadZ | DeviationKind::NaiveExploit => {
                Ok(())
            }
            DeviationKind::PretendCrash { round: r, recipients } => {
                round(*r)?;
                recipients.iter().try_for_each(|&a| other(a))
            }
            DeviationKind::LieInitialValue { targets } => targets.iter().try_for_each(|&a| other(a)),
            DeviationKind::Malformed { round: r, target } => {
                round(*r)?;
                other(*target)
            }
            DeviationKind::WrongDecide { round: r, .. } => round(*r),
            DeviationKind::LieForwardedShare { subject, target } => {
                agent(*subject)?;
                other(*target)
            }
            DeviationKind::CrashThenSend {
                omit_round,
                omit_targets,
                resume_round,
                resume_target,
            } => {
                round(*omit_round)?;
                round(*resume_round)?;
                if resume_round <= omit_round {
                    return Err(DeviationError::ResumeOrder);
                }
                omit_targets.iter().try_for_each(|&a| other(a))?;
                other(*resume_target)
            }
            DeviationKind::StatusLie {
                subject,
                target,
                round: r,
                ..
            } => {
                other(*subject)?;
                other(*target)?;
                r.map_or(Ok(()), round)
            }
            DeviationKind::IgnoreMessage { sender, round: r } => {
                round(*r)?;
                other(*sender)
            }
        }
    }
}

/// The honest protocol plus the deviations layered on top of it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strategy {
    pub protocol: ProtocolKind,
    pub deviations: Vec<DeviationKind>,
    /// Decide ⊥ at information sets that no honest execution can reach.
    #[serde(default)]
    pub extension: bool,
}

impl Strategy {
    pub fn honest(protocol: ProtocolKind) -> Self {
        Strategy {
            protocol,
            deviations: Vec::new(),
            extension: false,
        }
    }

    pub fn is_honest(&self) -> bool {
        self.deviations.iter().all(|d| *d == DeviationKind::NoOp)
    }
}

/// Layers `kind` on top of `base`.
pub fn apply(base: &Strategy, kind: &DeviationKind) -> Strategy {
    let mut s = base.clone();
    s.deviations.push(kind.clone());
    s
}

/// The deviation used against the plaintext protocol.
pub fn naive_exploit() -> DeviationKind {
    DeviationKind::NaiveExploit
}

/// One strategy per agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub strategies: Vec<Strategy>,
}

impl StrategyProfile {
    pub fn honest(n: usize, protocol: ProtocolKind) -> Self {
        StrategyProfile {
            strategies: vec![Strategy::honest(protocol); n],
        }
    }

    pub fn with_deviation(mut self, spec: &DeviationSpec) -> Self {
        let s = &mut self.strategies[spec.deviator];
        *s = apply(s, &spec.kind);
        self
    }

    pub fn with_extension(mut self, agent: AgentId) -> Self {
        self.strategies[agent].extension = true;
        self
    }

    /// Agents whose strategy departs from the honest protocol.
    pub fn deviators(&self) -> BTreeSet<AgentId> {
        self.strategies
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_honest())
            .map(|(i, _)| i)
            .collect()
    }
}

/// What a deviator has done and seen that bears on whether its position is
/// still salvageable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationHistory {
    /// First round in which the agent skipped a message the protocol required.
    pub omitted: Vec<Option<u32>>,
    /// First round after that omission in which it messaged the agent again.
    pub resent: Vec<Option<u32>>,
    /// Heard from the agent after messaging it again.
    pub heard_after_resend: Vec<bool>,
    pub observed_inconsistency: bool,
}

impl DeviationHistory {
    pub fn new(n: usize) -> Self {
        DeviationHistory {
            omitted: vec![None; n],
            resent: vec![None; n],
            heard_after_resend: vec![false; n],
            observed_inconsistency: false,
        }
    }
}

/// Override applied by the extended strategy: ⊥ once the agent has seen an
/// inconsistency, or once an agent it dropped and then messaged again is
/// still talking to it (that agent has necessarily noticed).
pub fn se_extension(history: &DeviationHistory) -> Option<Decision> {
    let exposed = (0..history.omitted.len()).any(|j| {
        history.omitted[j].is_some() && history.resent[j].is_some() && history.heard_after_resend[j]
    });
    (history.observed_inconsistency || exposed).then_some(Decision::Bottom)
}

#[derive(Clone, Debug)]
enum Core {
    Cons(Box<ConsAgent>),
    Naive(Box<NaiveAgent>),
}

/// Trace view of one agent after a phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub agent: AgentId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<Vec<WireEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuples_known: Option<usize>,
    pub decision: Decision,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detected_rule: Option<u8>,
}

/// Runs one agent's strategy.
#[derive(Clone, Debug)]
pub struct Player {
    id: AgentId,
    params: ProtocolParams,
    seed: RunSeed,
    strategy: Strategy,
    core: Core,
    silent: bool,
    suppress_decision: bool,
    history: DeviationHistory,
}

impl Player {
    pub fn new(
        params: &ProtocolParams,
        id: AgentId,
        pref: u8,
        seed: RunSeed,
        strategy: &Strategy,
        secrets: Option<&[u32]>,
    ) -> Result<Self, ProtocolError> {
        let core = match strategy.protocol {
            ProtocolKind::Cons => {
                let setup = AgentSetup {
                    secrets: secrets.map(<[u32]>::to_vec),
                    flat_polynomials: strategy.deviations.contains(&DeviationKind::BadShares {
                        mode: ShareTamper::NonRandom,
                    }),
                    reuse_z: strategy.deviations.contains(&DeviationKind::BadZ),
                };
                Core::Cons(Box::new(ConsAgent::new(params, id, pref, seed, &setup)?))
            }
            ProtocolKind::Naive => Core::Naive(Box::new(NaiveAgent::new(params, id, pref, seed, secrets)?)),
        };
        let suppress_decision = strategy.deviations.iter().any(|d| {
            matches!(
                d,
                DeviationKind::PretendCrash { .. } | DeviationKind::CrashThenSend { .. }
            )
        });
        Ok(Player {
            id,
            params: params.clone(),
            seed,
            strategy: strategy.clone(),
            core,
            silent: false,
            suppress_decision,
            history: DeviationHistory::new(params.n),
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    fn core_decision(&self) -> Decision {
        match &self.core {
            Core::Cons(a) => a.decision(),
            Core::Naive(a) => a.decision(),
        }
    }

    fn core_decide(&mut self, d: Decision) {
        match &mut self.core {
            Core::Cons(a) => a.decide(d),
            Core::Naive(a) => a.decide(d),
        }
    }

    pub fn decision_record(&self) -> DecisionRecord {
        if self.suppress_decision {
            return DecisionRecord::default();
        }
        let times_decided = match &self.core {
            Core::Cons(a) => a.times_decided(),
            Core::Naive(a) => a.times_decided(),
        };
        DecisionRecord {
            decision: self.core_decision(),
            times_decided,
        }
    }

    pub fn decision_info(&self) -> Option<&DecisionInfo> {
        match &self.core {
            Core::Cons(a) => a.decision_info(),
            Core::Naive(a) => a.decision_info(),
        }
    }

    pub fn detected(&self) -> Option<(u32, Rule)> {
        match &self.core {
            Core::Cons(a) => a.detected(),
            Core::Naive(_) => None,
        }
    }

    pub fn history(&self) -> &DeviationHistory {
        &self.history
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        let (status, tuples_known) = match &self.core {
            Core::Cons(a) => (Some(wire_status(a.status(), self.params.n)), None),
            Core::Naive(a) => (None, Some(a.known().len())),
        };
        AgentSnapshot {
            agent: self.id,
            status,
            tuples_known,
            decision: self.decision_record().decision,
            detected_rule: self.detected().map(|(_, r)| r.number()),
        }
    }

    /// The messages this agent sends in `round`.
    pub fn send(&mut self, round: u32) -> Vec<Message> {
        if self.core_decision().is_decided() {
            return Vec::new();
        }
        let honest = match &mut self.core {
            Core::Cons(a) => a.send_phase(round),
            Core::Naive(a) => a.naive_round(round),
        };
        let required: Vec<AgentId> = honest.iter().map(|m| m.to).collect();
        let mut msgs = honest;
        for i in 0..self.strategy.deviations.len() {
            let dev = self.strategy.deviations[i].clone();
            msgs = self.transform(&dev, round, msgs);
        }
        for j in required {
            let sent = msgs.iter().any(|m| m.to == j);
            if !sent && self.history.omitted[j].is_none() {
                self.history.omitted[j] = Some(round);
            } else if sent && self.history.omitted[j].is_some() && self.history.resent[j].is_none() {
                self.history.resent[j] = Some(round);
            }
        }
        msgs
    }

    /// Processes the messages delivered to this agent in `round`.
    pub fn receive(&mut self, round: u32, mut msgs: Vec<Message>) {
        if self.core_decision().is_decided() {
            return;
        }
        for dev in &self.strategy.deviations {
            if let DeviationKind::IgnoreMessage { sender, round: from } = dev {
                if round >= *from {
                    msgs.retain(|m| m.from != *sender);
                }
            }
        }
        for m in &msgs {
            if let Some(r) = self.history.resent[m.from] {
                if round > r {
                    self.history.heard_after_resend[m.from] = true;
                }
            }
        }
        match &mut self.core {
            Core::Cons(a) => {
                a.receive_phase(round, msgs);
                a.update_phase(round);
                if a.detected().is_some() {
                    self.history.observed_inconsistency = true;
                }
            }
            Core::Naive(a) => a.receive(round, msgs),
        }
        if round == 1 && self.strategy.deviations.contains(&DeviationKind::NaiveExploit) && self.in_minority() {
            self.silent = true;
            self.suppress_decision = true;
        }
        for i in 0..self.strategy.deviations.len() {
            if let DeviationKind::WrongDecide { round: r, value } = self.strategy.deviations[i] {
                if r == round {
                    self.core_decide(value);
                }
            }
        }
        if self.strategy.extension && !self.core_decision().is_decided() {
            if let Some(d) = se_extension(&self.history) {
                self.core_decide(d);
            }
        }
    }

    fn in_minority(&self) -> bool {
        let prefs: Vec<u8> = match &self.core {
            Core::Cons(a) => a.st.iter().flatten().copied().collect(),
            Core::Naive(a) => a.known().values().filter_map(|s| s.iter().next()).map(|t| t.pref).collect(),
        };
        let own = match &self.core {
            Core::Cons(a) => a.pref,
            Core::Naive(a) => a.pref(),
        };
        let same = prefs.iter().filter(|&&p| p == own).count();
        same < prefs.len() - same
    }

    fn transform(&mut self, dev: &DeviationKind, round: u32, mut msgs: Vec<Message>) -> Vec<Message> {
        let p = self.params.field.modulus();
        let n = self.params.n;
        match dev {
            DeviationKind::NoOp | DeviationKind::BadZ | DeviationKind::WrongDecide { .. } => {}
            DeviationKind::IgnoreMessage { .. } => {}
            DeviationKind::BadShares { mode } => {
                if *mode == ShareTamper::NonCollinear && round == 1 {
                    if let Some(m) = msgs.iter_mut().min_by_key(|m| m.to) {
                        if let Payload::Initial { shares, .. } = &mut m.payload {
                            shares[0] = (shares[0] + 1) % p;
                        }
                    }
                }
            }
            DeviationKind::PretendCrash { round: r, recipients } => {
                if round == *r {
                    msgs.retain(|m| recipients.contains(&m.to));
                } else if round > *r {
                    msgs.clear();
                }
            }
            DeviationKind::LieInitialValue { targets } => {
                if round == 1 {
                    for m in msgs.iter_mut().filter(|m| targets.contains(&m.to)) {
                        match &mut m.payload {
                            Payload::Initial { pref, .. } => *pref ^= 1,
                            Payload::Naive { tuples } => {
                                let mut v = tuples.to_vec();
                                for t in v.iter_mut().filter(|t| t.origin == self.id) {
                                    t.pref ^= 1;
                                }
                                *tuples = v.into();
                            }
                            _ => {}
                        }
                    }
                }
            }
            DeviationKind::Malformed { round: r, target } => {
                if round == *r {
                    for m in msgs.iter_mut().filter(|m| m.to == *target) {
                        let inner = std::mem::replace(&mut m.payload, Payload::Relay {
                            status: Vec::new().into(),
                            z: Vec::new().into(),
                        });
                        m.payload = Payload::Malformed(Box::new(inner));
                    }
                }
            }
            DeviationKind::LieForwardedShare { subject, target } => {
                if round as usize == self.params.f + 1 {
                    for m in msgs.iter_mut().filter(|m| m.to == *target) {
                        if let Payload::Final { forwarded, .. } = &mut m.payload {
                            for (_, vals) in forwarded.iter_mut().filter(|(o, _)| o == subject) {
                                for v in vals.iter_mut() {
                                    *v = (*v + 1) % p;
                                }
                            }
                        }
                    }
                }
            }
            DeviationKind::CrashThenSend {
                omit_round,
                omit_targets,
                resume_round,
                resume_target,
            } => {
                if round == *omit_round {
                    msgs.retain(|m| !omit_targets.contains(&m.to));
                } else if round == *resume_round {
                    msgs.retain(|m| m.to == *resume_target);
                } else if round > *omit_round {
                    msgs.clear();
                }
            }
            DeviationKind::StatusLie {
                variant,
                subject,
                target,
                round: when,
            } => {
                if round >= 2 && when.map_or(true, |w| w == round) {
                    let mut rng = self.seed.agent_stream(self.id, round, Purpose::Deviation);
                    for m in msgs.iter_mut().filter(|m| m.to == *target) {
                        let Some(status) = m.payload.status() else { continue };
                        let mut rows = status.to_vec();
                        let entry = &mut rows[*subject];
                        match (variant, &*entry) {
                            (LieVariant::ClaimAlive, StatusEntry::Crashed { .. }) => {
                                let guess: Vec<Option<u32>> = (0..n).map(|_| Some(rng.gen_range(0..n as u32))).collect();
                                *entry = StatusEntry::Alive {
                                    z: Some(ZVector::from(guess)),
                                };
                            }
                            (LieVariant::ClaimCrashed, StatusEntry::Alive { .. }) => {
                                *entry = StatusEntry::Crashed {
                                    round: round - 1,
                                    reporter: self.id,
                                };
                            }
                            (LieVariant::AlterEvidence, StatusEntry::Alive { z: Some(z) }) => {
                                let bumped: Vec<Option<u32>> =
                                    z.iter().map(|e| e.map(|v| (v + 1) % n as u32)).collect();
                                *entry = StatusEntry::Alive {
                                    z: Some(ZVector::from(bumped)),
                                };
                            }
                            (LieVariant::AlterEvidence, StatusEntry::Crashed { round: r, reporter }) => {
                                let mut other = (*reporter + 1) % n;
                                while other == *subject {
                                    other = (other + 1) % n;
                                }
                                *entry = StatusEntry::Crashed {
                                    round: *r,
                                    reporter: other,
                                };
                            }
                            _ => continue,
                        }
                        replace_status(&mut m.payload, rows);
                    }
                }
            }
            DeviationKind::NaiveExploit => {
                if self.silent && round >= 2 {
                    msgs.clear();
                }
            }
        }
        msgs
    }
}

fn replace_status(payload: &mut Payload, rows: Vec<StatusEntry>) {
    match payload {
        Payload::Initial { status, .. } | Payload::Relay { status, .. } | Payload::Final { status, .. } => {
            *status = rows.into();
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_appends_in_order() {
        let base = Strategy::honest(ProtocolKind::Cons);
        let s = apply(&apply(&base, &DeviationKind::BadZ), &DeviationKind::NoOp);
        assert_eq!(s.deviations, vec![DeviationKind::BadZ, DeviationKind::NoOp]);
        assert!(!s.is_honest());
        assert!(apply(&base, &DeviationKind::NoOp).is_honest());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = DeviationSpec::new(
            1,
            DeviationKind::StatusLie {
                variant: LieVariant::ClaimAlive,
                subject: 2,
                target: 3,
                round: Some(2),
            },
        );
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            text,
            r#"{"deviator":1,"kind":{"type":"status_lie","variant":"claim_alive","subject":2,"target":3,"round":2}}"#
        );
        assert_eq!(serde_json::from_str::<DeviationSpec>(&text).unwrap(), spec);
        let short: DeviationSpec =
            serde_json::from_str(r#"{"deviator":1,"kind":{"type":"status_lie","variant":"b","subject":2,"target":3}}"#)
                .unwrap();
        assert!(matches!(
            short.kind,
            DeviationKind::StatusLie {
                variant: LieVariant::ClaimCrashed,
                round: None,
                ..
            }
        ));
    }

    #[test]
    fn validation_catches_bad_specs() {
        let bad = DeviationSpec::new(0, DeviationKind::Malformed { round: 3, target: 1 });
        assert_eq!(bad.validate(4, 1), Err(DeviationError::RoundOutOfRange(3)));
        let selfish = DeviationSpec::new(0, DeviationKind::Malformed { round: 1, target: 0 });
        assert_eq!(selfish.validate(4, 1), Err(DeviationError::SelfTarget));
        let order = DeviationSpec::new(
            0,
            DeviationKind::CrashThenSend {
                omit_round: 2,
                omit_targets: [1].into(),
                resume_round: 2,
                resume_target: 2,
            },
        );
        assert_eq!(order.validate(5, 2), Err(DeviationError::ResumeOrder));
    }

    #[test]
    fn extension_is_quiet_without_past_deviation() {
        assert_eq!(se_extension(&DeviationHistory::new(4)), None);
    }

    #[test]
    fn extension_gives_bottom_after_observed_inconsistency() {
        let mut h = DeviationHistory::new(4);
        h.observed_inconsistency = true;
        assert_eq!(se_extension(&h), Some(Decision::Bottom));
    }

    #[test]
    fn extension_gives_bottom_when_dropped_agent_answers_after_resend() {
        let mut h = DeviationHistory::new(4);
        h.omitted[2] = Some(1);
        h.resent[2] = Some(2);
        assert_eq!(se_extension(&h), None);
        h.heard_after_resend[2] = true;
        assert_eq!(se_extension(&h), Some(Decision::Bottom));
    }

    #[test]
    fn profile_lists_deviators() {
        let p = StrategyProfile::honest(4, ProtocolKind::Cons)
            .with_deviation(&DeviationSpec::new(2, DeviationKind::BadZ));
        assert_eq!(p.deviators(), BTreeSet::from([2]));
        let noop = StrategyProfile::honest(4, ProtocolKind::Cons)
            .with_deviation(&DeviationSpec::new(2, DeviationKind::NoOp));
        assert!(noop.deviators().is_empty());
    }
}
