//! Plaintext baseline: every agent floods (id, preference, secrets) and
//! picks the dictator from the tuples it collected.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;

use super::decide::select_dictator;
use super::messages::{Message, NaiveTuple, Payload};
use super::{DecisionInfo, ProtocolError, ProtocolParams};
use crate::rng::{Purpose, RunSeed};
use crate::types::{AgentId, Decision};

#[derive(Clone, Debug)]
pub struct NaiveAgent {
    id: AgentId,
    n: usize,
    f: usize,
    own: NaiveTuple,
    known: BTreeMap<AgentId, BTreeSet<NaiveTuple>>,
    pending: Vec<NaiveTuple>,
    malformed: bool,
    decision: Decision,
    times_decided: u32,
    info: Option<DecisionInfo>,
}

impl NaiveAgent {
    pub fn new(
        params: &ProtocolParams,
        id: AgentId,
        pref: u8,
        seed: RunSeed,
        secrets: Option<&[u32]>,
    ) -> Result<Self, ProtocolError> {
        let (n, f) = (params.n, params.f);
        if id >= n {
            return Err(ProtocolError::AgentOutOfRange(id));
        }
        if pref > 1 {
            return Err(ProtocolError::BadPreference(pref));
        }
        let mut rng = seed.agent_stream(id, 0, Purpose::Lottery);
        let mut drawn = Vec::with_capacity(f + 1);
        for t in 0..=f {
            let x = rng.gen_range(0..(n - t) as u32);
            let x = match secrets {
                Some(fixed) => *fixed.get(t).ok_or(ProtocolError::LotteryShape)?,
                None => x,
            };
            if x as usize >= n - t {
                return Err(ProtocolError::LotteryShape);
            }
            drawn.push(x);
        }
        let own = NaiveTuple {
            origin: id,
            pref,
            secrets: drawn,
        };
        let mut known = BTreeMap::new();
        known.insert(id, BTreeSet::from([own.clone()]));
        Ok(NaiveAgent {
            id,
            n,
            f,
            own,
            known,
            pending: Vec::new(),
            malformed: false,
            decision: Decision::Undecided,
            times_decided: 0,
            info: None,
        })
    }

    pub fn decision(&self) -> Decision {
        self.decision
    }

    pub fn times_decided(&self) -> u32 {
        self.times_decided
    }

    pub fn decision_info(&self) -> Option<&DecisionInfo> {
        self.info.as_ref()
    }

    pub fn pref(&self) -> u8 {
        self.own.pref
    }

    /// Tuples collected so far, one entry per origin.
    pub fn known(&self) -> &BTreeMap<AgentId, BTreeSet<NaiveTuple>> {
        &self.known
    }

    /// Round 1 sends the agent's own tuple; later rounds forward tuples first
    /// seen in the previous round.
    pub fn naive_round(&mut self, round: u32) -> Vec<Message> {
        if self.decision.is_decided() {
            return Vec::new();
        }
        let tuples: Arc<[NaiveTuple]> = if round == 1 {
            Arc::from(vec![self.own.clone()])
        } else {
            std::mem::take(&mut self.pending).into()
        };
        (0..self.n)
            .filter(|&j| j != self.id)
            .map(|j| Message {
                from: self.id,
                to: j,
                round,
                payload: Payload::Naive { tuples: tuples.clone() },
            })
            .collect()
    }

    pub fn receive(&mut self, round: u32, msgs: Vec<Message>) {
        if self.decision.is_decided() {
            return;
        }
        for msg in msgs {
            let Payload::Naive { tuples } = &msg.payload else {
                self.malformed = true;
                continue;
            };
            if msg.round != round {
                self.malformed = true;
                continue;
            }
            for tuple in tuples.iter() {
                if !self.tuple_ok(tuple) {
                    self.malformed = true;
                    continue;
                }
                if self.known.entry(tuple.origin).or_default().insert(tuple.clone()) {
                    self.pending.push(tuple.clone());
                }
            }
        }
        if round as usize == self.f + 1 {
            let d = self.naive_decide();
            self.decide(d);
        }
    }

    pub fn decide(&mut self, d: Decision) {
        self.decision = d;
        self.times_decided += 1;
    }

    fn tuple_ok(&self, t: &NaiveTuple) -> bool {
        t.origin < self.n
            && t.pref <= 1
            && t.secrets.len() == self.f + 1
            && t.secrets.iter().enumerate().all(|(slot, &x)| (x as usize) < self.n - slot)
    }

    /// ⊥ on malformed input, on conflicting tuples from one origin or when
    /// fewer than n - f origins are known; otherwise the sum-mod dictator.
    pub fn naive_decide(&mut self) -> Decision {
        if self.malformed || self.known.values().any(|s| s.len() != 1) || self.known.len() < self.n - self.f {
            return Decision::Bottom;
        }
        let members: BTreeSet<AgentId> = self.known.keys().copied().collect();
        let t = self.n - members.len();
        let modulus = (self.n - t) as u64;
        let sum = self
            .known
            .values()
            .map(|s| u64::from(s.iter().next().expect("one tuple").secrets[t]))
            .sum::<u64>()
            % modulus;
        let dictator = select_dictator(&members, sum).expect("nonempty");
        let pref = self.known[&dictator].iter().next().expect("one tuple").pref;
        self.info = Some(DecisionInfo {
            first_clean_round: self.f as u32 + 1,
            t,
            survivors: members.into_iter().collect(),
            sum,
            dictator,
        });
        Decision::Value(pref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::PrimeField;

    fn params(n: usize, f: usize) -> ProtocolParams {
        ProtocolParams::new(n, f, PrimeField::default()).unwrap()
    }

    fn flood(agents: &mut [NaiveAgent], rounds: u32, silent_from: Option<(AgentId, u32)>) {
        for r in 1..=rounds {
            let mut out = Vec::new();
            for a in agents.iter_mut() {
                let msgs = a.naive_round(r);
                if silent_from.is_some_and(|(who, from)| who == a.id && r >= from) {
                    continue;
                }
                out.extend(msgs);
            }
            for a in agents.iter_mut() {
                let mine = out.iter().filter(|m| m.to == a.id).cloned().collect();
                a.receive(r, mine);
            }
        }
    }

    #[test]
    fn failure_free_run_agrees_on_sum_mod_dictator() {
        let p = params(4, 1);
        let secrets = [[1, 0], [2, 1], [0, 2], [3, 0]];
        let mut agents: Vec<_> = (0..4)
            .map(|i| NaiveAgent::new(&p, i, (i % 2) as u8, RunSeed::new(1, 0), Some(&secrets[i])).unwrap())
            .collect();
        flood(&mut agents, 2, None);
        // sum = 6 mod 4 = 2 -> ids 3,2,1,0 -> agent 1 (pref 1)
        for a in &agents {
            assert_eq!(a.decision(), Decision::Value(1));
            assert_eq!(a.decision_info().unwrap().dictator, 1);
        }
    }

    #[test]
    fn conflicting_tuples_give_bottom() {
        let p = params(4, 1);
        let mut a = NaiveAgent::new(&p, 0, 0, RunSeed::new(1, 0), None).unwrap();
        let t1 = NaiveTuple { origin: 2, pref: 0, secrets: vec![0, 0] };
        let t2 = NaiveTuple { origin: 2, pref: 1, secrets: vec![0, 0] };
        let msg = |from, t: NaiveTuple| Message {
            from,
            to: 0,
            round: 1,
            payload: Payload::Naive { tuples: vec![t].into() },
        };
        a.receive(1, vec![msg(2, t1.clone()), msg(1, t2)]);
        a.receive(2, vec![]);
        assert_eq!(a.decision(), Decision::Bottom);
    }

    #[test]
    fn too_few_tuples_give_bottom() {
        let p = params(4, 1);
        let mut a = NaiveAgent::new(&p, 0, 0, RunSeed::new(1, 0), None).unwrap();
        a.receive(1, vec![]);
        a.receive(2, vec![]);
        assert_eq!(a.decision(), Decision::Bottom);
    }
}
