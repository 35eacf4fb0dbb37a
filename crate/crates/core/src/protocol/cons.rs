//! The secret-shared random-dictatorship protocol, one agent at a time.

use std::collections::BTreeSet;

use rand::Rng;

use super::decide::{compute_nc, first_clean_round, select_dictator};
use super::messages::{well_formed, Message, Payload, StatusEntry, StatusReport, ZVector};
use super::{DecisionInfo, ProtocolError, ProtocolParams, Rule};
use crate::rng::{Purpose, RunSeed};
use crate::sharing::{reconstruct, LinePoly, Share};
use crate::types::{AgentId, Decision};

/// Per-agent knobs that change how the initial state is drawn.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgentSetup {
    /// Fixed lottery secrets (one per slot) instead of random ones.
    pub secrets: Option<Vec<u32>>,
    /// Share every secret with a zero slope.
    pub flat_polynomials: bool,
    /// Repeat the previous authentication value instead of drawing a fresh one.
    pub reuse_z: bool,
}

#[derive(Clone, Debug)]
pub struct ConsAgent {
    pub(crate) id: AgentId,
    pub(crate) params: ProtocolParams,
    pub(crate) pref: u8,
    pub(crate) secrets: Vec<u32>,
    pub(crate) polys: Vec<LinePoly>,
    special_z: u32,
    reuse_z: bool,
    seed: RunSeed,
    /// Vector to send each receiver in the coming round.
    z_out: Vec<Option<ZVector>>,
    pub(crate) status: Vec<StatusEntry>,
    pub(crate) status_before: Vec<StatusEntry>,
    /// Indexed by round; what this agent sent.
    pub(crate) sent_status: Vec<Option<StatusReport>>,
    pub(crate) sent_z: Vec<Vec<Option<ZVector>>>,
    pub(crate) full_send: Vec<bool>,
    pub(crate) st: Vec<Option<u8>>,
    pub(crate) shares_in: Vec<Option<Vec<u64>>>,
    pub(crate) z_recv: Vec<Option<ZVector>>,
    pub(crate) z_prev: Vec<Option<ZVector>>,
    pub(crate) inbox: Vec<Message>,
    pub(crate) prev_inbox: Vec<Message>,
    pub(crate) last_heard: Vec<Option<u32>>,
    pub(crate) malformed: bool,
    decision: Decision,
    times_decided: u32,
    detected: Option<(u32, Rule)>,
    info: Option<DecisionInfo>,
}

impl ConsAgent {
    /// Round-1 setup: lottery secrets, their sharing polynomials and the
    /// first authentication vectors.
    pub fn new(
        params: &ProtocolParams,
        id: AgentId,
        pref: u8,
        seed: RunSeed,
        setup: &AgentSetup,
    ) -> Result<Self, ProtocolError> {
        let (n, f) = (params.n, params.f);
        if id >= n {
            return Err(ProtocolError::AgentOutOfRange(id));
        }
        if pref > 1 {
            return Err(ProtocolError::BadPreference(pref));
        }
        let field = params.field;
        let mut lottery = seed.agent_stream(id, 0, Purpose::Lottery);
        let mut secrets = Vec::with_capacity(f + 1);
        let mut polys = Vec::with_capacity(f + 1);
        for t in 0..=f {
            let drawn = lottery.gen_range(0..(n - t) as u32);
            let secret = match &setup.secrets {
                Some(fixed) => *fixed.get(t).ok_or(ProtocolError::LotteryShape)?,
                None => drawn,
            };
            if secret as usize >= n - t {
                return Err(ProtocolError::LotteryShape);
            }
            let slope = field.random(&mut lottery);
            secrets.push(secret);
            polys.push(LinePoly {
                secret: u64::from(secret),
                slope: if setup.flat_polynomials { 0 } else { slope },
            });
        }

        let mut sig = seed.agent_stream(id, 1, Purpose::Signature);
        let special_z = sig.gen_range(0..n as u32);
        let z_out = (0..n)
            .map(|j| {
                (j != id).then(|| {
                    let mut v = vec![Some(0); n];
                    v[id] = Some(if setup.reuse_z { 0 } else { sig.gen_range(0..n as u32) });
                    v[j] = Some(special_z);
                    ZVector::from(v)
                })
            })
            .collect();

        let mut shares_in = vec![None; n];
        shares_in[id] = Some(own_shares(&polys, params, id));
        let mut st = vec![None; n];
        st[id] = Some(pref);
        let rounds = f + 2;
        Ok(ConsAgent {
            id,
            params: params.clone(),
            pref,
            secrets,
            polys,
            special_z,
            reuse_z: setup.reuse_z,
            seed,
            z_out,
            status: vec![StatusEntry::Alive { z: None }; n],
            status_before: vec![StatusEntry::Alive { z: None }; n],
            sent_status: vec![None; rounds],
            sent_z: vec![vec![None; n]; rounds],
            full_send: vec![false; rounds],
            st,
            shares_in,
            z_recv: vec![None; n],
            z_prev: vec![None; n],
            inbox: Vec::new(),
            prev_inbox: Vec::new(),
            last_heard: vec![None; n],
            malformed: false,
            decision: Decision::Undecided,
            times_decided: 0,
            detected: None,
            info: None,
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn decision(&self) -> Decision {
        self.decision
    }

    pub fn times_decided(&self) -> u32 {
        self.times_decided
    }

    pub fn status(&self) -> &[StatusEntry] {
        &self.status
    }

    pub fn detected(&self) -> Option<(u32, Rule)> {
        self.detected
    }

    pub fn decision_info(&self) -> Option<&DecisionInfo> {
        self.info.as_ref()
    }

    pub fn secrets(&self) -> &[u32] {
        &self.secrets
    }

    /// Messages for every other agent in `round`.
    pub fn send_phase(&mut self, round: u32) -> Vec<Message> {
        let (n, f) = (self.params.n, self.params.f);
        let r = round as usize;
        if self.decision.is_decided() || r == 0 || r > f + 1 {
            return Vec::new();
        }
        let status: StatusReport = self.status.clone().into();
        self.sent_status[r] = Some(status.clone());
        self.full_send[r] = true;
        let mut out = Vec::with_capacity(n - 1);
        for j in (0..n).filter(|&j| j != self.id) {
            let payload = if r == f + 1 {
                let forwarded = (0..n)
                    .filter(|&l| l != j)
                    .filter_map(|l| self.shares_in[l].clone().map(|v| (l, v)))
                    .collect();
                Payload::Final {
                    status: status.clone(),
                    forwarded,
                }
            } else {
                let z = self.z_out[j].clone().expect("vector for every other agent");
                self.sent_z[r][j] = Some(z.clone());
                if r == 1 {
                    Payload::Initial {
                        pref: self.pref,
                        status: status.clone(),
                        shares: self.polys.iter().map(|p| p.eval(&self.params.field, j as u64 + 1)).collect(),
                        z,
                    }
                } else {
                    Payload::Relay {
                        status: status.clone(),
                        z,
                    }
                }
            };
            out.push(Message {
                from: self.id,
                to: j,
                round,
                payload,
            });
        }
        out
    }

    /// Absorbs the round's messages and updates the status vector.
    pub fn receive_phase(&mut self, round: u32, mut msgs: Vec<Message>) {
        if self.decision.is_decided() {
            return;
        }
        let n = self.params.n;
        msgs.sort_by_key(|m| m.from);
        self.status_before.clone_from(&self.status);
        self.prev_inbox = std::mem::take(&mut self.inbox);
        self.z_prev = std::mem::replace(&mut self.z_recv, vec![None; n]);

        let mut heard = vec![false; n];
        for msg in msgs {
            let j = msg.from;
            if j >= n || j == self.id || heard[j] {
                self.malformed = true;
                continue;
            }
            heard[j] = true;
            if msg.round != round || !well_formed(&msg, self.id, n, self.params.f, &self.params.field) {
                self.malformed = true;
                continue;
            }
            self.last_heard[j] = Some(round);
            if let Payload::Initial { pref, shares, .. } = &msg.payload {
                self.st[j] = Some(*pref);
                self.shares_in[j] = Some(shares.clone());
            }
            self.z_recv[j] = msg.payload.z().cloned();
            self.status[j] = StatusEntry::Alive {
                z: self.z_recv[j].clone(),
            };
            self.inbox.push(msg);
        }
        for j in (0..n).filter(|&j| j != self.id && !heard[j]) {
            if matches!(self.status[j], StatusEntry::Alive { .. }) {
                self.status[j] = StatusEntry::Crashed {
                    round,
                    reporter: self.id,
                };
            }
        }
        for msg in &self.inbox {
            let report = msg.payload.status().expect("validated");
            for (l, entry) in report.iter().enumerate() {
                if l == self.id || l == msg.from {
                    continue;
                }
                if let StatusEntry::Crashed { round: m, .. } = entry {
                    if *m < self.status[l].crash_key() {
                        self.status[l] = StatusEntry::Crashed {
                            round: *m,
                            reporter: msg.from,
                        };
                    }
                }
            }
        }
    }

    /// Checks for inconsistencies, then either decides or prepares the next
    /// round's authentication vectors.
    pub fn update_phase(&mut self, round: u32) {
        if self.decision.is_decided() {
            return;
        }
        if let Some(rule) = self.detect_inconsistency(round) {
            self.detected = Some((round, rule));
            self.decide(Decision::Bottom);
            return;
        }
        if round as usize == self.params.f + 1 {
            let d = self.final_decision();
            self.decide(d);
        } else {
            self.prepare_z(round + 1);
        }
    }

    /// Records a decision; the agent stops sending afterwards.
    pub fn decide(&mut self, d: Decision) {
        self.decision = d;
        self.times_decided += 1;
    }

    fn prepare_z(&mut self, next: u32) {
        let n = self.params.n;
        let mut sig = self.seed.agent_stream(self.id, next, Purpose::Signature);
        let prev_round = next as usize - 1;
        for j in (0..n).filter(|&j| j != self.id) {
            let mut v: Vec<Option<u32>> = (0..n)
                .map(|l| self.z_recv[l].as_ref().and_then(|z| z[l]))
                .collect();
            v[j] = Some(self.special_z);
            let fresh = sig.gen_range(0..n as u32);
            v[self.id] = if self.reuse_z {
                self.sent_z[prev_round][j].as_ref().and_then(|z| z[self.id])
            } else {
                Some(fresh)
            };
            self.z_out[j] = Some(v.into());
        }
    }

    /// Share values for `origin`'s polynomials as (evaluation point, values).
    fn points_for(&self, origin: AgentId) -> Vec<(u64, &[u64])> {
        let mut pts = Vec::new();
        if let Some(v) = &self.shares_in[origin] {
            pts.push((self.id as u64 + 1, v.as_slice()));
        }
        for msg in &self.inbox {
            if let Payload::Final { forwarded, .. } = &msg.payload {
                if let Some((_, v)) = forwarded.iter().find(|(o, _)| *o == origin) {
                    pts.push((msg.from as u64 + 1, v.as_slice()));
                }
            }
        }
        pts
    }

    pub(crate) fn share_points(&self, origin: AgentId, t: usize) -> Vec<Share> {
        self.points_for(origin)
            .into_iter()
            .map(|(x, v)| Share { x, y: v[t] })
            .collect()
    }

    fn secret_of(&self, origin: AgentId, t: usize) -> Option<u64> {
        if origin == self.id {
            return Some(u64::from(self.secrets[t]));
        }
        let pts = self.share_points(origin, t);
        let (a, b) = (pts.first()?, pts.get(1)?);
        reconstruct(&self.params.field, *a, *b).ok()
    }

    fn final_decision(&mut self) -> Decision {
        let n = self.params.n;
        let crash_rounds: Vec<Option<u32>> = (0..n)
            .map(|j| if j == self.id { None } else { self.status[j].crash_round() })
            .collect();
        let ncs = compute_nc(&crash_rounds, self.id, self.params.f);
        let Some(m_star) = first_clean_round(&ncs) else {
            return Decision::Bottom;
        };
        let nc: &BTreeSet<AgentId> = &ncs[m_star as usize];
        let t = n - nc.len();
        let modulus = (n - t) as u64;
        let mut sum = 0u64;
        for &j in nc {
            match self.secret_of(j, t) {
                Some(x) => sum = (sum + x % modulus) % modulus,
                None => return Decision::Bottom,
            }
        }
        let Some(dictator) = select_dictator(nc, sum) else {
            return Decision::Bottom;
        };
        self.info = Some(DecisionInfo {
            first_clean_round: m_star,
            t,
            survivors: nc.iter().copied().collect(),
            sum,
            dictator,
        });
        match self.st[dictator] {
            Some(v) => Decision::Value(v),
            None => Decision::Bottom,
        }
    }
}

fn own_shares(polys: &[LinePoly], params: &ProtocolParams, id: AgentId) -> Vec<u64> {
    polys.iter().map(|p| p.eval(&params.field, id as u64 + 1)).collect()
}
