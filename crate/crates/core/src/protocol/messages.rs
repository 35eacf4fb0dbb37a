//! Message payloads, status reports and their wire form.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::sharing::PrimeField;
use crate::types::AgentId;

/// Authentication vector; `None` is ⊥ (the relayed value was never received).
pub type ZVector = Arc<[Option<u32>]>;

/// One row of a status report: what the sender believes about an agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StatusEntry {
    /// Heard from in the previous round, with the vector that agent sent.
    Alive { z: Option<ZVector> },
    /// Known crashed by `round`; `reporter` is who the sender learned it from
    /// (itself when it observed the silence directly).
    Crashed { round: u32, reporter: AgentId },
}

impl StatusEntry {
    pub fn crash_round(&self) -> Option<u32> {
        match self {
            StatusEntry::Alive { .. } => None,
            StatusEntry::Crashed { round, .. } => Some(*round),
        }
    }

    /// Crash round with "never" mapped to `u32::MAX`, for comparisons.
    pub fn crash_key(&self) -> u32 {
        self.crash_round().unwrap_or(u32::MAX)
    }
}

pub type StatusReport = Arc<[StatusEntry]>;

/// A plaintext lottery ticket of the naive protocol.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NaiveTuple {
    pub origin: AgentId,
    pub pref: u8,
    pub secrets: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    /// Round 1: preference, status, one share per lottery slot, z-vector.
    Initial {
        pref: u8,
        status: StatusReport,
        shares: Vec<u64>,
        z: ZVector,
    },
    /// Rounds 2..=f.
    Relay { status: StatusReport, z: ZVector },
    /// Round f+1: status plus every share received in round 1, keyed by the
    /// agent whose polynomial it belongs to.
    Final {
        status: StatusReport,
        forwarded: Vec<(AgentId, Vec<u64>)>,
    },
    Naive { tuples: Arc<[NaiveTuple]> },
    /// A payload deliberately sent in the wrong shape.
    Malformed(Box<Payload>),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Initial { .. } => "initial",
            Payload::Relay { .. } => "relay",
            Payload::Final { .. } => "final",
            Payload::Naive { .. } => "naive",
            Payload::Malformed(_) => "malformed",
        }
    }

    pub fn status(&self) -> Option<&StatusReport> {
        match self {
            Payload::Initial { status, .. } | Payload::Relay { status, .. } | Payload::Final { status, .. } => {
                Some(status)
            }
            _ => None,
        }
    }

    pub fn z(&self) -> Option<&ZVector> {
        match self {
            Payload::Initial { z, .. } | Payload::Relay { z, .. } => Some(z),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub from: AgentId,
    pub to: AgentId,
    pub round: u32,
    pub payload: Payload,
}

/// Shape the σ-protocol expects in `round`.
fn expected_kind(round: u32, f: usize) -> &'static str {
    if round == 1 {
        "initial"
    } else if round as usize <= f {
        "relay"
    } else {
        "final"
    }
}

/// Checks the format of a protocol message received by `receiver`.
pub fn well_formed(msg: &Message, receiver: AgentId, n: usize, f: usize, field: &PrimeField) -> bool {
    let round = msg.round;
    if msg.payload.kind() != expected_kind(round, f) || msg.from >= n || msg.to != receiver {
        return false;
    }
    let z_ok = |z: &ZVector| z.len() == n && z.iter().all(|e| e.map_or(true, |v| (v as usize) < n));
    let shares_ok = |vals: &[u64]| vals.len() == f + 1 && vals.iter().all(|&v| field.contains(v));
    let status = msg.payload.status().expect("protocol payloads carry status");
    if status.len() != n {
        return false;
    }
    for (subject, entry) in status.iter().enumerate() {
        match entry {
            StatusEntry::Alive { z } => {
                if subject == msg.from || round == 1 {
                    if z.is_some() {
                        return false;
                    }
                } else {
                    match z {
                        Some(z) if z_ok(z) => {}
                        _ => return false,
                    }
                }
            }
            StatusEntry::Crashed { round: r, reporter } => {
                if subject == msg.from || *r == 0 || *r >= round || *reporter >= n || *reporter == subject {
                    return false;
                }
            }
        }
    }
    match &msg.payload {
        Payload::Initial { pref, shares, z, .. } => *pref <= 1 && shares_ok(shares) && z_ok(z),
        Payload::Relay { z, .. } => z_ok(z),
        Payload::Final { forwarded, .. } => {
            let mut last = None;
            forwarded.iter().all(|(origin, vals)| {
                let ordered = last.map_or(true, |l| *origin > l);
                last = Some(*origin);
                ordered && *origin < n && *origin != receiver && shares_ok(vals)
            })
        }
        _ => false,
    }
}

/// Serializable form of a status entry; "never crashed" is encoded as n + 2.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireEntry {
    pub crash_round: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<Option<u32>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reporter: Option<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub from: AgentId,
    pub to: AgentId,
    pub round: u32,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pref: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<Vec<WireEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<Option<u32>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forwarded: Option<Vec<(AgentId, Vec<u64>)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuples: Option<Vec<NaiveTuple>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<WireMessage>>,
}

pub fn wire_status(status: &[StatusEntry], n: usize) -> Vec<WireEntry> {
    status
        .iter()
        .map(|e| match e {
            StatusEntry::Alive { z } => WireEntry {
                crash_round: n as u32 + 2,
                z: z.as_ref().map(|z| z.to_vec()),
                reporter: None,
            },
            StatusEntry::Crashed { round, reporter } => WireEntry {
                crash_round: *round,
                z: None,
                reporter: Some(*reporter),
            },
        })
        .collect()
}

impl Message {
    pub fn to_wire(&self, n: usize) -> WireMessage {
        wire_payload(self.from, self.to, self.round, &self.payload, n)
    }
}

fn wire_payload(from: AgentId, to: AgentId, round: u32, payload: &Payload, n: usize) -> WireMessage {
    let mut w = WireMessage {
        from,
        to,
        round,
        kind: payload.kind().to_string(),
        pref: None,
        status: payload.status().map(|s| wire_status(s, n)),
        shares: None,
        z: payload.z().map(|z| z.to_vec()),
        forwarded: None,
        tuples: None,
        inner: None,
    };
    match payload {
        Payload::Initial { pref, shares, .. } => {
            w.pref = Some(*pref);
            w.shares = Some(shares.clone());
        }
        Payload::Final { forwarded, .. } => w.forwarded = Some(forwarded.clone()),
        Payload::Naive { tuples } => w.tuples = Some(tuples.to_vec()),
        Payload::Malformed(inner) => w.inner = Some(Box::new(wire_payload(from, to, round, inner, n))),
        Payload::Relay { .. } => {}
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alive_all(n: usize) -> StatusReport {
        (0..n).map(|_| StatusEntry::Alive { z: None }).collect()
    }

    fn initial(n: usize, f: usize) -> Message {
        Message {
            from: 1,
            to: 0,
            round: 1,
            payload: Payload::Initial {
                pref: 1,
                status: alive_all(n),
                shares: vec![3; f + 1],
                z: vec![Some(0); n].into(),
            },
        }
    }

    #[test]
    fn honest_initial_is_well_formed() {
        let field = PrimeField::new(13).unwrap();
        assert!(well_formed(&initial(4, 1), 0, 4, 1, &field));
    }

    #[test]
    fn wrong_round_shape_is_rejected() {
        let field = PrimeField::new(13).unwrap();
        let mut m = initial(4, 1);
        m.round = 2;
        assert!(!well_formed(&m, 0, 4, 1, &field));
        let mut m = initial(4, 1);
        m.payload = Payload::Malformed(Box::new(m.payload.clone()));
        assert!(!well_formed(&m, 0, 4, 1, &field));
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let field = PrimeField::new(13).unwrap();
        let mut m = initial(4, 1);
        if let Payload::Initial { shares, .. } = &mut m.payload {
            shares[0] = 13;
        }
        assert!(!well_formed(&m, 0, 4, 1, &field));
        let mut m = initial(4, 1);
        if let Payload::Initial { z, .. } = &mut m.payload {
            *z = vec![Some(4); 4].into();
        }
        assert!(!well_formed(&m, 0, 4, 1, &field));
    }

    #[test]
    fn future_crash_reports_are_rejected() {
        let field = PrimeField::new(13).unwrap();
        let mut status = alive_all(4).to_vec();
        status[2] = StatusEntry::Crashed { round: 2, reporter: 1 };
        for e in status.iter_mut().filter(|e| matches!(e, StatusEntry::Alive { .. })) {
            *e = StatusEntry::Alive {
                z: Some(vec![Some(0); 4].into()),
            };
        }
        status[1] = StatusEntry::Alive { z: None };
        let m = Message {
            from: 1,
            to: 0,
            round: 2,
            payload: Payload::Final {
                status: status.into(),
                forwarded: vec![],
            },
        };
        assert!(!well_formed(&m, 0, 4, 1, &field));
    }

    #[test]
    fn wire_encodes_never_as_n_plus_two() {
        let w = wire_status(
            &[StatusEntry::Alive { z: None }, StatusEntry::Crashed { round: 1, reporter: 0 }],
            4,
        );
        assert_eq!(w[0].crash_round, 6);
        assert_eq!(w[1].crash_round, 1);
        assert_eq!(w[1].reporter, Some(0));
    }
}
