//! Inconsistency detection. Rules are checked in order and the first that
//! fires is reported.

use super::cons::ConsAgent;
use super::messages::StatusEntry;
use super::Rule;
use crate::sharing::check_collinear;

type Check = fn(&ConsAgent, u32) -> bool;

impl ConsAgent {
    /// The lowest-numbered rule violated by what arrived in `round`.
    pub fn detect_inconsistency(&self, round: u32) -> Option<Rule> {
        if self.malformed {
            return Some(Rule::Malformed);
        }
        let checks: [(Rule, Check); 7] = [
            (Rule::FirstRoundZ, ConsAgent::first_round_z_mismatch),
            (Rule::RelayedZ, ConsAgent::relayed_z_mismatch),
            (Rule::Shares, ConsAgent::shares_not_collinear),
            (Rule::CrashContradicted, ConsAgent::crash_contradicted),
            (Rule::ConflictingReport, ConsAgent::conflicting_source),
            (Rule::IgnoredReport, ConsAgent::ignored_report),
            (Rule::TooManyCrashes, ConsAgent::too_many_crashes),
        ];
        checks.iter().find(|(_, check)| check(self, round)).map(|(rule, _)| *rule)
    }

    /// Round 2: everyone who heard from `j` in round 1 must agree on the
    /// value `j` put in the receiver's own slot, and reports about this
    /// agent must echo the vector it sent.
    fn first_round_z_mismatch(&self, round: u32) -> bool {
        if round != 2 {
            return false;
        }
        let me = self.id;
        for j in (0..self.params.n).filter(|&j| j != me) {
            let mut seen: Option<Option<u32>> = self.z_prev[j].as_ref().map(|z| z[me]);
            for msg in self.inbox.iter().filter(|m| m.from != j) {
                let report = msg.payload.status().expect("validated");
                if let StatusEntry::Alive { z: Some(z) } = &report[j] {
                    let v = z[msg.from];
                    match seen {
                        None => seen = Some(v),
                        Some(s) if s != v => return true,
                        _ => {}
                    }
                }
            }
        }
        self.echo_mismatch(round)
    }

    /// Round 3 onwards: a relayed copy of the value this agent sent two rounds
    /// ago must be unchanged.
    fn relayed_z_mismatch(&self, round: u32) -> bool {
        if round < 3 {
            return false;
        }
        let me = self.id;
        let two_back = &self.sent_z[round as usize - 2];
        for msg in &self.inbox {
            let report = msg.payload.status().expect("validated");
            for (j, entry) in report.iter().enumerate() {
                if j == me || j == msg.from {
                    continue;
                }
                if let (StatusEntry::Alive { z: Some(z) }, Some(sent)) = (entry, &two_back[j]) {
                    if z[me] != sent[me] {
                        return true;
                    }
                }
            }
        }
        self.echo_mismatch(round)
    }

    fn echo_mismatch(&self, round: u32) -> bool {
        let last = &self.sent_z[round as usize - 1];
        self.inbox.iter().any(|msg| {
            let report = msg.payload.status().expect("validated");
            match (&report[self.id], &last[msg.from]) {
                (StatusEntry::Alive { z: Some(z) }, Some(sent)) => z != sent,
                _ => false,
            }
        })
    }

    /// Final round: all shares of one polynomial must lie on a line.
    fn shares_not_collinear(&self, round: u32) -> bool {
        if round as usize != self.params.f + 1 {
            return false;
        }
        (0..self.params.n).any(|origin| {
            (0..=self.params.f).any(|t| !check_collinear(&self.params.field, &self.share_points(origin, t)))
        })
    }

    /// Some agent is reported crashed in a round before one in which it is
    /// known to have sent a message.
    fn crash_contradicted(&self, round: u32) -> bool {
        let n = self.params.n;
        let me = self.id;
        let mut evidence: Vec<u32> = self.last_heard.iter().map(|r| r.unwrap_or(0)).collect();
        evidence[me] = (1..=round as usize).rev().find(|&r| self.full_send[r]).unwrap_or(0) as u32;
        if round >= 2 {
            for msg in &self.inbox {
                let report = msg.payload.status().expect("validated");
                for (l, entry) in report.iter().enumerate() {
                    if l != msg.from && matches!(entry, StatusEntry::Alive { .. }) {
                        evidence[l] = evidence[l].max(round - 1);
                    }
                }
            }
        }
        let own = (0..n)
            .filter(|&l| l != me)
            .filter_map(|l| self.status_before[l].crash_round().map(|c| (l, c)));
        let reported = self.inbox.iter().flat_map(|msg| {
            let report = msg.payload.status().expect("validated");
            report.iter().enumerate().filter_map(|(l, e)| e.crash_round().map(|c| (l, c))).collect::<Vec<_>>()
        });
        own.chain(reported).any(|(l, c)| c < evidence[l])
    }

    /// A report names its source, but the source itself claims a later crash
    /// (or none).
    fn conflicting_source(&self, _round: u32) -> bool {
        let me = self.id;
        for msg in &self.inbox {
            let report = msg.payload.status().expect("validated");
            for (l, entry) in report.iter().enumerate() {
                let StatusEntry::Crashed { round: m, reporter } = entry else {
                    continue;
                };
                if *reporter == msg.from {
                    continue;
                }
                let source_claim = if *reporter == me {
                    if l == me {
                        u32::MAX
                    } else {
                        self.status_before[l].crash_key()
                    }
                } else {
                    match self.inbox.iter().find(|o| o.from == *reporter) {
                        Some(o) => o.payload.status().expect("validated")[l].crash_key(),
                        None => continue,
                    }
                };
                if source_claim > *m {
                    return true;
                }
            }
        }
        false
    }

    /// `j` heard from `k` last round yet reports a later crash for some agent
    /// than `k` announced in that round.
    fn ignored_report(&self, round: u32) -> bool {
        if round < 2 {
            return false;
        }
        let me = self.id;
        for msg in &self.inbox {
            let report = msg.payload.status().expect("validated");
            for (k, entry) in report.iter().enumerate() {
                if k == msg.from || !matches!(entry, StatusEntry::Alive { .. }) {
                    continue;
                }
                let earlier = if k == me {
                    self.sent_status[round as usize - 1].as_deref()
                } else {
                    self.prev_inbox
                        .iter()
                        .find(|o| o.from == k)
                        .and_then(|o| o.payload.status().map(|s| &**s))
                };
                let Some(earlier) = earlier else { continue };
                for (l, prior) in earlier.iter().enumerate() {
                    if l == me || l == k || l == msg.from {
                        continue;
                    }
                    if let Some(c) = prior.crash_round() {
                        if report[l].crash_key() > c {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn too_many_crashes(&self, round: u32) -> bool {
        let crashed = (0..self.params.n)
            .filter(|&l| l != self.id && self.status[l].crash_round().is_some_and(|c| c <= round))
            .count();
        crashed > self.params.f
    }

}
