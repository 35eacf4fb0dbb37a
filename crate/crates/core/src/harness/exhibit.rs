//! Exact counterexample to ex-post equilibrium.
//!
//! Agent 0 is the only one preferring 1. We look for the smallest crash of
//! agent 0 under which its value can still win, then let an agent that did
//! hear from it pretend the message never arrived. Both conditional expected
//! utilities come from enumerating every lottery table, so the result does
//! not depend on the seed.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::deviations::{DeviationKind, DeviationSpec, ProtocolKind, StrategyProfile};
use crate::rng::RunSeed;
use crate::sharing::PrimeField;
use crate::sim::{run, LotteryTable, RunOptions};
use crate::types::{utilities, AgentId, Classification, Context, Failure, FailurePattern, UtilityParams};

/// Largest n for which every lottery table is enumerated.
pub const MAX_EXHIBIT_N: usize = 4;

const FAILING: AgentId = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub expected_utility: f64,
    /// Lottery tables ending in consensus on 0, on 1, and without consensus.
    pub outcome_counts: [u64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exhibit {
    pub context: Context,
    pub deviation: DeviationSpec,
    pub beta: UtilityParams,
    pub assignments: u64,
    pub honest: ArmSummary,
    pub deviant: ArmSummary,
    pub gain: f64,
}

impl Exhibit {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let fl = &self.context.pattern.failures[0];
        let _ = writeln!(s, "ex-post exhibit  n={} f={} prefs={:?}", self.context.n, self.context.f, self.context.prefs);
        let _ = writeln!(s, "failure          agent {} crashes in round {} reaching {:?}", fl.agent, fl.round, fl.recipients);
        let _ = writeln!(s, "deviation        {}", serde_json::to_string(&self.deviation).unwrap_or_default());
        let _ = writeln!(s, "lottery tables   {}", self.assignments);
        for (name, arm) in [("honest", &self.honest), ("deviant", &self.deviant)] {
            let _ = writeln!(s, "{:<8} utility {:.6}  outcomes(0,1,none) {:?}", name, arm.expected_utility, arm.outcome_counts);
        }
        let _ = writeln!(s, "gain             {:.6}", self.gain);
        s
    }
}

/// Every lottery table for (n, f): slot t of each agent ranges over 0..n-t.
fn all_tables(n: usize, f: usize) -> impl Iterator<Item = LotteryTable> {
    let per_agent: u64 = (0..=f).map(|t| (n - t) as u64).product();
    let total = per_agent.pow(n as u32);
    (0..total).map(move |mut code| {
        (0..n)
            .map(|_| {
                let mut row = Vec::with_capacity(f + 1);
                for t in 0..=f {
                    let m = (n - t) as u64;
                    row.push((code % m) as u32);
                    code /= m;
                }
                row
            })
            .collect()
    })
}

fn evaluate(ctx: &Context, profile: &StrategyProfile, agent: AgentId, beta: &UtilityParams, seed: u64) -> Result<(ArmSummary, u64), HarnessError> {
    let mut total = 0.0;
    let mut counts = [0u64; 3];
    let mut assignments = 0u64;
    for table in all_tables(ctx.n, ctx.f) {
        let opts = RunOptions {
            field: PrimeField::default(),
            trace: false,
            lottery: Some(table),
        };
        let rec = run(ctx, profile, RunSeed::new(seed, assignments), &opts)?;
        total += utilities(&rec.outcome, &ctx.prefs, beta)[agent];
        match rec.outcome.classification {
            Classification::Consensus(v) => counts[usize::from(v)] += 1,
            Classification::NoConsensus => counts[2] += 1,
        }
        assignments += 1;
    }
    Ok((
        ArmSummary {
            expected_utility: total / assignments as f64,
            outcome_counts: counts,
        },
        assignments,
    ))
}

/// Canonical crashes of the failing agent, smallest first: by round, then
/// by number of recipients, then lexicographically.
fn candidate_failures(n: usize, f: usize) -> Vec<Failure> {
    let others: Vec<AgentId> = (0..n).filter(|&a| a != FAILING).collect();
    let mut out = Vec::new();
    for round in 1..=f as u32 + 1 {
        let mut sets: Vec<BTreeSet<AgentId>> = (0..1u32 << others.len())
            .map(|mask| others.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &a)| a).collect())
            .filter(|s: &BTreeSet<AgentId>| round == 1 || !s.is_empty())
            .collect();
        sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out.extend(sets.into_iter().map(|s| Failure::new(FAILING, round, s)));
    }
    out
}

/// Builds the exhibit for (n, f). Returns `None` when f = 0, since no crash
/// is then admissible.
pub fn expost_exhibit(n: usize, f: usize, beta: UtilityParams, seed: u64) -> Result<Option<Exhibit>, HarnessError> {
    if f == 0 {
        return Ok(None);
    }
    if n > MAX_EXHIBIT_N {
        return Err(HarnessError::Unsupported(format!("exact enumeration needs n <= {MAX_EXHIBIT_N}")));
    }
    if f + 1 >= n {
        return Err(HarnessError::Config("need f + 1 < n".into()));
    }
    let mut prefs = vec![0u8; n];
    prefs[FAILING] = 1;
    let honest = StrategyProfile::honest(n, ProtocolKind::Cons);

    for failure in candidate_failures(n, f) {
        let ctx = Context::new(n, f, FailurePattern::new(vec![failure.clone()]), prefs.clone())?;
        let (honest_arm, assignments) = evaluate(&ctx, &honest, 1, &beta, seed)?;
        if honest_arm.outcome_counts[1] == 0 {
            continue;
        }
        for &j in &failure.recipients {
            let deviation = DeviationSpec::new(
                j,
                DeviationKind::IgnoreMessage {
                    sender: FAILING,
                    round: failure.round,
                },
            );
            let profile = honest.clone().with_deviation(&deviation);
            let (base, _) = evaluate(&ctx, &honest, j, &beta, seed)?;
            let (deviant, _) = evaluate(&ctx, &profile, j, &beta, seed)?;
            let gain = deviant.expected_utility - base.expected_utility;
            if gain > 0.0 {
                return Ok(Some(Exhibit {
                    context: ctx,
                    deviation,
                    beta,
                    assignments,
                    honest: base,
                    deviant,
                    gain,
                }));
            }
        }
    }
    Err(HarnessError::Unsupported("no profitable ex-post deviation found".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_enumeration_covers_every_lottery() {
        let tables: Vec<_> = all_tables(3, 1).collect();
        assert_eq!(tables.len(), 216);
        let distinct: BTreeSet<_> = tables.iter().collect();
        assert_eq!(distinct.len(), 216);
        assert!(tables.iter().all(|t| t.iter().all(|row| row[0] < 3 && row[1] < 2)));
    }

    #[test]
    fn candidates_start_with_silent_first_round_crash() {
        let c = candidate_failures(3, 1);
        assert_eq!(c[0], Failure::new(0, 1, []));
        assert_eq!(c[1], Failure::new(0, 1, [1]));
        assert_eq!(c[3], Failure::new(0, 1, [1, 2]));
        assert!(c.iter().skip(4).all(|fl| fl.round == 2 && !fl.recipients.is_empty()));
    }

    #[test]
    fn f_zero_has_no_exhibit_and_large_n_is_refused() {
        assert!(expost_exhibit(3, 0, UtilityParams::default(), 1).unwrap().is_none());
        assert!(matches!(expost_exhibit(5, 1, UtilityParams::default(), 1), Err(HarnessError::Unsupported(_))));
    }
}
