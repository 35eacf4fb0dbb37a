//! Deciding who the dictator is once the last round has been processed.

use std::collections::BTreeSet;

use crate::types::AgentId;

/// Agents not known to have crashed by each round.
///
/// `crash_rounds[j]` is the earliest round in which the agent knows `j`
/// crashed (`None` if never). Index `m` of the result holds the set for round
/// `m`, for `m` in `0..=f+1`; round 0 is everyone and `me` is always present.
pub fn compute_nc(crash_rounds: &[Option<u32>], me: AgentId, f: usize) -> Vec<BTreeSet<AgentId>> {
    (0..=f as u32 + 1)
        .map(|m| {
            (0..crash_rounds.len())
                .filter(|&j| j == me || crash_rounds[j].map_or(true, |c| c > m))
                .collect()
        })
        .collect()
}

/// First round `m >= 1` whose surviving set equals the previous round's.
pub fn first_clean_round(nc: &[BTreeSet<AgentId>]) -> Option<u32> {
    (1..nc.len()).find(|&m| nc[m] == nc[m - 1]).map(|m| m as u32)
}

/// The `(sum + 1)`-st highest id among `nc`.
pub fn select_dictator(nc: &BTreeSet<AgentId>, sum: u64) -> Option<AgentId> {
    if nc.is_empty() {
        return None;
    }
    nc.iter().rev().nth((sum % nc.len() as u64) as usize).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[AgentId]) -> BTreeSet<AgentId> {
        ids.iter().copied().collect()
    }

    #[test]
    fn dictator_counts_down_from_highest_id() {
        assert_eq!(select_dictator(&set(&[0, 1, 2, 3]), 2), Some(1));
        assert_eq!(select_dictator(&set(&[0, 2, 4]), 0), Some(4));
        assert_eq!(select_dictator(&set(&[]), 0), None);
    }

    #[test]
    fn clean_round_without_failures_is_one() {
        let nc = compute_nc(&[None; 4], 0, 1);
        assert_eq!(first_clean_round(&nc), Some(1));
    }

    #[test]
    fn one_early_crash_delays_clean_round() {
        let nc = compute_nc(&[None, None, Some(1), None], 0, 1);
        assert_eq!(nc[1], set(&[0, 1, 3]));
        assert_eq!(first_clean_round(&nc), Some(2));
    }

    #[test]
    fn crash_chain_delays_to_round_three() {
        let nc = compute_nc(&[None, Some(1), Some(2), None, None], 0, 2);
        assert_eq!(first_clean_round(&nc), Some(3));
    }

    #[test]
    fn crash_chain_shrinks_then_stabilises() {
        let nc = compute_nc(&[None, Some(1), Some(2), Some(3), None], 4, 3);
        let sizes: Vec<_> = nc.iter().map(BTreeSet::len).collect();
        assert_eq!(sizes, vec![5, 4, 3, 2, 2]);
        assert_eq!(first_clean_round(&nc), Some(4));
    }

    #[test]
    fn self_is_always_a_member() {
        let nc = compute_nc(&[Some(1), None, None, None], 0, 1);
        assert!(nc.iter().all(|s| s.contains(&0)));
    }
}
