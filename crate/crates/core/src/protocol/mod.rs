//! Protocol state machines: the secret-shared lottery protocol and the
//! plaintext baseline it improves on.

mod cons;
pub mod decide;
mod detect;
pub mod messages;
pub mod naive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cons::{AgentSetup, ConsAgent};
pub use decide::{compute_nc, first_clean_round, select_dictator};
pub use naive::NaiveAgent;

use crate::sharing::PrimeField;
use crate::types::AgentId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("need 1 <= f and f + 1 < n, got n = {n}, f = {f}")]
    BadSize { n: usize, f: usize },
    #[error("agent id {0} out of range")]
    AgentOutOfRange(AgentId),
    #[error("preference {0} is not 0 or 1")]
    BadPreference(u8),
    #[error("fixed lottery secrets must give one in-range value per slot")]
    LotteryShape,
}

/// System size, fault bound and sharing field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: usize,
    pub f: usize,
    pub field: PrimeField,
}

impl ProtocolParams {
    pub fn new(n: usize, f: usize, field: PrimeField) -> Result<Self, ProtocolError> {
        if f == 0 || f + 1 >= n {
            return Err(ProtocolError::BadSize { n, f });
        }
        Ok(ProtocolParams { n, f, field })
    }

    pub fn rounds(&self) -> u32 {
        self.f as u32 + 1
    }
}

/// Which inconsistency an agent detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// A message had the wrong shape or out-of-range contents.
    Malformed,
    /// Round-1 authentication values disagree.
    FirstRoundZ,
    /// A relayed authentication value was altered.
    RelayedZ,
    /// Shares of one polynomial are not collinear.
    Shares,
    /// A crash report is contradicted by a later message.
    CrashContradicted,
    /// A report's named source disagrees with it.
    ConflictingReport,
    /// A report ignores a crash announced the round before.
    IgnoredReport,
    /// More than f agents appear crashed.
    TooManyCrashes,
}

impl Rule {
    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

/// How an agent arrived at its decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionInfo {
    pub first_clean_round: u32,
    pub t: usize,
    pub survivors: Vec<AgentId>,
    pub sum: u64,
    pub dictator: AgentId,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_agents_cannot_tolerate_a_crash() {
        assert_eq!(
            ProtocolParams::new(2, 1, PrimeField::default()),
            Err(ProtocolError::BadSize { n: 2, f: 1 })
        );
        assert!(ProtocolParams::new(3, 1, PrimeField::default()).is_ok());
        assert!(ProtocolParams::new(4, 0, PrimeField::default()).is_err());
    }

    #[test]
    fn rules_are_numbered_from_one() {
        assert_eq!(Rule::Malformed.number(), 1);
        assert_eq!(Rule::TooManyCrashes.number(), 8);
    }
}
