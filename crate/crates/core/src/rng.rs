//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream whose key is the tuple
//! (master seed, trial, replicate, agent, round, purpose). Streams are
//! independent of evaluation order, so parallel trials reproduce serial ones
//! and a paired run can reuse exactly the draws of its partner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// What a stream is used for; separates draws that must not interfere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    /// Failure pattern and preferences of a trial.
    Context = 1,
    /// Lottery secrets and polynomial slopes.
    Lottery = 2,
    /// Authentication values carried in status reports.
    Signature = 3,
    /// Draws made by a deviating agent.
    Deviation = 4,
    /// Estimators that sample their own scenarios.
    Estimator = 5,
}

/// Identifies one protocol execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunSeed {
    pub master: u64,
    pub trial: u64,
    pub replicate: u32,
}

/// Agent slot used for streams that belong to no agent.
pub const NO_AGENT: u32 = u32::MAX;

impl RunSeed {
    pub fn new(master: u64, trial: u64) -> Self {
        RunSeed {
            master,
            trial,
            replicate: 0,
        }
    }

    pub fn with_replicate(self, replicate: u32) -> Self {
        RunSeed { replicate, ..self }
    }

    pub fn stream(&self, agent: u32, round: u32, purpose: Purpose) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&self.trial.to_le_bytes());
        key[16..20].copy_from_slice(&self.replicate.to_le_bytes());
        key[20..24].copy_from_slice(&agent.to_le_bytes());
        key[24..28].copy_from_slice(&round.to_le_bytes());
        key[28] = purpose as u8;
        ChaCha8Rng::from_seed(key)
    }

    pub fn agent_stream(&self, agent: usize, round: u32, purpose: Purpose) -> ChaCha8Rng {
        self.stream(agent as u32, round, purpose)
    }

    /// Stream for trial-level sampling (contexts), shared by all replicates.
    pub fn context_stream(&self) -> ChaCha8Rng {
        RunSeed {
            replicate: 0,
            ..*self
        }
        .stream(NO_AGENT, 0, Purpose::Context)
    }
}
