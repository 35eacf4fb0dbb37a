//! Simulator and analysis harness for a crash-tolerant consensus protocol
//! played by rational agents.
//!
//! The protocol picks a random dictator whose preference everyone adopts.
//! The lottery secrets are shared with degree-1 polynomials so nobody learns
//! the outcome before the last round, and signed status reports let agents
//! detect anyone who lies about crashes. The crate runs the protocol under
//! crash failures and injected deviations and estimates whether deviating
//! ever pays off.

pub mod deviations;
pub mod harness;
pub mod protocol;
pub mod rng;
pub mod sharing;
pub mod sim;
pub mod types;

pub use deviations::{apply, DeviationKind, DeviationSpec, ProtocolKind, Strategy, StrategyProfile};
pub use rng::RunSeed;
pub use sim::{run, sample_context, PiParams, RunOptions, RunRecord};
pub use types::{Context, Decision, Failure, FailurePattern, UtilityParams};
