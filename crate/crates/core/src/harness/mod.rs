//! Experiment layer: Monte-Carlo estimation, fairness checks, deviation gain
//! and the exact ex-post counterexample.

pub mod config;
pub mod exhibit;
pub mod fairness;
pub mod gain;
pub mod mc;
pub mod stats;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use exhibit::{expost_exhibit, Exhibit};
pub use fairness::{fairness_test, FairnessReport};
pub use gain::{deviation_gain, GainReport, Verdict};
pub use mc::{monte_carlo, McReport};

use crate::deviations::DeviationError;
use crate::sim::SimError;
use crate::types::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed configuration JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Deviation(#[from] DeviationError),
    #[error("{0}")]
    Unsupported(String),
}

/// Runs `trials` independent work units in parallel and returns the results
/// in trial order, so any fold over them matches a sequential loop.
pub(crate) fn par_trials<T, F>(trials: u64, work: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(u64) -> Result<T, HarnessError> + Sync + Send,
{
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(work).collect()
}
