//! Experiment configuration shared by every harness entry point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::deviations::{DeviationSpec, ProtocolKind, StrategyProfile};
use crate::rng::RunSeed;
use crate::sharing::{PrimeField, DEFAULT_PRIME};
use crate::sim::{sample_context, PiParams, RunOptions};
use crate::types::{utilities, AgentId, Context, Outcome, UtilityParams};

fn default_prime() -> u64 {
    DEFAULT_PRIME
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub f: usize,
    #[serde(default)]
    pub beta: UtilityParams,
    /// Per-agent utilities replacing `beta` for the listed agents.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub agent_beta: BTreeMap<AgentId, UtilityParams>,
    pub pi: PiParams,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub protocol: ProtocolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationSpec>,
    #[serde(default = "default_prime")]
    pub field_prime: u64,
    /// Use this context in every trial instead of sampling one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_context: Option<Context>,
    /// Sample failures from π but always use these preferences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_prefs: Option<Vec<u8>>,
    /// Independent lottery draws averaged within each trial's context.
    #[serde(default = "one")]
    pub lottery_draws: u32,
    /// Give the deviator the extended strategy that decides ⊥ once exposed.
    #[serde(default)]
    pub extension: bool,
}

impl ExperimentConfig {
    pub fn new(n: usize, f: usize, pi: PiParams, trials: u64, seed: u64) -> Self {
        ExperimentConfig {
            n,
            f,
            beta: UtilityParams::default(),
            agent_beta: BTreeMap::new(),
            pi,
            trials,
            seed,
            protocol: ProtocolKind::Cons,
            deviation: None,
            field_prime: DEFAULT_PRIME,
            fixed_context: None,
            fixed_prefs: None,
            lottery_draws: 1,
            extension: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.normalize()?;
        Ok(cfg)
    }

    /// Fills π's size from the experiment and checks consistency.
    pub fn normalize(&mut self) -> Result<(), HarnessError> {
        if self.pi.n == 0 && self.pi.f == 0 {
            self.pi.n = self.n;
            self.pi.f = self.f;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.pi.n != self.n || self.pi.f != self.f {
            return bad("pi.n and pi.f must match n and f");
        }
        if self.f == 0 || self.f + 1 >= self.n {
            return bad("need 1 <= f and f + 1 < n");
        }
        self.pi.validate()?;
        PrimeField::new(self.field_prime).map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.agent_beta.keys().any(|&a| a >= self.n) {
            return bad("agent_beta names an agent outside 0..n");
        }
        if self.lottery_draws == 0 {
            return bad("lottery_draws must be at least 1");
        }
        if let Some(spec) = &self.deviation {
            spec.validate(self.n, self.f)?;
        }
        if let Some(ctx) = &self.fixed_context {
            ctx.validate()?;
            if ctx.n != self.n || ctx.f != self.f {
                return bad("fixed_context size differs from n and f");
            }
        }
        if let Some(prefs) = &self.fixed_prefs {
            if prefs.len() != self.n || prefs.iter().any(|&p| p > 1) {
                return bad("fixed_prefs must hold n values in {0, 1}");
            }
        }
        Ok(())
    }

    pub fn field(&self) -> PrimeField {
        PrimeField::new(self.field_prime).expect("validated")
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            field: self.field(),
            trace: false,
            lottery: None,
        }
    }

    pub fn honest_profile(&self) -> StrategyProfile {
        StrategyProfile::honest(self.n, self.protocol)
    }

    /// Honest profile with the configured deviation, if any.
    pub fn profile(&self) -> StrategyProfile {
        let mut p = self.honest_profile();
        if let Some(spec) = &self.deviation {
            p = p.with_deviation(spec);
            if self.extension {
                p = p.with_extension(spec.deviator);
            }
        }
        p
    }

    pub fn beta_of(&self, agent: AgentId) -> UtilityParams {
        self.agent_beta.get(&agent).copied().unwrap_or(self.beta)
    }

    /// Every agent's utility for `outcome`, honouring per-agent overrides.
    pub fn utilities(&self, outcome: &Outcome, prefs: &[u8]) -> Vec<f64> {
        let mut u = utilities(outcome, prefs, &self.beta);
        for (&a, b) in &self.agent_beta {
            u[a] = utilities(outcome, &prefs[a..=a], b)[0];
        }
        u
    }

    pub fn run_seed(&self, trial: u64, draw: u32) -> RunSeed {
        RunSeed::new(self.seed, trial).with_replicate(draw)
    }

    /// The context used by `trial`.
    pub fn trial_context(&self, trial: u64) -> Result<Context, HarnessError> {
        if let Some(ctx) = &self.fixed_context {
            return Ok(ctx.clone());
        }
        let mut rng = RunSeed::new(self.seed, trial).context_stream();
        let mut ctx = sample_context(&self.pi, &mut rng)?;
        if let Some(prefs) = &self.fixed_prefs {
            ctx.prefs.clone_from(prefs);
        }
        Ok(ctx)
    }
}
