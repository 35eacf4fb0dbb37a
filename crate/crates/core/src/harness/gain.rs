//! Paired estimate of what a single deviator gains over honest play.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{wilson, Accumulator, MeanEstimate, Proportion};
use super::{par_trials, ExperimentConfig, HarnessError};
use crate::deviations::{DeviationKind, DeviationSpec, ProtocolKind};
use crate::sim::run;
use crate::types::{AgentId, Context};

/// Share of the utility range tolerated before a gain counts as real.
pub const EPSILON_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Lower confidence bound above zero.
    Gain,
    /// Otherwise, upper confidence bound at most ε.
    NoGain,
    Inconclusive,
}

/// The analytic lower bound on the naive-protocol exploit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploitCheck {
    /// Fewer than f crashes and a round-1 crash heard by nobody but the deviator.
    pub alpha_below_f: Proportion,
    /// f crashes among the other agents.
    pub alpha_at_f: Proportion,
    pub bound: f64,
    /// The bound does not exceed the gain's upper confidence limit.
    pub gain_meets_bound: bool,
    /// The gain's lower confidence limit is above zero.
    pub strictly_positive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub n: usize,
    pub f: usize,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub trials: u64,
    pub lottery_draws: u32,
    pub deviation: DeviationSpec,
    pub extension: bool,
    pub honest_utility: MeanEstimate,
    pub deviant_utility: MeanEstimate,
    pub gain: MeanEstimate,
    pub epsilon: f64,
    pub verdict: Verdict,
    /// Deviant-arm runs in which someone detected an inconsistency.
    pub detected: Proportion,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exploit: Option<ExploitCheck>,
}

impl GainReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "deviation gain  n={} f={} protocol={:?} trials={} draws={} seed={}", self.n, self.f, self.protocol, self.trials, self.lottery_draws, self.seed);
        let _ = writeln!(s, "deviation       {}", serde_json::to_string(&self.deviation).unwrap_or_default());
        for (name, e) in [("honest", self.honest_utility), ("deviant", self.deviant_utility), ("gain", self.gain)] {
            let _ = writeln!(s, "{:<10}{:>14.6}  [{:.6}, {:.6}]", name, e.mean, e.ci_low, e.ci_high);
        }
        let _ = writeln!(s, "epsilon   {:>14.6}  verdict {:?}", self.epsilon, self.verdict);
        let _ = writeln!(s, "detected  {:>14.6}", self.detected.estimate);
        if let Some(x) = &self.exploit {
            let _ = writeln!(
                s,
                "exploit   alpha<f={:.6} alpha=f={:.6} bound={:.6} meets_bound={} positive={}",
                x.alpha_below_f.estimate, x.alpha_at_f.estimate, x.bound, x.gain_meets_bound, x.strictly_positive
            );
        }
        s
    }
}

/// Context events behind the exploit bound.
fn exploit_events(ctx: &Context, deviator: AgentId) -> (bool, bool) {
    let crashes = ctx.pattern.len();
    let hidden_first_round = ctx
        .pattern
        .failures
        .iter()
        .any(|fl| fl.agent != deviator && fl.round == 1 && fl.recipients.iter().all(|&r| r == deviator));
    let others = ctx.pattern.failures.iter().filter(|fl| fl.agent != deviator).count();
    (crashes < ctx.f && hidden_first_round, others == ctx.f)
}

struct PairedTrial {
    honest: f64,
    deviant: f64,
    detected: u64,
    below_f: bool,
    at_f: bool,
}

fn paired_trial(cfg: &ExperimentConfig, spec: &DeviationSpec, trial: u64) -> Result<PairedTrial, HarnessError> {
    let ctx = cfg.trial_context(trial)?;
    let honest_profile = cfg.honest_profile();
    let deviant_profile = cfg.profile();
    let opts = cfg.run_options();
    let me = spec.deviator;
    let (mut honest, mut deviant, mut detected) = (0.0, 0.0, 0);
    for draw in 0..cfg.lottery_draws {
        let seed = cfg.run_seed(trial, draw);
        let h = run(&ctx, &honest_profile, seed, &opts)?;
        let d = run(&ctx, &deviant_profile, seed, &opts)?;
        honest += cfg.utilities(&h.outcome, &ctx.prefs)[me];
        deviant += cfg.utilities(&d.outcome, &ctx.prefs)[me];
        detected += u64::from(d.any_detection());
    }
    let k = f64::from(cfg.lottery_draws);
    let (below_f, at_f) = exploit_events(&ctx, me);
    Ok(PairedTrial {
        honest: honest / k,
        deviant: deviant / k,
        detected,
        below_f,
        at_f,
    })
}

/// Estimates the configured deviator's expected gain with both arms run on
/// identical contexts and lottery streams.
pub fn deviation_gain(cfg: &ExperimentConfig) -> Result<GainReport, HarnessError> {
    cfg.validate()?;
    let spec = cfg
        .deviation
        .clone()
        .ok_or_else(|| HarnessError::Config("deviation_gain needs a deviation".into()))?;
    if cfg.trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    let results = par_trials(cfg.trials, |t| paired_trial(cfg, &spec, t))?;

    let mut honest = Accumulator::default();
    let mut deviant = Accumulator::default();
    let mut diff = Accumulator::default();
    let (mut detected, mut below_f, mut at_f) = (0u64, 0u64, 0u64);
    for r in &results {
        honest.push(r.honest);
        deviant.push(r.deviant);
        diff.push(r.deviant - r.honest);
        detected += r.detected;
        below_f += u64::from(r.below_f);
        at_f += u64::from(r.at_f);
    }
    let gain = diff.estimate();
    let epsilon = EPSILON_FRACTION * cfg.beta_of(spec.deviator).range();
    let verdict = if gain.ci_low > 0.0 {
        Verdict::Gain
    } else if gain.ci_high <= epsilon {
        Verdict::NoGain
    } else {
        Verdict::Inconclusive
    };

    let exploit = matches!(spec.kind, DeviationKind::NaiveExploit).then(|| {
        let alpha_below_f = wilson(below_f, cfg.trials);
        let alpha_at_f = wilson(at_f, cfg.trials);
        let n = cfg.n as f64;
        let b = cfg.beta_of(spec.deviator);
        let bound = (b.own - b.other) * (1.0 / (n - 1.0) - 1.0 / n) * alpha_below_f.estimate - (b.own - b.none) * alpha_at_f.estimate;
        ExploitCheck {
            alpha_below_f,
            alpha_at_f,
            bound,
            gain_meets_bound: gain.ci_high >= bound,
            strictly_positive: gain.ci_low > 0.0,
        }
    });

    Ok(GainReport {
        n: cfg.n,
        f: cfg.f,
        protocol: cfg.protocol,
        seed: cfg.seed,
        trials: cfg.trials,
        lottery_draws: cfg.lottery_draws,
        deviation: spec,
        extension: cfg.extension,
        honest_utility: honest.estimate(),
        deviant_utility: deviant.estimate(),
        gain,
        epsilon,
        verdict,
        detected: wilson(detected, cfg.trials * u64::from(cfg.lottery_draws)),
        exploit,
    })
}
