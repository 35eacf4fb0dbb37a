//! Monte-Carlo estimation of utilities, decisions and violations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{wilson, Accumulator, MeanEstimate, Proportion};
use super::{par_trials, ExperimentConfig, HarnessError};
use crate::deviations::{DeviationSpec, ProtocolKind};
use crate::sim::run;
use crate::types::{Classification, Outcome};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub agreement: u64,
    pub termination: u64,
    pub integrity: u64,
    pub validity: u64,
}

impl ViolationCounts {
    pub fn total(&self) -> u64 {
        self.agreement + self.termination + self.integrity + self.validity
    }

    fn add(&mut self, o: &Outcome) {
        let v = o.violations;
        self.agreement += u64::from(v.agreement);
        self.termination += u64::from(v.termination);
        self.integrity += u64::from(v.integrity);
        self.validity += u64::from(v.validity);
    }

    fn merge(&mut self, o: &ViolationCounts) {
        self.agreement += o.agreement;
        self.termination += o.termination;
        self.integrity += o.integrity;
        self.validity += o.validity;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n: usize,
    pub f: usize,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub trials: u64,
    /// Protocol executions: trials times lottery draws.
    pub runs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationSpec>,
    /// Per-agent utility, averaged over draws within a trial first.
    pub mean_utilities: Vec<MeanEstimate>,
    pub consensus_zero: Proportion,
    pub consensus_one: Proportion,
    pub no_consensus: Proportion,
    /// How often each agent was the agreed dictator.
    pub dictator_counts: Vec<u64>,
    pub dictator_frequencies: Vec<Proportion>,
    pub violations: ViolationCounts,
    pub runs_with_detection: u64,
}

impl McReport {
    /// True when an honest experiment broke a consensus property.
    pub fn honest_violation(&self) -> bool {
        self.deviation.is_none() && self.violations.total() > 0
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "monte carlo  n={} f={} protocol={:?} trials={} runs={} seed={}", self.n, self.f, self.protocol, self.trials, self.runs, self.seed);
        if let Some(d) = &self.deviation {
            let _ = writeln!(s, "deviation    {}", serde_json::to_string(d).unwrap_or_default());
        }
        let _ = writeln!(s, "{:<8}{:>12}{:>24}{:>12}", "agent", "utility", "95% CI", "dictator");
        for (a, u) in self.mean_utilities.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<8}{:>12.5}{:>24}{:>12.5}",
                a,
                u.mean,
                format!("[{:.5}, {:.5}]", u.ci_low, u.ci_high),
                self.dictator_frequencies[a].estimate
            );
        }
        for (name, p) in [("consensus 0", self.consensus_zero), ("consensus 1", self.consensus_one), ("no consensus", self.no_consensus)] {
            let _ = writeln!(s, "{:<14}{:>10.5}  [{:.5}, {:.5}]", name, p.estimate, p.ci_low, p.ci_high);
        }
        let v = self.violations;
        let _ = writeln!(
            s,
            "violations    agreement={} termination={} integrity={} validity={}",
            v.agreement, v.termination, v.integrity, v.validity
        );
        let _ = writeln!(s, "detections    {}", self.runs_with_detection);
        s
    }
}

struct TrialSummary {
    utilities: Vec<f64>,
    consensus: [u64; 3],
    dictators: Vec<u64>,
    violations: ViolationCounts,
    detections: u64,
}

fn one_trial(cfg: &ExperimentConfig, trial: u64) -> Result<TrialSummary, HarnessError> {
    let ctx = cfg.trial_context(trial)?;
    let profile = cfg.profile();
    let opts = cfg.run_options();
    let mut sum = TrialSummary {
        utilities: vec![0.0; cfg.n],
        consensus: [0; 3],
        dictators: vec![0; cfg.n],
        violations: ViolationCounts::default(),
        detections: 0,
    };
    for draw in 0..cfg.lottery_draws {
        let rec = run(&ctx, &profile, cfg.run_seed(trial, draw), &opts)?;
        for (acc, u) in sum.utilities.iter_mut().zip(cfg.utilities(&rec.outcome, &ctx.prefs)) {
            *acc += u;
        }
        match rec.outcome.classification {
            Classification::Consensus(v) => sum.consensus[usize::from(v)] += 1,
            Classification::NoConsensus => sum.consensus[2] += 1,
        }
        if let Some(d) = rec.dictator() {
            sum.dictators[d] += 1;
        }
        sum.violations.add(&rec.outcome);
        sum.detections += u64::from(rec.any_detection());
    }
    let k = f64::from(cfg.lottery_draws);
    sum.utilities.iter_mut().for_each(|u| *u /= k);
    Ok(sum)
}

/// Runs `cfg.trials` trials and aggregates them in trial order.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<McReport, HarnessError> {
    cfg.validate()?;
    if cfg.trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    let summaries = par_trials(cfg.trials, |t| one_trial(cfg, t))?;

    let mut accs = vec![Accumulator::default(); cfg.n];
    let mut consensus = [0u64; 3];
    let mut dictators = vec![0u64; cfg.n];
    let mut violations = ViolationCounts::default();
    let mut detections = 0;
    for s in &summaries {
        for (acc, &u) in accs.iter_mut().zip(&s.utilities) {
            acc.push(u);
        }
        for (c, x) in consensus.iter_mut().zip(s.consensus) {
            *c += x;
        }
        for (d, x) in dictators.iter_mut().zip(&s.dictators) {
            *d += x;
        }
        violations.merge(&s.violations);
        detections += s.detections;
    }
    let runs = cfg.trials * u64::from(cfg.lottery_draws);
    Ok(McReport {
        n: cfg.n,
        f: cfg.f,
        protocol: cfg.protocol,
        seed: cfg.seed,
        trials: cfg.trials,
        runs,
        deviation: cfg.deviation.clone(),
        mean_utilities: accs.iter().map(Accumulator::estimate).collect(),
        consensus_zero: wilson(consensus[0], runs),
        consensus_one: wilson(consensus[1], runs),
        no_consensus: wilson(consensus[2], runs),
        dictator_frequencies: dictators.iter().map(|&c| wilson(c, runs)).collect(),
        dictator_counts: dictators,
        violations,
        runs_with_detection: detections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PiParams;

    #[test]
    fn zero_trials_is_an_error() {
        let cfg = ExperimentConfig::new(4, 1, PiParams::new(4, 1, 0.0, 0.5), 0, 1);
        assert!(matches!(monte_carlo(&cfg), Err(HarnessError::Config(_))));
    }

    #[test]
    fn failure_free_honest_runs_are_clean() {
        let cfg = ExperimentConfig::new(4, 1, PiParams::new(4, 1, 0.0, 0.5), 400, 9);
        let r = monte_carlo(&cfg).unwrap();
        assert_eq!(r.violations.total(), 0);
        assert_eq!(r.no_consensus.successes, 0);
        assert_eq!(r.dictator_counts.iter().sum::<u64>(), 400);
        assert!(r.dictator_counts.iter().all(|&c| c > 60));
        assert!(!r.honest_violation());
    }

    #[test]
    fn report_is_reproducible() {
        let mut cfg = ExperimentConfig::new(5, 2, PiParams::new(5, 2, 0.1, 0.5), 50, 4);
        cfg.lottery_draws = 2;
        assert_eq!(monte_carlo(&cfg).unwrap(), monte_carlo(&cfg).unwrap());
    }
}
