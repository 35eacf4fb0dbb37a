//! Fairness of the dictator lottery in a fixed context.
//!
//! The exact mode enumerates every assignment of the lottery slot that the
//! survivors actually use; the Monte-Carlo mode draws lotteries from the
//! seeded streams and applies a χ² uniformity test to the dictator counts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{chi_square_uniform, wilson, ChiSquareTest, Proportion};
use super::{par_trials, ExperimentConfig, HarnessError};
use crate::rng::RunSeed;
use crate::sim::{run, LotteryTable, RunOptions};
use crate::types::{AgentId, Classification, Context};

/// Enumeration is skipped above this many lottery assignments.
pub const MAX_ENUMERATION: u64 = 1 << 20;

/// Significance level of the χ² check.
pub const CHI_SQUARE_ALPHA: f64 = 0.001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactFairness {
    pub survivors: Vec<AgentId>,
    /// Lottery slot used by the decision.
    pub slot: usize,
    pub assignments: u64,
    pub dictator_counts: Vec<u64>,
    /// Runs ending in consensus on 0, on 1, and without consensus.
    pub value_counts: [u64; 3],
    pub pr_zero: f64,
    pub pr_one: f64,
    /// Every survivor is dictator equally often.
    pub uniform: bool,
    /// Pr[v] ≥ c_v / n for both values, checked in integers.
    pub bound_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledFairness {
    pub trials: u64,
    pub dictator_counts: Vec<u64>,
    pub chi_square: ChiSquareTest,
    pub pr_zero: Proportion,
    pub pr_one: Proportion,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub context: Context,
    /// Nonfaulty agents preferring 0 and 1.
    pub supporters: [usize; 2],
    pub exact: Option<ExactFairness>,
    pub sampled: SampledFairness,
}

impl FairnessReport {
    pub fn table(&self) -> String {
        let n = self.context.n as f64;
        let mut s = String::new();
        let _ = writeln!(s, "fairness  n={} f={} prefs={:?} faulty={:?}", self.context.n, self.context.f, self.context.prefs, self.context.pattern.faulty());
        let _ = writeln!(s, "bounds    Pr[0] >= {:.5}  Pr[1] >= {:.5}", self.supporters[0] as f64 / n, self.supporters[1] as f64 / n);
        match &self.exact {
            Some(e) => {
                let _ = writeln!(
                    s,
                    "exact     slot={} assignments={} Pr[0]={:.5} Pr[1]={:.5} uniform={} bound_holds={}",
                    e.slot, e.assignments, e.pr_zero, e.pr_one, e.uniform, e.bound_holds
                );
                let _ = writeln!(s, "          dictator counts {:?}", e.dictator_counts);
            }
            None => {
                let _ = writeln!(s, "exact     skipped");
            }
        }
        let m = &self.sampled;
        let _ = writeln!(
            s,
            "sampled   trials={} Pr[1]={:.5} [{:.5}, {:.5}] chi2={:.3} dof={} p={:.4} passes={}",
            m.trials, m.pr_one.estimate, m.pr_one.ci_low, m.pr_one.ci_high, m.chi_square.statistic, m.chi_square.dof, m.chi_square.p_value, m.passes
        );
        let _ = writeln!(s, "          dictator counts {:?}", m.dictator_counts);
        s
    }

    pub fn passes(&self) -> bool {
        self.sampled.passes && self.exact.as_ref().map_or(true, |e| e.uniform && e.bound_holds)
    }
}

fn tally(class: Classification, counts: &mut [u64; 3]) {
    match class {
        Classification::Consensus(v) => counts[usize::from(v)] += 1,
        Classification::NoConsensus => counts[2] += 1,
    }
}

fn enumerate(cfg: &ExperimentConfig, ctx: &Context, supporters: [usize; 2]) -> Result<Option<ExactFairness>, HarnessError> {
    let profile = cfg.honest_profile();
    let probe = run(ctx, &profile, RunSeed::new(cfg.seed, 0), &cfg.run_options())?;
    let Some(info) = (0..ctx.n)
        .filter(|&a| !ctx.pattern.is_faulty(a))
        .find_map(|a| probe.info[a].clone())
    else {
        return Ok(None);
    };
    let slot = info.t;
    let modulus = (ctx.n - slot) as u64;
    let Some(assignments) = u32::try_from(info.survivors.len()).ok().and_then(|k| modulus.checked_pow(k)) else {
        return Ok(None);
    };
    if assignments > MAX_ENUMERATION {
        return Ok(None);
    }

    let mut dictator_counts = vec![0u64; ctx.n];
    let mut value_counts = [0u64; 3];
    for code in 0..assignments {
        let mut table: LotteryTable = vec![vec![0; ctx.f + 1]; ctx.n];
        let mut rest = code;
        for &a in &info.survivors {
            table[a][slot] = (rest % modulus) as u32;
            rest /= modulus;
        }
        let opts = RunOptions {
            lottery: Some(table),
            ..cfg.run_options()
        };
        let rec = run(ctx, &profile, RunSeed::new(cfg.seed, code), &opts)?;
        if let Some(d) = rec.dictator() {
            dictator_counts[d] += 1;
        }
        tally(rec.outcome.classification, &mut value_counts);
    }

    let per = assignments / info.survivors.len() as u64;
    let uniform = assignments % info.survivors.len() as u64 == 0
        && (0..ctx.n).all(|a| dictator_counts[a] == if info.survivors.contains(&a) { per } else { 0 });
    let n = ctx.n as u64;
    let bound_holds = (0..2).all(|v| value_counts[v] * n >= supporters[v] as u64 * assignments);
    Ok(Some(ExactFairness {
        survivors: info.survivors,
        slot,
        assignments,
        dictator_counts,
        value_counts,
        pr_zero: value_counts[0] as f64 / assignments as f64,
        pr_one: value_counts[1] as f64 / assignments as f64,
        uniform,
        bound_holds,
    }))
}

/// Checks the lottery in `ctx` exactly (when small enough) and by sampling
/// `cfg.trials` seeded lotteries.
pub fn fairness_test(cfg: &ExperimentConfig, ctx: &Context) -> Result<FairnessReport, HarnessError> {
    cfg.validate()?;
    if cfg.deviation.is_some() {
        return Err(HarnessError::Unsupported("the fairness test runs honest strategies only".into()));
    }
    if cfg.trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    ctx.validate()?;
    if ctx.n != cfg.n || ctx.f != cfg.f {
        return Err(HarnessError::Config("context size differs from n and f".into()));
    }
    let mut supporters = [0usize; 2];
    for a in (0..ctx.n).filter(|&a| !ctx.pattern.is_faulty(a)) {
        supporters[usize::from(ctx.prefs[a])] += 1;
    }

    let exact = enumerate(cfg, ctx, supporters)?;

    let profile = cfg.honest_profile();
    let opts = cfg.run_options();
    let outcomes = par_trials(cfg.trials, |t| {
        let rec = run(ctx, &profile, RunSeed::new(cfg.seed, t), &opts)?;
        Ok((rec.dictator(), rec.outcome.classification))
    })?;
    let mut dictator_counts = vec![0u64; ctx.n];
    let mut value_counts = [0u64; 3];
    for (d, class) in outcomes {
        if let Some(d) = d {
            dictator_counts[d] += 1;
        }
        tally(class, &mut value_counts);
    }
    // The χ² categories are the agents that were ever chosen plus, when
    // enumeration ran, every survivor.
    let categories: Vec<u64> = match &exact {
        Some(e) => e.survivors.iter().map(|&a| dictator_counts[a]).collect(),
        None => dictator_counts.iter().copied().filter(|&c| c > 0).collect(),
    };
    let chi_square = chi_square_uniform(&categories);
    let sampled = SampledFairness {
        trials: cfg.trials,
        dictator_counts,
        passes: chi_square.p_value > CHI_SQUARE_ALPHA && value_counts[2] == 0,
        chi_square,
        pr_zero: wilson(value_counts[0], cfg.trials),
        pr_one: wilson(value_counts[1], cfg.trials),
    };
    Ok(FairnessReport {
        context: ctx.clone(),
        supporters,
        exact,
        sampled,
    })
}
