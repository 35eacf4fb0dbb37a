//! Synchronous round driver, context sampler and reachability estimator.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deviations::{AgentSnapshot, DeviationError, Player, StrategyProfile};
use crate::protocol::messages::WireMessage;
use crate::protocol::{DecisionInfo, ProtocolError, ProtocolParams};
use crate::rng::{Purpose, RunSeed, NO_AGENT};
use crate::sharing::PrimeField;
use crate::types::{classify_outcome, AgentId, Context, DecisionRecord, Failure, FailurePattern, ModelError, Outcome};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Deviation(#[from] DeviationError),
    #[error("profile has {got} strategies for {n} agents")]
    ProfileSize { got: usize, n: usize },
    #[error("lottery table must have one row per agent")]
    LotteryRows,
    #[error("invalid sampler parameters: {0}")]
    Sampler(String),
}

/// Fixed lottery secrets, `table[agent][slot]`.
pub type LotteryTable = Vec<Vec<u32>>;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub field: PrimeField,
    pub trace: bool,
    pub lottery: Option<LotteryTable>,
}

/// One line of a run trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub round: u32,
    pub phase: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub messages: Option<Vec<TracedMessage>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentSnapshot>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracedMessage {
    pub delivered: bool,
    #[serde(flatten)]
    pub message: WireMessage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub context: Context,
    pub seed: RunSeed,
    pub deviators: BTreeSet<AgentId>,
    pub decisions: Vec<DecisionRecord>,
    pub info: Vec<Option<DecisionInfo>>,
    /// (round, rule number) for agents that detected an inconsistency.
    pub detections: Vec<Option<(u32, u8)>>,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

impl RunRecord {
    /// Dictator agreed on by every correct agent that chose one.
    pub fn dictator(&self) -> Option<AgentId> {
        let mut chosen = (0..self.context.n)
            .filter(|a| !self.context.pattern.is_faulty(*a) && !self.deviators.contains(a))
            .map(|a| self.info[a].as_ref().map(|i| i.dictator));
        let first = chosen.next()??;
        chosen.all(|d| d == Some(first)).then_some(first)
    }

    pub fn any_detection(&self) -> bool {
        self.detections.iter().any(Option::is_some)
    }

    /// JSON-lines rendering of the trace: a header, one line per round phase
    /// and a closing outcome line.
    pub fn write_trace<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            phase: &'static str,
            context: &'a Context,
            seed: &'a RunSeed,
        }
        #[derive(Serialize)]
        struct Footer<'a> {
            phase: &'static str,
            decisions: &'a [DecisionRecord],
            outcome: &'a Outcome,
        }
        serde_json::to_writer(
            &mut out,
            &Header {
                phase: "context",
                context: &self.context,
                seed: &self.seed,
            },
        )?;
        writeln!(out)?;
        for ev in self.trace.iter().flatten() {
            serde_json::to_writer(&mut out, ev)?;
            writeln!(out)?;
        }
        serde_json::to_writer(
            &mut out,
            &Footer {
                phase: "outcome",
                decisions: &self.decisions,
                outcome: &self.outcome,
            },
        )?;
        writeln!(out)
    }
}

/// Executes one run of `profile` in `ctx`.
pub fn run(ctx: &Context, profile: &StrategyProfile, seed: RunSeed, opts: &RunOptions) -> Result<RunRecord, SimError> {
    ctx.validate()?;
    let (n, f) = (ctx.n, ctx.f);
    if profile.strategies.len() != n {
        return Err(SimError::ProfileSize {
            got: profile.strategies.len(),
            n,
        });
    }
    if opts.lottery.as_ref().is_some_and(|t| t.len() != n) {
        return Err(SimError::LotteryRows);
    }
    let params = ProtocolParams::new(n, f, opts.field)?;
    let mut players = (0..n)
        .map(|i| {
            let secrets = opts.lottery.as_ref().map(|t| t[i].as_slice());
            Player::new(&params, i, ctx.prefs[i], seed, &profile.strategies[i], secrets)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let failures: Vec<Option<&Failure>> = (0..n).map(|i| ctx.pattern.failure_of(i)).collect();
    let mut trace = opts.trace.then(Vec::new);

    for round in 1..=params.rounds() {
        let mut inboxes = vec![Vec::new(); n];
        let mut traced = Vec::new();
        for (i, player) in players.iter_mut().enumerate() {
            if failures[i].is_some_and(|fl| fl.round < round) {
                continue;
            }
            for msg in player.send(round) {
                let delivered = failures[i].map_or(true, |fl| fl.delivers(round, msg.to));
                if trace.is_some() {
                    traced.push(TracedMessage {
                        delivered,
                        message: msg.to_wire(n),
                    });
                }
                if delivered {
                    inboxes[msg.to].push(msg);
                }
            }
        }
        for (i, (player, inbox)) in players.iter_mut().zip(inboxes).enumerate() {
            if failures[i].is_some_and(|fl| fl.round <= round) {
                continue;
            }
            player.receive(round, inbox);
        }
        if let Some(events) = trace.as_mut() {
            events.push(TraceEvent {
                round,
                phase: "send".into(),
                messages: Some(traced),
                agents: None,
            });
            events.push(TraceEvent {
                round,
                phase: "update".into(),
                messages: None,
                agents: Some(players.iter().map(Player::snapshot).collect()),
            });
        }
    }

    let deviators = profile.deviators();
    let decisions: Vec<DecisionRecord> = players.iter().map(Player::decision_record).collect();
    let outcome = classify_outcome(&decisions, ctx, &deviators);
    Ok(RunRecord {
        context: ctx.clone(),
        seed,
        deviators,
        info: players.iter().map(|p| p.decision_info().cloned()).collect(),
        detections: players.iter().map(|p| p.detected().map(|(r, rule)| (r, rule.number()))).collect(),
        decisions,
        outcome,
        trace,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashTiming {
    /// Each round an alive agent crashes with probability `crash_prob`.
    #[default]
    Geometric,
    /// With probability `crash_prob` an agent crashes in a uniformly chosen round.
    UniformRound,
}

/// Parameters of the context distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiParams {
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub f: usize,
    pub crash_prob: f64,
    #[serde(default = "half")]
    pub pref_prob: f64,
    #[serde(default)]
    pub mode: CrashTiming,
}

fn half() -> f64 {
    0.5
}

impl PiParams {
    pub fn new(n: usize, f: usize, crash_prob: f64, pref_prob: f64) -> Self {
        PiParams {
            n,
            f,
            crash_prob,
            pref_prob,
            mode: CrashTiming::Geometric,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.f + 1 >= self.n {
            return Err(ModelError::TooManyFaults { n: self.n, f: self.f }.into());
        }
        if !(0.0..=1.0).contains(&self.crash_prob) || !(0.0..=1.0).contains(&self.pref_prob) {
            return Err(SimError::Sampler("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Draws a crash for one agent, or none.
fn sample_failure<R: Rng>(pi: &PiParams, agent: AgentId, rng: &mut R) -> Option<Failure> {
    let last = pi.f as u32 + 1;
    let round = match pi.mode {
        CrashTiming::Geometric => (1..=last).find(|_| rng.gen_bool(pi.crash_prob))?,
        CrashTiming::UniformRound => {
            if !rng.gen_bool(pi.crash_prob) {
                return None;
            }
            rng.gen_range(1..=last)
        }
    };
    let others: Vec<AgentId> = (0..pi.n).filter(|&a| a != agent).collect();
    let recipients = loop {
        let mask: u64 = rng.gen_range(0..1u64 << others.len());
        if mask != 0 || round == 1 {
            break others
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &a)| a)
                .collect();
        }
    };
    Some(Failure { agent, round, recipients })
}

/// Samples a context: independent crashes (resampled until at most f),
/// recipients uniform and nonempty after round 1, i.i.d. preferences.
pub fn sample_context<R: Rng>(pi: &PiParams, rng: &mut R) -> Result<Context, SimError> {
    pi.validate()?;
    let pattern = loop {
        let failures: Vec<Failure> = (0..pi.n).filter_map(|a| sample_failure(pi, a, rng)).collect();
        if failures.len() <= pi.f {
            break FailurePattern::new(failures);
        }
    };
    let prefs = (0..pi.n).map(|_| u8::from(rng.gen_bool(pi.pref_prob))).collect();
    Ok(Context::new(pi.n, pi.f, pattern, prefs)?)
}

/// Whether `source`'s information can reach some nonfaulty agent other than
/// `avoid` between `from_round` and the last round without passing `avoid`.
pub fn reachable(pattern: &FailurePattern, n: usize, f: usize, source: AgentId, avoid: AgentId, from_round: u32) -> bool {
    let last = f as u32 + 1;
    let alive_at = |a: AgentId, r: u32| pattern.failure_of(a).map_or(true, |fl| fl.round >= r);
    let mut frontier: BTreeSet<AgentId> = BTreeSet::new();
    if source != avoid && alive_at(source, from_round) {
        frontier.insert(source);
    }
    for r in from_round..last {
        let mut next = BTreeSet::new();
        for &a in &frontier {
            match pattern.failure_of(a) {
                Some(fl) if fl.round == r => next.extend(fl.recipients.iter().copied()),
                Some(fl) if fl.round < r => {}
                _ => next.extend(0..n),
            }
        }
        next.remove(&avoid);
        next.retain(|&b| alive_at(b, r + 1));
        frontier = next;
    }
    frontier.iter().any(|&l| !pattern.is_faulty(l))
}

/// Setting for [`estimate_reachability`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachScenario {
    pub source: AgentId,
    pub avoid: AgentId,
    pub from_round: u32,
    /// Agents the observer already knows to be faulty; they must be faulty in
    /// every accepted sample and are excluded from the count M.
    #[serde(default)]
    pub known_faulty: BTreeSet<AgentId>,
    /// Failures imposed on every sample; other agents are drawn from π.
    #[serde(default)]
    pub forced: Vec<Failure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachEstimate {
    pub trials: u64,
    pub unreachable: u64,
    pub estimate: f64,
    /// 1 / (2M) with M the number of agents not known to be faulty.
    pub bound: f64,
    pub supports_reachability: bool,
}

/// Monte-Carlo estimate of the probability that no nonfaulty agent other
/// than `avoid` is reachable from `source`.
pub fn estimate_reachability(pi: &PiParams, scenario: &ReachScenario, trials: u64, seed: u64) -> Result<ReachEstimate, SimError> {
    pi.validate()?;
    if scenario.source >= pi.n || scenario.avoid >= pi.n {
        return Err(ModelError::AgentOutOfRange(scenario.source.max(scenario.avoid), pi.n).into());
    }
    let forced_agents: BTreeSet<AgentId> = scenario.forced.iter().map(|fl| fl.agent).collect();
    let mut unreachable = 0;
    let mut accepted = 0;
    let mut rng = RunSeed::new(seed, 0).stream(NO_AGENT, 0, Purpose::Estimator);
    let budget = trials.saturating_mul(1000).max(1000);
    let mut attempts = 0;
    while accepted < trials {
        attempts += 1;
        if attempts > budget {
            return Err(SimError::Sampler("conditioning event is too rare".into()));
        }
        let mut failures: Vec<Failure> = scenario.forced.clone();
        failures.extend(
            (0..pi.n)
                .filter(|a| !forced_agents.contains(a))
                .filter_map(|a| sample_failure(pi, a, &mut rng)),
        );
        let pattern = FailurePattern::new(failures);
        if pattern.len() > pi.f || !scenario.known_faulty.iter().all(|&a| pattern.is_faulty(a)) {
            continue;
        }
        accepted += 1;
        if !reachable(&pattern, pi.n, pi.f, scenario.source, scenario.avoid, scenario.from_round) {
            unreachable += 1;
        }
    }
    let m = pi.n - scenario.known_faulty.len();
    let estimate = unreachable as f64 / trials.max(1) as f64;
    let bound = 1.0 / (2.0 * m as f64);
    Ok(ReachEstimate {
        trials,
        unreachable,
        estimate,
        bound,
        supports_reachability: estimate <= bound,
    })
}
