//! Agents, crash failures, contexts, decisions and outcome classification.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type AgentId = usize;

/// Errors raised while building or validating model objects.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("agent id {0} out of range for n = {1}")]
    AgentOutOfRange(AgentId, usize),
    #[error("round must be at least 1")]
    ZeroRound,
    #[error("a failure's recipients may not include the failing agent {0}")]
    SelfRecipient(AgentId),
    #[error("need f + 1 < n, got n = {n}, f = {f}")]
    TooManyFaults { n: usize, f: usize },
    #[error("preference vector has length {got}, expected {expected}")]
    PrefLength { got: usize, expected: usize },
    #[error("preference {0} is not 0 or 1")]
    BadPreference(u8),
    #[error("invalid failure pattern: {0:?}")]
    Pattern(Vec<PatternIssue>),
    #[error("utility parameters must satisfy b0 > b1 > b2")]
    BadUtilities,
}

/// Agent `agent` crashes in `round` after delivering its round message to
/// `recipients` only.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Failure {
    pub agent: AgentId,
    pub round: u32,
    pub recipients: BTreeSet<AgentId>,
}

impl Failure {
    pub fn new(agent: AgentId, round: u32, recipients: impl IntoIterator<Item = AgentId>) -> Self {
        Failure {
            agent,
            round,
            recipients: recipients.into_iter().collect(),
        }
    }

    /// Whether the failing agent still delivers its `round` message to `to`.
    pub fn delivers(&self, round: u32, to: AgentId) -> bool {
        round < self.round || (round == self.round && self.recipients.contains(&to))
    }
}

/// Rewrites an empty crash in round m > 1 as a full-send crash in round m - 1;
/// the two are observationally identical.
pub fn canonicalize_failure(failure: &Failure, n: usize) -> Result<Failure, ModelError> {
    if failure.agent >= n {
        return Err(ModelError::AgentOutOfRange(failure.agent, n));
    }
    if failure.round == 0 {
        return Err(ModelError::ZeroRound);
    }
    if let Some(&bad) = failure.recipients.iter().find(|&&r| r >= n) {
        return Err(ModelError::AgentOutOfRange(bad, n));
    }
    if failure.recipients.contains(&failure.agent) {
        return Err(ModelError::SelfRecipient(failure.agent));
    }
    if failure.round > 1 && failure.recipients.is_empty() {
        return Ok(Failure {
            agent: failure.agent,
            round: failure.round - 1,
            recipients: (0..n).filter(|&a| a != failure.agent).collect(),
        });
    }
    Ok(failure.clone())
}

/// At most one failure per agent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FailurePattern {
    pub failures: Vec<Failure>,
}

impl FailurePattern {
    pub fn empty() -> Self {
        FailurePattern::default()
    }

    pub fn new(mut failures: Vec<Failure>) -> Self {
        failures.sort();
        FailurePattern { failures }
    }

    pub fn failure_of(&self, agent: AgentId) -> Option<&Failure> {
        self.failures.iter().find(|fl| fl.agent == agent)
    }

    pub fn is_faulty(&self, agent: AgentId) -> bool {
        self.failure_of(agent).is_some()
    }

    pub fn faulty(&self) -> BTreeSet<AgentId> {
        self.failures.iter().map(|fl| fl.agent).collect()
    }

    pub fn len(&self) -> usize {
        self.failures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.failures.is_empty()
    }

    /// Canonicalizes every failure and sorts by agent.
    pub fn canonical(&self, n: usize) -> Result<Self, ModelError> {
        let failures = self
            .failures
            .iter()
            .map(|fl| canonicalize_failure(fl, n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FailurePattern::new(failures))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "issue")]
pub enum PatternIssue {
    DuplicateAgent { agent: AgentId },
    TooManyFailures { count: usize, f: usize },
    AgentOutOfRange { agent: AgentId },
    RoundOutOfRange { agent: AgentId, round: u32 },
    RecipientOutOfRange { agent: AgentId, recipient: AgentId },
    SelfRecipient { agent: AgentId },
    NotCanonical { agent: AgentId },
}

/// Lists every problem with `pattern` for a system of `n` agents tolerating `f`
/// crashes. Rounds must lie in `1..=f+1`.
pub fn validate_pattern(pattern: &FailurePattern, n: usize, f: usize) -> Vec<PatternIssue> {
    let mut issues = Vec::new();
    let mut seen = BTreeSet::new();
    for fl in &pattern.failures {
        if !seen.insert(fl.agent) {
            issues.push(PatternIssue::DuplicateAgent { agent: fl.agent });
        }
        if fl.agent >= n {
            issues.push(PatternIssue::AgentOutOfRange { agent: fl.agent });
        }
        if fl.round == 0 || fl.round as usize > f + 1 {
            issues.push(PatternIssue::RoundOutOfRange {
                agent: fl.agent,
                round: fl.round,
            });
        }
        for &r in &fl.recipients {
            if r >= n {
                issues.push(PatternIssue::RecipientOutOfRange {
                    agent: fl.agent,
                    recipient: r,
                });
            }
        }
        if fl.recipients.contains(&fl.agent) {
            issues.push(PatternIssue::SelfRecipient { agent: fl.agent });
        }
        if fl.round > 1 && fl.recipients.is_empty() {
            issues.push(PatternIssue::NotCanonical { agent: fl.agent });
        }
    }
    if pattern.failures.len() > f {
        issues.push(PatternIssue::TooManyFailures {
            count: pattern.failures.len(),
            f,
        });
    }
    issues
}

/// A failure pattern together with the initial preferences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub n: usize,
    pub f: usize,
    pub pattern: FailurePattern,
    pub prefs: Vec<u8>,
}

impl Context {
    pub fn new(n: usize, f: usize, pattern: FailurePattern, prefs: Vec<u8>) -> Result<Self, ModelError> {
        let ctx = Context { n, f, pattern, prefs };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn failure_free(prefs: Vec<u8>, f: usize) -> Result<Self, ModelError> {
        Context::new(prefs.len(), f, FailurePattern::empty(), prefs)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.f + 1 >= self.n {
            return Err(ModelError::TooManyFaults { n: self.n, f: self.f });
        }
        if self.prefs.len() != self.n {
            return Err(ModelError::PrefLength {
                got: self.prefs.len(),
                expected: self.n,
            });
        }
        if let Some(&p) = self.prefs.iter().find(|&&p| p > 1) {
            return Err(ModelError::BadPreference(p));
        }
        let issues = validate_pattern(&self.pattern, self.n, self.f);
        if !issues.is_empty() {
            return Err(ModelError::Pattern(issues));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ContextParseError> {
        let ctx: Context = serde_json::from_str(text)?;
        let pattern = ctx.pattern.canonical(ctx.n)?;
        Ok(Context::new(ctx.n, ctx.f, pattern, ctx.prefs)?)
    }
}

#[derive(Debug, Error)]
pub enum ContextParseError {
    #[error("malformed context JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What an agent has decided so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    #[default]
    Undecided,
    Bottom,
    Value(u8),
}

impl Decision {
    pub fn is_decided(self) -> bool {
        self != Decision::Undecided
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Undecided => write!(f, "-"),
            Decision::Bottom => write!(f, "⊥"),
            Decision::Value(v) => write!(f, "{v}"),
        }
    }
}

/// A final decision plus the number of times the agent decided.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decision: Decision,
    pub times_decided: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Consensus(u8),
    NoConsensus,
}

impl Classification {
    pub fn consensus_value(self) -> Option<u8> {
        match self {
            Classification::Consensus(v) => Some(v),
            Classification::NoConsensus => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    pub agreement: bool,
    pub termination: bool,
    pub integrity: bool,
    pub validity: bool,
}

impl Violations {
    pub fn any(&self) -> bool {
        self.agreement || self.termination || self.integrity || self.validity
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub classification: Classification,
    pub violations: Violations,
}

/// Classifies a run.
///
/// Correct agents are those that neither crash nor deviate. Consensus on `v`
/// requires every correct agent to decide `v`; a deviator that is still alive
/// and has decided must also have decided `v` (deciding ⊥ or the other value
/// breaks consensus, while a deviator that never decides is treated like a
/// crashed agent). Violations only concern correct agents.
pub fn classify_outcome(
    decisions: &[DecisionRecord],
    ctx: &Context,
    deviators: &BTreeSet<AgentId>,
) -> Outcome {
    let correct: Vec<AgentId> = (0..ctx.n)
        .filter(|&a| !ctx.pattern.is_faulty(a) && !deviators.contains(&a))
        .collect();

    let mut violations = Violations::default();
    let mut values = BTreeSet::new();
    for &a in &correct {
        let rec = decisions[a];
        match rec.decision {
            Decision::Undecided => violations.termination = true,
            Decision::Bottom => {
                violations.validity = true;
                values.insert(rec.decision);
            }
            Decision::Value(v) => {
                if !ctx.prefs.contains(&v) {
                    violations.validity = true;
                }
                values.insert(rec.decision);
            }
        }
        if rec.times_decided > 1 {
            violations.integrity = true;
        }
    }
    violations.agreement = values.len() > 1;

    let common = correct.first().map(|&a| decisions[a].decision);
    let all_same = correct.iter().all(|&a| Some(decisions[a].decision) == common);
    let classification = match common {
        Some(Decision::Value(v)) if all_same => {
            let deviators_ok = deviators.iter().all(|&d| {
                ctx.pattern.is_faulty(d)
                    || matches!(decisions[d].decision, Decision::Undecided)
                    || decisions[d].decision == Decision::Value(v)
            });
            if deviators_ok {
                Classification::Consensus(v)
            } else {
                Classification::NoConsensus
            }
        }
        _ => Classification::NoConsensus,
    };
    Outcome {
        classification,
        violations,
    }
}

/// Utility weights: own value decided, other value decided, no consensus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UtilityParams {
    pub own: f64,
    pub other: f64,
    pub none: f64,
}

impl UtilityParams {
    pub fn new(own: f64, other: f64, none: f64) -> Result<Self, ModelError> {
        if own > other && other > none {
            Ok(UtilityParams { own, other, none })
        } else {
            Err(ModelError::BadUtilities)
        }
    }

    /// Spread between the best and worst outcome.
    pub fn range(&self) -> f64 {
        self.own - self.none
    }
}

impl Default for UtilityParams {
    fn default() -> Self {
        UtilityParams {
            own: 2.0,
            other: 1.0,
            none: 0.0,
        }
    }
}

impl TryFrom<[f64; 3]> for UtilityParams {
    type Error = ModelError;
    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        UtilityParams::new(v[0], v[1], v[2])
    }
}

impl From<UtilityParams> for [f64; 3] {
    fn from(u: UtilityParams) -> Self {
        [u.own, u.other, u.none]
    }
}

/// Each agent's utility for the classified outcome.
pub fn utilities(outcome: &Outcome, prefs: &[u8], beta: &UtilityParams) -> Vec<f64> {
    prefs
        .iter()
        .map(|&p| match outcome.classification {
            Classification::Consensus(v) if v == p => beta.own,
            Classification::Consensus(_) => beta.other,
            Classification::NoConsensus => beta.none,
        })
        .collect()
}
