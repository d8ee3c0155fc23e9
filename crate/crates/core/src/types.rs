//! Domain types shared by every module: agent and step indices, recorded
//! actions, trajectories, coalition masks and attribution matrices.
//!
//! Steps are 1-indexed on every public surface. Storage is 0-indexed and
//! [`TimeStep::index0`] is the only place the two meet.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{ordered_sum, Scalar};

/// Relative tolerance for efficiency and conservation checks.
pub const EPS_NUM: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A simulation step `t` in `1..=T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TimeStep(usize);

impl TimeStep {
    pub const FIRST: TimeStep = TimeStep(1);

    pub fn new(t: usize) -> Result<Self> {
        if t == 0 {
            Err(Error::invalid("step", "time steps are 1-indexed"))
        } else {
            Ok(TimeStep(t))
        }
    }

    /// Step from a 0-based storage index.
    pub fn from_index0(i: usize) -> Self {
        TimeStep(i + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn index0(self) -> usize {
        self.0 - 1
    }

    pub fn next(self) -> Self {
        TimeStep(self.0 + 1)
    }
}

impl TryFrom<usize> for TimeStep {
    type Error = Error;
    fn try_from(t: usize) -> Result<Self> {
        TimeStep::new(t)
    }
}

impl From<TimeStep> for usize {
    fn from(t: TimeStep) -> usize {
        t.0
    }
}

impl fmt::Display for TimeStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One behavior class an action instantiates, with its share of the
/// action's attribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorShare {
    pub class: usize,
    pub weight: f64,
}

/// Splits one unit of weight over class occurrences, proportionally to how
/// often each class occurs. Output is sorted by class.
pub fn proportional_shares(classes: impl IntoIterator<Item = usize>) -> Vec<BehaviorShare> {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    let mut total = 0usize;
    for c in classes {
        total += 1;
        match counts.iter_mut().find(|(k, _)| *k == c) {
            Some((_, n)) => *n += 1,
            None => counts.push((c, 1)),
        }
    }
    counts.sort_unstable();
    counts
        .into_iter()
        .map(|(class, n)| BehaviorShare {
            class,
            weight: n as f64 / total as f64,
        })
        .collect()
}

/// Action `a_{i,t}` as recorded in a trajectory. The behavior shares are
/// computed by the scenario at record time; an empty list means the action
/// instantiates no behavior (e.g. a market agent holding everything).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord<A> {
    pub agent: AgentId,
    pub step: TimeStep,
    pub payload: A,
    pub behavior: Vec<BehaviorShare>,
}

/// The full interaction log of one run that ended in an extreme event.
///
/// `actions[i][t]` is agent `i` at 0-based step `t`; `states[t]` and
/// `risk_series[t]` are likewise 0-based storage of `s_{t+1}` and `R_{t+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord<St, A> {
    pub scenario: String,
    pub seed: u64,
    /// Scenario parameters, so a replay needs nothing but this record.
    pub params: serde_json::Value,
    pub behavior_count: usize,
    pub states: Vec<St>,
    pub actions: Vec<Vec<ActionRecord<A>>>,
    pub risk_series: Vec<f64>,
    pub threshold_rho: f64,
    pub event_step: TimeStep,
}

impl<St, A> TrajectoryRecord<St, A> {
    pub fn agents(&self) -> usize {
        self.actions.len()
    }

    /// Horizon `T`, taken from the risk series.
    pub fn steps(&self) -> usize {
        self.risk_series.len()
    }

    pub fn slots(&self) -> usize {
        self.agents() * self.steps()
    }

    pub fn action(&self, agent: AgentId, step: TimeStep) -> &ActionRecord<A> {
        &self.actions[agent.0][step.index0()]
    }

    /// Raw risk at the event step.
    pub fn final_risk(&self) -> f64 {
        *self.risk_series.last().expect("non-empty risk series")
    }
}

/// A trajectory invariant that does not hold.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Empty,
    IncompleteActionGrid { agent: AgentId, steps_present: usize },
    MisplacedAction { agent: AgentId, step: TimeStep },
    BadBehaviorShares { agent: AgentId, step: TimeStep },
    StateCount { expected: usize, found: usize },
    NonFiniteRisk { step: TimeStep },
    NonPositiveThreshold,
    EventStepMismatch { event_step: TimeStep, horizon: usize },
    EventNotExceeded,
    EventNotAtFirstCrossing { first: TimeStep },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty trajectory"),
            Violation::IncompleteActionGrid {
                agent,
                steps_present,
            } => write!(
                f,
                "incomplete action grid: agent {agent} has {steps_present} recorded steps"
            ),
            Violation::MisplacedAction { agent, step } => {
                write!(f, "action cell ({agent}, {step}) carries a different agent or step")
            }
            Violation::BadBehaviorShares { agent, step } => {
                write!(f, "behavior shares of ({agent}, {step}) are invalid")
            }
            Violation::StateCount { expected, found } => {
                write!(f, "expected {expected} states, found {found}")
            }
            Violation::NonFiniteRisk { step } => write!(f, "risk at step {step} is not finite"),
            Violation::NonPositiveThreshold => write!(f, "threshold rho must be positive"),
            Violation::EventStepMismatch {
                event_step,
                horizon,
            } => write!(f, "event step {event_step} differs from horizon {horizon}"),
            Violation::EventNotExceeded => write!(f, "final risk does not exceed rho"),
            Violation::EventNotAtFirstCrossing { first } => {
                write!(f, "event not at first crossing (risk already exceeds rho at step {first})")
            }
        }
    }
}

/// Checks every trajectory invariant. Violations are returned as data.
pub fn validate_trajectory<St, A>(traj: &TrajectoryRecord<St, A>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = traj.agents();
    let t_len = traj.steps();
    if n == 0 || t_len == 0 {
        out.push(Violation::Empty);
        return out;
    }
    for (i, row) in traj.actions.iter().enumerate() {
        if row.len() != t_len {
            out.push(Violation::IncompleteActionGrid {
                agent: AgentId(i),
                steps_present: row.len(),
            });
        }
        for (t, rec) in row.iter().enumerate() {
            let step = TimeStep::from_index0(t);
            if rec.agent != AgentId(i) || rec.step != step {
                out.push(Violation::MisplacedAction {
                    agent: AgentId(i),
                    step,
                });
            }
            let total: f64 = rec.behavior.iter().map(|s| s.weight).sum();
            let bad = rec
                .behavior
                .iter()
                .any(|s| s.class >= traj.behavior_count || !(s.weight >= 0.0))
                || (!rec.behavior.is_empty() && (total - 1.0).abs() > EPS_NUM);
            if bad {
                out.push(Violation::BadBehaviorShares {
                    agent: AgentId(i),
                    step,
                });
            }
        }
    }
    if traj.states.len() != t_len {
        out.push(Violation::StateCount {
            expected: t_len,
            found: traj.states.len(),
        });
    }
    for (t, r) in traj.risk_series.iter().enumerate() {
        if !r.is_finite() {
            out.push(Violation::NonFiniteRisk {
                step: TimeStep::from_index0(t),
            });
        }
    }
    let rho = traj.threshold_rho;
    if !(rho > 0.0) {
        out.push(Violation::NonPositiveThreshold);
    }
    if traj.event_step.get() != t_len {
        out.push(Violation::EventStepMismatch {
            event_step: traj.event_step,
            horizon: t_len,
        });
    }
    if !(traj.final_risk() > rho) {
        out.push(Violation::EventNotExceeded);
    }
    if let Some(first) = traj.risk_series[..t_len - 1].iter().position(|&r| r > rho) {
        out.push(Violation::EventNotAtFirstCrossing {
            first: TimeStep::from_index0(first),
        });
    }
    out
}

/// The set `S` of preserved action slots, as an `N x T` bit grid.
///
/// Slot `(i, t)` lives at bit `i * T + (t - 1)`. Bits past `N * T` are always
/// zero, so structural equality, hashing and the canonical key all agree.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CoalitionMask {
    agents: usize,
    steps: usize,
    words: Vec<u64>,
}

impl CoalitionMask {
    pub fn empty(agents: usize, steps: usize) -> Self {
        let slots = agents * steps;
        CoalitionMask {
            agents,
            steps,
            words: vec![0; slots.div_ceil(64)],
        }
    }

    pub fn full(agents: usize, steps: usize) -> Self {
        let mut m = Self::empty(agents, steps);
        for s in 0..m.slots() {
            m.insert_slot(s);
        }
        m
    }

    /// Mask from the low `agents * steps` bits of `bits`.
    pub fn from_bits(agents: usize, steps: usize, bits: u64) -> Self {
        let slots = agents * steps;
        assert!(slots <= 64, "from_bits supports at most 64 slots");
        let mut m = Self::empty(agents, steps);
        if slots > 0 {
            let keep = if slots == 64 { u64::MAX } else { (1u64 << slots) - 1 };
            m.words[0] = bits & keep;
        }
        m
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn slots(&self) -> usize {
        self.agents * self.steps
    }

    pub fn slot_of(&self, agent: AgentId, step: TimeStep) -> usize {
        agent.0 * self.steps + step.index0()
    }

    pub fn contains_slot(&self, slot: usize) -> bool {
        self.words[slot / 64] >> (slot % 64) & 1 == 1
    }

    pub fn contains(&self, agent: AgentId, step: TimeStep) -> bool {
        self.contains_slot(self.slot_of(agent, step))
    }

    pub fn insert_slot(&mut self, slot: usize) {
        assert!(slot < self.slots(), "slot {slot} out of range");
        self.words[slot / 64] |= 1 << (slot % 64);
    }

    pub fn remove_slot(&mut self, slot: usize) {
        assert!(slot < self.slots(), "slot {slot} out of range");
        self.words[slot / 64] &= !(1 << (slot % 64));
    }

    pub fn set(&mut self, agent: AgentId, step: TimeStep, keep: bool) {
        let s = self.slot_of(agent, step);
        if keep {
            self.insert_slot(s)
        } else {
            self.remove_slot(s)
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Canonical text form used as cache key and on disk: `NxT:` followed
    /// by the words as 16-digit lowercase hex.
    pub fn canonical_key(&self) -> String {
        let mut s = format!("{}x{}:", self.agents, self.steps);
        for w in &self.words {
            s.push_str(&format!("{w:016x}"));
        }
        s
    }

    pub fn parse_key(key: &str) -> Result<Self> {
        let bad = || Error::invalid("mask", format!("malformed mask key `{key}`"));
        let (dims, hex) = key.split_once(':').ok_or_else(bad)?;
        let (a, t) = dims.split_once('x').ok_or_else(bad)?;
        let agents: usize = a.parse().map_err(|_| bad())?;
        let steps: usize = t.parse().map_err(|_| bad())?;
        let mut m = Self::empty(agents, steps);
        if hex.len() != m.words.len() * 16 {
            return Err(bad());
        }
        for (i, w) in m.words.iter_mut().enumerate() {
            *w = u64::from_str_radix(&hex[i * 16..(i + 1) * 16], 16).map_err(|_| bad())?;
        }
        let tail = m.slots() % 64;
        if tail != 0 && m.words.last().is_some_and(|w| w >> tail != 0) {
            return Err(bad());
        }
        Ok(m)
    }
}

impl fmt::Debug for CoalitionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoalitionMask({})", self.canonical_key())
    }
}

impl Serialize for CoalitionMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.canonical_key())
    }
}

impl<'de> Deserialize<'de> for CoalitionMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CoalitionMask::parse_key(&s).map_err(serde::de::Error::custom)
    }
}

/// Which scorer produced an attribution matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
    Random { seed: u64 },
    Loo,
    External,
}

impl Estimator {
    /// Whether the efficiency axiom is expected to hold.
    pub fn is_efficient(&self) -> bool {
        matches!(self, Estimator::Exact | Estimator::MonteCarlo { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Exact => "exact",
            Estimator::MonteCarlo { .. } => "mc",
            Estimator::Random { .. } => "random",
            Estimator::Loo => "loo",
            Estimator::External => "external",
        }
    }
}

/// `N x T` grid of per-action scores `phi(a_{i,t})`, stored row-major by agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix<S = f64> {
    agents: usize,
    steps: usize,
    values: Vec<S>,
    pub estimator: Estimator,
    /// `v(Omega)`, the risk deviation being decomposed.
    pub total_risk: S,
}

impl<S: Scalar> AttributionMatrix<S> {
    pub fn new(
        agents: usize,
        steps: usize,
        values: Vec<S>,
        estimator: Estimator,
        total_risk: S,
    ) -> Result<Self> {
        if values.len() != agents * steps {
            return Err(Error::invalid(
                "values",
                format!("expected {} entries, got {}", agents * steps, values.len()),
            ));
        }
        Ok(AttributionMatrix {
            agents,
            steps,
            values,
            estimator,
            total_risk,
        })
    }

    /// Matrix from per-agent rows.
    pub fn from_rows(rows: &[Vec<S>], estimator: Estimator, total_risk: S) -> Result<Self> {
        let agents = rows.len();
        let steps = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != steps) {
            return Err(Error::invalid("rows", "ragged rows"));
        }
        Self::new(
            agents,
            steps,
            rows.iter().flatten().copied().collect(),
            estimator,
            total_risk,
        )
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, agent: AgentId, step: TimeStep) -> S {
        self.values[agent.0 * self.steps + step.index0()]
    }

    pub fn row(&self, agent: usize) -> &[S] {
        &self.values[agent * self.steps..(agent + 1) * self.steps]
    }

    pub fn column(&self, step0: usize) -> impl Iterator<Item = S> + '_ {
        (0..self.agents).map(move |i| self.values[i * self.steps + step0])
    }

    /// `vec(Phi)` in slot order.
    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<S>> {
        (0..self.agents).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn sum(&self) -> S {
        ordered_sum(&self.values)
    }

    /// `|sum(phi) - total_risk|`.
    pub fn efficiency_residual(&self) -> S {
        (self.sum() - self.total_risk).abs()
    }

    pub fn check_shape(&self, agents: usize, steps: usize) -> Result<()> {
        if self.agents != agents || self.steps != steps {
            return Err(Error::DimensionMismatch {
                expected_agents: agents,
                expected_steps: steps,
                found_agents: self.agents,
                found_steps: self.steps,
            });
        }
        Ok(())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> AttributionMatrix<T> {
        AttributionMatrix {
            agents: self.agents,
            steps: self.steps,
            values: self.values.iter().map(|&v| f(v)).collect(),
            estimator: self.estimator.clone(),
            total_risk: f(self.total_risk),
        }
    }
}
