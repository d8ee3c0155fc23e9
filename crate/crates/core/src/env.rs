//! The environment contract, forward simulation and counterfactual replay.

use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{post_json, ExchangeError, HttpEndpoint};
use crate::rng::CrnStream;
use crate::types::{ActionRecord, AgentId, BehaviorShare, CoalitionMask, TimeStep, TrajectoryRecord};

/// A replayable multi-agent system.
///
/// `transition` and `risk` must be deterministic in their arguments, and any
/// randomness must come from the supplied [`CrnStream`].
pub trait Environment: Send + Sync {
    type State: Clone + Debug + PartialEq + Serialize + DeserializeOwned + Send + Sync;
    type Action: Clone + Debug + PartialEq + Serialize + DeserializeOwned + Send + Sync;

    fn scenario(&self) -> &'static str;
    fn agent_count(&self) -> usize;
    /// Number of behavior classes `K`.
    fn behavior_count(&self) -> usize;
    /// Parameters needed to rebuild this environment.
    fn params(&self) -> serde_json::Value;

    fn reset(&self, crn: &CrnStream) -> Self::State;
    /// Scripted decision of one agent.
    fn policy(&self, agent: AgentId, state: &Self::State, step: TimeStep, crn: &CrnStream) -> Self::Action;
    /// Hook to make externally decided joint actions consistent (e.g. drop
    /// reactions to posts nobody made). Scripted policies are already consistent.
    fn reconcile(&self, _state: &Self::State, _actions: &mut [Self::Action]) {}
    fn transition(
        &self,
        state: &Self::State,
        actions: &[&Self::Action],
        step: TimeStep,
        crn: &CrnStream,
    ) -> Self::State;
    /// Raw risk `R_t` of a state prefix `s_1..s_t`.
    fn risk(&self, prefix: &[Self::State]) -> f64;
    fn baseline_action(&self, agent: AgentId, step: TimeStep) -> Self::Action;
    fn classify_behavior(&self, action: &Self::Action) -> Vec<BehaviorShare>;

    /// Display names of the behavior classes, `behavior_count` of them.
    fn behavior_labels(&self) -> Vec<String> {
        (0..self.behavior_count()).map(|k| format!("class {k}")).collect()
    }

    fn is_valid_action(&self, _action: &Self::Action) -> bool {
        true
    }

    /// What an external decision service sees.
    fn observation(&self, _agent: AgentId, state: &Self::State) -> serde_json::Value {
        serde_json::to_value(state).unwrap_or(serde_json::Value::Null)
    }

    /// One-line description for external scorers.
    fn action_summary(&self, action: &Self::Action) -> String {
        serde_json::to_string(action).unwrap_or_default()
    }
}

/// Who decides the agents' actions during forward simulation.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum DecisionSource {
    #[default]
    Scripted,
    External(HttpEndpoint),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub scenario: String,
    pub agent_id: usize,
    pub step: usize,
    pub observation: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionResponse<A> {
    pub action: A,
}

fn decide<E: Environment>(
    env: &E,
    source: &DecisionSource,
    state: &E::State,
    step: TimeStep,
    crn: &CrnStream,
) -> Result<Vec<E::Action>> {
    let n = env.agent_count();
    match source {
        DecisionSource::Scripted => Ok((0..n)
            .map(|i| env.policy(AgentId(i), state, step, crn))
            .collect()),
        DecisionSource::External(endpoint) => {
            let mut actions = Vec::with_capacity(n);
            for i in 0..n {
                let agent = AgentId(i);
                let req = DecisionRequest {
                    scenario: env.scenario().to_string(),
                    agent_id: i,
                    step: step.get(),
                    observation: env.observation(agent, state),
                };
                let resp: DecisionResponse<E::Action> =
                    post_json(endpoint, &req).map_err(|e| Error::DecisionSource {
                        agent,
                        step,
                        message: match e {
                            ExchangeError::Transport(m) => m,
                            ExchangeError::Decode(m) => format!("bad response: {m}"),
                        },
                    })?;
                if !env.is_valid_action(&resp.action) {
                    return Err(Error::DecisionSource {
                        agent,
                        step,
                        message: "action outside the scenario's action space".into(),
                    });
                }
                actions.push(resp.action);
            }
            env.reconcile(state, &mut actions);
            Ok(actions)
        }
    }
}

/// A run that never crossed the threshold; kept for threshold calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoEventRun {
    pub seed: u64,
    pub risk_series: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimulationOutcome<St, A> {
    Event(TrajectoryRecord<St, A>),
    NoEvent(NoEventRun),
}

impl<St, A> SimulationOutcome<St, A> {
    pub fn event(self) -> Option<TrajectoryRecord<St, A>> {
        match self {
            SimulationOutcome::Event(t) => Some(t),
            SimulationOutcome::NoEvent(_) => None,
        }
    }
}

/// Runs until risk first exceeds `rho` or `max_steps` states have been seen.
pub fn simulate<E: Environment>(
    env: &E,
    source: &DecisionSource,
    seed: u64,
    rho: f64,
    max_steps: usize,
) -> Result<SimulationOutcome<E::State, E::Action>> {
    if max_steps == 0 {
        return Err(Error::invalid("max_steps", "must be at least 1"));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", format!("{rho} is not positive")));
    }
    let run = run_steps(env, source, seed, max_steps, |r| r > rho)?;
    if run.crossed {
        Ok(SimulationOutcome::Event(run.into_record(env, seed, rho)))
    } else {
        Ok(SimulationOutcome::NoEvent(NoEventRun {
            seed,
            risk_series: run.risk_series,
        }))
    }
}

/// Exactly `horizon` steps with no threshold, for fixed-size experiments.
/// Returns `None` unless the last risk is a strict, positive maximum of the
/// series, i.e. unless some threshold makes the last step the first crossing.
pub fn simulate_horizon<E: Environment>(
    env: &E,
    seed: u64,
    horizon: usize,
) -> Result<Option<TrajectoryRecord<E::State, E::Action>>> {
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    let run = run_steps(env, &DecisionSource::Scripted, seed, horizon, |_| false)?;
    let last = *run.risk_series.last().expect("non-empty");
    let prior = run.risk_series[..horizon - 1]
        .iter()
        .fold(0.0_f64, |m, &r| m.max(r));
    if !(last > prior) {
        return Ok(None);
    }
    let rho = 0.5 * (prior + last);
    Ok(Some(run.into_record(env, seed, rho)))
}

struct RawRun<St, A> {
    states: Vec<St>,
    actions: Vec<Vec<A>>,
    risk_series: Vec<f64>,
    crossed: bool,
}

impl<St, A> RawRun<St, A> {
    fn into_record<E>(self, env: &E, seed: u64, rho: f64) -> TrajectoryRecord<St, A>
    where
        E: Environment<State = St, Action = A>,
    {
        let n = env.agent_count();
        let t_len = self.states.len();
        let mut grid: Vec<Vec<ActionRecord<A>>> = (0..n).map(|_| Vec::with_capacity(t_len)).collect();
        for (t, joint) in self.actions.into_iter().enumerate() {
            for (i, payload) in joint.into_iter().enumerate() {
                let behavior = env.classify_behavior(&payload);
                grid[i].push(ActionRecord {
                    agent: AgentId(i),
                    step: TimeStep::from_index0(t),
                    payload,
                    behavior,
                });
            }
        }
        TrajectoryRecord {
            scenario: env.scenario().to_string(),
            seed,
            params: env.params(),
            behavior_count: env.behavior_count(),
            states: self.states,
            actions: grid,
            risk_series: self.risk_series,
            threshold_rho: rho,
            event_step: TimeStep::from_index0(t_len - 1),
        }
    }
}

fn run_steps<E: Environment>(
    env: &E,
    source: &DecisionSource,
    seed: u64,
    max_steps: usize,
    stop: impl Fn(f64) -> bool,
) -> Result<RawRun<E::State, E::Action>> {
    let crn = CrnStream::new(seed);
    let mut states = vec![env.reset(&crn)];
    let mut actions = Vec::new();
    let mut risk_series = Vec::new();
    loop {
        let step = TimeStep::from_index0(states.len() - 1);
        let r = env.risk(&states);
        risk_series.push(r);
        let crossed = stop(r);
        let current = states.last().expect("non-empty");
        let joint = decide(env, source, current, step, &crn)?;
        if crossed || states.len() == max_steps {
            actions.push(joint);
            return Ok(RawRun {
                states,
                actions,
                risk_series,
                crossed,
            });
        }
        let refs: Vec<&E::Action> = joint.iter().collect();
        let next = env.transition(current, &refs, step, &crn);
        actions.push(joint);
        states.push(next);
    }
}

/// `tau^S`: states and recomputed risk of a counterfactual replay.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterfactual<St> {
    pub states: Vec<St>,
    pub risk_series: Vec<f64>,
}

/// Replays one trajectory under many masks. Holds the baseline action grid
/// so each replay only borrows payloads.
pub struct Replayer<'a, E: Environment> {
    env: &'a E,
    traj: &'a TrajectoryRecord<E::State, E::Action>,
    baseline: Vec<Vec<E::Action>>,
    crn: CrnStream,
}

impl<'a, E: Environment> Replayer<'a, E> {
    pub fn new(env: &'a E, traj: &'a TrajectoryRecord<E::State, E::Action>) -> Result<Self> {
        if traj.agents() != env.agent_count() || traj.steps() == 0 || traj.states.is_empty() {
            return Err(Error::DimensionMismatch {
                expected_agents: env.agent_count(),
                expected_steps: traj.steps(),
                found_agents: traj.agents(),
                found_steps: traj.states.len(),
            });
        }
        let t_len = traj.steps();
        let baseline = (0..traj.agents())
            .map(|i| {
                (0..t_len)
                    .map(|t| env.baseline_action(AgentId(i), TimeStep::from_index0(t)))
                    .collect()
            })
            .collect();
        Ok(Replayer {
            env,
            traj,
            baseline,
            crn: CrnStream::new(traj.seed),
        })
    }

    pub fn env(&self) -> &'a E {
        self.env
    }

    pub fn trajectory(&self) -> &'a TrajectoryRecord<E::State, E::Action> {
        self.traj
    }

    fn check(&self, mask: &CoalitionMask) -> Result<()> {
        if mask.agents() != self.traj.agents() || mask.steps() != self.traj.steps() {
            return Err(Error::DimensionMismatch {
                expected_agents: self.traj.agents(),
                expected_steps: self.traj.steps(),
                found_agents: mask.agents(),
                found_steps: mask.steps(),
            });
        }
        Ok(())
    }

    /// Counterfactual states `s_1..s_T`. Preserved slots replay their recorded
    /// payload, all others take the baseline action.
    pub fn replay_states(&self, mask: &CoalitionMask) -> Result<Vec<E::State>> {
        self.check(mask)?;
        let n = self.traj.agents();
        let t_len = self.traj.steps();
        let mut states = Vec::with_capacity(t_len);
        states.push(self.traj.states[0].clone());
        let mut joint: Vec<&E::Action> = Vec::with_capacity(n);
        for t in 0..t_len - 1 {
            let step = TimeStep::from_index0(t);
            joint.clear();
            for i in 0..n {
                let slot = i * t_len + t;
                joint.push(if mask.contains_slot(slot) {
                    &self.traj.actions[i][t].payload
                } else {
                    &self.baseline[i][t]
                });
            }
            let next = self.env.transition(&states[t], &joint, step, &self.crn);
            states.push(next);
        }
        Ok(states)
    }

    pub fn replay(&self, mask: &CoalitionMask) -> Result<Counterfactual<E::State>> {
        let states = self.replay_states(mask)?;
        let risk_series = (1..=states.len()).map(|t| self.env.risk(&states[..t])).collect();
        Ok(Counterfactual { states, risk_series })
    }
}

/// Re-simulates `traj` keeping only the actions in `mask`, over the original
/// horizon and the original random streams.
pub fn replay_counterfactual<E: Environment>(
    env: &E,
    traj: &TrajectoryRecord<E::State, E::Action>,
    mask: &CoalitionMask,
) -> Result<Counterfactual<E::State>> {
    Replayer::new(env, traj)?.replay(mask)
}

/// Builds a trajectory from externally fixed joint actions, one entry per
/// step. For fixtures and hand-constructed games; `rho` is stored as given.
pub fn record_trajectory<E: Environment>(
    env: &E,
    seed: u64,
    joint_actions: Vec<Vec<E::Action>>,
    rho: f64,
) -> Result<TrajectoryRecord<E::State, E::Action>> {
    let n = env.agent_count();
    if joint_actions.is_empty() || joint_actions.iter().any(|j| j.len() != n) {
        return Err(Error::invalid("joint_actions", format!("need T >= 1 joint actions of {n} agents")));
    }
    let crn = CrnStream::new(seed);
    let mut states = vec![env.reset(&crn)];
    for (t, joint) in joint_actions[..joint_actions.len() - 1].iter().enumerate() {
        let refs: Vec<&E::Action> = joint.iter().collect();
        let next = env.transition(&states[t], &refs, TimeStep::from_index0(t), &crn);
        states.push(next);
    }
    let risk_series = (1..=states.len()).map(|t| env.risk(&states[..t])).collect();
    let run = RawRun {
        states,
        actions: joint_actions,
        risk_series,
        crossed: true,
    };
    Ok(run.into_record(env, seed, rho))
}
