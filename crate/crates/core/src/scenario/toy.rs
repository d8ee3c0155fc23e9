//! Small closed-form environments for testing estimators.
//!
//! Each agent emits a number per step, the state accumulates
//! `weight_i * action`, and the risk is either the running total or its
//! square. Baseline actions are 0.

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::{CrnStream, Purpose};
use crate::types::{AgentId, BehaviorShare, TimeStep};
use rand::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyRisk {
    /// `R = total`: an additive game, `phi = weight * action`.
    #[default]
    Linear,
    /// `R = total^2`: `phi_j = x_j * sum(x)`.
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub weights: Vec<f64>,
    pub risk: ToyRisk,
    /// Scripted actions are drawn uniformly from this range.
    pub action_range: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct ToyEnv {
    params: ToyParams,
}

impl ToyEnv {
    pub fn new(params: ToyParams) -> Result<Self> {
        if params.weights.is_empty() {
            return Err(Error::invalid("toy.weights", "need at least one agent"));
        }
        if !(params.action_range[0] <= params.action_range[1]) {
            return Err(Error::invalid("toy.action_range", "lower bound above upper bound"));
        }
        Ok(ToyEnv { params })
    }

    pub fn linear(weights: Vec<f64>) -> Self {
        ToyEnv {
            params: ToyParams {
                weights,
                risk: ToyRisk::Linear,
                action_range: [0.0, 1.0],
            },
        }
    }

    pub fn quadratic(weights: Vec<f64>) -> Self {
        ToyEnv {
            params: ToyParams {
                weights,
                risk: ToyRisk::Quadratic,
                action_range: [-1.0, 1.0],
            },
        }
    }
}

impl Environment for ToyEnv {
    type State = f64;
    type Action = f64;

    fn scenario(&self) -> &'static str {
        "toy"
    }

    fn agent_count(&self) -> usize {
        self.params.weights.len()
    }

    fn behavior_count(&self) -> usize {
        2
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.params).expect("params serialize")
    }

    fn reset(&self, _crn: &CrnStream) -> f64 {
        0.0
    }

    fn policy(&self, agent: AgentId, _state: &f64, step: TimeStep, crn: &CrnStream) -> f64 {
        let [lo, hi] = self.params.action_range;
        if hi > lo {
            crn.rng(step.get() as u64, agent.0 as u64, Purpose::Decision)
                .random_range(lo..hi)
        } else {
            lo
        }
    }

    fn transition(&self, state: &f64, actions: &[&f64], _step: TimeStep, _crn: &CrnStream) -> f64 {
        state
            + actions
                .iter()
                .zip(&self.params.weights)
                .map(|(a, w)| w * **a)
                .sum::<f64>()
    }

    fn risk(&self, prefix: &[f64]) -> f64 {
        let total = prefix.last().copied().unwrap_or(0.0);
        match self.params.risk {
            ToyRisk::Linear => total,
            ToyRisk::Quadratic => total * total,
        }
    }

    fn baseline_action(&self, _agent: AgentId, _step: TimeStep) -> f64 {
        0.0
    }

    /// Class 0 for positive pushes, 1 for negative; zero is no behavior.
    fn classify_behavior(&self, action: &f64) -> Vec<BehaviorShare> {
        if *action > 0.0 {
            vec![BehaviorShare { class: 0, weight: 1.0 }]
        } else if *action < 0.0 {
            vec![BehaviorShare { class: 1, weight: 1.0 }]
        } else {
            Vec::new()
        }
    }

    fn is_valid_action(&self, action: &f64) -> bool {
        action.is_finite()
    }
}
