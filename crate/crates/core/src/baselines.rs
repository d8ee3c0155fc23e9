//! Competing scorers for the deletion test: random scores, leave-one-out
//! and an external scoring service.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{CharacteristicFunction, Game};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::http::{post_json, ExchangeError, HttpEndpoint};
use crate::rng::{CrnStream, Purpose};
use crate::types::{AgentId, AttributionMatrix, CoalitionMask, Estimator, TimeStep, TrajectoryRecord};

/// I.i.d. standard normal scores. Depends only on `(agents, steps, seed)`;
/// `total_risk` is left at 0 for the caller to fill in.
pub fn random_attribution(agents: usize, steps: usize, seed: u64) -> AttributionMatrix {
    let mut rng = CrnStream::new(seed).rng(0, 0, Purpose::RandomScores);
    let values = (0..agents * steps).map(|_| rng.sample(StandardNormal)).collect();
    AttributionMatrix::new(agents, steps, values, Estimator::Random { seed }, 0.0).expect("shape matches")
}

/// `LOO(i, t) = v(Omega) - v(Omega \ {(i, t)})`, which equals
/// `R_T(tau) - R_T(tau_{-i,t})`. Uses `N * T + 1` evaluations.
pub fn loo_attribution<E: Environment>(cf: &CharacteristicFunction<'_, E>) -> Result<AttributionMatrix> {
    let (n, t) = (cf.agents(), cf.steps());
    let full = CoalitionMask::full(n, t);
    let grand = cf.value(&full)?;
    let values = (0..n * t)
        .into_par_iter()
        .map(|slot| {
            let mut m = full.clone();
            m.remove_slot(slot);
            Ok(grand - cf.value(&m)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    AttributionMatrix::new(n, t, values, Estimator::Loo, grand)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotDescription {
    pub agent: usize,
    pub step: usize,
    pub action_summary: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreContext {
    pub target_risk: f64,
    pub baseline_risk: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub scenario: String,
    pub batch_index: usize,
    pub batch_count: usize,
    pub slots: Vec<SlotDescription>,
    pub context: ScoreContext,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotScore {
    #[serde(alias = "agent_id")]
    pub agent: usize,
    #[serde(alias = "timestep")]
    pub step: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<SlotScore>,
}

/// Failure of one request, before any validation of its contents.
#[derive(Debug)]
pub enum TransportError {
    Transport(String),
    Decode(String),
}

/// Carries one scoring batch to a scorer and back.
pub trait ScoreTransport: Sync {
    fn exchange(&self, request: &ScoreRequest) -> Result<ScoreResponse, TransportError>;
}

/// JSON over HTTP POST.
#[derive(Clone, Debug)]
pub struct HttpScorer {
    pub endpoint: HttpEndpoint,
}

impl ScoreTransport for HttpScorer {
    fn exchange(&self, request: &ScoreRequest) -> Result<ScoreResponse, TransportError> {
        post_json(&self.endpoint, request).map_err(|e| match e {
            ExchangeError::Transport(m) => TransportError::Transport(m),
            ExchangeError::Decode(m) => TransportError::Decode(m),
        })
    }
}

impl<F> ScoreTransport for F
where
    F: Fn(&ScoreRequest) -> Result<ScoreResponse, TransportError> + Sync,
{
    fn exchange(&self, request: &ScoreRequest) -> Result<ScoreResponse, TransportError> {
        self(request)
    }
}

pub const DEFAULT_BATCH_SIZE: usize = 40;

/// Slot index ranges of each batch, in slot order.
pub fn batch_ranges(slots: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    (0..slots.div_ceil(batch_size))
        .map(|b| b * batch_size..((b + 1) * batch_size).min(slots))
        .collect()
}

/// Scores every slot of `traj` with an external service in batches of
/// `batch_size`. Each batch must return exactly its own slots, with scores
/// in `[0, 1]`.
pub fn external_attribution<E: Environment>(
    scorer: &dyn ScoreTransport,
    env: &E,
    traj: &TrajectoryRecord<E::State, E::Action>,
    batch_size: usize,
    baseline_risk: f64,
) -> Result<AttributionMatrix> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be at least 1"));
    }
    let (n, t) = (traj.agents(), traj.steps());
    let ranges = batch_ranges(n * t, batch_size);
    let batch_count = ranges.len();
    let context = ScoreContext {
        target_risk: traj.final_risk(),
        baseline_risk,
    };
    let batches: Vec<Vec<f64>> = ranges
        .par_iter()
        .enumerate()
        .map(|(b, range)| {
            let slots: Vec<SlotDescription> = range
                .clone()
                .map(|s| SlotDescription {
                    agent: s / t,
                    step: s % t + 1,
                    action_summary: env.action_summary(&traj.actions[s / t][s % t].payload),
                })
                .collect();
            let request = ScoreRequest {
                scenario: traj.scenario.clone(),
                batch_index: b,
                batch_count,
                slots,
                context,
            };
            let response = scorer.exchange(&request).map_err(|e| match e {
                TransportError::Transport(message) => Error::ScorerTransport { batch: b, message },
                TransportError::Decode(message) => Error::ScorerMalformed { batch: b, message },
            })?;
            assemble_batch(b, range.clone(), t, &response)
        })
        .collect::<Result<_>>()?;
    let values = batches.into_iter().flatten().collect();
    AttributionMatrix::new(n, t, values, Estimator::External, traj.final_risk() - baseline_risk)
}

fn assemble_batch(batch: usize, range: std::ops::Range<usize>, steps: usize, response: &ScoreResponse) -> Result<Vec<f64>> {
    let mut got: HashMap<(usize, usize), f64> = HashMap::new();
    for s in &response.scores {
        let slot = s.agent * steps + s.step.wrapping_sub(1);
        if s.step == 0 || s.step > steps || !range.contains(&slot) {
            return Err(Error::ScorerMalformed {
                batch,
                message: format!("unexpected slot (agent {}, step {})", s.agent, s.step),
            });
        }
        if !(0.0..=1.0).contains(&s.score) {
            return Err(Error::ScoreOutOfRange {
                agent: AgentId(s.agent),
                step: TimeStep::from_index0(s.step - 1),
                score: s.score,
            });
        }
        if got.insert((s.agent, s.step), s.score).is_some() {
            return Err(Error::ScorerMalformed {
                batch,
                message: format!("duplicate score for (agent {}, step {})", s.agent, s.step),
            });
        }
    }
    range
        .map(|slot| {
            let key = (slot / steps, slot % steps + 1);
            got.get(&key).copied().ok_or_else(|| Error::ScorerMalformed {
                batch,
                message: format!("missing score for (agent {}, step {})", key.0, key.1),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::exact_shapley;
    use crate::env::record_trajectory;
    use crate::scenario::toy::ToyEnv;
    use std::sync::Mutex;

    #[test]
    fn random_is_seeded() {
        let a = random_attribution(3, 4, 7);
        assert_eq!(a, random_attribution(3, 4, 7));
        assert_ne!(a.as_slice(), random_attribution(3, 4, 8).as_slice());
        assert_eq!(a.estimator, Estimator::Random { seed: 7 });
        let big = random_attribution(100, 100, 1);
        let mean: f64 = big.as_slice().iter().sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn loo_on_additive_toy_equals_shapley() {
        let env = ToyEnv::linear(vec![1.0, 2.0]);
        let traj = record_trajectory(&env, 1, vec![vec![0.5, 0.0], vec![0.25, 1.0], vec![0.0, 0.0]], 1.0).unwrap();
        let cf = CharacteristicFunction::new(&env, &traj).unwrap();
        let loo = loo_attribution(&cf).unwrap();
        assert_eq!(cf.evaluations(), 7);
        let exact = exact_shapley(&cf).unwrap();
        for (a, b) in loo.as_slice().iter().zip(exact.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        // the baseline-equal slot scores zero
        assert_eq!(loo.get(AgentId(1), TimeStep::FIRST), 0.0);
    }

    #[test]
    fn batching_arithmetic() {
        let r = batch_ranges(100, 40);
        assert_eq!(r, vec![0..40, 40..80, 80..100]);
    }

    fn toy_traj() -> (ToyEnv, TrajectoryRecord<f64, f64>) {
        let env = ToyEnv::linear(vec![1.0; 10]);
        let joint = vec![vec![0.1; 10]; 10];
        let traj = record_trajectory(&env, 1, joint, 1.0).unwrap();
        (env, traj)
    }

    #[test]
    fn external_echo_and_batches() {
        let (env, traj) = toy_traj();
        let seen = Mutex::new(Vec::new());
        let stub = |req: &ScoreRequest| {
            seen.lock().unwrap().push((req.batch_index, req.slots.len(), req.batch_count));
            Ok(ScoreResponse {
                scores: req
                    .slots
                    .iter()
                    .map(|s| SlotScore {
                        agent: s.agent,
                        step: s.step,
                        score: 0.5,
                    })
                    .collect(),
            })
        };
        let phi = external_attribution(&stub, &env, &traj, 40, 0.0).unwrap();
        assert!(phi.as_slice().iter().all(|&v| v == 0.5));
        let mut seen = seen.into_inner().unwrap();
        seen.sort();
        assert_eq!(seen, vec![(0, 40, 3), (1, 40, 3), (2, 20, 3)]);
    }

    #[test]
    fn external_errors_are_distinct() {
        let (env, traj) = toy_traj();
        let missing = |req: &ScoreRequest| {
            Ok(ScoreResponse {
                scores: req
                    .slots
                    .iter()
                    .filter(|s| !(s.agent == 3 && s.step == 4))
                    .map(|s| SlotScore { agent: s.agent, step: s.step, score: 0.1 })
                    .collect(),
            })
        };
        match external_attribution(&missing, &env, &traj, 40, 0.0) {
            Err(Error::ScorerMalformed { batch: 0, message }) => assert!(message.contains("agent 3, step 4"), "{message}"),
            other => panic!("{other:?}"),
        }
        let out_of_range = |req: &ScoreRequest| {
            Ok(ScoreResponse {
                scores: req.slots.iter().map(|s| SlotScore { agent: s.agent, step: s.step, score: 1.5 }).collect(),
            })
        };
        assert!(matches!(
            external_attribution(&out_of_range, &env, &traj, 40, 0.0),
            Err(Error::ScoreOutOfRange { .. })
        ));
        let down = |_: &ScoreRequest| Err(TransportError::Transport("connection refused".into()));
        assert!(matches!(
            external_attribution(&down, &env, &traj, 40, 0.0),
            Err(Error::ScorerTransport { .. })
        ));
    }

    #[test]
    fn response_accepts_prompt_field_names() {
        let r: ScoreResponse = serde_json::from_str(r#"{"scores":[{"agent_id":1,"timestep":2,"score":0.3}]}"#).unwrap();
        assert_eq!(r.scores[0], SlotScore { agent: 1, step: 2, score: 0.3 });
    }
}
