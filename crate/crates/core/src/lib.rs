//! Shapley attribution of extreme events in multi-agent simulations.
//!
//! A scenario is simulated until its risk crosses a threshold. Every action
//! slot `(agent, step)` of the resulting trajectory is then a player in a
//! cooperative game whose value is the risk a coalition of actions still
//! produces when the rest are replaced by safe baseline actions. Shapley
//! values of that game, aggregated over time, agents and behaviors, explain
//! where the event came from.
//!
//! ```no_run
//! use riskshap::attribution::{mc_shapley, CharacteristicFunction};
//! use riskshap::env::{simulate, DecisionSource};
//! use riskshap::metrics::{BehaviorWeightMap, MetricReport};
//! use riskshap::scenario::{Scenario, SocialEnv, SocialParams};
//!
//! let env = SocialEnv::new(SocialParams::default())?;
//! let traj = simulate(&env, &DecisionSource::Scripted, 42, env.rho(), 60)?
//!     .event()
//!     .expect("an event");
//! let cf = CharacteristicFunction::new(&env, &traj)?;
//! let phi = mc_shapley(&cf, 200, 42)?;
//! let weights = BehaviorWeightMap::from_trajectory(&traj)?;
//! let report = MetricReport::compute(&phi, &weights, traj.threshold_rho, 0.9, cf.baseline_risk())?;
//! println!("{:?}", report.g_ag);
//! # Ok::<(), riskshap::Error>(())
//! ```

pub mod attribution;
pub mod baselines;
pub mod config;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod ewma;
pub mod http;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod types;

pub use attribution::{cosine_similarity, exact_shapley, mc_shapley, CharacteristicFunction, Game};
pub use env::{replay_counterfactual, simulate, DecisionSource, Environment, SimulationOutcome};
pub use error::{Error, Result};
pub use types::{AgentId, AttributionMatrix, CoalitionMask, Estimator, TimeStep, TrajectoryRecord};

/// Attribution matrix in single precision.
pub type AttributionMatrixF32 = AttributionMatrix<f32>;
/// Attribution matrix in double precision (the default).
pub type AttributionMatrixF64 = AttributionMatrix<f64>;
/// Attribution matrix with exact rational entries, for hand-checked games.
pub type RationalAttributionMatrix = AttributionMatrix<num_rational::Rational64>;
