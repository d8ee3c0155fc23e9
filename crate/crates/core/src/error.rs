use thiserror::Error;

use crate::types::{AgentId, TimeStep, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_agents}x{expected_steps}, found {found_agents}x{found_steps}")]
    DimensionMismatch {
        expected_agents: usize,
        expected_steps: usize,
        found_agents: usize,
        found_steps: usize,
    },

    #[error("exact Shapley over {players} players exceeds the cap of {cap}; raise the cap to at least {players} or use the Monte Carlo estimator")]
    ExactCapExceeded { players: usize, cap: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("decision source failed for agent {agent} at step {step}: {message}")]
    DecisionSource {
        agent: AgentId,
        step: TimeStep,
        message: String,
    },

    #[error("permutation {index} failed: {source}")]
    Permutation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("metric {metric} is undefined: {reason}")]
    MetricUndefined {
        metric: &'static str,
        reason: String,
    },

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("scorer transport failure on batch {batch}: {message}")]
    ScorerTransport { batch: usize, message: String },

    #[error("malformed scorer response on batch {batch}: {message}")]
    ScorerMalformed { batch: usize, message: String },

    #[error("scorer returned out-of-range score {score} for agent {agent} at step {step}")]
    ScoreOutOfRange {
        agent: AgentId,
        step: TimeStep,
        score: f64,
    },

    #[error("invalid trajectory: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTrajectory(Vec<Violation>),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn undefined(metric: &'static str, reason: impl Into<String>) -> Self {
        Error::MetricUndefined {
            metric,
            reason: reason.into(),
        }
    }
}
