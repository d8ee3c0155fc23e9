//! File formats: trajectory and attribution documents.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! gives the very same bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::scenario::{AnyScenario, ScenarioKind};
use crate::types::{validate_trajectory, ActionRecord, AttributionMatrix, Estimator, TimeStep, TrajectoryRecord};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TrajectoryDoc<St, A> {
    schema_version: u32,
    scenario: String,
    seed: u64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "T")]
    t: usize,
    rho: f64,
    event_step: TimeStep,
    behavior_count: usize,
    params: serde_json::Value,
    risk_series: Vec<f64>,
    states: Vec<St>,
    actions: Vec<Vec<ActionRecord<A>>>,
}

pub fn trajectory_to_json<St: Serialize + Clone, A: Serialize + Clone>(traj: &TrajectoryRecord<St, A>) -> Result<String> {
    let doc = TrajectoryDoc {
        schema_version: SCHEMA_VERSION,
        scenario: traj.scenario.clone(),
        seed: traj.seed,
        n: traj.agents(),
        t: traj.steps(),
        rho: traj.threshold_rho,
        event_step: traj.event_step,
        behavior_count: traj.behavior_count,
        params: traj.params.clone(),
        risk_series: traj.risk_series.clone(),
        states: traj.states.clone(),
        actions: traj.actions.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn check_version(found: u64, what: &str) -> Result<()> {
    if found != u64::from(SCHEMA_VERSION) {
        return Err(Error::Config(format!(
            "{what} has schema_version {found}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

/// A trajectory file parsed just far enough to know its scenario.
pub struct TrajectoryFile {
    pub scenario: AnyScenario,
    raw: serde_json::Value,
}

impl TrajectoryFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
        check_version(version, "trajectory")?;
        let kind: ScenarioKind = raw
            .get("scenario")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Config("trajectory has no `scenario` field".into()))?
            .parse()?;
        let params = raw.get("params").cloned().unwrap_or(serde_json::Value::Null);
        let scenario = AnyScenario::from_params(kind, &params)?;
        Ok(TrajectoryFile { scenario, raw })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// The typed record for the scenario's environment, validated.
    pub fn record<E: Environment>(&self, env: &E) -> Result<TrajectoryRecord<E::State, E::Action>> {
        let doc: TrajectoryDoc<E::State, E::Action> = serde_json::from_value(self.raw.clone())?;
        if doc.scenario != env.scenario() {
            return Err(Error::UnknownScenario(doc.scenario));
        }
        let traj = TrajectoryRecord {
            scenario: doc.scenario,
            seed: doc.seed,
            params: doc.params,
            behavior_count: doc.behavior_count,
            states: doc.states,
            actions: doc.actions,
            risk_series: doc.risk_series,
            threshold_rho: doc.rho,
            event_step: doc.event_step,
        };
        if traj.agents() != doc.n || traj.steps() != doc.t {
            return Err(Error::DimensionMismatch {
                expected_agents: doc.n,
                expected_steps: doc.t,
                found_agents: traj.agents(),
                found_steps: traj.steps(),
            });
        }
        let violations = validate_trajectory(&traj);
        if !violations.is_empty() {
            return Err(Error::InvalidTrajectory(violations));
        }
        Ok(traj)
    }
}

pub fn write_trajectory<St: Serialize + Clone, A: Serialize + Clone>(traj: &TrajectoryRecord<St, A>, path: &Path) -> Result<()> {
    fs::write(path, trajectory_to_json(traj)?)?;
    Ok(())
}

/// Attribution output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionDocument {
    pub schema_version: u32,
    pub scenario: String,
    pub estimator: String,
    #[serde(rename = "M")]
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub values: Vec<Vec<f64>>,
    pub total_risk: f64,
    pub baseline_risk: f64,
    pub evaluations_used: u64,
    /// Left empty unless timing was requested, so reruns stay byte-identical.
    pub wall_time_ms: Option<u64>,
}

impl AttributionDocument {
    pub fn new(scenario: &str, phi: &AttributionMatrix, baseline_risk: f64, evaluations_used: u64) -> Self {
        let (samples, seed) = match phi.estimator {
            Estimator::MonteCarlo { samples, seed } => (Some(samples), Some(seed)),
            Estimator::Random { seed } => (None, Some(seed)),
            _ => (None, None),
        };
        AttributionDocument {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            estimator: phi.estimator.label().to_string(),
            samples,
            seed,
            n: phi.agents(),
            t: phi.steps(),
            values: phi.rows(),
            total_risk: phi.total_risk,
            baseline_risk,
            evaluations_used,
            wall_time_ms: None,
        }
    }

    pub fn matrix(&self) -> Result<AttributionMatrix> {
        let estimator = match (self.estimator.as_str(), self.samples, self.seed) {
            ("exact", _, _) => Estimator::Exact,
            ("mc", Some(samples), Some(seed)) => Estimator::MonteCarlo { samples, seed },
            ("random", _, Some(seed)) => Estimator::Random { seed },
            ("loo", _, _) => Estimator::Loo,
            ("external", _, _) => Estimator::External,
            (other, _, _) => return Err(Error::Config(format!("unknown estimator `{other}` in attribution file"))),
        };
        let m = AttributionMatrix::from_rows(&self.values, estimator, self.total_risk)?;
        m.check_shape(self.n, self.t)?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        check_version(raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0), "attribution")?;
        Ok(serde_json::from_value(raw)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
