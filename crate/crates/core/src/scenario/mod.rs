//! Built-in scenarios and name-based dispatch over them.

pub mod econ;
pub mod market;
pub mod social;
pub mod toy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{simulate, DecisionSource, Environment, SimulationOutcome};
use crate::error::{Error, Result};

pub use econ::{EconAction, EconEnv, EconParams, EconState};
pub use market::{MarketAction, MarketEnv, MarketParams, MarketState, Order};
pub use social::{ReactionKind, SocialAction, SocialEnv, SocialParams, SocialState};
pub use toy::{ToyEnv, ToyRisk};

/// An environment with a threshold and a low-activity variant used to
/// calibrate it.
pub trait Scenario: Environment + Clone {
    fn rho(&self) -> f64;
    fn calm(&self) -> Self;
    fn with_rho(&self, rho: f64) -> Self;
}

impl Scenario for EconEnv {
    fn rho(&self) -> f64 {
        self.params_ref().rho
    }
    fn calm(&self) -> Self {
        EconEnv::calm(self)
    }
    fn with_rho(&self, rho: f64) -> Self {
        EconEnv::new(EconParams {
            rho,
            ..self.params_ref().clone()
        })
        .expect("only rho changed")
    }
}

impl Scenario for MarketEnv {
    fn rho(&self) -> f64 {
        self.params_ref().rho
    }
    fn calm(&self) -> Self {
        MarketEnv::calm(self)
    }
    fn with_rho(&self, rho: f64) -> Self {
        MarketEnv::new(MarketParams {
            rho,
            ..self.params_ref().clone()
        })
        .expect("only rho changed")
    }
}

impl Scenario for SocialEnv {
    fn rho(&self) -> f64 {
        self.params_ref().rho
    }
    fn calm(&self) -> Self {
        SocialEnv::calm(self)
    }
    fn with_rho(&self, rho: f64) -> Self {
        SocialEnv::new(SocialParams {
            rho,
            ..self.params_ref().clone()
        })
        .expect("only rho changed")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Econ,
    Market,
    Social,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Econ, ScenarioKind::Market, ScenarioKind::Social];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Econ => "econ",
            ScenarioKind::Market => "market",
            ScenarioKind::Social => "social",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "econ" => Ok(ScenarioKind::Econ),
            "market" => Ok(ScenarioKind::Market),
            "social" => Ok(ScenarioKind::Social),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

/// Generic code run against whichever scenario is configured.
pub trait ScenarioVisitor {
    type Output;
    fn visit<E: Scenario>(self, env: &E) -> Self::Output;
}

#[derive(Clone, Debug)]
pub enum AnyScenario {
    Econ(EconEnv),
    Market(MarketEnv),
    Social(SocialEnv),
}

impl AnyScenario {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            AnyScenario::Econ(_) => ScenarioKind::Econ,
            AnyScenario::Market(_) => ScenarioKind::Market,
            AnyScenario::Social(_) => ScenarioKind::Social,
        }
    }

    pub fn visit<V: ScenarioVisitor>(&self, visitor: V) -> V::Output {
        match self {
            AnyScenario::Econ(e) => visitor.visit(e),
            AnyScenario::Market(e) => visitor.visit(e),
            AnyScenario::Social(e) => visitor.visit(e),
        }
    }

    /// Rebuilds the environment stored in a trajectory's `params` field.
    pub fn from_params(kind: ScenarioKind, params: &serde_json::Value) -> Result<Self> {
        Ok(match kind {
            ScenarioKind::Econ => AnyScenario::Econ(EconEnv::new(serde_json::from_value(params.clone())?)?),
            ScenarioKind::Market => AnyScenario::Market(MarketEnv::new(serde_json::from_value(params.clone())?)?),
            ScenarioKind::Social => AnyScenario::Social(SocialEnv::new(serde_json::from_value(params.clone())?)?),
        })
    }
}

pub(crate) fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} must be positive and finite")))
    }
}

/// `range` must be ordered and inside `[min, max]`.
pub(crate) fn check_range(name: &'static str, range: [f64; 2], min: f64, max: f64) -> Result<()> {
    let [lo, hi] = range;
    if lo <= hi && lo >= min && hi <= max {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("[{lo}, {hi}] must be ordered within [{min}, {max}]")))
    }
}

/// How a threshold is derived from uneventful runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationPlan {
    pub runs: usize,
    pub first_seed: u64,
    pub max_steps: usize,
    pub percentile: f64,
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        CalibrationPlan {
            runs: 20,
            first_seed: 1000,
            max_steps: 60,
            percentile: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub rho: f64,
    /// Number of pooled risk values.
    pub samples: usize,
}

/// Nearest-rank percentile: the `ceil(p * n)`-th smallest value.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("values", "percentile of an empty sample"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("percentile", format!("{p} is outside (0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[rank - 1])
}

/// Runs the calm variant of `env` with no threshold and takes a percentile
/// of the pooled risk series.
pub fn calibrate_rho<E: Scenario>(env: &E, plan: &CalibrationPlan) -> Result<Calibration> {
    if plan.runs == 0 {
        return Err(Error::invalid("calibration_runs", "must be at least 1"));
    }
    let calm = env.calm();
    let mut pool = Vec::with_capacity(plan.runs * plan.max_steps);
    for k in 0..plan.runs as u64 {
        match simulate(&calm, &DecisionSource::Scripted, plan.first_seed + k, f64::MAX, plan.max_steps)? {
            SimulationOutcome::NoEvent(run) => pool.extend(run.risk_series),
            SimulationOutcome::Event(t) => pool.extend(t.risk_series),
        }
    }
    let rho = nearest_rank_percentile(&pool, plan.percentile)?;
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", "calibration runs produced no positive risk"));
    }
    Ok(Calibration { rho, samples: pool.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!(matches!("weather".parse::<ScenarioKind>(), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn params_round_trip() {
        let e = SocialEnv::new(SocialParams::default()).unwrap();
        let back = AnyScenario::from_params(ScenarioKind::Social, &e.params()).unwrap();
        match back {
            AnyScenario::Social(s) => assert_eq!(s.params_ref(), e.params_ref()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn percentile_by_nearest_rank() {
        let v: Vec<f64> = (1..=200).rev().map(f64::from).collect();
        // ceil(0.99 * 200) = 198
        assert_eq!(nearest_rank_percentile(&v, 0.99).unwrap(), 198.0);
        assert_eq!(nearest_rank_percentile(&[3.0], 0.99).unwrap(), 3.0);
        assert_eq!(nearest_rank_percentile(&[1.0, 2.0], 0.5).unwrap(), 1.0);
        assert!(nearest_rank_percentile(&[], 0.5).is_err());
        assert!(nearest_rank_percentile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn calibration_matches_pooled_percentile() {
        let env = MarketEnv::new(MarketParams::default()).unwrap();
        let plan = CalibrationPlan {
            runs: 3,
            max_steps: 15,
            ..CalibrationPlan::default()
        };
        let cal = calibrate_rho(&env, &plan).unwrap();
        let mut pool = Vec::new();
        for s in 1000..1003 {
            if let SimulationOutcome::NoEvent(r) = simulate(&env.calm(), &DecisionSource::Scripted, s, 1e300, 15).unwrap() {
                pool.extend(r.risk_series);
            }
        }
        assert_eq!(pool.len(), 45);
        assert_eq!(cal.samples, 45);
        pool.sort_by(f64::total_cmp);
        assert_eq!(cal.rho, pool[44]);
    }

    #[test]
    fn default_thresholds_are_calibrated() {
        let plan = CalibrationPlan::default();
        let econ = EconEnv::new(EconParams::default()).unwrap();
        assert_eq!(calibrate_rho(&econ, &plan).unwrap().rho, econ.rho());
        let market = MarketEnv::new(MarketParams::default()).unwrap();
        assert_eq!(calibrate_rho(&market, &plan).unwrap().rho, market.rho());
        let social = SocialEnv::new(SocialParams::default()).unwrap();
        assert_eq!(calibrate_rho(&social, &plan).unwrap().rho, social.rho());
    }

    #[test]
    fn range_checks() {
        assert!(check_range("x", [0.2, 0.1], 0.0, 1.0).is_err());
        assert!(check_range("x", [0.0, 1.0], 0.0, 1.0).is_ok());
        assert!(check_positive("x", 0.0).is_err());
        assert!(check_positive("x", f64::NAN).is_err());
    }
}
