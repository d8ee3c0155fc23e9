//! Run configuration, read from a single TOML file.
//!
//! Every field has a default, so an empty file is a valid config. Unknown
//! keys are rejected so typos do not silently fall back to defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::DEFAULT_EXACT_CAP;
use crate::baselines::DEFAULT_BATCH_SIZE;
use crate::error::{Error, Result};
use crate::evaluation::Ranking;
use crate::metrics::DEFAULT_Q;
use crate::scenario::{
    AnyScenario, CalibrationPlan, EconEnv, EconParams, MarketEnv, MarketParams, ScenarioKind, SocialEnv,
    SocialParams,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunConfig,
    pub econ: EconParams,
    pub market: MarketParams,
    pub social: SocialParams,
    pub attribution: AttributionConfig,
    pub evaluation: EvaluationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub max_steps: usize,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
    pub calibration: CalibrationPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioKind::Social,
            seed: 42,
            max_steps: 60,
            workers: None,
            calibration: CalibrationPlan::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Mc,
    Random,
    Loo,
    External,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Exact, Method::Mc, Method::Random, Method::Loo, Method::External];

    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Mc => "mc",
            Method::Random => "random",
            Method::Loo => "loo",
            Method::External => "external",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected exact, mc, random, loo or external)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub method: Method,
    /// Permutations `M` for Monte Carlo.
    pub samples: usize,
    pub exact_cap: usize,
    /// Latency quantile `q`.
    pub q: f64,
    pub batch_size: usize,
    pub scorer_timeout_ms: u64,
    pub scorer_retries: u32,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            method: Method::Mc,
            samples: 200,
            exact_cap: DEFAULT_EXACT_CAP,
            q: DEFAULT_Q,
            batch_size: DEFAULT_BATCH_SIZE,
            scorer_timeout_ms: 30_000,
            scorer_retries: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    #[default]
    Faithfulness,
    McAccuracy,
}

impl FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faithfulness" => Ok(EvalMode::Faithfulness),
            "mc-accuracy" => Ok(EvalMode::McAccuracy),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected faithfulness or mc-accuracy)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub mode: EvalMode,
    /// One trajectory per seed. A seed without an event is replaced by the
    /// first derived seed that has one.
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
    pub ranking: Ranking,
    pub include_loo: bool,
    /// Also score with the external service (needs the endpoint variable).
    pub include_external: bool,
    pub random_seed: u64,
    /// Use exact Shapley instead of Monte Carlo in the deletion test.
    pub exact_shapley: bool,
    pub max_attempts: u64,
    pub accuracy_seeds: Vec<u64>,
    pub accuracy_samples: Vec<usize>,
    pub accuracy_agents: usize,
    pub accuracy_horizon: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            mode: EvalMode::Faithfulness,
            seeds: (1..=5).collect(),
            ks: vec![3, 10],
            ranking: Ranking::Signed,
            include_loo: true,
            include_external: false,
            random_seed: 7,
            exact_shapley: false,
            max_attempts: 100,
            accuracy_seeds: (0..10).collect(),
            accuracy_samples: vec![10, 100, 1000, 10_000],
            accuracy_agents: 4,
            accuracy_horizon: 5,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every section, so errors surface at load time.
    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: Result<()>| r.map_err(|e| Error::Config(format!("[{name}] {e}")));
        section("econ", EconEnv::new(self.econ.clone()).map(drop))?;
        section("market", MarketEnv::new(self.market.clone()).map(drop))?;
        section("social", SocialEnv::new(self.social.clone()).map(drop))?;
        if self.run.max_steps == 0 {
            return Err(Error::Config("[run] max_steps must be at least 1".into()));
        }
        if self.run.workers == Some(0) {
            return Err(Error::Config("[run] workers must be at least 1".into()));
        }
        let a = &self.attribution;
        if !(a.q > 0.0 && a.q <= 1.0) {
            return Err(Error::Config(format!("[attribution] q = {} must be in (0, 1]", a.q)));
        }
        if a.samples == 0 || a.batch_size == 0 {
            return Err(Error::Config("[attribution] samples and batch_size must be at least 1".into()));
        }
        let e = &self.evaluation;
        if e.accuracy_agents == 0 || e.accuracy_horizon == 0 || e.max_attempts == 0 {
            return Err(Error::Config(
                "[evaluation] accuracy_agents, accuracy_horizon and max_attempts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The configured environment of `kind`.
    pub fn scenario(&self, kind: ScenarioKind) -> Result<AnyScenario> {
        self.scenario_with_agents(kind, None)
    }

    /// Like [`Config::scenario`], optionally overriding the agent count.
    pub fn scenario_with_agents(&self, kind: ScenarioKind, agents: Option<usize>) -> Result<AnyScenario> {
        Ok(match kind {
            ScenarioKind::Econ => {
                let mut p = self.econ.clone();
                p.agents = agents.unwrap_or(p.agents);
                AnyScenario::Econ(EconEnv::new(p)?)
            }
            ScenarioKind::Market => {
                let mut p = self.market.clone();
                p.agents = agents.unwrap_or(p.agents);
                AnyScenario::Market(MarketEnv::new(p)?)
            }
            ScenarioKind::Social => {
                let mut p = self.social.clone();
                p.agents = agents.unwrap_or(p.agents);
                AnyScenario::Social(SocialEnv::new(p)?)
            }
        })
    }
}
