//! Macroeconomic scenario: agents choose whether to work and what share of
//! their wealth to consume; the price level responds to excess demand and
//! risk is the EWMA variance of inflation forecast errors.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::Result;
use crate::ewma::{check_lambda, ForecastErrorEwma, RISKMETRICS_LAMBDA};
use crate::rng::{CrnStream, Purpose};
use crate::scenario::{check_positive, check_range};
use crate::types::{AgentId, BehaviorShare, TimeStep};

/// Labor and consumption decision of one agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconAction {
    pub works: bool,
    pub consumption_rate: f64,
}

impl EconAction {
    /// Works and consumes 80% of wealth.
    pub const BASELINE: EconAction = EconAction {
        works: true,
        consumption_rate: 0.8,
    };

    /// Consumption quartile in `0..4`; intervals are half-open and a rate of
    /// exactly 1 falls in the top one.
    pub fn quartile(&self) -> usize {
        ((self.consumption_rate * 4.0).floor() as usize).min(3)
    }

    /// 0-3: not working, consumption quartiles ascending; 4-7: working.
    pub fn behavior_class(&self) -> usize {
        usize::from(self.works) * 4 + self.quartile()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconPersona {
    pub work_propensity: f64,
    pub consumption_mean: f64,
    pub consumption_volatility: f64,
    pub shock: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconState {
    pub price_level: f64,
    pub wage: f64,
    /// Wealth carried into the next step, after spending.
    pub wealth: Vec<f64>,
    pub income: Vec<f64>,
    pub inflation: ForecastErrorEwma,
    pub personas: Vec<EconPersona>,
}

impl EconState {
    pub fn inflation_rate(&self) -> f64 {
        self.inflation.last_rate.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconParams {
    pub agents: usize,
    /// Price response to relative excess demand.
    pub kappa: f64,
    pub lambda: f64,
    pub productivity: f64,
    pub initial_price: f64,
    pub initial_wage: f64,
    /// Post-spending wealth at reset. 0.25 is the steady state of the
    /// baseline economy at `P = W = 1`.
    pub initial_wealth: f64,
    pub epsilon: f64,
    /// Fraction of agents drawn as erratic "shock" consumers.
    pub shock_fraction: f64,
    pub work_propensity: [f64; 2],
    pub consumption_mean: [f64; 2],
    pub consumption_volatility: [f64; 2],
    pub shock_work_propensity: [f64; 2],
    pub shock_volatility: [f64; 2],
    /// Event threshold. The default is what `calibrate_rho` gives under the
    /// default calibration plan.
    pub rho: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        EconParams {
            agents: 10,
            kappa: 0.2,
            lambda: RISKMETRICS_LAMBDA,
            productivity: 1.0,
            initial_price: 1.0,
            initial_wage: 1.0,
            initial_wealth: 0.25,
            epsilon: 1e-9,
            shock_fraction: 0.3,
            work_propensity: [0.9, 1.0],
            consumption_mean: [0.75, 0.85],
            consumption_volatility: [0.02, 0.06],
            shock_work_propensity: [0.6, 0.9],
            shock_volatility: [0.2, 0.35],
            rho: 2.1313418216678057e-4,
        }
    }
}

impl EconParams {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(crate::Error::invalid("econ.agents", "need at least one agent"));
        }
        check_lambda(self.lambda)?;
        check_positive("econ.kappa", self.kappa)?;
        check_positive("econ.productivity", self.productivity)?;
        check_positive("econ.initial_price", self.initial_price)?;
        check_positive("econ.initial_wage", self.initial_wage)?;
        check_positive("econ.epsilon", self.epsilon)?;
        check_positive("econ.rho", self.rho)?;
        if !(self.initial_wealth >= 0.0) {
            return Err(crate::Error::invalid("econ.initial_wealth", "must be non-negative"));
        }
        check_range("econ.shock_fraction", [self.shock_fraction; 2], 0.0, 1.0)?;
        check_range("econ.work_propensity", self.work_propensity, 0.0, 1.0)?;
        check_range("econ.consumption_mean", self.consumption_mean, 0.0, 1.0)?;
        check_range("econ.consumption_volatility", self.consumption_volatility, 0.0, f64::MAX)?;
        check_range("econ.shock_work_propensity", self.shock_work_propensity, 0.0, 1.0)?;
        check_range("econ.shock_volatility", self.shock_volatility, 0.0, f64::MAX)?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EconEnv {
    params: EconParams,
}

impl EconEnv {
    pub fn new(params: EconParams) -> Result<Self> {
        params.validate()?;
        Ok(EconEnv { params })
    }

    pub fn params_ref(&self) -> &EconParams {
        &self.params
    }

    /// Same economy with every persona calm, for threshold calibration.
    pub fn calm(&self) -> Self {
        EconEnv {
            params: EconParams {
                shock_fraction: 0.0,
                ..self.params.clone()
            },
        }
    }

    /// Initial state with explicit personas; wealth, prices and wage at their defaults.
    pub fn initial_state(&self, personas: Vec<EconPersona>) -> EconState {
        let n = self.params.agents;
        EconState {
            price_level: self.params.initial_price,
            wage: self.params.initial_wage,
            wealth: vec![self.params.initial_wealth; n],
            income: vec![0.0; n],
            inflation: ForecastErrorEwma::with_initial_rate(0.0),
            personas,
        }
    }
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

impl Environment for EconEnv {
    type State = EconState;
    type Action = EconAction;

    fn scenario(&self) -> &'static str {
        "econ"
    }

    fn agent_count(&self) -> usize {
        self.params.agents
    }

    fn behavior_count(&self) -> usize {
        8
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.params).expect("params serialize")
    }

    fn reset(&self, crn: &CrnStream) -> EconState {
        let p = &self.params;
        let n = p.agents;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut crn.rng(0, u64::MAX, Purpose::Persona));
        let shocks = (p.shock_fraction * n as f64).round() as usize;
        let mut is_shock = vec![false; n];
        for &i in &order[..shocks] {
            is_shock[i] = true;
        }
        let personas = (0..n)
            .map(|i| {
                let mut rng = crn.rng(0, i as u64, Purpose::Persona);
                let consumption_mean = uniform(&mut rng, p.consumption_mean);
                if is_shock[i] {
                    EconPersona {
                        work_propensity: uniform(&mut rng, p.shock_work_propensity),
                        consumption_mean,
                        consumption_volatility: uniform(&mut rng, p.shock_volatility),
                        shock: true,
                    }
                } else {
                    EconPersona {
                        work_propensity: uniform(&mut rng, p.work_propensity),
                        consumption_mean,
                        consumption_volatility: uniform(&mut rng, p.consumption_volatility),
                        shock: false,
                    }
                }
            })
            .collect();
        self.initial_state(personas)
    }

    fn policy(&self, agent: AgentId, state: &EconState, step: TimeStep, crn: &CrnStream) -> EconAction {
        let persona = &state.personas[agent.0];
        let mut rng = crn.rng(step.get() as u64, agent.0 as u64, Purpose::Decision);
        let works = rng.random::<f64>() < persona.work_propensity;
        let z: f64 = rng.sample(StandardNormal);
        let consumption_rate = (persona.consumption_mean + persona.consumption_volatility * z).clamp(0.0, 1.0);
        EconAction {
            works,
            consumption_rate,
        }
    }

    fn transition(&self, state: &EconState, actions: &[&EconAction], _step: TimeStep, _crn: &CrnStream) -> EconState {
        econ_transition(&self.params, state, actions)
    }

    fn risk(&self, prefix: &[EconState]) -> f64 {
        econ_risk(prefix)
    }

    fn baseline_action(&self, _agent: AgentId, _step: TimeStep) -> EconAction {
        EconAction::BASELINE
    }

    fn classify_behavior(&self, action: &EconAction) -> Vec<BehaviorShare> {
        vec![BehaviorShare {
            class: action.behavior_class(),
            weight: 1.0,
        }]
    }

    fn behavior_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(8);
        for work in ["no-work", "work"] {
            for q in 1..=4 {
                out.push(format!("{work} consumption Q{q}"));
            }
        }
        out
    }

    fn is_valid_action(&self, action: &EconAction) -> bool {
        (0.0..=1.0).contains(&action.consumption_rate)
    }

    fn action_summary(&self, a: &EconAction) -> String {
        format!(
            "{} consumption={:.3}",
            if a.works { "work" } else { "no-work" },
            a.consumption_rate
        )
    }
}

/// Workers earn the wage, everyone spends `rate * wealth`, and the price
/// level moves by `kappa * (D - Q) / max(Q, eps)` with real demand
/// `D = spending / P` and supply `Q = workers * productivity`.
pub fn econ_transition(params: &EconParams, state: &EconState, actions: &[&EconAction]) -> EconState {
    let n = state.wealth.len();
    let mut wealth = Vec::with_capacity(n);
    let mut income = Vec::with_capacity(n);
    let mut spending = 0.0;
    let mut workers = 0usize;
    for (i, a) in actions.iter().enumerate() {
        let earned = if a.works {
            workers += 1;
            state.wage
        } else {
            0.0
        };
        let available = state.wealth[i] + earned;
        let spent = a.consumption_rate * available;
        spending += spent;
        wealth.push(available - spent);
        income.push(earned);
    }
    let demand = spending / state.price_level;
    let supply = workers as f64 * params.productivity;
    let price_level =
        state.price_level * (1.0 + params.kappa * (demand - supply) / supply.max(params.epsilon));
    let rate = price_level.ln() - state.price_level.ln();
    EconState {
        price_level,
        wage: state.wage,
        wealth,
        income,
        inflation: state.inflation.advance(rate, params.lambda),
        personas: state.personas.clone(),
    }
}

/// EWMA inflation risk carried by the last state of the prefix.
pub fn econ_risk(prefix: &[EconState]) -> f64 {
    prefix.last().map_or(0.0, |s| s.inflation.h)
}
