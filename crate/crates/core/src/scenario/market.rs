//! Financial-market scenario over ten sector indices with a log-linear price
//! impact rule. Risk is the EWMA variance of composite-return forecast errors.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::ewma::{check_lambda, ForecastErrorEwma, RISKMETRICS_LAMBDA};
use crate::rng::{CrnStream, Purpose};
use crate::scenario::{check_positive, check_range};
use crate::types::{proportional_shares, AgentId, BehaviorShare, TimeStep};

pub const INDEX_COUNT: usize = 10;

/// Tradable indices, in behavior-class order.
pub const INDICES: [&str; INDEX_COUNT] = [
    "TLEI", "MEI", "CPEI", "IEEI", "REEI", "TSEI", "CGEI", "TTEI", "EREI", "FSEI",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Order {
    Hold,
    Buy { quantity: f64, limit: f64 },
    /// Liquidates the whole position in the index.
    Sell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketAction {
    pub orders: [Order; INDEX_COUNT],
}

impl MarketAction {
    pub fn hold() -> Self {
        MarketAction {
            orders: [Order::Hold; INDEX_COUNT],
        }
    }

    pub fn single(index: usize, order: Order) -> Self {
        let mut a = Self::hold();
        a.orders[index] = order;
        a
    }

    pub fn is_hold(&self) -> bool {
        self.orders.iter().all(|o| matches!(o, Order::Hold))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taxonomy {
    /// One class per traded index (K = 10).
    #[default]
    Index,
    /// Buys on index `k` are class `k`, sells are `10 + k` (K = 20).
    IndexDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    ShortTerm,
    LongTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraderPersona {
    pub horizon: Horizon,
    /// Typical order size in units.
    pub order_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub prices: [f64; INDEX_COUNT],
    pub prev_prices: [f64; INDEX_COUNT],
    pub holdings: Vec<[f64; INDEX_COUNT]>,
    pub cash: Vec<f64>,
    pub composite: f64,
    pub returns: ForecastErrorEwma,
    pub personas: Vec<TraderPersona>,
}

impl MarketState {
    /// Equal-weighted mean of the index prices.
    pub fn composite_of(prices: &[f64; INDEX_COUNT]) -> f64 {
        prices.iter().sum::<f64>() / INDEX_COUNT as f64
    }

    /// Cash plus holdings marked at `prices`.
    pub fn total_value(&self, prices: &[f64; INDEX_COUNT]) -> f64 {
        let held: f64 = self
            .holdings
            .iter()
            .map(|h| h.iter().zip(prices).map(|(q, p)| q * p).sum::<f64>())
            .sum();
        held + self.cash.iter().sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    pub agents: usize,
    /// Impact coefficient.
    pub eta: f64,
    /// Market depth `V0`.
    pub depth: f64,
    pub initial_price: f64,
    pub initial_cash: f64,
    pub initial_holding: f64,
    pub short_term_fraction: f64,
    pub lambda: f64,
    pub taxonomy: Taxonomy,
    /// Short-term traders act when |signal| exceeds this.
    pub signal_threshold: f64,
    /// Weight of the agent's own recent composite return in its signal.
    pub momentum_gain: f64,
    /// Weight of the per-step agent sentiment shock shared across indices.
    pub sentiment_noise: f64,
    pub idiosyncratic_noise: f64,
    /// Per-index per-step trade probability of long-term traders.
    pub rebalance_probability: f64,
    pub order_size: [f64; 2],
    /// Limit price as a multiple of the current price.
    pub limit_markup: f64,
    /// Event threshold. The default is what `calibrate_rho` gives under the
    /// default calibration plan.
    pub rho: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            agents: 10,
            eta: 0.05,
            depth: 100.0,
            initial_price: 100.0,
            initial_cash: 1e4,
            initial_holding: 10.0,
            short_term_fraction: 0.3,
            lambda: RISKMETRICS_LAMBDA,
            taxonomy: Taxonomy::Index,
            signal_threshold: 1.0,
            momentum_gain: 40.0,
            sentiment_noise: 1.0,
            idiosyncratic_noise: 0.5,
            rebalance_probability: 0.05,
            order_size: [20.0, 60.0],
            limit_markup: 1.25,
            rho: 2.0936420088315995e-5,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::invalid("market.agents", "need at least one agent"));
        }
        check_lambda(self.lambda)?;
        check_positive("market.eta", self.eta)?;
        check_positive("market.depth", self.depth)?;
        check_positive("market.initial_price", self.initial_price)?;
        check_positive("market.limit_markup", self.limit_markup)?;
        check_positive("market.rho", self.rho)?;
        check_range("market.short_term_fraction", [self.short_term_fraction; 2], 0.0, 1.0)?;
        check_range("market.rebalance_probability", [self.rebalance_probability; 2], 0.0, 1.0)?;
        check_range("market.order_size", self.order_size, f64::MIN_POSITIVE, f64::MAX)?;
        if !(self.initial_cash >= 0.0 && self.initial_holding >= 0.0) {
            return Err(Error::invalid("market.initial_cash", "cash and holdings must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MarketEnv {
    params: MarketParams,
}

impl MarketEnv {
    pub fn new(params: MarketParams) -> Result<Self> {
        params.validate()?;
        Ok(MarketEnv { params })
    }

    pub fn params_ref(&self) -> &MarketParams {
        &self.params
    }

    /// Only long-term traders, for threshold calibration.
    pub fn calm(&self) -> Self {
        MarketEnv {
            params: MarketParams {
                short_term_fraction: 0.0,
                ..self.params.clone()
            },
        }
    }

    pub fn initial_state(&self, personas: Vec<TraderPersona>) -> MarketState {
        let p = &self.params;
        let n = personas.len();
        let prices = [p.initial_price; INDEX_COUNT];
        MarketState {
            prices,
            prev_prices: prices,
            holdings: vec![[p.initial_holding; INDEX_COUNT]; n],
            cash: vec![p.initial_cash; n],
            composite: MarketState::composite_of(&prices),
            returns: ForecastErrorEwma::without_rate(),
            personas,
        }
    }
}

impl Environment for MarketEnv {
    type State = MarketState;
    type Action = MarketAction;

    fn scenario(&self) -> &'static str {
        "market"
    }

    fn agent_count(&self) -> usize {
        self.params.agents
    }

    fn behavior_count(&self) -> usize {
        match self.params.taxonomy {
            Taxonomy::Index => INDEX_COUNT,
            Taxonomy::IndexDirection => 2 * INDEX_COUNT,
        }
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.params).expect("params serialize")
    }

    fn reset(&self, crn: &CrnStream) -> MarketState {
        let p = &self.params;
        let short = (p.short_term_fraction * p.agents as f64).round() as usize;
        let personas = (0..p.agents)
            .map(|i| {
                let mut rng = crn.rng(0, i as u64, Purpose::Persona);
                let order_size = if p.order_size[1] > p.order_size[0] {
                    rng.random_range(p.order_size[0]..p.order_size[1])
                } else {
                    p.order_size[0]
                };
                TraderPersona {
                    horizon: if i < short {
                        Horizon::ShortTerm
                    } else {
                        Horizon::LongTerm
                    },
                    order_size,
                }
            })
            .collect();
        self.initial_state(personas)
    }

    fn policy(&self, agent: AgentId, state: &MarketState, step: TimeStep, crn: &CrnStream) -> MarketAction {
        let p = &self.params;
        let persona = state.personas[agent.0];
        let held = &state.holdings[agent.0];
        let mut rng = crn.rng(step.get() as u64, agent.0 as u64, Purpose::Decision);
        let mut action = MarketAction::hold();
        match persona.horizon {
            Horizon::ShortTerm => {
                let composite_prev = MarketState::composite_of(&state.prev_prices);
                let momentum = (state.composite / composite_prev).ln();
                let sentiment: f64 = rng.sample(StandardNormal);
                for k in 0..INDEX_COUNT {
                    let own = (state.prices[k] / state.prev_prices[k]).ln();
                    let z: f64 = rng.sample(StandardNormal);
                    let signal = p.momentum_gain * (momentum + own)
                        + p.sentiment_noise * sentiment
                        + p.idiosyncratic_noise * z;
                    if signal > p.signal_threshold {
                        action.orders[k] = Order::Buy {
                            quantity: persona.order_size * signal.min(3.0),
                            limit: state.prices[k] * p.limit_markup,
                        };
                    } else if signal < -p.signal_threshold && held[k] > 0.0 {
                        action.orders[k] = Order::Sell;
                    }
                }
            }
            Horizon::LongTerm => {
                for k in 0..INDEX_COUNT {
                    let u: f64 = rng.random();
                    if u >= p.rebalance_probability {
                        continue;
                    }
                    if state.prices[k] < p.initial_price {
                        action.orders[k] = Order::Buy {
                            quantity: 0.5 * persona.order_size,
                            limit: state.prices[k] * p.limit_markup,
                        };
                    } else if held[k] > 0.0 {
                        action.orders[k] = Order::Sell;
                    }
                }
            }
        }
        action
    }

    fn transition(&self, state: &MarketState, actions: &[&MarketAction], _step: TimeStep, _crn: &CrnStream) -> MarketState {
        market_transition(&self.params, state, actions)
    }

    fn risk(&self, prefix: &[MarketState]) -> f64 {
        market_risk(prefix)
    }

    fn baseline_action(&self, _agent: AgentId, _step: TimeStep) -> MarketAction {
        MarketAction::hold()
    }

    fn classify_behavior(&self, action: &MarketAction) -> Vec<BehaviorShare> {
        market_classify_behavior(action, self.params.taxonomy)
    }

    fn behavior_labels(&self) -> Vec<String> {
        match self.params.taxonomy {
            Taxonomy::Index => INDICES.iter().map(|s| s.to_string()).collect(),
            Taxonomy::IndexDirection => INDICES
                .iter()
                .map(|s| format!("buy {s}"))
                .chain(INDICES.iter().map(|s| format!("sell {s}")))
                .collect(),
        }
    }

    fn is_valid_action(&self, action: &MarketAction) -> bool {
        action.orders.iter().all(|o| match *o {
            Order::Buy { quantity, limit } => quantity > 0.0 && limit > 0.0,
            _ => true,
        })
    }

    fn action_summary(&self, action: &MarketAction) -> String {
        let parts: Vec<String> = action
            .orders
            .iter()
            .enumerate()
            .filter_map(|(k, o)| match o {
                Order::Hold => None,
                Order::Buy { quantity, limit } => Some(format!("buy {} {quantity:.1}@{limit:.2}", INDICES[k])),
                Order::Sell => Some(format!("sell {}", INDICES[k])),
            })
            .collect();
        if parts.is_empty() {
            "hold".into()
        } else {
            parts.join(", ")
        }
    }
}

/// Behavior classes of a trade; holds instantiate none.
pub fn market_classify_behavior(action: &MarketAction, taxonomy: Taxonomy) -> Vec<BehaviorShare> {
    let classes = action.orders.iter().enumerate().filter_map(|(k, o)| match (o, taxonomy) {
        (Order::Hold, _) => None,
        (_, Taxonomy::Index) => Some(k),
        (Order::Buy { .. }, Taxonomy::IndexDirection) => Some(k),
        (Order::Sell, Taxonomy::IndexDirection) => Some(INDEX_COUNT + k),
    });
    proportional_shares(classes)
}

/// Buys are first scaled down to what the agent's cash affords at the
/// current price. Prices then move by `exp(eta * F / max(V0, 1))` on net
/// order flow `F` (sells count the seller's whole position), and orders
/// execute at the new price: sells first, then buys filled only at or below
/// their limit and clipped to the cash left.
pub fn market_transition(params: &MarketParams, state: &MarketState, actions: &[&MarketAction]) -> MarketState {
    let mut flow = [0.0; INDEX_COUNT];
    let mut wanted: Vec<[f64; INDEX_COUNT]> = Vec::with_capacity(actions.len());
    for (i, a) in actions.iter().enumerate() {
        let mut buys = [0.0; INDEX_COUNT];
        let mut cost = 0.0;
        for (k, o) in a.orders.iter().enumerate() {
            match *o {
                Order::Buy { quantity, .. } => {
                    buys[k] = quantity;
                    cost += quantity * state.prices[k];
                }
                Order::Sell => flow[k] -= state.holdings[i][k],
                Order::Hold => {}
            }
        }
        // infeasible buys are scaled down to the cash at hand
        if cost > state.cash[i] {
            let scale = if cost > 0.0 { state.cash[i].max(0.0) / cost } else { 0.0 };
            buys.iter_mut().for_each(|q| *q *= scale);
        }
        for k in 0..INDEX_COUNT {
            flow[k] += buys[k];
        }
        wanted.push(buys);
    }
    let depth = params.depth.max(1.0);
    let mut prices = state.prices;
    for k in 0..INDEX_COUNT {
        prices[k] *= (params.eta * flow[k] / depth).exp();
    }
    let mut holdings = state.holdings.clone();
    let mut cash = state.cash.clone();
    for (i, a) in actions.iter().enumerate() {
        for (k, o) in a.orders.iter().enumerate() {
            if let Order::Sell = o {
                cash[i] += holdings[i][k] * prices[k];
                holdings[i][k] = 0.0;
            }
        }
        for (k, o) in a.orders.iter().enumerate() {
            if let Order::Buy { limit, .. } = *o {
                if prices[k] <= limit {
                    let filled = wanted[i][k].min(cash[i] / prices[k]);
                    cash[i] -= filled * prices[k];
                    holdings[i][k] += filled;
                }
            }
        }
    }
    let composite = MarketState::composite_of(&prices);
    let ret = composite.ln() - state.composite.ln();
    MarketState {
        prices,
        prev_prices: state.prices,
        holdings,
        cash,
        composite,
        returns: state.returns.advance(ret, params.lambda),
        personas: state.personas.clone(),
    }
}

pub fn market_risk(prefix: &[MarketState]) -> f64 {
    prefix.last().map_or(0.0, |s| s.returns.h)
}
