//! Dimensional aggregation of an attribution matrix and the metrics built
//! on it: risk latency, agent concentration and instability correlation,
//! synchronization, and behavior concentration.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{ordered_sum, population_std, RealScalar, Scalar};
use crate::types::{AttributionMatrix, BehaviorShare, TimeStep, TrajectoryRecord, EPS_NUM};

/// Default cumulative-risk fraction for the latency metric.
pub const DEFAULT_Q: f64 = 0.9;

/// `phi_tm[t] = sum_i phi(a_{i,t})`.
pub fn aggregate_time<S: Scalar>(phi: &AttributionMatrix<S>) -> Vec<S> {
    (0..phi.steps())
        .map(|t| phi.column(t).fold(S::zero(), |a, v| a + v))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Latency<S = f64> {
    pub t_star: TimeStep,
    /// `(T - T*) / T`.
    pub l_tm: S,
}

/// First step at which `baseline + sum_{t' <= t} phi_tm[t']` exceeds
/// `q * rho`. With `baseline = 0` this is the plain prefix-sum crossing;
/// passing the baseline risk compares raw risk against the raw threshold.
pub fn risk_latency<S: Scalar>(phi_tm: &[S], rho: S, q: S, baseline: S) -> Result<Latency<S>> {
    let target = q * rho;
    let mut acc = baseline;
    for (t, &v) in phi_tm.iter().enumerate() {
        acc += v;
        if acc > target {
            let big_t = S::from_count(phi_tm.len());
            return Ok(Latency {
                t_star: TimeStep::from_index0(t),
                l_tm: (big_t - S::from_count(t + 1)) / big_t,
            });
        }
    }
    Err(Error::undefined("l_tm", "cumulative risk never exceeds q * rho"))
}

/// Row sums `phi_ag`.
pub fn agent_totals<S: Scalar>(phi: &AttributionMatrix<S>) -> Vec<S> {
    (0..phi.agents()).map(|i| ordered_sum(phi.row(i))).collect()
}

/// `(phi_ag, sigma_ag)`: row sums and per-row population standard deviations.
pub fn aggregate_agent<S: RealScalar>(phi: &AttributionMatrix<S>) -> (Vec<S>, Vec<S>) {
    let sigma = (0..phi.agents())
        .map(|i| population_std(phi.row(i)).unwrap_or_else(S::zero))
        .collect();
    (agent_totals(phi), sigma)
}

/// Mean-absolute-difference Gini over `|values|`.
pub fn gini<S: Scalar>(values: &[S]) -> Result<S> {
    let abs: Vec<S> = values.iter().map(|v| v.abs()).collect();
    let total = ordered_sum(&abs);
    if total == S::zero() {
        return Err(Error::undefined("gini", "all values are zero"));
    }
    let mut diff = S::zero();
    for &x in &abs {
        for &y in &abs {
            diff += (x - y).abs();
        }
    }
    let g = diff / (S::from_count(2 * abs.len()) * total);
    Ok(clamp(g, S::zero(), S::one()))
}

/// Pearson correlation of `|phi_ag|` and `sigma_ag`.
pub fn risk_instability_correlation<S: RealScalar>(phi_ag: &[S], sigma_ag: &[S]) -> Result<S> {
    if phi_ag.len() != sigma_ag.len() || phi_ag.is_empty() {
        return Err(Error::undefined("c_ag", "vectors must be non-empty and of equal length"));
    }
    let x: Vec<S> = phi_ag.iter().map(|v| v.abs()).collect();
    let n = S::from_count(x.len());
    let mx = ordered_sum(&x) / n;
    let my = ordered_sum(sigma_ag) / n;
    let (mut sxy, mut sxx, mut syy) = (S::zero(), S::zero(), S::zero());
    for (&a, &b) in x.iter().zip(sigma_ag) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > S::zero()) || !(syy > S::zero()) {
        return Err(Error::undefined("c_ag", "zero variance in |phi_ag| or sigma_ag"));
    }
    Ok(clamp(sxy / (sxx * syy).sqrt(), -S::one(), S::one()))
}

/// `E_t[|sum_i phi(a_{i,t})| / sum_i |phi(a_{i,t})|]` over steps with a
/// nonzero denominator.
pub fn synchronization<S: Scalar>(phi: &AttributionMatrix<S>) -> Result<S> {
    let mut acc = S::zero();
    let mut used = 0usize;
    for t in 0..phi.steps() {
        let (sum, abs) = phi
            .column(t)
            .fold((S::zero(), S::zero()), |(s, a), v| (s + v, a + v.abs()));
        if abs != S::zero() {
            acc += sum.abs() / abs;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::undefined("z_ag", "every step has zero total absolute attribution"));
    }
    Ok(clamp(acc / S::from_count(used), S::zero(), S::one()))
}

fn clamp<S: Scalar>(v: S, lo: S, hi: S) -> S {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

/// Behavior shares of every slot, in slot order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorWeightMap {
    agents: usize,
    steps: usize,
    classes: usize,
    shares: Vec<Vec<BehaviorShare>>,
}

impl BehaviorWeightMap {
    /// `shares` in slot order `i * T + (t - 1)`. Each entry is empty or has
    /// non-negative weights summing to 1 with classes below `classes`.
    pub fn new(agents: usize, steps: usize, classes: usize, shares: Vec<Vec<BehaviorShare>>) -> Result<Self> {
        if shares.len() != agents * steps {
            return Err(Error::invalid("behavior", format!("expected {} slots, got {}", agents * steps, shares.len())));
        }
        for (slot, s) in shares.iter().enumerate() {
            let total: f64 = s.iter().map(|b| b.weight).sum();
            let bad_class = s.iter().any(|b| b.class >= classes || !(b.weight >= 0.0));
            if bad_class || (!s.is_empty() && (total - 1.0).abs() > 1e-9) {
                return Err(Error::invalid(
                    "behavior",
                    format!("slot {slot} has invalid shares {s:?} for K = {classes}"),
                ));
            }
        }
        Ok(BehaviorWeightMap {
            agents,
            steps,
            classes,
            shares,
        })
    }

    pub fn from_trajectory<St, A>(traj: &TrajectoryRecord<St, A>) -> Result<Self> {
        let shares = traj
            .actions
            .iter()
            .flat_map(|row| row.iter().map(|r| r.behavior.clone()))
            .collect();
        Self::new(traj.agents(), traj.steps(), traj.behavior_count, shares)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn slot(&self, slot: usize) -> &[BehaviorShare] {
        &self.shares[slot]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorAggregate<S = f64> {
    pub per_class: Vec<S>,
    /// Attribution of slots with no behavior instance.
    pub unclassified: S,
}

/// `phi_be[k] = sum_{i,t} weight(i, t, k) * phi(a_{i,t})`.
pub fn aggregate_behavior<S: Scalar>(phi: &AttributionMatrix<S>, weights: &BehaviorWeightMap) -> Result<BehaviorAggregate<S>> {
    phi.check_shape(weights.agents, weights.steps)?;
    let mut per_class = vec![S::zero(); weights.classes];
    let mut unclassified = S::zero();
    for (slot, &v) in phi.as_slice().iter().enumerate() {
        let shares = weights.slot(slot);
        if shares.is_empty() {
            unclassified += v;
        }
        for b in shares {
            per_class[b.class] += S::from_weight(b.weight) * v;
        }
    }
    Ok(BehaviorAggregate {
        per_class,
        unclassified,
    })
}

/// Every aggregate and metric of one attribution matrix. Metrics that are
/// undefined for this input are `None` with the reason in `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub estimator: String,
    pub agents: usize,
    pub steps: usize,
    pub total_risk: f64,
    pub baseline_risk: f64,
    pub rho: f64,
    pub q: f64,
    pub phi_tm: Vec<f64>,
    pub t_star: Option<TimeStep>,
    pub l_tm: Option<f64>,
    pub phi_ag: Vec<f64>,
    pub sigma_ag: Vec<f64>,
    pub g_ag: Option<f64>,
    pub c_ag: Option<f64>,
    pub z_ag: Option<f64>,
    pub phi_be: Vec<f64>,
    pub phi_be_unclassified: f64,
    pub g_be: Option<f64>,
    /// `|sum phi - total_risk|`; meaningful for efficient estimators.
    pub efficiency_residual: f64,
    pub conservation: Conservation,
    pub undefined: BTreeMap<String, String>,
}

/// The three aggregate totals, which agree up to rounding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub time: f64,
    pub agent: f64,
    pub behavior: f64,
    pub max_residual: f64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.max_residual <= EPS_NUM * self.time.abs().max(1.0)
    }
}

fn record<T>(undefined: &mut BTreeMap<String, String>, name: &str, r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::MetricUndefined { reason, .. }) => {
            undefined.insert(name.to_string(), reason);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

impl MetricReport {
    pub fn compute(
        phi: &AttributionMatrix<f64>,
        weights: &BehaviorWeightMap,
        rho: f64,
        q: f64,
        baseline_risk: f64,
    ) -> Result<Self> {
        if !(q > 0.0) || !(rho > 0.0) {
            return Err(Error::invalid("q", "q and rho must be positive"));
        }
        let mut undefined = BTreeMap::new();
        let phi_tm = aggregate_time(phi);
        let latency = record(&mut undefined, "l_tm", risk_latency(&phi_tm, rho, q, baseline_risk))?;
        let (phi_ag, sigma_ag) = aggregate_agent(phi);
        let g_ag = record(&mut undefined, "g_ag", gini(&phi_ag))?;
        let c_ag = record(&mut undefined, "c_ag", risk_instability_correlation(&phi_ag, &sigma_ag))?;
        let z_ag = record(&mut undefined, "z_ag", synchronization(phi))?;
        let be = aggregate_behavior(phi, weights)?;
        let g_be = record(&mut undefined, "g_be", gini(&be.per_class))?;
        let time = ordered_sum(&phi_tm);
        let agent = ordered_sum(&phi_ag);
        let behavior = ordered_sum(&be.per_class) + be.unclassified;
        let max_residual = (time - agent).abs().max((time - behavior).abs()).max((agent - behavior).abs());
        Ok(MetricReport {
            estimator: phi.estimator.label().to_string(),
            agents: phi.agents(),
            steps: phi.steps(),
            total_risk: phi.total_risk,
            baseline_risk,
            rho,
            q,
            phi_tm,
            t_star: latency.map(|l| l.t_star),
            l_tm: latency.map(|l| l.l_tm),
            phi_ag,
            sigma_ag,
            g_ag,
            c_ag,
            z_ag,
            phi_be: be.per_class,
            phi_be_unclassified: be.unclassified,
            g_be,
            efficiency_residual: phi.efficiency_residual(),
            conservation: Conservation {
                time,
                agent,
                behavior,
                max_residual,
            },
            undefined,
        })
    }

    /// `step, phi_tm, cumulative, cumulative_raw`.
    pub fn write_time_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "phi_tm", "cumulative", "cumulative_raw"])?;
        let mut acc = 0.0;
        for (t, v) in self.phi_tm.iter().enumerate() {
            acc += v;
            out.write_record([
                (t + 1).to_string(),
                v.to_string(),
                acc.to_string(),
                (acc + self.baseline_risk).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `agent, phi_ag, abs_phi_ag, sigma_ag`.
    pub fn write_agent_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["agent", "phi_ag", "abs_phi_ag", "sigma_ag"])?;
        for (i, (p, s)) in self.phi_ag.iter().zip(&self.sigma_ag).enumerate() {
            out.write_record([i.to_string(), p.to_string(), p.abs().to_string(), s.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `class, label, phi_be, percent`. Percentages are of the classified
    /// total and sum to 100 whenever that total is nonzero; the last row is
    /// the unclassified remainder.
    pub fn write_behavior_csv<W: Write>(&self, w: W, labels: &[String]) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["class", "label", "phi_be", "percent"])?;
        let classified = ordered_sum(&self.phi_be);
        for (k, v) in self.phi_be.iter().enumerate() {
            let pct = if classified != 0.0 { 100.0 * v / classified } else { 0.0 };
            let label = labels.get(k).cloned().unwrap_or_else(|| format!("class {k}"));
            out.write_record([k.to_string(), label, v.to_string(), pct.to_string()])?;
        }
        out.write_record([
            String::new(),
            "unclassified".into(),
            self.phi_be_unclassified.to_string(),
            String::new(),
        ])?;
        out.flush()?;
        Ok(())
    }
}
