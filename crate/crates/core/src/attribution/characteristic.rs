use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;

use super::Game;
use crate::env::{Environment, Replayer};
use crate::error::{Error, Result};
use crate::types::{CoalitionMask, TrajectoryRecord};

/// Risk functional applied to the states `s_1..s_T` of a replay.
pub type RiskFn<St> = Arc<dyn Fn(&[St]) -> f64 + Send + Sync>;

/// `v(S) = R_T(tau^S) - R_T(tau^empty)` over one recorded trajectory.
///
/// Values are cached by coalition. Actions at the last step cannot affect
/// any state, so masks are normalized with those bits cleared before lookup.
pub struct CharacteristicFunction<'a, E: Environment> {
    replayer: Replayer<'a, E>,
    risk: Option<RiskFn<E::State>>,
    baseline_risk: f64,
    full_risk: f64,
    cache: DashMap<CoalitionMask, f64>,
    evaluations: AtomicU64,
    replays: AtomicU64,
}

impl<'a, E: Environment> CharacteristicFunction<'a, E> {
    /// Characteristic function under the environment's own risk.
    pub fn new(env: &'a E, traj: &'a TrajectoryRecord<E::State, E::Action>) -> Result<Self> {
        Self::build(env, traj, None)
    }

    /// Characteristic function under a custom risk functional.
    pub fn with_risk(
        env: &'a E,
        traj: &'a TrajectoryRecord<E::State, E::Action>,
        risk: RiskFn<E::State>,
    ) -> Result<Self> {
        Self::build(env, traj, Some(risk))
    }

    fn build(
        env: &'a E,
        traj: &'a TrajectoryRecord<E::State, E::Action>,
        risk: Option<RiskFn<E::State>>,
    ) -> Result<Self> {
        let replayer = Replayer::new(env, traj)?;
        let (n, t) = (traj.agents(), traj.steps());
        let baseline_states = replayer.replay_states(&CoalitionMask::empty(n, t))?;
        let mut cf = CharacteristicFunction {
            replayer,
            risk,
            baseline_risk: 0.0,
            full_risk: 0.0,
            cache: DashMap::new(),
            evaluations: AtomicU64::new(0),
            replays: AtomicU64::new(1),
        };
        cf.baseline_risk = cf.apply_risk(&baseline_states);
        cf.full_risk = cf.apply_risk(&traj.states);
        cf.cache.insert(CoalitionMask::empty(n, t), 0.0);
        Ok(cf)
    }

    /// `R_T(tau^empty)`, the raw risk of the all-baseline replay.
    pub fn baseline_risk(&self) -> f64 {
        self.baseline_risk
    }

    /// `R_T(tau)` of the recorded trajectory.
    pub fn full_risk(&self) -> f64 {
        self.full_risk
    }

    /// `v(Omega)`.
    pub fn grand_value(&self) -> f64 {
        self.full_risk - self.baseline_risk
    }

    pub fn env(&self) -> &'a E {
        self.replayer.env()
    }

    pub fn trajectory(&self) -> &'a TrajectoryRecord<E::State, E::Action> {
        self.replayer.trajectory()
    }

    /// Calls to [`Game::value`], cached or not.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Counterfactual replays actually run, including the baseline one.
    pub fn replays(&self) -> u64 {
        self.replays.load(Ordering::Relaxed)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Raw risk `R_T(tau^S)` of a replay, bypassing the cache.
    pub fn raw_risk(&self, mask: &CoalitionMask) -> Result<f64> {
        let states = self.replayer.replay_states(mask)?;
        self.replays.fetch_add(1, Ordering::Relaxed);
        Ok(self.apply_risk(&states))
    }

    fn apply_risk(&self, states: &[E::State]) -> f64 {
        match &self.risk {
            Some(f) => f(states),
            None => self.env().risk(states),
        }
    }

    fn normalize(&self, mask: &CoalitionMask) -> CoalitionMask {
        let t = mask.steps();
        let mut m = mask.clone();
        if t > 0 {
            for i in 0..mask.agents() {
                let slot = i * t + t - 1;
                if m.contains_slot(slot) {
                    m.remove_slot(slot);
                }
            }
        }
        m
    }

    fn check(&self, mask: &CoalitionMask) -> Result<()> {
        let traj = self.trajectory();
        if mask.agents() != traj.agents() || mask.steps() != traj.steps() {
            return Err(Error::DimensionMismatch {
                expected_agents: traj.agents(),
                expected_steps: traj.steps(),
                found_agents: mask.agents(),
                found_steps: mask.steps(),
            });
        }
        Ok(())
    }

    /// Writes the cache as a JSON object keyed by canonical mask strings.
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let mut entries: Vec<(String, f64)> = self
            .cache
            .iter()
            .map(|e| (e.key().canonical_key(), *e.value()))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let map: serde_json::Map<String, serde_json::Value> =
            entries.into_iter().map(|(k, v)| (k, serde_json::Value::from(v))).collect();
        fs::write(path, serde_json::to_string_pretty(&map)?)?;
        Ok(())
    }

    /// Loads entries written by [`CharacteristicFunction::save_cache`] for
    /// the same trajectory. Returns how many were added.
    pub fn load_cache(&self, path: &Path) -> Result<usize> {
        let map: std::collections::BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
        let mut added = 0;
        for (k, v) in map {
            let mask = CoalitionMask::parse_key(&k)?;
            self.check(&mask)?;
            if self.cache.insert(self.normalize(&mask), v).is_none() {
                added += 1;
            }
        }
        Ok(added)
    }
}

impl<E: Environment> Game<f64> for CharacteristicFunction<'_, E> {
    fn agents(&self) -> usize {
        self.trajectory().agents()
    }

    fn steps(&self) -> usize {
        self.trajectory().steps()
    }

    fn value(&self, mask: &CoalitionMask) -> Result<f64> {
        self.check(mask)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let key = self.normalize(mask);
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let v = self.raw_risk(&key)? - self.baseline_risk;
        self.cache.insert(key, v);
        Ok(v)
    }

    fn value_uncached(&self, mask: &CoalitionMask) -> Result<f64> {
        self.check(mask)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let key = self.normalize(mask);
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        Ok(self.raw_risk(&key)? - self.baseline_risk)
    }

    fn null_slots(&self) -> Vec<usize> {
        let (n, t) = (self.agents(), self.steps());
        (0..n).map(|i| i * t + t - 1).collect()
    }
}
