//! Deletion-based faithfulness and Monte Carlo accuracy experiments.

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{cosine_similarity, exact_shapley, mc_shapley, CharacteristicFunction, Game};
use crate::baselines::{external_attribution, loo_attribution, random_attribution, ScoreTransport};
use crate::env::{simulate, simulate_horizon, DecisionSource, Environment, SimulationOutcome};
use crate::error::{Error, Result};
use crate::rng::{CrnStream, Purpose};
use crate::scalar::{mean, population_std};
use crate::types::{AttributionMatrix, CoalitionMask, TrajectoryRecord};

/// How slots are ranked for deletion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// Highest score first.
    #[default]
    Signed,
    /// Largest `|score|` first.
    Absolute,
}

/// Slot indices of the `k` highest-ranked scores. Ties go to the smaller
/// `(agent, step)`.
pub fn top_k_slots(scores: &AttributionMatrix, k: usize, ranking: Ranking) -> Vec<usize> {
    let key = |v: f64| match ranking {
        Ranking::Signed => v,
        Ranking::Absolute => v.abs(),
    };
    let vals = scores.as_slice();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| key(vals[b]).total_cmp(&key(vals[a])).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// `(R_T(tau) - R_T(tau^del)) / R_T(tau)` after replacing the top-`k`
/// slots with baseline actions. Both risks are raw.
pub fn faithfulness<E: Environment>(
    cf: &CharacteristicFunction<'_, E>,
    scores: &AttributionMatrix,
    k: usize,
    ranking: Ranking,
) -> Result<f64> {
    let (n, t) = (cf.agents(), cf.steps());
    scores.check_shape(n, t)?;
    if k > n * t {
        return Err(Error::invalid("k", format!("{k} exceeds the {} action slots", n * t)));
    }
    let risk = cf.full_risk();
    if risk == 0.0 {
        return Err(Error::undefined("risk_drop", "the trajectory's final risk is zero"));
    }
    let full = CoalitionMask::full(n, t);
    let mut deleted = full.clone();
    for slot in top_k_slots(scores, k, ranking) {
        deleted.remove_slot(slot);
    }
    // v differences cancel the baseline exactly, so k = 0 gives exactly 0.
    Ok((cf.value(&full)? - cf.value(&deleted)?) / risk)
}

/// Seed for the `attempt`-th try derived from `seed`; attempt 0 is `seed`.
pub fn derived_seed(seed: u64, attempt: u64) -> u64 {
    if attempt == 0 {
        seed
    } else {
        CrnStream::new(seed).rng(attempt, 0, Purpose::Calibration).next_u64()
    }
}

/// A trajectory of exactly `horizon` steps whose event falls on the last
/// step, from `seed` or the first derived seed that yields one.
pub fn fixed_horizon_trajectory<E: Environment>(
    env: &E,
    seed: u64,
    horizon: usize,
    max_attempts: u64,
) -> Result<TrajectoryRecord<E::State, E::Action>> {
    for attempt in 0..max_attempts {
        if let Some(t) = simulate_horizon(env, derived_seed(seed, attempt), horizon)? {
            return Ok(t);
        }
    }
    Err(Error::invalid(
        "horizon",
        format!("no run of {horizon} steps peaked at its last step in {max_attempts} attempts from seed {seed}"),
    ))
}

/// The event trajectory of `seed`, or of the first derived seed that
/// reaches one within `max_steps`.
pub fn event_trajectory<E: Environment>(
    env: &E,
    seed: u64,
    rho: f64,
    max_steps: usize,
    max_attempts: u64,
) -> Result<TrajectoryRecord<E::State, E::Action>> {
    for attempt in 0..max_attempts {
        if let SimulationOutcome::Event(t) = simulate(env, &DecisionSource::Scripted, derived_seed(seed, attempt), rho, max_steps)? {
            return Ok(t);
        }
    }
    Err(Error::invalid(
        "seeds",
        format!("no event within {max_steps} steps in {max_attempts} attempts from seed {seed}"),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub seed: u64,
    pub samples: usize,
    pub cosine: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub scenario: String,
    pub samples: usize,
    pub mean_cos: f64,
    pub std_cos: f64,
}

/// For each seed, a fixed-horizon trajectory, its exact Shapley matrix and
/// the Monte Carlo estimate at every `M` in `m_grid` (sampled with the
/// trajectory's seed). Returns per-`M` mean and population std of the
/// cosine similarity, plus every cell.
pub fn mc_accuracy_sweep<E: Environment>(
    env: &E,
    seeds: &[u64],
    m_grid: &[usize],
    horizon: usize,
) -> Result<(Vec<AccuracyRow>, Vec<AccuracyCell>)> {
    if seeds.is_empty() || m_grid.is_empty() {
        return Err(Error::invalid("seeds", "need at least one seed and one sample size"));
    }
    let per_seed: Vec<Vec<AccuracyCell>> = seeds
        .par_iter()
        .map(|&seed| {
            let traj = fixed_horizon_trajectory(env, seed, horizon, 1000)?;
            let cf = CharacteristicFunction::new(env, &traj)?;
            let exact = exact_shapley(&cf)?;
            m_grid
                .iter()
                .map(|&m| {
                    let est = mc_shapley(&cf, m, traj.seed)?;
                    Ok(AccuracyCell {
                        seed,
                        samples: m,
                        cosine: cosine_similarity(&est, &exact)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let cells: Vec<AccuracyCell> = per_seed.into_iter().flatten().collect();
    let rows = m_grid
        .iter()
        .map(|&m| {
            let cos: Vec<f64> = cells.iter().filter(|c| c.samples == m).map(|c| c.cosine).collect();
            AccuracyRow {
                scenario: env.scenario().to_string(),
                samples: m,
                mean_cos: mean(&cos).unwrap_or(f64::NAN),
                std_cos: population_std(&cos).unwrap_or(f64::NAN),
            }
        })
        .collect();
    Ok((rows, cells))
}

/// Shapley estimator used in faithfulness experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyMethod {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessRow {
    pub scenario: String,
    pub scorer: String,
    pub k: usize,
    pub seed: u64,
    pub risk_drop: f64,
}

pub struct FaithfulnessSetup<'s> {
    pub ks: Vec<usize>,
    pub shapley: ShapleyMethod,
    /// Seed of the random scorer; the trajectory seed is added to it.
    pub random_seed: u64,
    pub ranking: Ranking,
    pub include_loo: bool,
    pub external: Option<(&'s dyn ScoreTransport, usize)>,
}

/// Risk drops of every scorer at every `k` on every trajectory.
pub fn faithfulness_experiment<E: Environment>(
    env: &E,
    trajectories: &[TrajectoryRecord<E::State, E::Action>],
    setup: &FaithfulnessSetup<'_>,
) -> Result<Vec<FaithfulnessRow>> {
    let mut rows = Vec::new();
    for traj in trajectories {
        let cf = CharacteristicFunction::new(env, traj)?;
        let mut scorers: Vec<(String, AttributionMatrix)> = Vec::new();
        let shapley = match setup.shapley {
            ShapleyMethod::Exact => exact_shapley(&cf)?,
            ShapleyMethod::MonteCarlo { samples } => mc_shapley(&cf, samples, traj.seed)?,
        };
        scorers.push(("shapley".into(), shapley));
        if setup.include_loo {
            scorers.push(("loo".into(), loo_attribution(&cf)?));
        }
        let (n, t) = (traj.agents(), traj.steps());
        scorers.push((
            "random".into(),
            random_attribution(n, t, setup.random_seed.wrapping_add(traj.seed)),
        ));
        if let Some((client, batch)) = setup.external {
            scorers.push((
                "external".into(),
                external_attribution(client, env, traj, batch, cf.baseline_risk())?,
            ));
        }
        for (name, scores) in &scorers {
            for &k in &setup.ks {
                rows.push(FaithfulnessRow {
                    scenario: traj.scenario.clone(),
                    scorer: name.clone(),
                    k: k.min(n * t),
                    seed: traj.seed,
                    risk_drop: faithfulness(&cf, scores, k.min(n * t), setup.ranking)?,
                });
            }
        }
    }
    Ok(rows)
}

/// Mean risk drop per `(scorer, k)`, in first-seen order.
pub fn summarize_faithfulness(rows: &[FaithfulnessRow]) -> Vec<(String, usize, f64)> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let key = (r.scorer.clone(), r.k);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(s, k)| {
            let drops: Vec<f64> = rows.iter().filter(|r| r.scorer == s && r.k == k).map(|r| r.risk_drop).collect();
            let m = mean(&drops).unwrap_or(f64::NAN);
            (s, k, m)
        })
        .collect()
}

pub fn write_faithfulness_csv<W: Write>(rows: &[FaithfulnessRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_accuracy_csv<W: Write>(rows: &[AccuracyRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scenario", "M", "mean_cos", "std_cos"])?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            r.samples.to_string(),
            r.mean_cos.to_string(),
            r.std_cos.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::record_trajectory;
    use crate::scenario::toy::ToyEnv;
    use crate::types::Estimator;

    fn toy() -> (ToyEnv, TrajectoryRecord<f64, f64>) {
        let env = ToyEnv::linear(vec![1.0, 1.0]);
        let traj = record_trajectory(&env, 0, vec![vec![0.5, 0.25], vec![1.0, 0.0], vec![0.0, 0.0]], 1.0).unwrap();
        (env, traj)
    }

    #[test]
    fn ranking_and_ties() {
        let s = AttributionMatrix::from_rows(&[vec![1.0, -3.0], vec![1.0, 2.0]], Estimator::Exact, 0.0).unwrap();
        assert_eq!(top_k_slots(&s, 3, Ranking::Signed), vec![3, 0, 2]);
        assert_eq!(top_k_slots(&s, 2, Ranking::Absolute), vec![1, 3]);
        assert!(top_k_slots(&s, 0, Ranking::Signed).is_empty());
    }

    #[test]
    fn deletion_drops() {
        let (env, traj) = toy();
        let cf = CharacteristicFunction::new(&env, &traj).unwrap();
        let phi = exact_shapley(&cf).unwrap();
        assert_eq!(faithfulness(&cf, &phi, 0, Ranking::Signed).unwrap(), 0.0);
        // total 1.75, baseline 0; deleting the 1.0 push removes 4/7
        let d1 = faithfulness(&cf, &phi, 1, Ranking::Signed).unwrap();
        assert!((d1 - 1.0 / 1.75).abs() < 1e-12);
        let all = faithfulness(&cf, &phi, 6, Ranking::Signed).unwrap();
        let rnd = random_attribution(2, 3, 4);
        assert_eq!(all, faithfulness(&cf, &rnd, 6, Ranking::Signed).unwrap());
        assert!((all - 1.0).abs() < 1e-12);
        assert!(faithfulness(&cf, &phi, 7, Ranking::Signed).is_err());
    }

    #[test]
    fn zero_risk_is_undefined() {
        let env = ToyEnv::linear(vec![1.0]);
        let traj = record_trajectory(&env, 0, vec![vec![0.0], vec![0.0]], 1.0).unwrap();
        let cf = CharacteristicFunction::new(&env, &traj).unwrap();
        let rnd = random_attribution(1, 2, 1);
        assert!(matches!(
            faithfulness(&cf, &rnd, 1, Ranking::Signed),
            Err(Error::MetricUndefined { .. })
        ));
    }

    #[test]
    fn derived_seeds() {
        assert_eq!(derived_seed(5, 0), 5);
        assert_ne!(derived_seed(5, 1), derived_seed(5, 2));
        assert_eq!(derived_seed(5, 3), derived_seed(5, 3));
    }

    #[test]
    fn sweep_on_quadratic_toy_is_reproducible() {
        let env = ToyEnv::quadratic(vec![1.0, 0.5, -1.0]);
        let (rows, cells) = mc_accuracy_sweep(&env, &[1, 2, 3], &[10, 100], 3).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(cells.len(), 6);
        let (again, _) = mc_accuracy_sweep(&env, &[1, 2, 3], &[10, 100], 3).unwrap();
        assert_eq!(rows, again);
        assert!(rows[1].mean_cos > 0.9);
        let mut buf = Vec::new();
        write_accuracy_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("scenario,M,mean_cos,std_cos\n"));
    }
}
