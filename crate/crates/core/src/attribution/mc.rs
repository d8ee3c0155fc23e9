use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::Game;
use crate::error::{Error, Result};
use crate::rng::{CrnStream, Purpose};
use crate::scalar::Scalar;
use crate::types::{AttributionMatrix, CoalitionMask, Estimator};

/// Permutations per work unit. Fixed so the reduction order, and therefore
/// every bit of the result, is independent of the thread count.
const CHUNK: usize = 16;

/// Permutation-sampling estimate from `samples` orderings.
///
/// Sample `m` shuffles with its own stream `(seed, m)`, walks the ordering
/// adding one slot at a time, and credits each slot with its marginal
/// contribution. Costs `samples * N * T + 1` evaluations of `v`.
pub fn mc_shapley<S: Scalar, G: Game<S>>(game: &G, samples: usize, seed: u64) -> Result<AttributionMatrix<S>> {
    if samples == 0 {
        return Err(Error::invalid("samples", "need at least one permutation"));
    }
    let (agents, steps) = (game.agents(), game.steps());
    let n = agents * steps;
    let empty = CoalitionMask::empty(agents, steps);
    let v_empty = game.value(&empty)?;
    let crn = CrnStream::new(seed);

    let chunks: Vec<(Vec<S>, S)> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = vec![S::zero(); n];
            let mut grand = v_empty;
            let mut order: Vec<usize> = Vec::with_capacity(n);
            for m in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                order.clear();
                order.extend(0..n);
                order.shuffle(&mut crn.rng(m as u64, 0, Purpose::Permutation));
                let mut mask = empty.clone();
                let mut prev = v_empty;
                for &slot in &order {
                    mask.insert_slot(slot);
                    let cur = game.value(&mask).map_err(|e| Error::Permutation {
                        index: m,
                        source: Box::new(e),
                    })?;
                    sums[slot] += cur - prev;
                    prev = cur;
                }
                grand = prev;
            }
            Ok((sums, grand))
        })
        .collect::<Result<_>>()?;

    let mut totals = vec![S::zero(); n];
    for (sums, _) in &chunks {
        for (t, &s) in totals.iter_mut().zip(sums) {
            *t += s;
        }
    }
    let m = S::from_count(samples);
    let values = totals.into_iter().map(|t| t / m).collect();
    let total = chunks.last().map_or(v_empty, |c| c.1);
    AttributionMatrix::new(agents, steps, values, Estimator::MonteCarlo { samples, seed }, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{exact_shapley, with_workers, FnGame};
    use num_rational::Rational64;

    fn two_slot(m: &CoalitionMask) -> f64 {
        match (m.contains_slot(0), m.contains_slot(1)) {
            (false, false) => 0.0,
            (true, false) => 1.0,
            (false, true) => 2.0,
            (true, true) => 4.0,
        }
    }

    #[test]
    fn converges_on_two_slot_game() {
        let g = FnGame::new(1, 2, two_slot);
        let phi = mc_shapley(&g, 10_000, 3).unwrap();
        // each ordering gives (1, 3) or (2, 2); std of a slot mean is 0.5 / sqrt(M)
        assert!((phi.as_slice()[0] - 1.5).abs() < 4.0 * 0.5 / 100.0);
        assert!((phi.sum() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn additive_is_exact_for_any_m() {
        let w = [Rational64::new(1, 3), Rational64::new(-2, 7), Rational64::new(5, 1)];
        let g = FnGame::new(3, 1, |m: &CoalitionMask| {
            (0..3).filter(|&s| m.contains_slot(s)).fold(Rational64::from_integer(0), |a, s| a + w[s])
        });
        for samples in [1, 7, 40] {
            assert_eq!(mc_shapley(&g, samples, 9).unwrap().as_slice(), &w);
        }
    }

    #[test]
    fn worker_count_does_not_matter() {
        let g = FnGame::new(2, 3, |m: &CoalitionMask| {
            let k = m.count() as f64;
            k * k + if m.contains_slot(4) { 0.3 } else { 0.0 }
        });
        let one = with_workers(Some(1), || mc_shapley(&g, 100, 5).unwrap()).unwrap();
        let three = with_workers(Some(3), || mc_shapley(&g, 100, 5).unwrap()).unwrap();
        assert_eq!(one, three);
        let exact = exact_shapley(&g).unwrap();
        assert!((one.sum() - exact.sum()).abs() < 1e-12);
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(mc_shapley(&FnGame::new(1, 2, two_slot), 0, 1).is_err());
    }
}
