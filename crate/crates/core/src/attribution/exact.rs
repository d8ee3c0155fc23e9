use rayon::prelude::*;

use super::Game;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{AttributionMatrix, CoalitionMask, Estimator};

/// Largest slot count accepted by [`exact_shapley`].
pub const DEFAULT_EXACT_CAP: usize = 22;

pub fn exact_shapley<S: Scalar, G: Game<S>>(game: &G) -> Result<AttributionMatrix<S>> {
    exact_shapley_with_cap(game, DEFAULT_EXACT_CAP)
}

/// Full enumeration of the `2^n` coalitions with weights
/// `|S|! (n - |S| - 1)! / n! = 1 / (n * C(n - 1, |S|))`.
///
/// Slots the game declares null get 0 and are left out of the enumeration;
/// dropping null players leaves everyone else's value unchanged.
pub fn exact_shapley_with_cap<S: Scalar, G: Game<S>>(game: &G, cap: usize) -> Result<AttributionMatrix<S>> {
    let (agents, steps) = (game.agents(), game.steps());
    let players = agents * steps;
    if players > cap {
        return Err(Error::ExactCapExceeded { players, cap });
    }
    let null = game.null_slots();
    let active: Vec<usize> = (0..players).filter(|s| !null.contains(s)).collect();
    let n = active.len();

    let mask_of = |bits: usize| {
        let mut m = CoalitionMask::empty(agents, steps);
        for (j, &slot) in active.iter().enumerate() {
            if bits >> j & 1 == 1 {
                m.insert_slot(slot);
            }
        }
        m
    };
    let table: Vec<S> = (0..1usize << n)
        .into_par_iter()
        .map(|bits| game.value_uncached(&mask_of(bits)))
        .collect::<Result<_>>()?;

    let weights: Vec<S> = (0..n.max(1))
        .map(|s| S::one() / S::from_count(n.max(1) * binomial(n.saturating_sub(1), s)))
        .collect();
    let active_phi: Vec<S> = (0..n)
        .into_par_iter()
        .map(|j| {
            let bit = 1usize << j;
            (0..1usize << n)
                .filter(|b| b & bit == 0)
                .fold(S::zero(), |acc, b| {
                    acc + weights[b.count_ones() as usize] * (table[b | bit] - table[b])
                })
        })
        .collect();

    let mut values = vec![S::zero(); players];
    for (j, &slot) in active.iter().enumerate() {
        values[slot] = active_phi[j];
    }
    let total = table[(1usize << n) - 1];
    AttributionMatrix::new(agents, steps, values, Estimator::Exact, total)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
