//! Shapley attribution over the `N x T` action slots of a trajectory.

mod characteristic;
mod exact;
mod mc;

pub use characteristic::{CharacteristicFunction, RiskFn};
pub use exact::{exact_shapley, exact_shapley_with_cap, DEFAULT_EXACT_CAP};
pub use mc::mc_shapley;

use crate::error::{Error, Result};
use crate::scalar::{RealScalar, Scalar};
use crate::types::{AttributionMatrix, CoalitionMask};

/// A cooperative game whose players are the slots of an `N x T` grid.
pub trait Game<S: Scalar>: Sync {
    fn agents(&self) -> usize;
    fn steps(&self) -> usize;

    fn players(&self) -> usize {
        self.agents() * self.steps()
    }

    /// `v(S)`, with `v(empty) = 0`.
    fn value(&self, mask: &CoalitionMask) -> Result<S>;

    /// Same as [`Game::value`] but without touching any cache. Used by full
    /// enumeration, which would otherwise fill memory with single-use entries.
    fn value_uncached(&self, mask: &CoalitionMask) -> Result<S> {
        self.value(mask)
    }

    /// Slots known never to change `v`. Exact enumeration skips them.
    fn null_slots(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// A game given by a closure, for hand-built examples.
pub struct FnGame<F> {
    agents: usize,
    steps: usize,
    f: F,
}

impl<F> FnGame<F> {
    pub fn new(agents: usize, steps: usize, f: F) -> Self {
        FnGame { agents, steps, f }
    }
}

impl<S: Scalar, F: Fn(&CoalitionMask) -> S + Sync> Game<S> for FnGame<F> {
    fn agents(&self) -> usize {
        self.agents
    }
    fn steps(&self) -> usize {
        self.steps
    }
    fn value(&self, mask: &CoalitionMask) -> Result<S> {
        Ok((self.f)(mask))
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or the global pool
/// when `None`. Estimators reduce in a fixed order, so the worker count
/// never changes their output.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("workers", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Cosine of the angle between `vec(a)` and `vec(b)`.
pub fn cosine_similarity<S: RealScalar>(a: &AttributionMatrix<S>, b: &AttributionMatrix<S>) -> Result<S> {
    b.check_shape(a.agents(), a.steps())?;
    let (mut dot, mut na, mut nb) = (S::zero(), S::zero(), S::zero());
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == S::zero() || nb == S::zero() {
        return Err(Error::ZeroVector);
    }
    let c = dot / (na * nb).sqrt();
    Ok(c.max(-S::one()).min(S::one()))
}
