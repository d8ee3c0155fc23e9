//! Scalar abstractions shared by the attribution and metric kernels.
//!
//! The Shapley estimators and the dimensional aggregates only need field
//! arithmetic, so they run over any [`Scalar`], including exact rationals.
//! Anything that takes a square root (standard deviations, Pearson
//! correlation, cosine similarity) needs a [`RealScalar`].

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, Signed, ToPrimitive};

/// Field-like number usable by the exact and sampled Shapley kernels.
pub trait Scalar:
    Copy
    + Debug
    + PartialOrd
    + Signed
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    /// Lossless-as-possible conversion of a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Conversion from an `f64` weight. Panics only for non-finite input.
    fn from_weight(w: f64) -> Self {
        Self::from_f64(w).expect("finite weight")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Copy
        + Debug
        + PartialOrd
        + Signed
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Send
        + Sync
        + 'static
{
}

/// Real-valued scalar with transcendental functions.
pub trait RealScalar: Scalar + Float + Sum {}

impl<T> RealScalar for T where T: Scalar + Float + Sum {}

/// Sum of a slice in index order. Ordered so results are bitwise reproducible.
pub fn ordered_sum<S: Scalar>(values: &[S]) -> S {
    values.iter().fold(S::zero(), |acc, &v| acc + v)
}

/// Population mean; `None` for an empty slice.
pub fn mean<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        None
    } else {
        Some(ordered_sum(values) / S::from_count(values.len()))
    }
}

/// Population standard deviation (divisor `n`).
pub fn population_std<S: RealScalar>(values: &[S]) -> Option<S> {
    let m = mean(values)?;
    let var = values
        .iter()
        .fold(S::zero(), |acc, &v| acc + (v - m) * (v - m))
        / S::from_count(values.len());
    Some(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn rationals_are_scalars() {
        let xs = [Rational64::new(1, 2), Rational64::new(1, 3)];
        assert_eq!(ordered_sum(&xs), Rational64::new(5, 6));
        assert_eq!(mean(&xs), Some(Rational64::new(5, 12)));
    }

    #[test]
    fn std_uses_population_divisor() {
        let s = population_std(&[1.0_f64, 2.0]).unwrap();
        assert_eq!(s, 0.5);
        assert_eq!(population_std::<f64>(&[]), None);
        let s32 = population_std(&[3.0_f32, 3.0, 3.0]).unwrap();
        assert_eq!(s32, 0.0);
    }
}
