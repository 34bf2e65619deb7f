//! Scalar abstractions.
//!
//! Forward computations (activations, relaxed codes, soft histograms) are
//! generic over [`Real`], implemented for `f32` and `f64`. Tie-aware AP only
//! needs field arithmetic, so it is generic over [`MetricField`], which also
//! covers exact rationals ([`crate::ExactRatio`]).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating-point scalar used by the relaxed pipeline.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self;

    /// Lossy conversion to `f64`.
    fn f64(self) -> f64;

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Field arithmetic sufficient for AP-family metrics.
///
/// Blanket-implemented: `f32`, `f64` and `Ratio<BigInt>` all qualify.
pub trait MetricField: Num + Clone + FromPrimitive + PartialOrd + Debug {
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in metric field")
    }
}

impl<T: Num + Clone + FromPrimitive + PartialOrd + Debug> MetricField for T {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ExactRatio;

    fn third<T: MetricField>() -> T {
        T::from_count(1) / T::from_count(3)
    }

    #[test]
    fn metric_field_covers_floats_and_rationals() {
        assert!((third::<f64>() - 1.0 / 3.0).abs() < 1e-15);
        let exact: ExactRatio = third();
        assert_eq!(exact * ExactRatio::from_count(3), ExactRatio::from_count(1));
    }

    #[test]
    fn real_roundtrip() {
        assert_eq!(<f32 as Real>::of(0.5).f64(), 0.5);
        assert_eq!(<f64 as Real>::of_usize(7), 7.0);
    }
}
