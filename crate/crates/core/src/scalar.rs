//! Scalar abstractions for the analysis-level math.
//!
//! Simulator state is integral throughout; only derived quantities (bias
//! ratios, Ψ, significance thresholds, probabilities) are scalar-valued.
//! Those functions are generic so they can run in `f32`/`f64`, and the urn
//! pmf recurrence additionally admits exact rationals for test fixtures.

use num_traits::{Float, FromPrimitive, Num};

/// Floating-point scalar for analysis quantities (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive {
    /// Lossless enough conversion from an agent count. Counts stay far below
    /// 2^53 at any scale this crate targets, so `f64` is exact and `f32` is
    /// best-effort.
    fn from_count(c: u64) -> Self {
        Self::from_u64(c).expect("count representable")
    }
}

impl<T: Float + FromPrimitive> Scalar for T {}

/// Field-like scalar for probability recurrences.
///
/// Satisfied by `f32`/`f64` as well as `num_rational::BigRational`, which the
/// test suite uses to check pmf identities exactly.
pub trait ProbScalar: Num + Clone + PartialOrd + FromPrimitive {
    fn from_count(c: u64) -> Self {
        Self::from_u64(c).expect("count representable")
    }
}

impl<T: Num + Clone + PartialOrd + FromPrimitive> ProbScalar for T {}
