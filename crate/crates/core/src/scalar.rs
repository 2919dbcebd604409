//! Scalar abstraction shared by every module.
//!
//! Probability bookkeeping (pmfs, channels, types, typicality tests, set
//! measures) only needs field arithmetic and ordering, so it is written
//! against [`Scalar`] and runs over `f32`, `f64` or exact rationals.
//! Information measures need logarithms and are written against [`Real`].

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Float, FromPrimitive, Num, NumAssign, Signed, ToPrimitive};

/// Ordered field element usable as a probability.
pub trait Scalar:
    Copy
    + Debug
    + PartialOrd
    + Num
    + NumAssign
    + Signed
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    /// Absolute tolerance used when validating that a vector sums to one.
    /// Zero for exact types.
    fn tolerance() -> Self;

    /// Whether arithmetic in this type is exact.
    const EXACT: bool;

    /// Lossy conversion from `f64`; exact types use a rational approximation.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("value not representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

/// Scalars with transcendental functions.
pub trait Real: Scalar + Float {}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }
    const EXACT: bool = false;
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }
    const EXACT: bool = false;
}

impl Scalar for Rational64 {
    fn tolerance() -> Self {
        Rational64::from_integer(0)
    }
    const EXACT: bool = true;
}

impl Real for f64 {}
impl Real for f32 {}

/// `|a - b| <= tol` in the scalar's own arithmetic.
pub fn within<T: Scalar>(a: T, b: T, tol: T) -> bool {
    (a - b).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_tolerance_is_zero() {
        assert_eq!(Rational64::tolerance(), Rational64::from_integer(0));
        assert!(Rational64::EXACT);
        assert!(!f64::EXACT);
    }

    #[test]
    fn rational_from_f64_approximates() {
        let r = Rational64::from_f64_lossy(0.25);
        assert_eq!(r, Rational64::new(1, 4));
        assert!((r.to_f64_lossy() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn within_uses_scalar_arithmetic() {
        assert!(within(Rational64::new(1, 3), Rational64::new(2, 6), Rational64::tolerance()));
        assert!(!within(0.1_f64, 0.2, 0.05));
    }
}
