use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the whole library is generic over: f32 or f64.
///
/// Everything numeric (matrices, network statistics, learning curves) is
/// parameterized on this so single- and double-precision builds share one
/// code path. The default CLI and the experiment runner use f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Converts an f64 literal (tolerances, config values) into this scalar.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy view as f64, for diagnostics and serialized output.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a linear power value to decibels, 10·log10(x).
pub fn power_db<T: Scalar>(x: T) -> T {
    T::of(10.0) * x.log10()
}
