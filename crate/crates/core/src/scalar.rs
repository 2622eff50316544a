//! Scalar abstraction for the numeric core.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the numeric core is generic over.
///
/// `f64` (the crate-level [`crate::Real`] alias) is what the experiment
/// harness instantiates; `f32` satisfies the bound too and is exercised in
/// tests to keep the code honestly generic.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum<Self> + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Conversion from `f64` literals and harness-level parameters.
    /// Panics on values not representable at all (never for finite inputs).
    #[inline]
    fn from_real(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 must convert")
    }

    /// Widening (for f32) or identity (for f64) view used at reporting
    /// boundaries; persisted tables are always f64.
    #[inline]
    fn to_real(self) -> f64 {
        self.to_f64().expect("scalar must widen to f64")
    }

    /// Tolerance for "sums to one" checks on freshly normalized probability
    /// vectors of length `len`: a small multiple of the machine epsilon, so
    /// the check is meaningful for every scalar width.
    #[inline]
    fn normalization_tolerance(len: usize) -> Self {
        Self::epsilon() * Self::from_real(16.0 * len as f64)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + Sum<T>
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Neumaier-compensated sum. Used for the big reductions whose error budget
/// is specified (total kernel mass, total-variation sums), where naive
/// accumulation over ~1e6 terms would eat the 1e-12 margin.
pub fn sum_compensated<T: Scalar, I: IntoIterator<Item = T>>(items: I) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for x in items {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp = comp + ((sum - t) + x);
        } else {
            comp = comp + ((x - t) + sum);
        }
        sum = t;
    }
    sum + comp
}
