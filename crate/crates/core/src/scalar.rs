//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the pipeline can run on: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Never fails for finite input.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in a float")
    }

    #[inline]
    fn from_isize_lossy(n: isize) -> Self {
        Self::from_isize(n).expect("isize fits in a float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + Serialize
        + DeserializeOwned
        + 'static
{
}

/// Rounds half away from zero and converts to `isize`; `None` for non-finite input.
#[inline]
pub(crate) fn round_to_isize<T: Real>(x: T) -> Option<isize> {
    // truncating cast plus a fix-up; avoids a libm call on baseline x86-64
    let t = x.to_isize()?;
    let frac = x - T::from_isize_lossy(t);
    let half = T::lit(0.5);
    Some(t + isize::from(frac >= half) - isize::from(frac <= -half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounding_edges() {
        assert_eq!(round_to_isize(2.5f64), Some(3));
        assert_eq!(round_to_isize(-2.5f64), Some(-3));
        assert_eq!(round_to_isize(0.49999999999999994f64), Some(0));
        assert_eq!(round_to_isize(-0.0f64), Some(0));
        assert_eq!(round_to_isize(f64::NAN), None);
    }

    proptest! {
        #[test]
        fn matches_std_round(x in -1e9f64..1e9) {
            prop_assert_eq!(round_to_isize(x), Some(x.round() as isize));
        }

        #[test]
        fn matches_std_round_f32(x in -1e6f32..1e6) {
            prop_assert_eq!(round_to_isize(x), Some(x.round() as isize));
        }
    }
}
