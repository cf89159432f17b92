//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar: `f32` or `f64`.
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
    + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real converts to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to float")
    }

    /// Clamps into `[lo, hi]`; NaN maps to `lo`.
    #[inline]
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        if self.is_nan() || self < lo {
            lo
        } else if self > hi {
            hi
        } else {
            self
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle<T: Real>(angle: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    if angle >= -pi && angle < pi {
        return angle;
    }
    let mut a = (angle + pi) % two_pi;
    if a < T::zero() {
        a += two_pi;
    }
    let out = a - pi;
    // `%` can land exactly on the excluded upper end after rounding.
    if out >= pi {
        out - two_pi
    } else {
        out
    }
}

/// Smallest signed difference `a - b` between two angles, in `[-π, π)`.
pub fn angle_diff<T: Real>(a: T, b: T) -> T {
    normalize_angle(a - b)
}
