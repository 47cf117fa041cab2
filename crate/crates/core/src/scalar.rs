//! Floating-point scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// floating point: f32 or f64
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless widening used for error accumulation.
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from an integer count or index.
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::nan)
    }

    /// Spacing between `self` and the next representable value away from zero.
    fn ulp(self) -> Self;
}

impl Scalar for f32 {
    fn ulp(self) -> Self {
        let a = self.abs();
        if !a.is_finite() {
            return f32::NAN;
        }
        f32::from_bits(a.to_bits() + 1) - a
    }
}

impl Scalar for f64 {
    fn ulp(self) -> Self {
        let a = self.abs();
        if !a.is_finite() {
            return f64::NAN;
        }
        f64::from_bits(a.to_bits() + 1) - a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ulp_of_one() {
        assert_eq!(1.0f32.ulp(), f32::EPSILON);
        assert_eq!(1.0f64.ulp(), f64::EPSILON);
        assert_eq!(0.0f32.ulp(), f32::from_bits(1));
    }
}
