//! Per-tensor scaling to the full `[-1, 1]` range before coding.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PrescaleError {
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("prescale factor must be positive and finite")]
    InvalidFactor,
}

/// Divisor applied at encode time; `1` for all-zero tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrescaleFactor<T>(T);

impl<T: Scalar> PrescaleFactor<T> {
    pub fn new(factor: T) -> Result<Self, PrescaleError> {
        if factor.is_finite() && factor > T::zero() {
            Ok(Self(factor))
        } else {
            Err(PrescaleError::InvalidFactor)
        }
    }

    pub fn one() -> Self {
        Self(T::one())
    }

    pub fn get(self) -> T {
        self.0
    }
}

/// Divides every value by the largest magnitude so that `max |x| == 1`.
pub fn prescale<T: Scalar>(values: &[T]) -> Result<(Vec<T>, PrescaleFactor<T>), PrescaleError> {
    let mut peak = T::zero();
    for &v in values {
        if !v.is_finite() {
            return Err(PrescaleError::NonFiniteInput);
        }
        peak = peak.max(v.abs());
    }
    if peak == T::zero() {
        return Ok((values.to_vec(), PrescaleFactor::one()));
    }
    Ok((values.iter().map(|&v| v / peak).collect(), PrescaleFactor(peak)))
}

pub fn unprescale<T: Scalar>(scaled: &[T], factor: PrescaleFactor<T>) -> Vec<T> {
    scaled.iter().map(|&v| v * factor.0).collect()
}
