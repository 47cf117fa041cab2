//! Uniform scalar quantizer anchored at the data minimum.
//!
//! Every value of a tensor shares one grid: `offset = min`,
//! `step = (max - min) / (2^n - 1)`, with the step rounded up to the next
//! representable value so the top level never falls short of `max`. There is
//! no frequency weighting, so a permuted input produces the same permutation
//! of indices.

use thiserror::Error;

use crate::Scalar;

pub const MIN_BITS: u8 = 2;
pub const MAX_BITS: u8 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantError {
    #[error("bit depth {0} outside {MIN_BITS}..={MAX_BITS}")]
    BadBitDepth(u32),
    #[error("cannot quantize an empty sequence")]
    EmptyInput,
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("value range too wide to quantize")]
    RangeOverflow,
    #[error("index {index} out of range for {levels} levels")]
    IndexOutOfRange { index: u32, levels: usize },
    #[error("grid offset/step must be finite with step >= 0")]
    InvalidGrid,
}

/// Bit depth `n`; the quantizer and the code book both use `2^n` levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizerConfig {
    bits: u8,
}

impl QuantizerConfig {
    pub fn new(bits: u32) -> Result<Self, QuantError> {
        if (MIN_BITS as u32..=MAX_BITS as u32).contains(&bits) {
            Ok(Self { bits: bits as u8 })
        } else {
            Err(QuantError::BadBitDepth(bits))
        }
    }

    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn levels(self) -> usize {
        1usize << self.bits
    }

    pub fn max_index(self) -> u32 {
        (self.levels() - 1) as u32
    }
}

/// Reconstruction grid `offset + step * i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantGrid<T> {
    pub offset: T,
    pub step: T,
}

impl<T: Scalar> QuantGrid<T> {
    pub fn new(offset: T, step: T) -> Result<Self, QuantError> {
        if offset.is_finite() && step.is_finite() && step >= T::zero() {
            Ok(Self { offset, step })
        } else {
            Err(QuantError::InvalidGrid)
        }
    }

    /// `offset + step * index`, evaluated in f64 and rounded once.
    #[inline]
    pub fn level(&self, index: u32) -> T {
        let exact = self.offset.to_f64_lossless() + self.step.to_f64_lossless() * f64::from(index);
        T::from_f64(exact).unwrap_or_else(T::nan)
    }

    /// All `2^n` reconstruction levels in index order.
    pub fn levels(&self, cfg: QuantizerConfig) -> Vec<T> {
        (0..=cfg.max_index()).map(|i| self.level(i)).collect()
    }
}

/// Maps each value to the nearest grid level.
///
/// The index is `round((v - offset) / step)` with ties away from zero,
/// clamped to the grid. A neighbour check then corrects the rare case
/// where rounding inside the division lands one level off, so the chosen
/// level is always the nearest one as reconstructed by [`dequantize`].
pub fn quantize<T: Scalar>(values: &[T], cfg: QuantizerConfig) -> Result<(Vec<u32>, QuantGrid<T>), QuantError> {
    let (min, max) = min_max(values)?;
    if min == max {
        return Ok((vec![0; values.len()], QuantGrid { offset: min, step: T::zero() }));
    }
    let max_index = cfg.max_index();
    let grid = uniform_grid(min, max, max_index)?;
    let (lo, step) = (min.to_f64_lossless(), grid.step.to_f64_lossless());
    let indices = values
        .iter()
        .map(|&v| {
            let q = ((v.to_f64_lossless() - lo) / step).round().clamp(0.0, f64::from(max_index));
            let guess = q as u32;
            nearest_around(&grid, v, guess, max_index)
        })
        .collect();
    Ok((indices, grid))
}

#[inline]
fn nearest_around<T: Scalar>(grid: &QuantGrid<T>, v: T, guess: u32, max_index: u32) -> u32 {
    // Distances are compared in f64, where the difference of two f32
    // values is exact.
    let x = v.to_f64_lossless();
    let mut best = guess;
    let mut best_err = (grid.level(guess).to_f64_lossless() - x).abs();
    for cand in [guess.wrapping_sub(1), guess + 1] {
        if cand <= max_index {
            let err = (grid.level(cand).to_f64_lossless() - x).abs();
            if err < best_err {
                best = cand;
                best_err = err;
            }
        }
    }
    best
}

pub fn dequantize<T: Scalar>(indices: &[u32], grid: QuantGrid<T>, cfg: QuantizerConfig) -> Result<Vec<T>, QuantError> {
    indices
        .iter()
        .map(|&i| {
            if i > cfg.max_index() {
                Err(QuantError::IndexOutOfRange {
                    index: i,
                    levels: cfg.levels(),
                })
            } else {
                Ok(grid.level(i))
            }
        })
        .collect()
}

/// Grid with `max_index + 1` levels spanning `[min, max]`.
pub(crate) fn uniform_grid<T: Scalar>(min: T, max: T, max_index: u32) -> Result<QuantGrid<T>, QuantError> {
    if min == max || max_index == 0 {
        return Ok(QuantGrid { offset: min, step: T::zero() });
    }
    let exact = (max.to_f64_lossless() - min.to_f64_lossless()) / f64::from(max_index);
    let mut step = T::from_f64(exact).unwrap_or_else(T::nan);
    if step.to_f64_lossless() < exact {
        step += step.ulp();
    }
    let grid = QuantGrid { offset: min, step };
    if !step.is_finite() || !grid.level(max_index).is_finite() {
        return Err(QuantError::RangeOverflow);
    }
    Ok(grid)
}

pub(crate) fn min_max<T: Scalar>(values: &[T]) -> Result<(T, T), QuantError> {
    let first = *values.first().ok_or(QuantError::EmptyInput)?;
    let mut lo = first;
    let mut hi = first;
    for &v in values {
        if !v.is_finite() {
            return Err(QuantError::NonFiniteInput);
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}
