//! Orthonormal 2D DCT-II and the block partitioners that feed it.
//!
//! Spatial kernels are cut into one block per `(c_in, c_out)` slice at the
//! kernel's native `h×w` size. Dense and 1×1 weights are flattened and
//! chunked into 8×8 blocks, the last one zero-padded.

use thiserror::Error;

use crate::model_io::ParamKind;
use crate::Scalar;

pub const MAX_BLOCK_SIDE: usize = 64;
pub const VECTOR_BLOCK_SIDE: usize = 8;
pub const VECTOR_BLOCK_AREA: usize = VECTOR_BLOCK_SIDE * VECTOR_BLOCK_SIDE;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("block {rows}x{cols} is outside 1..={MAX_BLOCK_SIDE} per side")]
    BadBlockSize { rows: usize, cols: usize },
    #[error("block data has {got} values, expected {expected}")]
    BadBlockData { expected: usize, got: usize },
    #[error("expected a spatial convolution kernel, got {0}")]
    WrongKind(ParamKind),
    #[error("cannot block an empty vector")]
    EmptyInput,
    #[error("block arrangement mismatch: {0}")]
    ArrangementMismatch(String),
}

/// Row-major `rows × cols` tile.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Block<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, TransformError> {
        if rows == 0 || cols == 0 || rows > MAX_BLOCK_SIDE || cols > MAX_BLOCK_SIDE {
            return Err(TransformError::BadBlockSize { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(TransformError::BadBlockData {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self, TransformError> {
        Self::new(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

/// Orthonormal DCT-II matrix of order `n`, row `k` holding basis function `k`.
pub fn dct_matrix<T: Scalar>(n: usize) -> Vec<T> {
    let nf = T::from_usize_exact(n);
    let two = T::one() + T::one();
    let dc = (T::one() / nf).sqrt();
    let ac = (two / nf).sqrt();
    let mut m = Vec::with_capacity(n * n);
    for k in 0..n {
        let scale = if k == 0 { dc } else { ac };
        for i in 0..n {
            // cos(pi * (2i + 1) * k / 2n)
            let arg = T::PI() * T::from_usize_exact((2 * i + 1) * k) / (two * nf);
            m.push(scale * arg.cos());
        }
    }
    m
}

pub fn dct2_forward<T: Scalar>(block: &Block<T>) -> Block<T> {
    separable(block, false)
}

pub fn dct2_inverse<T: Scalar>(coeffs: &Block<T>) -> Block<T> {
    separable(coeffs, true)
}

/// `D_r · X · D_cᵀ` for the forward pass, `D_rᵀ · X · D_c` for the inverse.
fn separable<T: Scalar>(block: &Block<T>, inverse: bool) -> Block<T> {
    let (rows, cols) = (block.rows, block.cols);
    let dr = dct_matrix::<T>(rows);
    let dc = dct_matrix::<T>(cols);
    let at = |m: &[T], n: usize, i: usize, j: usize| if inverse { m[j * n + i] } else { m[i * n + j] };

    // Along each row.
    let mut tmp = vec![T::zero(); rows * cols];
    for r in 0..rows {
        let src = &block.data[r * cols..(r + 1) * cols];
        for k in 0..cols {
            let mut acc = T::zero();
            for (i, &x) in src.iter().enumerate() {
                acc += at(&dc, cols, k, i) * x;
            }
            tmp[r * cols + k] = acc;
        }
    }
    // Along each column.
    let mut out = vec![T::zero(); rows * cols];
    for c in 0..cols {
        for k in 0..rows {
            let mut acc = T::zero();
            for i in 0..rows {
                acc += at(&dr, rows, k, i) * tmp[i * cols + c];
            }
            out[k * cols + c] = acc;
        }
    }
    Block {
        rows,
        cols,
        data: out,
    }
}

/// Slices a `[h, w, c_in, c_out]` kernel into `c_in·c_out` blocks of `h×w`,
/// ordered by output channel, then input channel.
pub fn kernel_blocks<T: Scalar>(values: &[T], kind: ParamKind) -> Result<Vec<Block<T>>, TransformError> {
    let ParamKind::ConvKernel { h, w, c_in, c_out } = kind else {
        return Err(TransformError::WrongKind(kind));
    };
    if h < 2 && w < 2 {
        return Err(TransformError::WrongKind(kind));
    }
    if Some(values.len()) != kind.numel() {
        return Err(TransformError::ArrangementMismatch(format!(
            "{kind} expects {} values, got {}",
            kind.numel().unwrap_or(0),
            values.len()
        )));
    }
    let mut blocks = Vec::with_capacity(c_in * c_out);
    for o in 0..c_out {
        for i in 0..c_in {
            let mut data = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    data.push(values[((y * w + x) * c_in + i) * c_out + o]);
                }
            }
            blocks.push(Block::new(h, w, data)?);
        }
    }
    Ok(blocks)
}

/// Inverse of [`kernel_blocks`].
pub fn reassemble<T: Scalar>(blocks: &[Block<T>], kind: ParamKind) -> Result<Vec<T>, TransformError> {
    let ParamKind::ConvKernel { h, w, c_in, c_out } = kind else {
        return Err(TransformError::WrongKind(kind));
    };
    if blocks.len() != c_in * c_out {
        return Err(TransformError::ArrangementMismatch(format!(
            "{kind} needs {} blocks, got {}",
            c_in * c_out,
            blocks.len()
        )));
    }
    let mut values = vec![T::zero(); h * w * c_in * c_out];
    for (n, block) in blocks.iter().enumerate() {
        if block.rows != h || block.cols != w {
            return Err(TransformError::ArrangementMismatch(format!(
                "block {n} is {}x{}, kernel is {h}x{w}",
                block.rows, block.cols
            )));
        }
        let (o, i) = (n / c_in, n % c_in);
        for y in 0..h {
            for x in 0..w {
                values[((y * w + x) * c_in + i) * c_out + o] = block.data[y * w + x];
            }
        }
    }
    Ok(values)
}

/// How a flat vector was laid out into 8×8 blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockArrangement {
    pub original_len: usize,
    pub pad_len: usize,
}

impl BlockArrangement {
    pub fn for_len(original_len: usize) -> Self {
        Self {
            original_len,
            pad_len: (VECTOR_BLOCK_AREA - original_len % VECTOR_BLOCK_AREA) % VECTOR_BLOCK_AREA,
        }
    }

    pub fn block_count(&self) -> usize {
        (self.original_len + self.pad_len) / VECTOR_BLOCK_AREA
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        if *self != Self::for_len(self.original_len) {
            return Err(TransformError::ArrangementMismatch(format!(
                "pad_len {} inconsistent with length {}",
                self.pad_len, self.original_len
            )));
        }
        Ok(())
    }
}

pub fn vector_blocks<T: Scalar>(values: &[T]) -> Result<(Vec<Block<T>>, BlockArrangement), TransformError> {
    if values.is_empty() {
        return Err(TransformError::EmptyInput);
    }
    let arrangement = BlockArrangement::for_len(values.len());
    let blocks = values
        .chunks(VECTOR_BLOCK_AREA)
        .map(|chunk| {
            let mut data = chunk.to_vec();
            data.resize(VECTOR_BLOCK_AREA, T::zero());
            Block {
                rows: VECTOR_BLOCK_SIDE,
                cols: VECTOR_BLOCK_SIDE,
                data,
            }
        })
        .collect();
    Ok((blocks, arrangement))
}

pub fn unvector_blocks<T: Scalar>(
    blocks: &[Block<T>],
    arrangement: BlockArrangement,
) -> Result<Vec<T>, TransformError> {
    arrangement.validate()?;
    if blocks.len() != arrangement.block_count() {
        return Err(TransformError::ArrangementMismatch(format!(
            "expected {} blocks, got {}",
            arrangement.block_count(),
            blocks.len()
        )));
    }
    let mut values = Vec::with_capacity(blocks.len() * VECTOR_BLOCK_AREA);
    for block in blocks {
        if block.rows != VECTOR_BLOCK_SIDE || block.cols != VECTOR_BLOCK_SIDE {
            return Err(TransformError::ArrangementMismatch("vector blocks must be 8x8".into()));
        }
        values.extend_from_slice(&block.data);
    }
    values.truncate(arrangement.original_len);
    Ok(values)
}
