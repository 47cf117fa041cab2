//! Layer-wise encode/decode pipeline.
//!
//! | kind                | `Full`                         | `QuantOnly` | `ClusterAll` |
//! |---------------------|--------------------------------|-------------|--------------|
//! | conv kernel         | per-slice h×w DCT + quantizer  | quantizer   | code book    |
//! | dense, 1×1 conv     | 8×8 blocks, DCT + quantizer    | quantizer   | code book    |
//! | bias, normalization | code book                      | quantizer   | code book    |
//!
//! Tensors with fewer than two values are stored raw under every method set.
//! Every path starts with per-tensor prescaling and ends with one BZip2
//! stream per layer. Layers are independent and run on a rayon pool; output
//! is collected in model order, so the bytes do not depend on the worker
//! count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::bitstream::{
    self, entropy_compress, entropy_decompress, pack_indices, unpack_indices, BitstreamError, CompressedModel,
    EncodedLayer, LayerCoding, Method, NNC_VERSION,
};
use crate::codebook::{codebook_decode, kmeans_encode, layer_seed, ClusterError, CodeBook};
use crate::model_io::{LayerParams, ModelError, NetworkModel, ParamKind, TensorF32};
use crate::prescale::{prescale, unprescale, PrescaleError, PrescaleFactor};
use crate::quantizer::{dequantize, quantize, QuantError, QuantGrid, QuantizerConfig};
use crate::transform::{
    dct2_forward, dct2_inverse, kernel_blocks, reassemble, unvector_blocks, vector_blocks, Block, BlockArrangement,
    TransformError, VECTOR_BLOCK_SIDE,
};

#[derive(Debug, Error)]
pub enum LayerError {
    #[error(transparent)]
    Prescale(#[from] PrescaleError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("layer `{layer}`: {source}")]
    Layer {
        layer: String,
        #[source]
        source: LayerError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
    #[error("compressed size is zero")]
    ZeroCompressedSize,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Which tools are enabled; see the module table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodSet {
    Full,
    QuantOnly,
    ClusterAll,
}

impl MethodSet {
    pub const ALL: [MethodSet; 3] = [MethodSet::Full, MethodSet::QuantOnly, MethodSet::ClusterAll];

    pub fn name(self) -> &'static str {
        match self {
            MethodSet::Full => "full",
            MethodSet::QuantOnly => "quant",
            MethodSet::ClusterAll => "cluster",
        }
    }

    /// Coding method this set uses for a tensor of `kind` with `len` values.
    pub fn method_for(self, kind: ParamKind, len: usize) -> Method {
        if len < 2 {
            return Method::Raw;
        }
        match self {
            MethodSet::QuantOnly => Method::Quant,
            MethodSet::ClusterAll => Method::CodeBook,
            MethodSet::Full if kind.is_vector() => Method::CodeBook,
            MethodSet::Full => Method::TransformQuant,
        }
    }
}

impl fmt::Display for MethodSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(MethodSet::Full),
            "quant" => Ok(MethodSet::QuantOnly),
            "cluster" => Ok(MethodSet::ClusterAll),
            other => Err(format!("unknown method set `{other}` (expected full, quant or cluster)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    pub cfg: QuantizerConfig,
    pub seed: u64,
    pub method_set: MethodSet,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl EncodeOptions {
    pub fn new(cfg: QuantizerConfig, method_set: MethodSet) -> Self {
        Self {
            cfg,
            seed: 0,
            method_set,
            workers: None,
        }
    }

    pub fn seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn workers(self, workers: usize) -> Self {
        Self {
            workers: Some(workers),
            ..self
        }
    }
}

/// Encoder-side facts about one layer that the container does not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub name: String,
    pub method: Method,
    pub prescale: f32,
    /// Code book SSE on the prescaled values.
    pub cluster_distortion: Option<f64>,
    pub payload_bytes: usize,
}

pub fn encode_network(
    model: &NetworkModel,
    cfg: QuantizerConfig,
    seed: u64,
    method_set: MethodSet,
) -> Result<CompressedModel, CodecError> {
    encode_network_with(model, &EncodeOptions::new(cfg, method_set).seed(seed)).map(|(c, _)| c)
}

pub fn encode_network_with(
    model: &NetworkModel,
    opts: &EncodeOptions,
) -> Result<(CompressedModel, Vec<LayerReport>), CodecError> {
    model.validate()?;
    let results = run_pool(opts.workers, || {
        model
            .layers
            .par_iter()
            .map(|layer| {
                encode_layer(layer, opts).map_err(|source| CodecError::Layer {
                    layer: layer.name.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    let (layers, reports) = results.into_iter().unzip();
    Ok((
        CompressedModel {
            version: NNC_VERSION,
            cfg: opts.cfg,
            layers,
            arch_meta: model.arch_meta.clone(),
        },
        reports,
    ))
}

pub fn decode_network(compressed: &CompressedModel) -> Result<NetworkModel, CodecError> {
    decode_network_with(compressed, None)
}

pub fn decode_network_with(compressed: &CompressedModel, workers: Option<usize>) -> Result<NetworkModel, CodecError> {
    let layers = run_pool(workers, || {
        compressed
            .layers
            .par_iter()
            .map(|layer| {
                decode_layer(layer, compressed.cfg).map_err(|source| CodecError::Layer {
                    layer: layer.name.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(NetworkModel::new(layers, compressed.arch_meta.clone())?)
}

/// Encodes and serializes in one go.
pub fn compress_model(model: &NetworkModel, opts: &EncodeOptions) -> Result<Vec<u8>, CodecError> {
    let (compressed, _) = encode_network_with(model, opts)?;
    Ok(bitstream::write_compressed(&compressed)?)
}

pub fn decompress_model(bytes: &[u8]) -> Result<NetworkModel, CodecError> {
    decode_network(&bitstream::read_compressed(bytes)?)
}

/// Uncompressed size over compressed size.
pub fn compression_factor(original: u64, compressed: u64) -> Result<f64, CodecError> {
    if compressed == 0 {
        return Err(CodecError::ZeroCompressedSize);
    }
    Ok(original as f64 / compressed as f64)
}

fn run_pool<R: Send>(workers: Option<usize>, job: impl FnOnce() -> R + Send) -> Result<R, CodecError> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CodecError::ThreadPool(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

fn encode_layer(layer: &LayerParams, opts: &EncodeOptions) -> Result<(EncodedLayer, LayerReport), LayerError> {
    let bits = opts.cfg.bits();
    let values = layer.tensor.values();
    let method = opts.method_set.method_for(layer.kind, values.len());
    let (scaled, factor) = prescale(values)?;
    let mut cluster_distortion = None;

    let (coding, raw_payload) = match method {
        Method::Raw => {
            let raw: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            // Raw values are stored unscaled.
            return Ok(finish(layer, PrescaleFactor::one(), LayerCoding::Raw, &raw, None));
        }
        Method::Quant => {
            let (indices, grid) = quantize(&scaled, opts.cfg)?;
            (LayerCoding::Quant { grid }, pack_indices(&indices, bits)?)
        }
        Method::CodeBook => {
            let result = kmeans_encode(&scaled, opts.cfg, layer_seed(&layer.name, opts.seed))?;
            cluster_distortion = Some(result.distortion);
            (
                LayerCoding::CodeBook {
                    centroids: result.codebook.centroids().to_vec(),
                },
                pack_indices(&result.indices, bits)?,
            )
        }
        Method::TransformQuant => {
            let (blocks, arrangement) = match layer.kind {
                ParamKind::ConvKernel { .. } => (kernel_blocks(&scaled, layer.kind)?, None),
                _ => {
                    let (blocks, arrangement) = vector_blocks(&scaled)?;
                    (blocks, Some(arrangement))
                }
            };
            let coeffs: Vec<f32> = blocks.iter().flat_map(|b| dct2_forward(b).into_data()).collect();
            let (indices, grid) = quantize(&coeffs, opts.cfg)?;
            (LayerCoding::TransformQuant { grid, arrangement }, pack_indices(&indices, bits)?)
        }
    };
    Ok(finish(layer, factor, coding, &raw_payload, cluster_distortion))
}

fn finish(
    layer: &LayerParams,
    factor: PrescaleFactor<f32>,
    coding: LayerCoding,
    raw_payload: &[u8],
    cluster_distortion: Option<f64>,
) -> (EncodedLayer, LayerReport) {
    let payload = entropy_compress(raw_payload);
    let report = LayerReport {
        name: layer.name.clone(),
        method: coding.method(),
        prescale: factor.get(),
        cluster_distortion,
        payload_bytes: payload.len(),
    };
    let encoded = EncodedLayer {
        name: layer.name.clone(),
        kind: layer.kind,
        shape: layer.tensor.shape().to_vec(),
        prescale: factor.get(),
        coding,
        payload,
    };
    (encoded, report)
}

fn decode_layer(layer: &EncodedLayer, cfg: QuantizerConfig) -> Result<LayerParams, LayerError> {
    let bits = cfg.bits();
    let expected = layer.expected_payload_bytes(bits);
    let raw = entropy_decompress(&layer.payload, expected)?;
    if raw.len() != expected {
        return Err(BitstreamError::PayloadLengthMismatch {
            expected,
            got: raw.len(),
        }
        .into());
    }
    let factor = PrescaleFactor::new(layer.prescale)?;

    let scaled: Vec<f32> = match &layer.coding {
        LayerCoding::Raw => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        LayerCoding::Quant { grid } => {
            let indices = unpack_indices(&raw, layer.symbol_count(), bits)?;
            dequantize(&indices, checked_grid(grid)?, cfg)?
        }
        LayerCoding::CodeBook { centroids } => {
            let indices = unpack_indices(&raw, layer.symbol_count(), bits)?;
            codebook_decode(&indices, &CodeBook::new(centroids.clone(), cfg)?)?
        }
        LayerCoding::TransformQuant { grid, arrangement } => {
            let indices = unpack_indices(&raw, layer.symbol_count(), bits)?;
            let coeffs = dequantize(&indices, checked_grid(grid)?, cfg)?;
            decode_blocks(&coeffs, layer.kind, *arrangement)?
        }
    };
    let values = match layer.coding {
        LayerCoding::Raw => scaled,
        _ => unprescale(&scaled, factor),
    };
    let tensor = TensorF32::new(layer.shape.clone(), values)?;
    Ok(LayerParams::new(layer.name.clone(), layer.kind, tensor)?)
}

fn checked_grid(grid: &QuantGrid<f32>) -> Result<QuantGrid<f32>, QuantError> {
    QuantGrid::new(grid.offset, grid.step)
}

fn decode_blocks(
    coeffs: &[f32],
    kind: ParamKind,
    arrangement: Option<BlockArrangement>,
) -> Result<Vec<f32>, TransformError> {
    match (kind, arrangement) {
        (ParamKind::ConvKernel { h, w, .. }, None) => {
            let blocks = coeffs
                .chunks_exact(h * w)
                .map(|c| Block::new(h, w, c.to_vec()).map(|b| dct2_inverse(&b)))
                .collect::<Result<Vec<_>, _>>()?;
            reassemble(&blocks, kind)
        }
        (_, Some(arrangement)) => {
            let side = VECTOR_BLOCK_SIDE;
            let blocks = coeffs
                .chunks_exact(side * side)
                .map(|c| Block::new(side, side, c.to_vec()).map(|b| dct2_inverse(&b)))
                .collect::<Result<Vec<_>, _>>()?;
            unvector_blocks(&blocks, arrangement)
        }
        (kind, None) => Err(TransformError::WrongKind(kind)),
    }
}
