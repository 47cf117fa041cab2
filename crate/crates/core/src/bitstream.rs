//! BZip2 payload coding, index packing and the `NNC1` compressed container.
//!
//! # Layout
//!
//! All integers little-endian, all floats IEEE-754 f32, every field
//! byte-aligned.
//!
//! ```text
//! "NNC1"  version:u8  bits:u8  layer_count:u32
//! per layer:
//!   name_len:u16  name:[u8]
//!   kind:u8  dims:[u32]            conv=0 (h,w,c_in,c_out)  conv1x1=1 (c_in,c_out)
//!                                  dense=2 (rows,cols)      bias=3 (len)  norm=4 (len)
//!   ndim:u8  shape:[u32; ndim]
//!   method:u8                      0 transform+quant, 1 quant, 2 code book, 3 raw
//!   prescale:f32
//!   method 0/1: offset:f32 step:f32
//!   method 2:   centroids:[f32; 2^bits]
//!   method 0 on dense/conv1x1: pad_len:u8 original_len:u32
//!   payload_len:u32  payload:[u8]  (one BZip2 stream)
//! arch_meta_len:u32  arch_meta:[u8]
//! ```
//!
//! Payloads hold packed indices (one byte per index up to 8 bits, two bytes
//! little-endian above that) or, for the raw method, the f32 values.

use std::io::{Read, Write};

use bzip2::read::BzDecoder;
use bzip2::write::BzEncoder;
use bzip2::Compression;
use thiserror::Error;

use crate::model_io::{checked_product, ParamKind};
use crate::quantizer::{QuantGrid, QuantizerConfig};
use crate::transform::{BlockArrangement, VECTOR_BLOCK_AREA};

pub const NNC_MAGIC: &[u8; 4] = b"NNC1";
pub const NNC_VERSION: u8 = 1;
/// Magic, version, bits and layer count.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitstreamError {
    #[error("bad magic: expected NNC1")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated record: {0}")]
    TruncatedRecord(String),
    #[error("payload length mismatch: expected {expected} bytes, got {got}")]
    PayloadLengthMismatch { expected: usize, got: usize },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("index {index} does not fit in {bits} bits")]
    IndexOutOfRange { index: u32, bits: u8 },
    #[error("bzip2 stream error: {0}")]
    Entropy(String),
}

/// Whole-stream BZip2 at the default 900k block size.
pub fn entropy_compress(bytes: &[u8]) -> Vec<u8> {
    let mut enc = BzEncoder::new(Vec::new(), Compression::best());
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

/// Decompresses one BZip2 stream, refusing output beyond `limit` bytes.
pub fn entropy_decompress(bytes: &[u8], limit: usize) -> Result<Vec<u8>, BitstreamError> {
    let mut out = Vec::new();
    BzDecoder::new(bytes)
        .take(limit as u64 + 1)
        .read_to_end(&mut out)
        .map_err(|e| BitstreamError::Entropy(e.to_string()))?;
    if out.len() > limit {
        return Err(BitstreamError::PayloadLengthMismatch {
            expected: limit,
            got: out.len(),
        });
    }
    Ok(out)
}

pub fn index_width(bits: u8) -> usize {
    if bits <= 8 {
        1
    } else {
        2
    }
}

pub fn pack_indices(indices: &[u32], bits: u8) -> Result<Vec<u8>, BitstreamError> {
    let width = index_width(bits);
    let mut out = Vec::with_capacity(indices.len() * width);
    for &i in indices {
        if u64::from(i) >> bits != 0 {
            return Err(BitstreamError::IndexOutOfRange { index: i, bits });
        }
        if width == 1 {
            out.push(i as u8);
        } else {
            out.extend_from_slice(&(i as u16).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn unpack_indices(bytes: &[u8], count: usize, bits: u8) -> Result<Vec<u32>, BitstreamError> {
    let width = index_width(bits);
    if bytes.len() != count * width {
        return Err(BitstreamError::PayloadLengthMismatch {
            expected: count * width,
            got: bytes.len(),
        });
    }
    let indices: Vec<u32> = if width == 1 {
        bytes.iter().map(|&b| u32::from(b)).collect()
    } else {
        bytes
            .chunks_exact(2)
            .map(|c| u32::from(u16::from_le_bytes([c[0], c[1]])))
            .collect()
    };
    if let Some(&index) = indices.iter().find(|&&i| u64::from(i) >> bits != 0) {
        return Err(BitstreamError::IndexOutOfRange { index, bits });
    }
    Ok(indices)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    TransformQuant,
    Quant,
    CodeBook,
    Raw,
}

impl Method {
    pub fn tag(self) -> u8 {
        match self {
            Method::TransformQuant => 0,
            Method::Quant => 1,
            Method::CodeBook => 2,
            Method::Raw => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::TransformQuant => "transform+quant",
            Method::Quant => "quant",
            Method::CodeBook => "codebook",
            Method::Raw => "raw",
        }
    }
}

/// Method-specific side information of a layer record.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerCoding {
    TransformQuant {
        grid: QuantGrid<f32>,
        /// Present for dense and 1×1 weights, absent for spatial kernels.
        arrangement: Option<BlockArrangement>,
    },
    Quant {
        grid: QuantGrid<f32>,
    },
    CodeBook {
        centroids: Vec<f32>,
    },
    Raw,
}

impl LayerCoding {
    pub fn method(&self) -> Method {
        match self {
            LayerCoding::TransformQuant { .. } => Method::TransformQuant,
            LayerCoding::Quant { .. } => Method::Quant,
            LayerCoding::CodeBook { .. } => Method::CodeBook,
            LayerCoding::Raw => Method::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedLayer {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub prescale: f32,
    pub coding: LayerCoding,
    /// One BZip2 stream.
    pub payload: Vec<u8>,
}

impl EncodedLayer {
    /// Number of symbols the payload must decompress to.
    pub fn symbol_count(&self) -> usize {
        let numel = self.kind.numel().unwrap_or(0);
        match &self.coding {
            LayerCoding::TransformQuant {
                arrangement: Some(a), ..
            } => a.block_count() * VECTOR_BLOCK_AREA,
            _ => numel,
        }
    }

    /// Exact decompressed payload size in bytes.
    pub fn expected_payload_bytes(&self, bits: u8) -> usize {
        match self.coding {
            LayerCoding::Raw => self.symbol_count() * 4,
            _ => self.symbol_count() * index_width(bits),
        }
    }

    /// Serialized size of this record.
    pub fn record_size(&self) -> usize {
        let meta = match &self.coding {
            LayerCoding::TransformQuant { arrangement, .. } => 8 + if arrangement.is_some() { 5 } else { 0 },
            LayerCoding::Quant { .. } => 8,
            LayerCoding::CodeBook { centroids } => 4 * centroids.len(),
            LayerCoding::Raw => 0,
        };
        2 + self.name.len() + 1 + 4 * self.kind.dims().len() + 1 + 4 * self.shape.len() + 1 + 4 + meta + 4 + self.payload.len()
    }

    fn validate(&self, cfg: QuantizerConfig) -> Result<(), BitstreamError> {
        let invalid = |m: String| BitstreamError::InvalidRecord(format!("`{}`: {m}", self.name));
        if self.name.is_empty() || self.name.len() > u16::MAX as usize || self.name.contains(['\t', '\n', '\r']) {
            return Err(invalid("bad layer name".into()));
        }
        self.kind.validate().map_err(invalid)?;
        if self.shape.is_empty() || self.shape.len() > u8::MAX as usize || self.shape.contains(&0) {
            return Err(invalid(format!("bad shape {:?}", self.shape)));
        }
        let numel = self.kind.numel().ok_or_else(|| invalid("size overflows".into()))?;
        if checked_product(&self.shape) != Some(numel) {
            return Err(invalid(format!("shape {:?} does not match {}", self.shape, self.kind)));
        }
        if self.kind.dims().iter().chain(&self.shape).any(|&d| d > u32::MAX as usize) {
            return Err(invalid("dimension exceeds u32".into()));
        }
        if !(self.prescale.is_finite() && self.prescale > 0.0) {
            return Err(invalid(format!("prescale factor {} must be positive", self.prescale)));
        }
        match &self.coding {
            LayerCoding::TransformQuant { grid, arrangement } => {
                QuantGrid::new(grid.offset, grid.step).map_err(|e| invalid(e.to_string()))?;
                match (self.kind, arrangement) {
                    (ParamKind::ConvKernel { .. }, None) => {}
                    (ParamKind::DenseMatrix { .. } | ParamKind::Conv1x1 { .. }, Some(a)) => {
                        a.validate().map_err(|e| invalid(e.to_string()))?;
                        if a.original_len != numel {
                            return Err(invalid(format!(
                                "arrangement covers {} values, tensor has {numel}",
                                a.original_len
                            )));
                        }
                    }
                    _ => return Err(invalid(format!("transform coding does not apply to {}", self.kind))),
                }
            }
            LayerCoding::Quant { grid } => {
                QuantGrid::new(grid.offset, grid.step).map_err(|e| invalid(e.to_string()))?;
            }
            LayerCoding::CodeBook { centroids } => {
                if centroids.len() != cfg.levels() || centroids.iter().any(|c| !c.is_finite()) {
                    return Err(invalid(format!("code book must hold {} finite centroids", cfg.levels())));
                }
            }
            LayerCoding::Raw => {}
        }
        if self.payload.len() > u32::MAX as usize {
            return Err(invalid("payload exceeds u32".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub version: u8,
    pub cfg: QuantizerConfig,
    pub layers: Vec<EncodedLayer>,
    pub arch_meta: Vec<u8>,
}

impl CompressedModel {
    pub fn encoded_size(&self) -> usize {
        HEADER_LEN + self.layers.iter().map(EncodedLayer::record_size).sum::<usize>() + 4 + self.arch_meta.len()
    }
}

pub fn write_compressed(model: &CompressedModel) -> Result<Vec<u8>, BitstreamError> {
    if model.version != NNC_VERSION {
        return Err(BitstreamError::UnsupportedVersion(model.version));
    }
    if model.layers.len() > u32::MAX as usize || model.arch_meta.len() > u32::MAX as usize {
        return Err(BitstreamError::InvalidRecord("container too large".into()));
    }
    let mut out = Vec::with_capacity(model.encoded_size());
    out.extend_from_slice(NNC_MAGIC);
    out.push(model.version);
    out.push(model.cfg.bits());
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        layer.validate(model.cfg)?;
        out.extend_from_slice(&(layer.name.len() as u16).to_le_bytes());
        out.extend_from_slice(layer.name.as_bytes());
        out.push(kind_tag(layer.kind));
        for d in layer.kind.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(layer.shape.len() as u8);
        for &d in &layer.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(layer.coding.method().tag());
        out.extend_from_slice(&layer.prescale.to_le_bytes());
        match &layer.coding {
            LayerCoding::TransformQuant { grid, arrangement } => {
                out.extend_from_slice(&grid.offset.to_le_bytes());
                out.extend_from_slice(&grid.step.to_le_bytes());
                if let Some(a) = arrangement {
                    out.push(a.pad_len as u8);
                    out.extend_from_slice(&(a.original_len as u32).to_le_bytes());
                }
            }
            LayerCoding::Quant { grid } => {
                out.extend_from_slice(&grid.offset.to_le_bytes());
                out.extend_from_slice(&grid.step.to_le_bytes());
            }
            LayerCoding::CodeBook { centroids } => {
                for c in centroids {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            LayerCoding::Raw => {}
        }
        out.extend_from_slice(&(layer.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&layer.payload);
    }
    out.extend_from_slice(&(model.arch_meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&model.arch_meta);
    Ok(out)
}

pub fn read_compressed(bytes: &[u8]) -> Result<CompressedModel, BitstreamError> {
    if bytes.len() < 4 || &bytes[..4] != NNC_MAGIC {
        return Err(BitstreamError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u8("version")?;
    if version != NNC_VERSION {
        return Err(BitstreamError::UnsupportedVersion(version));
    }
    let bits = r.u8("bit depth")?;
    let cfg = QuantizerConfig::new(u32::from(bits))
        .map_err(|e| BitstreamError::InvalidRecord(e.to_string()))?;
    let count = r.u32("layer count")? as usize;

    // Each record needs well over 16 bytes; cap the preallocation by what's left.
    let mut layers = Vec::with_capacity(count.min(bytes.len() / 16));
    for n in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| BitstreamError::InvalidRecord(format!("layer {n}: name is not UTF-8")))?
            .to_string();
        let tag = r.u8("kind")?;
        let ndims = match tag {
            0 => 4,
            1 | 2 => 2,
            3 | 4 => 1,
            t => return Err(BitstreamError::InvalidRecord(format!("`{name}`: unknown kind tag {t}"))),
        };
        let dims = (0..ndims)
            .map(|_| r.u32("kind dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let kind = ParamKind::from_tag(KIND_NAMES[tag as usize], &dims).expect("dims count matches tag");
        let ndim = r.u8("shape rank")? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32("shape").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let method = r.u8("method")?;
        let prescale = r.f32("prescale")?;
        let coding = match method {
            0 | 1 => {
                let grid = QuantGrid {
                    offset: r.f32("grid offset")?,
                    step: r.f32("grid step")?,
                };
                if method == 1 {
                    LayerCoding::Quant { grid }
                } else {
                    let arrangement = match kind {
                        ParamKind::DenseMatrix { .. } | ParamKind::Conv1x1 { .. } => Some(BlockArrangement {
                            pad_len: r.u8("pad length")? as usize,
                            original_len: r.u32("original length")? as usize,
                        }),
                        _ => None,
                    };
                    LayerCoding::TransformQuant { grid, arrangement }
                }
            }
            2 => {
                let raw = r.take(4 * cfg.levels(), "code book")?;
                LayerCoding::CodeBook {
                    centroids: raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect(),
                }
            }
            3 => LayerCoding::Raw,
            m => return Err(BitstreamError::InvalidRecord(format!("`{name}`: unknown method {m}"))),
        };
        let payload_len = r.u32("payload length")? as usize;
        let payload = r.take(payload_len, "payload")?.to_vec();
        let layer = EncodedLayer {
            name,
            kind,
            shape,
            prescale,
            coding,
            payload,
        };
        layer.validate(cfg)?;
        layers.push(layer);
    }
    let meta_len = r.u32("arch_meta length")? as usize;
    let arch_meta = r.take(meta_len, "arch_meta")?.to_vec();
    if r.pos != bytes.len() {
        return Err(BitstreamError::PayloadLengthMismatch {
            expected: r.pos,
            got: bytes.len(),
        });
    }
    Ok(CompressedModel {
        version,
        cfg,
        layers,
        arch_meta,
    })
}

const KIND_NAMES: [&str; 5] = ["conv", "conv1x1", "dense", "bias", "norm"];

fn kind_tag(kind: ParamKind) -> u8 {
    match kind {
        ParamKind::ConvKernel { .. } => 0,
        ParamKind::Conv1x1 { .. } => 1,
        ParamKind::DenseMatrix { .. } => 2,
        ParamKind::BiasVector { .. } => 3,
        ParamKind::NormalizationVector { .. } => 4,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], BitstreamError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| BitstreamError::TruncatedRecord(format!("{what} at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, BitstreamError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, BitstreamError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, BitstreamError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32, BitstreamError> {
        Ok(f32::from_bits(self.u32(what)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_compress_well() {
        let out = entropy_compress(&[0u8; 4096]);
        assert!(out.len() < 100, "{} bytes", out.len());
        assert_eq!(entropy_decompress(&out, 4096).unwrap(), vec![0u8; 4096]);
    }

    #[test]
    fn empty_stream() {
        let out = entropy_compress(&[]);
        assert!(out.starts_with(b"BZh9"));
        assert!(entropy_decompress(&out, 0).unwrap().is_empty());
    }

    #[test]
    fn decompress_limit() {
        let out = entropy_compress(&[7u8; 100]);
        assert!(matches!(
            entropy_decompress(&out, 99),
            Err(BitstreamError::PayloadLengthMismatch { .. })
        ));
        assert!(matches!(entropy_decompress(b"not bzip2", 10), Err(BitstreamError::Entropy(_))));
    }

    #[test]
    fn packing() {
        assert_eq!(pack_indices(&[0, 1, 2, 3], 2).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(pack_indices(&[256], 9).unwrap(), vec![0, 1]);
        assert_eq!(
            pack_indices(&[4], 2),
            Err(BitstreamError::IndexOutOfRange { index: 4, bits: 2 })
        );
        assert_eq!(
            unpack_indices(&[9], 1, 3),
            Err(BitstreamError::IndexOutOfRange { index: 9, bits: 3 })
        );
        assert!(matches!(
            unpack_indices(&[0, 1, 2], 2, 9),
            Err(BitstreamError::PayloadLengthMismatch { .. })
        ));
    }

    fn sample_model() -> CompressedModel {
        let cfg = QuantizerConfig::new(2).unwrap();
        CompressedModel {
            version: NNC_VERSION,
            cfg,
            layers: vec![
                EncodedLayer {
                    name: "fc".into(),
                    kind: ParamKind::DenseMatrix { rows: 2, cols: 5 },
                    shape: vec![2, 5],
                    prescale: 0.5,
                    coding: LayerCoding::TransformQuant {
                        grid: QuantGrid { offset: -1.0, step: 0.25 },
                        arrangement: Some(BlockArrangement::for_len(10)),
                    },
                    payload: entropy_compress(&[1u8; 64]),
                },
                EncodedLayer {
                    name: "b".into(),
                    kind: ParamKind::BiasVector { len: 3 },
                    shape: vec![3],
                    prescale: 2.0,
                    coding: LayerCoding::CodeBook {
                        centroids: vec![0.0, 0.5, 1.0, -1.0],
                    },
                    payload: entropy_compress(&[0, 1, 3]),
                },
                EncodedLayer {
                    name: "s".into(),
                    kind: ParamKind::NormalizationVector { len: 1 },
                    shape: vec![1, 1],
                    prescale: 1.0,
                    coding: LayerCoding::Raw,
                    payload: entropy_compress(&1.5f32.to_le_bytes()),
                },
            ],
            arch_meta: b"arch".to_vec(),
        }
    }

    #[test]
    fn container_round_trip_and_size() {
        let m = sample_model();
        let bytes = write_compressed(&m).unwrap();
        assert_eq!(bytes.len(), m.encoded_size());
        assert_eq!(read_compressed(&bytes).unwrap(), m);
    }

    #[test]
    fn header_errors() {
        let bytes = write_compressed(&sample_model()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(read_compressed(&bad), Err(BitstreamError::BadMagic));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert_eq!(read_compressed(&bad), Err(BitstreamError::UnsupportedVersion(2)));
        assert!(matches!(
            read_compressed(&bytes[..bytes.len() - 1]),
            Err(BitstreamError::TruncatedRecord(_))
        ));
    }

    #[test]
    fn payload_length_flip_is_caught() {
        let m = sample_model();
        let bytes = write_compressed(&m).unwrap();
        // payload length field of the first record sits right before its payload
        let first = &m.layers[0];
        let len_at = HEADER_LEN + first.record_size() - first.payload.len() - 4;
        for delta in [1u8, 0x80] {
            let mut bad = bytes.clone();
            bad[len_at] ^= delta;
            assert!(matches!(
                read_compressed(&bad),
                Err(BitstreamError::TruncatedRecord(_) | BitstreamError::PayloadLengthMismatch { .. } | BitstreamError::InvalidRecord(_))
            ));
        }
    }

    proptest! {
        #[test]
        fn entropy_round_trip(data in prop::collection::vec(any::<u8>(), 0..2000)) {
            let c = entropy_compress(&data);
            prop_assert_eq!(entropy_decompress(&c, data.len()).unwrap(), data);
        }

        #[test]
        fn pack_round_trip(bits in 2u8..=16, raw in prop::collection::vec(any::<u32>(), 0..200)) {
            let idx: Vec<u32> = raw.iter().map(|&i| i & ((1u32 << bits) - 1)).collect();
            let packed = pack_indices(&idx, bits).unwrap();
            prop_assert_eq!(unpack_indices(&packed, idx.len(), bits).unwrap(), idx);
        }

        #[test]
        fn mutated_containers_never_panic(pos in any::<prop::sample::Index>(), byte in any::<u8>()) {
            let mut bytes = write_compressed(&sample_model()).unwrap();
            let i = pos.index(bytes.len());
            bytes[i] = byte;
            let _ = read_compressed(&bytes);
        }
    }
}
