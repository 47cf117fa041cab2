//! Network parameter types and the uncompressed `NNM1` container.
//!
//! # Layout
//!
//! ```text
//! "NNM1"                      4 bytes
//! header_len                  u64 little-endian
//! header                      header_len bytes of UTF-8 text
//! blobs                       concatenated little-endian f32 tensors, then arch_meta
//! ```
//!
//! The header holds one tab-separated line per layer, in model order,
//! followed by a single `arch_meta` line:
//!
//! ```text
//! layer<TAB>name<TAB>kind<TAB>dims<TAB>shape<TAB>offset<TAB>length<LF>
//! arch_meta<TAB>offset<TAB>length<LF>
//! ```
//!
//! `kind` is one of `conv`, `conv1x1`, `dense`, `bias`, `norm`; `dims` and
//! `shape` are comma-separated decimal integers. Offsets and lengths are in
//! bytes relative to the start of the blob section. Blobs are stored back to
//! back in header order with no gaps and nothing after the `arch_meta` blob,
//! so every valid file has exactly one encoding.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

pub const NNM_MAGIC: &[u8; 4] = b"NNM1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("bad magic: expected NNM1")]
    BadMagic,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated blob for `{0}`")]
    TruncatedBlob(String),
    #[error("tensor `{0}` contains a non-finite value")]
    NonFiniteValue(String),
    #[error("duplicate layer name `{0}`")]
    DuplicateLayerName(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Dense row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorF32 {
    shape: Vec<usize>,
    values: Vec<f32>,
}

impl TensorF32 {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self, ModelError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(ModelError::InvalidModel(format!(
                "shape {shape:?} must be a non-empty list of positive dimensions"
            )));
        }
        let numel = checked_product(&shape)
            .ok_or_else(|| ModelError::InvalidModel(format!("shape {shape:?} overflows")))?;
        if numel != values.len() {
            return Err(ModelError::InvalidModel(format!(
                "shape {shape:?} holds {numel} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidModel("tensor contains NaN or Inf".into()));
        }
        Ok(Self { shape, values })
    }

    /// 1-D tensor over `values`.
    pub fn from_vec(values: Vec<f32>) -> Result<Self, ModelError> {
        Self::new(vec![values.len()], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Role of a parameter tensor; decides how the codec treats it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Spatial convolution kernel stored as `[h, w, c_in, c_out]`.
    ConvKernel {
        h: usize,
        w: usize,
        c_in: usize,
        c_out: usize,
    },
    /// 1×1 convolution, `[c_in, c_out]`.
    Conv1x1 { c_in: usize, c_out: usize },
    /// Fully connected weights, `[rows, cols]` with `rows` outputs.
    DenseMatrix { rows: usize, cols: usize },
    BiasVector { len: usize },
    NormalizationVector { len: usize },
}

impl ParamKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ParamKind::ConvKernel { .. } => "conv",
            ParamKind::Conv1x1 { .. } => "conv1x1",
            ParamKind::DenseMatrix { .. } => "dense",
            ParamKind::BiasVector { .. } => "bias",
            ParamKind::NormalizationVector { .. } => "norm",
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ParamKind::ConvKernel { h, w, c_in, c_out } => vec![h, w, c_in, c_out],
            ParamKind::Conv1x1 { c_in, c_out } => vec![c_in, c_out],
            ParamKind::DenseMatrix { rows, cols } => vec![rows, cols],
            ParamKind::BiasVector { len } | ParamKind::NormalizationVector { len } => vec![len],
        }
    }

    /// Rebuilds a kind from its tag and dimension list.
    pub fn from_tag(tag: &str, dims: &[usize]) -> Option<Self> {
        let kind = match (tag, dims) {
            ("conv", &[h, w, c_in, c_out]) => ParamKind::ConvKernel { h, w, c_in, c_out },
            ("conv1x1", &[c_in, c_out]) => ParamKind::Conv1x1 { c_in, c_out },
            ("dense", &[rows, cols]) => ParamKind::DenseMatrix { rows, cols },
            ("bias", &[len]) => ParamKind::BiasVector { len },
            ("norm", &[len]) => ParamKind::NormalizationVector { len },
            _ => return None,
        };
        Some(kind)
    }

    /// Number of scalars a tensor of this kind holds, `None` on overflow.
    pub fn numel(&self) -> Option<usize> {
        checked_product(&self.dims())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dims().contains(&0) {
            return Err(format!("{} has a zero dimension", self));
        }
        if let ParamKind::ConvKernel { h, w, .. } = *self {
            if h < 2 && w < 2 {
                return Err(format!("{self} is 1x1; use conv1x1"));
            }
        }
        if self.numel().is_none() {
            return Err(format!("{self} overflows"));
        }
        Ok(())
    }

    pub fn is_vector(&self) -> bool {
        matches!(
            self,
            ParamKind::BiasVector { .. } | ParamKind::NormalizationVector { .. }
        )
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.tag(), join_dims(&self.dims()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: TensorF32,
}

impl LayerParams {
    pub fn new(name: impl Into<String>, kind: ParamKind, tensor: TensorF32) -> Result<Self, ModelError> {
        let layer = Self {
            name: name.into(),
            kind,
            tensor,
        };
        layer.validate()?;
        Ok(layer)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.name.is_empty() || self.name.contains(['\t', '\n', '\r']) {
            return Err(ModelError::InvalidModel(format!(
                "layer name {:?} must be non-empty without tabs or line breaks",
                self.name
            )));
        }
        self.kind
            .validate()
            .map_err(|e| ModelError::InvalidModel(format!("`{}`: {e}", self.name)))?;
        if self.kind.numel() != Some(self.tensor.len()) {
            return Err(ModelError::InvalidModel(format!(
                "`{}`: {} does not match tensor of {} values",
                self.name,
                self.kind,
                self.tensor.len()
            )));
        }
        Ok(())
    }
}

/// An ordered set of parameter tensors plus opaque architecture bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub layers: Vec<LayerParams>,
    pub arch_meta: Vec<u8>,
}

impl NetworkModel {
    pub fn new(layers: Vec<LayerParams>, arch_meta: Vec<u8>) -> Result<Self, ModelError> {
        let model = Self { layers, arch_meta };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::InvalidModel("model has no layers".into()));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            layer.validate()?;
            if !seen.insert(layer.name.as_str()) {
                return Err(ModelError::InvalidModel(format!(
                    "duplicate layer name `{}`",
                    layer.name
                )));
            }
        }
        Ok(())
    }

    pub fn layer(&self, name: &str) -> Option<&LayerParams> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.tensor.len()).sum()
    }
}

pub fn write_model(model: &NetworkModel) -> Result<Vec<u8>, ModelError> {
    model.validate()?;
    let mut header = String::new();
    let mut offset = 0usize;
    for layer in &model.layers {
        let length = layer.tensor.len() * 4;
        header.push_str(&format!(
            "layer\t{}\t{}\t{}\t{}\t{}\t{}\n",
            layer.name,
            layer.kind.tag(),
            join_dims(&layer.kind.dims()),
            join_dims(layer.tensor.shape()),
            offset,
            length
        ));
        offset += length;
    }
    header.push_str(&format!("arch_meta\t{}\t{}\n", offset, model.arch_meta.len()));

    let mut out = Vec::with_capacity(12 + header.len() + offset + model.arch_meta.len());
    out.extend_from_slice(NNM_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for layer in &model.layers {
        for v in layer.tensor.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&model.arch_meta);
    Ok(out)
}

pub fn read_model(bytes: &[u8]) -> Result<NetworkModel, ModelError> {
    if bytes.len() < 4 || &bytes[..4] != NNM_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let len_bytes: [u8; 8] = bytes
        .get(4..12)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| malformed("missing header length"))?;
    let header_len = usize::try_from(u64::from_le_bytes(len_bytes))
        .map_err(|_| malformed("header length overflows"))?;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| malformed("header extends past end of file"))?;
    let header = std::str::from_utf8(&bytes[12..header_end])
        .map_err(|_| malformed("header is not UTF-8"))?;
    let blobs = &bytes[header_end..];

    let mut lines: Vec<&str> = header.split_terminator('\n').collect();
    if !header.ends_with('\n') {
        return Err(malformed("header must end with a newline"));
    }
    let arch_line = lines.pop().ok_or_else(|| malformed("empty header"))?;

    let mut layers = Vec::with_capacity(lines.len());
    let mut names = HashSet::new();
    let mut cursor = 0usize;
    for line in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        let [tag, name, kind, dims, shape, offset, length] = fields[..] else {
            return Err(malformed(&format!("bad layer line {line:?}")));
        };
        if tag != "layer" {
            return Err(malformed(&format!("expected `layer`, got {tag:?}")));
        }
        if name.is_empty() || name.contains('\r') {
            return Err(malformed("bad layer name"));
        }
        let dims = parse_dims(dims)?;
        let kind = ParamKind::from_tag(kind, &dims)
            .ok_or_else(|| malformed(&format!("unknown kind {kind:?} with dims {dims:?}")))?;
        kind.validate().map_err(|e| malformed(&e))?;
        let shape = parse_dims(shape)?;
        let numel = checked_product(&shape).ok_or_else(|| malformed("shape overflows"))?;
        if Some(numel) != kind.numel() {
            return Err(malformed(&format!("`{name}`: shape {shape:?} does not match {kind}")));
        }
        let offset = parse_usize(offset)?;
        let length = parse_usize(length)?;
        if offset != cursor || Some(length) != numel.checked_mul(4) {
            return Err(malformed(&format!("`{name}`: blob offset/length out of sequence")));
        }
        let blob = blobs
            .get(offset..offset + length)
            .ok_or_else(|| ModelError::TruncatedBlob(name.to_string()))?;
        cursor += length;
        let values: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteValue(name.to_string()));
        }
        if !names.insert(name.to_string()) {
            return Err(ModelError::DuplicateLayerName(name.to_string()));
        }
        layers.push(LayerParams {
            name: name.to_string(),
            kind,
            tensor: TensorF32 { shape, values },
        });
    }

    let fields: Vec<&str> = arch_line.split('\t').collect();
    let ["arch_meta", offset, length] = fields[..] else {
        return Err(malformed("missing arch_meta line"));
    };
    let offset = parse_usize(offset)?;
    let length = parse_usize(length)?;
    if offset != cursor {
        return Err(malformed("arch_meta offset out of sequence"));
    }
    let arch_meta = blobs
        .get(offset..offset.saturating_add(length))
        .ok_or_else(|| ModelError::TruncatedBlob("arch_meta".into()))?
        .to_vec();
    if offset + length != blobs.len() {
        return Err(malformed("trailing bytes after arch_meta"));
    }
    if layers.is_empty() {
        return Err(malformed("model has no layers"));
    }
    Ok(NetworkModel { layers, arch_meta })
}

fn malformed(msg: &str) -> ModelError {
    ModelError::MalformedHeader(msg.to_string())
}

fn parse_usize(s: &str) -> Result<usize, ModelError> {
    // Canonical decimal only: no sign, no leading zeros.
    if s.is_empty() || (s.len() > 1 && s.starts_with('0')) || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(&format!("bad integer {s:?}")));
    }
    s.parse().map_err(|_| malformed(&format!("bad integer {s:?}")))
}

fn parse_dims(s: &str) -> Result<Vec<usize>, ModelError> {
    let dims = s.split(',').map(parse_usize).collect::<Result<Vec<_>, _>>()?;
    if dims.contains(&0) {
        return Err(malformed(&format!("zero dimension in {s:?}")));
    }
    Ok(dims)
}

fn join_dims(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub(crate) fn checked_product(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}
