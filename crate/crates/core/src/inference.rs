//! Small deterministic forward pass for measuring accuracy at desk scale.
//!
//! The layer graph is a linear chain described in the model's `arch_meta`
//! as UTF-8 text, one op per line (`#` starts a comment):
//!
//! ```text
//! input 1 16 16            channels, height, width
//! conv conv1.w conv1.b     stride 1, zero "same" padding; bias optional
//! conv1x1 mix.w mix.b      bias optional
//! scale bn1.g bn1.b        per-channel multiply, optional per-channel add
//! relu
//! maxpool2                 2×2 window, stride 2, floor
//! flatten
//! dense fc1.w fc1.b        y = W·x + b with W stored [outputs, inputs]
//! softmax
//! ```
//!
//! Feature maps are channel-major (`[c][y][x]`).

use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::model_io::{NetworkModel, ParamKind};

pub const NND_MAGIC: &[u8; 4] = b"NND1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InferenceError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("graph description: {0}")]
    Graph(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("k must be at least 1")]
    BadK,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Conv { kernel: String, bias: Option<String> },
    Conv1x1 { weights: String, bias: Option<String> },
    Scale { gain: String, shift: Option<String> },
    Relu,
    MaxPool2,
    Flatten,
    Dense { weights: String, bias: Option<String> },
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    /// `(channels, height, width)`
    pub input: (usize, usize, usize),
    pub ops: Vec<Op>,
}

impl Graph {
    pub fn parse(text: &str) -> Result<Self, InferenceError> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let first = lines.next().ok_or_else(|| graph_err("empty description"))?;
        let input = match first.split_whitespace().collect::<Vec<_>>()[..] {
            ["input", c, h, w] => (dim(c)?, dim(h)?, dim(w)?),
            _ => return Err(graph_err("first line must be `input C H W`")),
        };
        let mut ops = Vec::new();
        for line in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            let named = |name: &str| Some(name.to_string());
            let op = match words[..] {
                ["conv", k] => Op::Conv { kernel: k.into(), bias: None },
                ["conv", k, b] => Op::Conv { kernel: k.into(), bias: named(b) },
                ["conv1x1", w] => Op::Conv1x1 { weights: w.into(), bias: None },
                ["conv1x1", w, b] => Op::Conv1x1 { weights: w.into(), bias: named(b) },
                ["scale", g] => Op::Scale { gain: g.into(), shift: None },
                ["scale", g, b] => Op::Scale { gain: g.into(), shift: named(b) },
                ["relu"] => Op::Relu,
                ["maxpool2"] => Op::MaxPool2,
                ["flatten"] => Op::Flatten,
                ["dense", w] => Op::Dense { weights: w.into(), bias: None },
                ["dense", w, b] => Op::Dense { weights: w.into(), bias: named(b) },
                ["softmax"] => Op::Softmax,
                _ => return Err(graph_err(&format!("cannot parse {line:?}"))),
            };
            ops.push(op);
        }
        Ok(Self { input, ops })
    }

    pub fn from_model(model: &NetworkModel) -> Result<Self, InferenceError> {
        let text = std::str::from_utf8(&model.arch_meta).map_err(|_| graph_err("arch_meta is not UTF-8"))?;
        Self::parse(text)
    }

    pub fn input_len(&self) -> usize {
        self.input.0 * self.input.1 * self.input.2
    }

    /// Resolves every op against `model` and checks that shapes chain.
    pub fn bind<'m>(&self, model: &'m NetworkModel) -> Result<Network<'m>, InferenceError> {
        let (mut c, mut h, mut w) = self.input;
        let mut ops = Vec::with_capacity(self.ops.len());
        let lookup = |name: &str| -> Result<(&'m [f32], ParamKind), InferenceError> {
            model
                .layer(name)
                .map(|l| (l.tensor.values(), l.kind))
                .ok_or_else(|| InferenceError::UnknownLayer(name.to_string()))
        };
        let vector = |name: &Option<String>, len: usize| -> Result<Option<&'m [f32]>, InferenceError> {
            let Some(name) = name else { return Ok(None) };
            let (v, kind) = lookup(name)?;
            if !kind.is_vector() || v.len() != len {
                return Err(mismatch(&format!("`{name}` must be a vector of {len}, is {kind}")));
            }
            Ok(Some(v))
        };
        for op in &self.ops {
            let bound = match op {
                Op::Conv { kernel, bias } => {
                    let (k, kind) = lookup(kernel)?;
                    let ParamKind::ConvKernel { h: kh, w: kw, c_in, c_out } = kind else {
                        return Err(mismatch(&format!("`{kernel}` is {kind}, expected conv")));
                    };
                    if c_in != c {
                        return Err(mismatch(&format!("`{kernel}` takes {c_in} channels, input has {c}")));
                    }
                    c = c_out;
                    BoundOp::Conv { k, kh, kw, c_in, c_out, bias: vector(bias, c_out)? }
                }
                Op::Conv1x1 { weights, bias } => {
                    let (k, kind) = lookup(weights)?;
                    let ParamKind::Conv1x1 { c_in, c_out } = kind else {
                        return Err(mismatch(&format!("`{weights}` is {kind}, expected conv1x1")));
                    };
                    if c_in != c {
                        return Err(mismatch(&format!("`{weights}` takes {c_in} channels, input has {c}")));
                    }
                    c = c_out;
                    BoundOp::Conv { k, kh: 1, kw: 1, c_in, c_out, bias: vector(bias, c_out)? }
                }
                Op::Scale { gain, shift } => BoundOp::Scale {
                    gain: vector(&Some(gain.clone()), c)?.expect("named"),
                    shift: vector(shift, c)?,
                },
                Op::Relu => BoundOp::Relu,
                Op::MaxPool2 => {
                    if h < 2 || w < 2 {
                        return Err(mismatch(&format!("cannot pool a {h}x{w} map")));
                    }
                    h /= 2;
                    w /= 2;
                    BoundOp::MaxPool2
                }
                Op::Flatten => {
                    c *= h * w;
                    h = 1;
                    w = 1;
                    BoundOp::Flatten
                }
                Op::Dense { weights, bias } => {
                    let (m, kind) = lookup(weights)?;
                    let ParamKind::DenseMatrix { rows, cols } = kind else {
                        return Err(mismatch(&format!("`{weights}` is {kind}, expected dense")));
                    };
                    if h != 1 || w != 1 || cols != c {
                        return Err(mismatch(&format!(
                            "`{weights}` takes {cols} inputs, activation is {c}x{h}x{w}"
                        )));
                    }
                    c = rows;
                    BoundOp::Dense { m, rows, cols, bias: vector(bias, rows)? }
                }
                Op::Softmax => BoundOp::Softmax,
            };
            ops.push(bound);
        }
        Ok(Network {
            input: self.input,
            output_len: c * h * w,
            ops,
        })
    }
}

enum BoundOp<'m> {
    Conv {
        k: &'m [f32],
        kh: usize,
        kw: usize,
        c_in: usize,
        c_out: usize,
        bias: Option<&'m [f32]>,
    },
    Scale {
        gain: &'m [f32],
        shift: Option<&'m [f32]>,
    },
    Relu,
    MaxPool2,
    Flatten,
    Dense {
        m: &'m [f32],
        rows: usize,
        cols: usize,
        bias: Option<&'m [f32]>,
    },
    Softmax,
}

/// A graph bound to concrete parameter tensors.
pub struct Network<'m> {
    input: (usize, usize, usize),
    output_len: usize,
    ops: Vec<BoundOp<'m>>,
}

impl Network<'_> {
    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>, InferenceError> {
        let (mut c, mut h, mut w) = self.input;
        if input.len() != c * h * w {
            return Err(mismatch(&format!("input has {} values, expected {}", input.len(), c * h * w)));
        }
        let mut x = input.to_vec();
        for op in &self.ops {
            match *op {
                BoundOp::Conv { k, kh, kw, c_in, c_out, bias } => {
                    x = conv_same(&x, (c_in, h, w), k, kh, kw, c_out, bias);
                    c = c_out;
                }
                BoundOp::Scale { gain, shift } => {
                    let plane = h * w;
                    for (ch, chunk) in x.chunks_mut(plane).enumerate() {
                        let add = shift.map_or(0.0, |s| s[ch]);
                        for v in chunk {
                            *v = *v * gain[ch] + add;
                        }
                    }
                }
                BoundOp::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
                BoundOp::MaxPool2 => {
                    let (oh, ow) = (h / 2, w / 2);
                    let mut out = Vec::with_capacity(c * oh * ow);
                    for ch in 0..c {
                        let p = &x[ch * h * w..(ch + 1) * h * w];
                        for y in 0..oh {
                            for xx in 0..ow {
                                let a = p[2 * y * w + 2 * xx];
                                let b = p[2 * y * w + 2 * xx + 1];
                                let d = p[(2 * y + 1) * w + 2 * xx];
                                let e = p[(2 * y + 1) * w + 2 * xx + 1];
                                out.push(a.max(b).max(d).max(e));
                            }
                        }
                    }
                    x = out;
                    h = oh;
                    w = ow;
                }
                BoundOp::Flatten => {
                    c *= h * w;
                    h = 1;
                    w = 1;
                }
                BoundOp::Dense { m, rows, cols, bias } => {
                    x = (0..rows)
                        .map(|r| {
                            let row = &m[r * cols..(r + 1) * cols];
                            let dot: f32 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
                            dot + bias.map_or(0.0, |b| b[r])
                        })
                        .collect();
                    c = rows;
                }
                BoundOp::Softmax => {
                    let peak = x.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
                    x.iter_mut().for_each(|v| *v = (*v - peak).exp());
                    let total: f32 = x.iter().sum();
                    x.iter_mut().for_each(|v| *v /= total);
                }
            }
        }
        Ok(x)
    }
}

fn conv_same(
    x: &[f32],
    (c_in, h, w): (usize, usize, usize),
    k: &[f32],
    kh: usize,
    kw: usize,
    c_out: usize,
    bias: Option<&[f32]>,
) -> Vec<f32> {
    let (top, left) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut out = vec![0f32; c_out * h * w];
    for o in 0..c_out {
        let b = bias.map_or(0.0, |b| b[o]);
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0f32;
                for i in 0..c_in {
                    for dy in 0..kh {
                        let Some(sy) = (y + dy).checked_sub(top).filter(|&s| s < h) else { continue };
                        for dx in 0..kw {
                            let Some(sx) = (xx + dx).checked_sub(left).filter(|&s| s < w) else { continue };
                            acc += x[(i * h + sy) * w + sx] * k[((dy * kw + dx) * c_in + i) * c_out + o];
                        }
                    }
                }
                out[(o * h + y) * w + xx] = acc + b;
            }
        }
    }
    out
}

/// Scores for one input, parsing the graph from `model.arch_meta`.
pub fn forward(model: &NetworkModel, input: &[f32]) -> Result<Vec<f32>, InferenceError> {
    Graph::from_model(model)?.bind(model)?.forward(input)
}

/// Position of `label` when classes are sorted by descending score, equal
/// scores ordered by class index.
pub fn rank_of(scores: &[f32], label: usize) -> usize {
    let s = scores[label];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < label))
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub input_shape: Vec<usize>,
    pub class_count: usize,
    pub samples: Vec<(Vec<f32>, u16)>,
}

impl ToyDataset {
    pub fn new(input_shape: Vec<usize>, class_count: usize, samples: Vec<(Vec<f32>, u16)>) -> Result<Self, InferenceError> {
        let ds = Self {
            input_shape,
            class_count,
            samples,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), InferenceError> {
        let len: usize = self.input_shape.iter().product();
        if self.class_count == 0 || self.class_count > usize::from(u16::MAX) + 1 {
            return Err(InferenceError::Dataset("class count out of range".into()));
        }
        for (i, (x, label)) in self.samples.iter().enumerate() {
            if x.len() != len {
                return Err(InferenceError::Dataset(format!("sample {i} has {} values, expected {len}", x.len())));
            }
            if usize::from(*label) >= self.class_count {
                return Err(InferenceError::Dataset(format!("sample {i} label {label} out of range")));
            }
        }
        Ok(())
    }
}

/// Fraction of samples whose label ranks within the top `k` scores.
pub fn top_k_accuracy(model: &NetworkModel, dataset: &ToyDataset, k: usize) -> Result<f64, InferenceError> {
    let net = Graph::from_model(model)?.bind(model)?;
    top_k_accuracy_bound(&net, dataset, k)
}

pub fn top_k_accuracy_bound(net: &Network<'_>, dataset: &ToyDataset, k: usize) -> Result<f64, InferenceError> {
    if k == 0 {
        return Err(InferenceError::BadK);
    }
    if dataset.samples.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    if net.output_len() != dataset.class_count {
        return Err(mismatch(&format!(
            "network emits {} scores for {} classes",
            net.output_len(),
            dataset.class_count
        )));
    }
    let hits = dataset
        .samples
        .par_iter()
        .map(|(x, label)| net.forward(x).map(|s| usize::from(rank_of(&s, usize::from(*label)) < k)))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(hits as f64 / dataset.samples.len() as f64)
}

/// `NND1` layout: magic, `count:u32`, `rank:u8`, `dims:[u32; rank]`,
/// `classes:u32`, then every input as f32, then every label as u16, all
/// little-endian.
pub fn write_dataset(ds: &ToyDataset, mut out: impl Write) -> std::io::Result<()> {
    out.write_all(NND_MAGIC)?;
    out.write_all(&(ds.samples.len() as u32).to_le_bytes())?;
    out.write_all(&[ds.input_shape.len() as u8])?;
    for &d in &ds.input_shape {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    out.write_all(&(ds.class_count as u32).to_le_bytes())?;
    for (x, _) in &ds.samples {
        for v in x {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for (_, label) in &ds.samples {
        out.write_all(&label.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dataset(bytes: &[u8]) -> Result<ToyDataset, InferenceError> {
    let bad = |m: &str| InferenceError::Dataset(m.to_string());
    let mut r = bytes;
    let mut take = |n: usize| -> Result<Vec<u8>, InferenceError> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
        Ok(buf)
    };
    if take(4)? != NND_MAGIC {
        return Err(bad("bad magic: expected NND1"));
    }
    let u32_at = |b: Vec<u8>| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
    let count = u32_at(take(4)?);
    let rank = take(1)?[0] as usize;
    let mut input_shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        input_shape.push(u32_at(take(4)?));
    }
    let class_count = u32_at(take(4)?);
    let len = input_shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| bad("input shape overflows"))?;
    let total = len.checked_mul(count).and_then(|n| n.checked_mul(4)).ok_or_else(|| bad("size overflows"))?;
    let raw = take(total)?;
    let labels = take(count * 2)?;
    if !r.is_empty() {
        return Err(bad("trailing bytes"));
    }
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let samples = labels
        .chunks_exact(2)
        .enumerate()
        .map(|(i, l)| (values[i * len..(i + 1) * len].to_vec(), u16::from_le_bytes([l[0], l[1]])))
        .collect();
    ToyDataset::new(input_shape, class_count, samples)
}

fn graph_err(msg: &str) -> InferenceError {
    InferenceError::Graph(msg.to_string())
}

fn mismatch(msg: &str) -> InferenceError {
    InferenceError::ShapeMismatch(msg.to_string())
}

fn dim(s: &str) -> Result<usize, InferenceError> {
    s.parse::<usize>()
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| graph_err(&format!("bad dimension {s:?}")))
}
