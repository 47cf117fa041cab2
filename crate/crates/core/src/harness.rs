//! Rate-distortion sweeps over bit depth and method set.

use std::ops::RangeInclusive;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::bitstream::write_compressed;
use crate::codec::{compression_factor, decode_network, encode_network, CodecError, MethodSet};
use crate::inference::{top_k_accuracy_bound, Graph, InferenceError, ToyDataset};
use crate::model_io::{write_model, ModelError, NetworkModel};
use crate::quantizer::{QuantError, QuantizerConfig};

/// Default bit depths for a sweep.
pub const DEFAULT_BITS: RangeInclusive<u32> = 3..=10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{set} at {bits} bits: {source}")]
    Point {
        set: MethodSet,
        bits: u32,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error("loss level {0} pp is not bracketed by the curve")]
    NotBracketed(f64),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RDPoint {
    pub method_set: MethodSet,
    pub bits: u32,
    pub compressed_bytes: u64,
    pub factor: f64,
    pub topk_accuracy: f64,
    /// Baseline accuracy minus this point's accuracy, in percentage points.
    pub loss_pp: f64,
    pub encode_time: Duration,
    pub decode_time: Duration,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub baseline_accuracy: f64,
    pub uncompressed_bytes: u64,
    pub points: Vec<RDPoint>,
}

/// Encodes, decodes and evaluates every `(method set, bits)` pair.
///
/// Points come back ordered by method set, then bits ascending.
pub fn rd_sweep(
    model: &NetworkModel,
    dataset: &ToyDataset,
    bits: RangeInclusive<u32>,
    method_sets: &[MethodSet],
    seed: u64,
    k: usize,
) -> Result<SweepResult, HarnessError> {
    let cfgs = bits.map(QuantizerConfig::new).collect::<Result<Vec<_>, _>>()?;
    let uncompressed_bytes = write_model(model)?.len() as u64;
    let graph = Graph::from_model(model)?;
    let baseline_accuracy = top_k_accuracy_bound(&graph.bind(model)?, dataset, k)?;

    let mut sets = method_sets.to_vec();
    sets.sort();
    sets.dedup();
    let jobs: Vec<(MethodSet, QuantizerConfig)> = sets
        .iter()
        .flat_map(|&s| cfgs.iter().map(move |&c| (s, c)))
        .collect();
    let points = jobs
        .par_iter()
        .map(|&(set, cfg)| {
            sweep_point(model, &graph, dataset, set, cfg, seed, k, uncompressed_bytes, baseline_accuracy).map_err(|e| {
                HarnessError::Point {
                    set,
                    bits: cfg.bits().into(),
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        baseline_accuracy,
        uncompressed_bytes,
        points,
    })
}

#[allow(clippy::too_many_arguments)]
fn sweep_point(
    model: &NetworkModel,
    graph: &Graph,
    dataset: &ToyDataset,
    set: MethodSet,
    cfg: QuantizerConfig,
    seed: u64,
    k: usize,
    uncompressed_bytes: u64,
    baseline: f64,
) -> Result<RDPoint, HarnessError> {
    let t0 = Instant::now();
    let compressed = encode_network(model, cfg, seed, set)?;
    let bytes = write_compressed(&compressed).map_err(CodecError::from)?;
    let encode_time = t0.elapsed();
    let t1 = Instant::now();
    let decoded = decode_network(&compressed)?;
    let decode_time = t1.elapsed();
    let accuracy = top_k_accuracy_bound(&graph.bind(&decoded)?, dataset, k)?;
    let compressed_bytes = bytes.len() as u64;
    Ok(RDPoint {
        method_set: set,
        bits: cfg.bits().into(),
        compressed_bytes,
        factor: compression_factor(uncompressed_bytes, compressed_bytes)?,
        topk_accuracy: accuracy,
        loss_pp: (baseline - accuracy) * 100.0,
        encode_time,
        decode_time,
    })
}

/// Compression factor at `loss_pp` by linear interpolation along the curve.
///
/// `points` are one method's curve. They are sorted by factor; the first
/// consecutive pair whose losses bracket `loss_pp`, scanning from the
/// highest factor down, supplies the interpolation.
pub fn interpolate_factor_at_loss(points: &[RDPoint], loss_pp: f64) -> Result<f64, HarnessError> {
    let mut curve: Vec<(f64, f64)> = points.iter().map(|p| (p.factor, p.loss_pp)).collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    for pair in curve.windows(2).rev() {
        let ((f0, l0), (f1, l1)) = (pair[0], pair[1]);
        let (lo, hi) = if l0 <= l1 { (l0, l1) } else { (l1, l0) };
        if lo <= loss_pp && loss_pp <= hi {
            if l0 == l1 {
                return Ok(f1);
            }
            return Ok(f0 + (f1 - f0) * (loss_pp - l0) / (l1 - l0));
        }
    }
    Err(HarnessError::NotBracketed(loss_pp))
}

/// CSV with header `method,bits,compressed_bytes,factor,topk,loss_pp`,
/// rows ordered by method set then bits.
pub fn emit_csv(points: &[RDPoint]) -> Result<Vec<u8>, HarnessError> {
    let mut sorted: Vec<&RDPoint> = points.iter().collect();
    sorted.sort_by_key(|p| (p.method_set, p.bits));
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Csv(e.to_string());
    w.write_record(["method", "bits", "compressed_bytes", "factor", "topk", "loss_pp"])
        .map_err(csv_err)?;
    for p in sorted {
        w.write_record([
            p.method_set.name().to_string(),
            p.bits.to_string(),
            p.compressed_bytes.to_string(),
            format!("{:.6}", p.factor),
            format!("{:.6}", p.topk_accuracy),
            format!("{:.6}", p.loss_pp),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))
}

/// Mean squared difference between same-named layers.
pub fn layer_mse(original: &NetworkModel, decoded: &NetworkModel) -> Vec<(String, f64)> {
    original
        .layers
        .iter()
        .filter_map(|l| {
            let d = decoded.layer(&l.name)?;
            let a = l.tensor.values();
            let b = d.tensor.values();
            let sse: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
            Some((l.name.clone(), sse / a.len().max(1) as f64))
        })
        .collect()
}

/// Published compression factors for ImageNet classifiers at 1 % and 2 %
/// Top-5 accuracy loss. These networks are not part of this repository and
/// the numbers cannot be reproduced with the bundled fixture.
pub const REFERENCE_FACTORS: &[(&str, MethodSet, f64, f64)] = &[
    ("GoogLeNet", MethodSet::QuantOnly, 8.0, 9.0),
    ("GoogLeNet", MethodSet::ClusterAll, 4.8, 5.8),
    ("GoogLeNet", MethodSet::Full, 10.6, 12.4),
    ("ResNet50", MethodSet::QuantOnly, 4.7, 4.8),
    ("ResNet50", MethodSet::ClusterAll, 4.2, 4.9),
    ("ResNet50", MethodSet::Full, 8.1, 9.7),
    ("AlexNet", MethodSet::QuantOnly, 7.8, 8.9),
    ("AlexNet", MethodSet::ClusterAll, 5.6, 6.6),
    ("AlexNet", MethodSet::Full, 6.7, 7.7),
    ("SqueezeNet", MethodSet::QuantOnly, 5.9, 6.7),
    ("SqueezeNet", MethodSet::ClusterAll, 3.7, 4.6),
    ("SqueezeNet", MethodSet::Full, 6.3, 7.4),
    ("Average", MethodSet::QuantOnly, 6.6, 7.4),
    ("Average", MethodSet::ClusterAll, 4.6, 5.5),
    ("Average", MethodSet::Full, 7.9, 9.3),
];
