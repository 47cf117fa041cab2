//! Multi-start 1-D k-means producing an explicit code book.
//!
//! Ten random starts each pick `min(k, #distinct)` distinct input values as
//! initial centroids; an eleventh start uses the levels of the uniform
//! quantizer on the same data. Each start runs up to 50 Lloyd steps and the
//! lowest-distortion code book wins, ties going to the earlier start. Because
//! the best state of every run is kept, the result never has more distortion
//! than uniform quantization with the same number of levels.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::quantizer::{self, QuantizerConfig};
use crate::Scalar;

pub const RANDOM_STARTS: usize = 10;
pub const LLOYD_STEPS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("cannot cluster an empty sequence")]
    EmptyInput,
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("index {index} out of range for a code book of {len}")]
    IndexOutOfRange { index: u32, len: usize },
    #[error("code book must hold {expected} finite centroids, got {got}")]
    InvalidCodeBook { expected: usize, got: usize },
    #[error("cluster count must be at least 1")]
    NoLevels,
    #[error("value range too wide to cluster")]
    RangeOverflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook<T> {
    centroids: Vec<T>,
}

impl<T: Scalar> CodeBook<T> {
    pub fn new(centroids: Vec<T>, cfg: QuantizerConfig) -> Result<Self, ClusterError> {
        if centroids.len() != cfg.levels() || centroids.iter().any(|c| !c.is_finite()) {
            return Err(ClusterError::InvalidCodeBook {
                expected: cfg.levels(),
                got: centroids.len(),
            });
        }
        Ok(Self { centroids })
    }

    pub fn centroids(&self) -> &[T] {
        &self.centroids
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult<T> {
    pub codebook: CodeBook<T>,
    pub indices: Vec<u32>,
    /// Sum of squared errors, accumulated in f64.
    pub distortion: f64,
}

/// Search effort; the decoder never sees these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub random_starts: usize,
    pub steps: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            random_starts: RANDOM_STARTS,
            steps: LLOYD_STEPS,
        }
    }
}

pub fn kmeans_encode<T: Scalar>(values: &[T], cfg: QuantizerConfig, seed: u64) -> Result<ClusterResult<T>, ClusterError> {
    kmeans_encode_with(values, cfg, seed, KMeansOptions::default())
}

pub fn kmeans_encode_with<T: Scalar>(
    values: &[T],
    cfg: QuantizerConfig,
    seed: u64,
    opts: KMeansOptions,
) -> Result<ClusterResult<T>, ClusterError> {
    kmeans_levels_with(values, cfg.levels(), seed, opts)
}

/// Clustering into `k` levels, for any `k >= 1`.
///
/// [`kmeans_encode`] is this with `k = 2^n`; the extra start then sits on
/// exactly the grid [`quantizer::quantize`] would use.
pub fn kmeans_levels<T: Scalar>(values: &[T], k: usize, seed: u64) -> Result<ClusterResult<T>, ClusterError> {
    kmeans_levels_with(values, k, seed, KMeansOptions::default())
}

pub fn kmeans_levels_with<T: Scalar>(
    values: &[T],
    k: usize,
    seed: u64,
    opts: KMeansOptions,
) -> Result<ClusterResult<T>, ClusterError> {
    if k == 0 || k > u32::MAX as usize {
        return Err(ClusterError::NoLevels);
    }
    if values.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let (min, max) = quantizer::min_max(values).map_err(|_| ClusterError::NonFiniteInput)?;
    let view = SortedView::new(values);
    let distinct = distinct_sorted(values);
    let grid = uniform_levels(min, max, k)?;

    let runs: Vec<LloydRun<T>> = (0..=opts.random_starts)
        .into_par_iter()
        .map(|start| {
            let init = if start < opts.random_starts {
                random_init(&distinct, k, seed, start as u64)
            } else {
                grid.clone()
            };
            run_lloyd(&view, init, opts.steps)
        })
        .collect();

    // First minimum wins, so ties go to the lowest start number.
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.distortion < best.distortion { run } else { best })
        .expect("at least one start");
    Ok(ClusterResult {
        codebook: CodeBook {
            centroids: best.centroids,
        },
        indices: view.unsort(&best.indices),
        distortion: best.distortion,
    })
}

pub fn codebook_decode<T: Scalar>(indices: &[u32], codebook: &CodeBook<T>) -> Result<Vec<T>, ClusterError> {
    indices
        .iter()
        .map(|&i| {
            codebook
                .centroids
                .get(i as usize)
                .copied()
                .ok_or(ClusterError::IndexOutOfRange {
                    index: i,
                    len: codebook.len(),
                })
        })
        .collect()
}

/// `Σ (values[i] - centroids[indices[i]])²` in f64.
pub fn distortion<T: Scalar>(values: &[T], centroids: &[T], indices: &[u32]) -> f64 {
    values
        .iter()
        .zip(indices)
        .map(|(&v, &i)| {
            let d = v.to_f64_lossless() - centroids[i as usize].to_f64_lossless();
            d * d
        })
        .sum()
}

/// Seed for one tensor: FNV-1a of its name mixed with the global seed.
pub fn layer_seed(name: &str, global_seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let hash = name
        .bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME));
    hash ^ global_seed
}

/// The uniform quantizer's levels for `k` clusters.
fn uniform_levels<T: Scalar>(min: T, max: T, k: usize) -> Result<Vec<T>, ClusterError> {
    let grid = quantizer::uniform_grid(min, max, (k - 1) as u32).map_err(|_| ClusterError::RangeOverflow)?;
    Ok((0..k as u32).map(|i| grid.level(i)).collect())
}

fn distinct_sorted<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    v.dedup_by(|a, b| a == b);
    v
}

fn random_init<T: Scalar>(distinct: &[T], k: usize, seed: u64, start: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start);
    let m = k.min(distinct.len());
    let mut init: Vec<T> = sample(&mut rng, distinct.len(), m).into_iter().map(|i| distinct[i]).collect();
    // Surplus slots duplicate the first centroid; lowest-index ties keep them empty.
    let first = init[0];
    init.resize(k, first);
    init
}

/// Input values sorted once, shared by every start. Assignments and
/// distances are kept in sorted order.
pub(crate) struct SortedView<T> {
    values: Vec<T>,
    xs: Vec<f64>,
    /// Original position of each sorted value.
    order: Vec<u32>,
}

impl<T: Scalar> SortedView<T> {
    pub(crate) fn new(values: &[T]) -> Self {
        let mut order: Vec<u32> = (0..values.len() as u32).collect();
        order.sort_by(|&a, &b| {
            values[a as usize]
                .partial_cmp(&values[b as usize])
                .expect("finite")
                .then(a.cmp(&b))
        });
        let values: Vec<T> = order.iter().map(|&i| values[i as usize]).collect();
        let xs = values.iter().map(|v| v.to_f64_lossless()).collect();
        Self { values, xs, order }
    }

    /// Per-position data back in input order.
    pub(crate) fn unsort(&self, sorted: &[u32]) -> Vec<u32> {
        let mut out = vec![0; sorted.len()];
        for (&pos, &v) in self.order.iter().zip(sorted) {
            out[pos as usize] = v;
        }
        out
    }
}

pub(crate) struct LloydRun<T> {
    pub centroids: Vec<T>,
    /// In sorted order; see [`SortedView::unsort`].
    pub indices: Vec<u32>,
    pub distortion: f64,
    /// Distortion after each assignment, starting with the initial one.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

pub(crate) fn run_lloyd<T: Scalar>(view: &SortedView<T>, init: Vec<T>, steps: usize) -> LloydRun<T> {
    let n = view.xs.len();
    let mut centroids = init;
    let mut indices = vec![0u32; n];
    let mut dist = vec![0f64; n];
    let mut current = assign(&view.xs, &centroids, &mut indices, &mut dist);
    let mut trace = vec![current];
    let mut best = (centroids.clone(), current);

    for _ in 0..steps {
        if current == 0.0 {
            break;
        }
        let next = update(view, &centroids, &indices, &dist);
        if next.iter().zip(&centroids).all(|(a, b)| a.to_f64_lossless().to_bits() == b.to_f64_lossless().to_bits()) {
            break;
        }
        centroids = next;
        current = assign(&view.xs, &centroids, &mut indices, &mut dist);
        trace.push(current);
        if current < best.1 {
            best = (centroids.clone(), current);
        }
    }
    if best.0 != centroids {
        assign(&view.xs, &best.0, &mut indices, &mut dist);
    }
    LloydRun {
        centroids: best.0,
        indices,
        distortion: best.1,
        trace,
    }
}

/// Nearest-centroid assignment of sorted `xs`, ties to the lowest index.
/// Returns the SSE.
///
/// In one dimension each centroid owns a contiguous run of the sorted
/// values, so only the boundary between neighbouring centroids is searched.
fn assign<T: Scalar>(xs: &[f64], centroids: &[T], indices: &mut [u32], dist: &mut [f64]) -> f64 {
    // Sorted by value, keeping only the lowest index per distinct value.
    let mut cents: Vec<(f64, u32)> = centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (c.to_f64_lossless(), i as u32))
        .collect();
    cents.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
    cents.dedup_by(|next, kept| next.0 == kept.0);

    let mut sse = 0.0;
    let mut lo = 0;
    for (j, &(c, i)) in cents.iter().enumerate() {
        let hi = match cents.get(j + 1) {
            Some(&(up, iu)) => {
                lo + xs[lo..].partition_point(|&x| {
                    let (dl, du) = ((x - c).abs(), (up - x).abs());
                    dl < du || (dl == du && i < iu)
                })
            }
            None => xs.len(),
        };
        for p in lo..hi {
            let e = xs[p] - c;
            indices[p] = i;
            dist[p] = e * e;
            sse += e * e;
        }
        lo = hi;
    }
    sse
}

/// Cluster means; each empty cluster takes the point currently farthest
/// from its centroid, one distinct point per empty cluster while they last.
fn update<T: Scalar>(view: &SortedView<T>, centroids: &[T], indices: &[u32], dist: &[f64]) -> Vec<T> {
    let k = centroids.len();
    let mut sums = vec![0f64; k];
    let mut counts = vec![0usize; k];
    for (&x, &i) in view.xs.iter().zip(indices) {
        sums[i as usize] += x;
        counts[i as usize] += 1;
    }
    let mut next: Vec<T> = (0..k)
        .map(|j| {
            if counts[j] > 0 {
                T::from_f64(sums[j] / counts[j] as f64).unwrap_or(centroids[j])
            } else {
                centroids[j]
            }
        })
        .collect();

    let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    if !empty.is_empty() {
        // Farthest first, ties to the earlier input position.
        let mut far: Vec<usize> = (0..view.xs.len()).collect();
        far.sort_by(|&a, &b| {
            dist[b]
                .partial_cmp(&dist[a])
                .expect("finite")
                .then(view.order[a].cmp(&view.order[b]))
        });
        for (slot, &j) in empty.iter().enumerate() {
            next[j] = view.values[far[slot % far.len()]];
        }
    }
    next
}
