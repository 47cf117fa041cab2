use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use nnc_core::bitstream::{read_compressed, write_compressed, LayerCoding};
use nnc_core::codec::{decode_network, encode_network_with};
use nnc_core::harness::{emit_csv, interpolate_factor_at_loss, rd_sweep};
use nnc_core::inference::read_dataset;
use nnc_core::{compression_factor, read_model, write_model, EncodeOptions, MethodSet, QuantizerConfig};

#[derive(Parser)]
#[command(name = "nnc", version, about = "Lossy compression for neural-network parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress an NNM model into an NNC file.
    Compress {
        #[arg(long)]
        bits: u32,
        #[arg(long, default_value = "full")]
        method: MethodSet,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Reconstruct an NNM model from an NNC file.
    Decompress { input: PathBuf, output: PathBuf },
    /// Print the per-layer contents of an NNC file.
    Inspect { input: PathBuf },
    /// Rate-distortion sweep over bit depths and method sets.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Bit depths as `LO..HI` (inclusive) or a single value.
        #[arg(long, default_value = "3..10", value_parser = parse_bits)]
        bits: RangeInclusive<u32>,
        #[arg(long, value_delimiter = ',', default_value = "full,quant,cluster")]
        methods: Vec<MethodSet>,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        topk: usize,
    },
}

fn parse_bits(s: &str) -> Result<RangeInclusive<u32>, String> {
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (lo, hi.strip_prefix('=').unwrap_or(hi)),
        None => (s, s),
    };
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("bad bit depth {v:?}: {e}"));
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok(lo..=hi)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn compress(bits: u32, method: MethodSet, seed: u64, workers: Option<usize>, input: &Path, output: &Path) -> Result<()> {
    let cfg = QuantizerConfig::new(bits)?;
    let raw = read(input)?;
    let model = read_model(&raw).with_context(|| format!("parsing {}", input.display()))?;
    let mut opts = EncodeOptions::new(cfg, method).seed(seed);
    if let Some(n) = workers {
        opts = opts.workers(n);
    }
    let t = Instant::now();
    let (compressed, reports) = encode_network_with(&model, &opts)?;
    let bytes = write_compressed(&compressed)?;
    let elapsed = t.elapsed();
    write(output, &bytes)?;
    for r in &reports {
        let extra = r
            .cluster_distortion
            .map(|d| format!("  distortion {d:.3e}"))
            .unwrap_or_default();
        println!(
            "{:<24} {:<10} prescale {:<12.6e} {:>9} B{extra}",
            r.name,
            r.method.name(),
            r.prescale,
            r.payload_bytes
        );
    }
    println!(
        "{} -> {} bytes, factor {:.3}, encode {:.3} s",
        raw.len(),
        bytes.len(),
        compression_factor(raw.len() as u64, bytes.len() as u64)?,
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn decompress(input: &Path, output: &Path) -> Result<()> {
    let bytes = read(input)?;
    let t = Instant::now();
    let compressed = read_compressed(&bytes).with_context(|| format!("parsing {}", input.display()))?;
    let model = decode_network(&compressed)?;
    let elapsed = t.elapsed();
    let out = write_model(&model)?;
    write(output, &out)?;
    println!(
        "{} -> {} bytes, {} layers, decode {:.3} s",
        bytes.len(),
        out.len(),
        model.layers.len(),
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn inspect(input: &Path) -> Result<()> {
    let bytes = read(input)?;
    let c = read_compressed(&bytes).with_context(|| format!("parsing {}", input.display()))?;
    println!(
        "NNC v{}  bits {}  layers {}  arch_meta {} B  total {} B",
        c.version,
        c.cfg.bits(),
        c.layers.len(),
        c.arch_meta.len(),
        bytes.len()
    );
    for l in &c.layers {
        let detail = match &l.coding {
            LayerCoding::TransformQuant { grid, arrangement } => {
                let pad = arrangement
                    .map(|a| format!("  blocks {} pad {}", a.block_count(), a.pad_len))
                    .unwrap_or_default();
                format!("offset {:.6e} step {:.6e}{pad}", grid.offset, grid.step)
            }
            LayerCoding::Quant { grid } => format!("offset {:.6e} step {:.6e}", grid.offset, grid.step),
            LayerCoding::CodeBook { centroids } => format!("{} centroids", centroids.len()),
            LayerCoding::Raw => String::new(),
        };
        println!(
            "{:<24} {:<20} shape {:?}  {:<10} prescale {:.6e}  payload {} B  record {} B  {detail}",
            l.name,
            l.kind.to_string(),
            l.shape,
            l.coding.method().name(),
            l.prescale,
            l.payload.len(),
            l.record_size()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    model: &Path,
    data: &Path,
    bits: RangeInclusive<u32>,
    methods: &[MethodSet],
    csv: &Path,
    seed: u64,
    topk: usize,
) -> Result<()> {
    if methods.is_empty() {
        bail!("no method sets given");
    }
    let m = read_model(&read(model)?).with_context(|| format!("parsing {}", model.display()))?;
    let ds = read_dataset(&read(data)?).with_context(|| format!("parsing {}", data.display()))?;
    let t = Instant::now();
    let result = rd_sweep(&m, &ds, bits, methods, seed, topk)?;
    write(csv, &emit_csv(&result.points)?)?;
    println!(
        "baseline top-{topk} {:.4}  uncompressed {} B  ({} points in {:.2} s)",
        result.baseline_accuracy,
        result.uncompressed_bytes,
        result.points.len(),
        t.elapsed().as_secs_f64()
    );
    println!(
        "{:<8} {:>4} {:>10} {:>8} {:>8} {:>8} {:>9} {:>9}",
        "method", "bits", "bytes", "factor", "top-k", "loss_pp", "enc_ms", "dec_ms"
    );
    for p in &result.points {
        println!(
            "{:<8} {:>4} {:>10} {:>8.3} {:>8.4} {:>8.2} {:>9.1} {:>9.1}",
            p.method_set.name(),
            p.bits,
            p.compressed_bytes,
            p.factor,
            p.topk_accuracy,
            p.loss_pp,
            p.encode_time.as_secs_f64() * 1e3,
            p.decode_time.as_secs_f64() * 1e3
        );
    }
    let mut sets = methods.to_vec();
    sets.sort();
    sets.dedup();
    for set in sets {
        let curve: Vec<_> = result.points.iter().filter(|p| p.method_set == set).cloned().collect();
        let at = |loss| {
            interpolate_factor_at_loss(&curve, loss)
                .map(|f| format!("{f:.2}"))
                .unwrap_or_else(|_| "n/a".into())
        };
        println!("{set}: factor at 1 pp loss {}, at 2 pp loss {}", at(1.0), at(2.0));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress {
            bits,
            method,
            seed,
            workers,
            input,
            output,
        } => compress(bits, method, seed, workers, &input, &output),
        Command::Decompress { input, output } => decompress(&input, &output),
        Command::Inspect { input } => inspect(&input),
        Command::Sweep {
            model,
            data,
            bits,
            methods,
            csv,
            seed,
            topk,
        } => sweep(&model, &data, bits, &methods, &csv, seed, topk),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
