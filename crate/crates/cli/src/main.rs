//! `pathsig` — signature and logsignature transforms from the command
//! line, plus interval queries, gradient checks, basis listings, and a
//! fused-vs-naive benchmark.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage error, 3 input format
//! error.

mod io;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pathsig::{
    batch_signature, conventional_cost, fused_cost, fused_mul_exp, gradcheck_logsignature,
    gradcheck_signature, group_mul, increments, logsig_length, logsignature, lyndon_basis,
    tensor_exp, witt_dimension, Basepoint, Batch, FreeTensor, LogSigMode, LogSigOutput,
    Parallelism, PathIndex, SignatureOptions, Stream, TruncationSpec,
};
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;

const EXIT_CHECK_FAILURE: i32 = 1;
const EXIT_USAGE: i32 = 2;
const EXIT_INPUT: i32 = 3;

/// Environment variable limiting the rayon worker count for `--parallel`
/// runs; defaults to the number of logical cores.
#[cfg(feature = "parallel")]
const NUM_THREADS_ENV: &str = "PATHSIG_NUM_THREADS";

#[derive(Parser)]
#[command(name = "pathsig", version, about = "Path signature transforms for sequential data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Signature transform of a stream file (CSV or JSON batch)
    Sig(SigArgs),
    /// Logsignature transform in one of three bases
    Logsig(LogsigArgs),
    /// Interval signature/logsignature queries via a precomputed index
    Query(QueryArgs),
    /// Finite-difference verification of the backward passes
    Gradcheck(GradcheckArgs),
    /// Fused vs naive benchmark with exact multiplication-count columns
    Bench(BenchArgs),
    /// Lyndon-word basis listing and dimensions
    BasisInfo(BasisInfoArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Expanded,
    Brackets,
    Words,
}

impl From<ModeArg> for LogSigMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Expanded => LogSigMode::Expanded,
            ModeArg::Brackets => LogSigMode::Brackets,
            ModeArg::Words => LogSigMode::Words,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParallelArg {
    Serial,
    Batch,
    BatchAndStream,
}

impl From<ParallelArg> for Parallelism {
    fn from(p: ParallelArg) -> Self {
        match p {
            ParallelArg::Serial => Parallelism::Serial,
            ParallelArg::Batch => Parallelism::Batch,
            ParallelArg::BatchAndStream => Parallelism::BatchAndStream,
        }
    }
}

#[derive(Args)]
struct TransformFlags {
    /// Input file: CSV (rows = steps) or JSON {"streams": [...]}; "-" for stdin
    input: PathBuf,
    /// Truncation depth N >= 1
    #[arg(long)]
    depth: usize,
    /// Treat the first CSV row as a header
    #[arg(long)]
    csv_header: bool,
    /// Emit one output per expanding prefix
    #[arg(long)]
    stream: bool,
    /// Prepend a basepoint: bare flag = the origin, or comma-separated coordinates
    #[arg(long, num_args = 0..=1, default_missing_value = "", require_equals = true)]
    basepoint: Option<String>,
    /// Compute the group inverse (signature of the reversed stream)
    #[arg(long)]
    inverse: bool,
    /// JSON file with the level-major data of an initial group tensor
    #[arg(long)]
    initial: Option<PathBuf>,
    /// Parallel strategy for the batch (library data-parallel paths)
    #[arg(long, value_enum, default_value = "serial")]
    parallel: ParallelArg,
}

#[derive(Args)]
struct SigArgs {
    #[command(flatten)]
    flags: TransformFlags,
}

#[derive(Args)]
struct LogsigArgs {
    #[command(flatten)]
    flags: TransformFlags,
    /// Output basis
    #[arg(long, value_enum, default_value = "words")]
    mode: ModeArg,
}

#[derive(Args)]
struct QueryArgs {
    /// Input file: CSV or JSON batch; "-" for stdin
    input: PathBuf,
    /// Truncation depth N >= 1
    #[arg(long)]
    depth: usize,
    /// Treat the first CSV row as a header
    #[arg(long)]
    csv_header: bool,
    /// 0-based inclusive interval: start end
    #[arg(long, num_args = 2, value_names = ["START", "END"])]
    interval: Vec<usize>,
    /// Return the logsignature of the interval instead of the signature
    #[arg(long)]
    log: bool,
    /// Logsignature basis (with --log)
    #[arg(long, value_enum, default_value = "words")]
    mode: ModeArg,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    channels: usize,
    #[arg(long)]
    depth: usize,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check the logsignature backward instead of the signature backward
    #[arg(long)]
    logsig: bool,
    /// Logsignature basis (with --logsig)
    #[arg(long, value_enum, default_value = "words")]
    mode: ModeArg,
    /// Test-only negative control: perturb the analytic gradient so the
    /// check must fail
    #[arg(long, hide = true)]
    corrupt_backward: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Sweep channel counts a..b (inclusive) at the fixed --depth
    #[arg(long)]
    channels_range: Option<String>,
    /// Sweep depths a..b (inclusive) at the fixed --channels
    #[arg(long)]
    depth_range: Option<String>,
    /// Fixed channel count for --depth-range sweeps
    #[arg(long, default_value_t = 4)]
    channels: usize,
    /// Fixed depth for --channels-range sweeps
    #[arg(long, default_value_t = 7)]
    depth: usize,
    #[arg(long, default_value_t = 128)]
    length: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Repeats per case; the minimum time is reported
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit the report as JSON instead of a text table
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BasisInfoArgs {
    #[arg(long)]
    channels: usize,
    #[arg(long)]
    depth: usize,
}

fn main() {
    let cli = Cli::parse();
    init_thread_pool();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            err.downcast_ref::<ExitCode>().map_or(EXIT_INPUT, |e| e.0)
        }
    };
    std::process::exit(code);
}

/// Error wrapper carrying a specific process exit code.
#[derive(Debug)]
struct ExitCode(i32);

impl std::fmt::Display for ExitCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit code {}", self.0)
    }
}

impl std::error::Error for ExitCode {}

fn usage_error(msg: String) -> anyhow::Error {
    anyhow!(ExitCode(EXIT_USAGE)).context(msg)
}

fn init_thread_pool() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var(NUM_THREADS_ENV) {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Sig(args) => cmd_sig(args),
        Command::Logsig(args) => cmd_logsig(args),
        Command::Query(args) => cmd_query(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Bench(args) => cmd_bench(args),
        Command::BasisInfo(args) => cmd_basis_info(args),
    }
}

fn build_spec(channels: usize, depth: usize) -> Result<TruncationSpec> {
    TruncationSpec::new(channels, depth)
        .map_err(|e| usage_error(format!("invalid (channels, depth) combination: {e}")))
}

fn parse_options(flags: &TransformFlags, spec: TruncationSpec) -> Result<SignatureOptions> {
    let basepoint = match &flags.basepoint {
        None => Basepoint::None,
        Some(s) if s.is_empty() => Basepoint::Origin,
        Some(s) => {
            let coords: Vec<f64> = s
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| usage_error(format!("invalid --basepoint value: {e}")))?;
            Basepoint::Point(coords)
        }
    };
    let initial = match &flags.initial {
        None => None,
        Some(path) => {
            let data = io::read_initial(path)?;
            Some(
                FreeTensor::from_data(spec, data)
                    .context("initial-condition length does not match the spec")?,
            )
        }
    };
    Ok(SignatureOptions {
        stream_mode: flags.stream,
        basepoint,
        initial,
        inverse: flags.inverse,
    })
}

fn load_batch(flags: &TransformFlags) -> Result<Batch> {
    io::read_batch(&flags.input, flags.csv_header)
}

fn cmd_sig(args: SigArgs) -> Result<i32> {
    let batch = load_batch(&args.flags)?;
    let spec = build_spec(batch.streams()[0].channels(), args.flags.depth)?;
    let options = parse_options(&args.flags, spec)?;
    let outputs = batch_signature(&batch, spec, &options, args.flags.parallel.into())?;

    let b = outputs.len();
    let len = spec.sig_length();
    if args.flags.stream {
        let mut data = Vec::with_capacity(b);
        let mut prefixes = 0;
        for out in &outputs {
            let ts = out.stream().expect("stream mode returns prefix outputs");
            prefixes = ts.len();
            data.push(
                ts.iter()
                    .map(|t| t.data().to_vec())
                    .collect::<Vec<Vec<f64>>>(),
            );
        }
        io::print_output(&[b, prefixes, len], serde_json::json!(data))?;
    } else {
        let data: Vec<Vec<f64>> = outputs
            .iter()
            .map(|out| out.single().data().to_vec())
            .collect();
        io::print_output(&[b, len], serde_json::json!(data))?;
    }
    Ok(0)
}

fn cmd_logsig(args: LogsigArgs) -> Result<i32> {
    let batch = load_batch(&args.flags)?;
    let spec = build_spec(batch.streams()[0].channels(), args.flags.depth)?;
    let options = parse_options(&args.flags, spec)?;
    let mode: LogSigMode = args.mode.into();
    let len = logsig_length(spec, mode)?;

    let b = batch.len();
    if args.flags.stream {
        let mut data = Vec::with_capacity(b);
        let mut prefixes = 0;
        for stream in batch.streams() {
            match logsignature(stream, spec, mode, &options)? {
                LogSigOutput::Stream(vs) => {
                    prefixes = vs.len();
                    data.push(vs);
                }
                LogSigOutput::Single(_) => unreachable!("stream mode returns prefix outputs"),
            }
        }
        io::print_output(&[b, prefixes, len], serde_json::json!(data))?;
    } else {
        let mut data = Vec::with_capacity(b);
        for stream in batch.streams() {
            data.push(logsignature(stream, spec, mode, &options)?.single().to_vec());
        }
        io::print_output(&[b, len], serde_json::json!(data))?;
    }
    Ok(0)
}

fn cmd_query(args: QueryArgs) -> Result<i32> {
    let batch = io::read_batch(&args.input, args.csv_header)?;
    let spec = build_spec(batch.streams()[0].channels(), args.depth)?;
    let (start, end) = (args.interval[0], args.interval[1]);
    if start >= end {
        return Err(usage_error(format!(
            "--interval start must be smaller than end, got {start} {end}"
        )));
    }
    let mode: LogSigMode = args.mode.into();
    let len = if args.log {
        logsig_length(spec, mode)?
    } else {
        spec.sig_length()
    };

    let mut data = Vec::with_capacity(batch.len());
    for stream in batch.streams() {
        let index = PathIndex::new(stream.clone(), spec)?;
        let row = if args.log {
            index.query_logsignature(start, end, mode)?
        } else {
            index.query_signature(start, end)?.data().to_vec()
        };
        data.push(row);
    }
    io::print_output(&[batch.len(), len], serde_json::json!(data))?;
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32> {
    const THRESHOLD: f64 = 1e-5;
    let spec = build_spec(args.channels, args.depth)?;
    let err = if args.logsig {
        gradcheck_logsignature(
            spec,
            args.length,
            args.mode.into(),
            args.seed,
            args.corrupt_backward,
        )?
    } else {
        gradcheck_signature(spec, args.length, args.seed, args.corrupt_backward)?
    };
    let pass = err <= THRESHOLD;
    println!(
        "gradcheck {} d={} N={} L={} seed={}: max relative error {:.3e} (threshold {:.0e}) -> {}",
        if args.logsig { "logsignature" } else { "signature" },
        args.channels,
        args.depth,
        args.length,
        args.seed,
        err,
        THRESHOLD,
        if pass { "PASS" } else { "FAIL" },
    );
    Ok(if pass { 0 } else { EXIT_CHECK_FAILURE })
}

#[derive(Serialize)]
struct BenchRow {
    channels: usize,
    depth: usize,
    length: usize,
    batch: usize,
    strategy: &'static str,
    seconds: f64,
    /// Exact multiplications tallied in the fused kernel during the
    /// equality gate; absent for strategies without instrumentation.
    multiplications: Option<u128>,
    conventional_cost: u128,
    fused_cost: u128,
}

fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| usage_error(format!("expected a..b, got {s}")))?;
    let lo: usize = a.trim().parse().map_err(|e| usage_error(format!("bad range: {e}")))?;
    let hi: usize = b.trim().parse().map_err(|e| usage_error(format!("bad range: {e}")))?;
    if lo > hi || lo == 0 {
        return Err(usage_error(format!("invalid range {s}")));
    }
    Ok(lo..=hi)
}

fn naive_signature(stream: &Stream, spec: TruncationSpec) -> Result<FreeTensor> {
    let incs = increments(stream)?;
    let mut acc = tensor_exp(&incs[0], spec);
    for z in &incs[1..] {
        acc = group_mul(&acc, &tensor_exp(z, spec));
    }
    Ok(acc)
}

fn fused_signature(stream: &Stream, spec: TruncationSpec) -> Result<FreeTensor> {
    let incs = increments(stream)?;
    let mut acc = tensor_exp(&incs[0], spec);
    for z in &incs[1..] {
        acc = fused_mul_exp(&acc, z);
    }
    Ok(acc)
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    use rand::Rng;
    use rand::SeedableRng;

    if args.channels_range.is_some() && args.depth_range.is_some() {
        return Err(usage_error(
            "--channels-range and --depth-range are mutually exclusive".into(),
        ));
    }
    if args.length < 2 || args.batch == 0 || args.repeats == 0 {
        return Err(usage_error(
            "--length must be >= 2 and --batch/--repeats >= 1".into(),
        ));
    }
    let cases: Vec<(usize, usize)> = if let Some(r) = &args.channels_range {
        parse_range(r)?.map(|d| (d, args.depth)).collect()
    } else if let Some(r) = &args.depth_range {
        parse_range(r)?.map(|n| (args.channels, n)).collect()
    } else {
        vec![(args.channels, args.depth)]
    };

    let mut rows: Vec<BenchRow> = Vec::new();
    for &(d, n) in &cases {
        let spec = build_spec(d, n)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
        let streams: Vec<Stream> = (0..args.batch)
            .map(|_| {
                let data: Vec<f64> = (0..args.length * d)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                Stream::new(d, data).expect("rectangular by construction")
            })
            .collect();
        let batch = Batch::new(streams).expect("homogeneous by construction");

        // Correctness gate before any timing: both strategies (and the
        // instrumented fused kernel) must agree on every output.
        let mut fused_mults: u128 = 0;
        for stream in batch.streams() {
            let naive = naive_signature(stream, spec)?;
            let incs = increments(stream)?;
            let mut acc = tensor_exp(&incs[0], spec);
            for z in &incs[1..] {
                let (next, count) = pathsig::counted_fused_mul_exp(&acc, z);
                acc = next;
                fused_mults += count;
            }
            let scale = naive.max_abs().max(1.0);
            let mut worst = 0.0f64;
            for (a, b) in naive.data().iter().zip(acc.data()) {
                worst = worst.max((a - b).abs());
            }
            if worst > 1e-11 * scale {
                eprintln!(
                    "equality gate failed at d={d} N={n}: max deviation {worst:.3e} (scale {scale:.3e})"
                );
                return Ok(EXIT_CHECK_FAILURE);
            }
        }

        let conventional = conventional_cost(spec)?;
        let fused = fused_cost(spec)?;

        let time_min = |f: &dyn Fn() -> Result<()>| -> Result<f64> {
            let mut best = f64::INFINITY;
            for _ in 0..args.repeats {
                let t0 = Instant::now();
                f()?;
                best = best.min(t0.elapsed().as_secs_f64());
            }
            Ok(best)
        };

        let naive_secs = time_min(&|| {
            for stream in batch.streams() {
                std::hint::black_box(naive_signature(stream, spec)?);
            }
            Ok(())
        })?;
        rows.push(BenchRow {
            channels: d,
            depth: n,
            length: args.length,
            batch: args.batch,
            strategy: "naive",
            seconds: naive_secs,
            multiplications: None,
            conventional_cost: conventional,
            fused_cost: fused,
        });

        let fused_secs = time_min(&|| {
            for stream in batch.streams() {
                std::hint::black_box(fused_signature(stream, spec)?);
            }
            Ok(())
        })?;
        rows.push(BenchRow {
            channels: d,
            depth: n,
            length: args.length,
            batch: args.batch,
            strategy: "fused",
            seconds: fused_secs,
            multiplications: Some(fused_mults),
            conventional_cost: conventional,
            fused_cost: fused,
        });

        #[cfg(feature = "parallel")]
        {
            let opts = SignatureOptions::default();
            let parallel_secs = time_min(&|| {
                std::hint::black_box(batch_signature(
                    &batch,
                    spec,
                    &opts,
                    Parallelism::Batch,
                )?);
                Ok(())
            })?;
            rows.push(BenchRow {
                channels: d,
                depth: n,
                length: args.length,
                batch: args.batch,
                strategy: "fused_parallel",
                seconds: parallel_secs,
                multiplications: None,
                conventional_cost: conventional,
                fused_cost: fused,
            });
        }
    }

    if args.json {
        println!("{}", serde_json::to_string(&rows)?);
    } else {
        println!(
            "{:>3} {:>3} {:>5} {:>5} {:<15} {:>12} {:>16} {:>14} {:>12} {:>7}",
            "d", "N", "L", "b", "strategy", "seconds", "mults", "C(d,N)", "F(d,N)", "C/F"
        );
        for r in &rows {
            let ratio = r.conventional_cost as f64 / (r.fused_cost.max(1)) as f64;
            println!(
                "{:>3} {:>3} {:>5} {:>5} {:<15} {:>12.6} {:>16} {:>14} {:>12} {:>7.3}",
                r.channels,
                r.depth,
                r.length,
                r.batch,
                r.strategy,
                r.seconds,
                r.multiplications
                    .map_or_else(|| "-".to_string(), |m| m.to_string()),
                r.conventional_cost,
                r.fused_cost,
                ratio,
            );
        }
    }
    Ok(0)
}

fn cmd_basis_info(args: BasisInfoArgs) -> Result<i32> {
    let spec = build_spec(args.channels, args.depth)?;
    let basis = lyndon_basis(spec);
    let w = witt_dimension(spec)?;
    println!(
        "Lyndon basis for channels={} depth={}: w(d,N) = {}",
        args.channels, args.depth, w
    );
    println!(
        "expanded length = {}, words/brackets length = {}",
        spec.sig_length(),
        w
    );
    for (i, word) in basis.words().iter().enumerate() {
        let letters: Vec<String> = word.iter().map(|l| l.to_string()).collect();
        println!("{:>6}: {}", i, letters.join("."));
    }
    debug_assert_eq!(basis.len(), w);
    Ok(0)
}
