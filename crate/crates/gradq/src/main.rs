//! Command-line front end: every capability as a reproducible, seed-pinned
//! batch command with CSV or JSON output.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure,
//! 3 precondition violation.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use gradq::bounds::{self, BoundsError};
use gradq::codec::{encode_gradient, CodecConfig, CodecError, LevelCodeMode};
use gradq::quantizer::{
    closed_form_variance, expected_nnz, quantize_bucketed, quantize_scheme, BucketSpec,
    LevelSequence, NormScheme, QuantError, QuantizedVector,
};
use gradq::rng::RandomSource;
use gradq::sim::{
    self, BatchMode, Domain, LrSchedule, Problem, Scheme, SimConfig, SimError, SimTrace,
};
use gradq::variance::{self, SeparationInputs, VarianceError};
use serde::Serialize;
use std::fmt::Write as _;
use std::process::ExitCode;

const FORMAT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "gradq", version, about = "Gradient quantization toolkit")]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a vector and report stats plus exact wire bits.
    Quantize(QuantizeArgs),
    /// Measure encoded sizes over random gradients.
    CodecBench(CodecBenchArgs),
    /// Closed-form variance and code-length bounds for one (s, d, b).
    Bounds(BoundsArgs),
    /// Worst-case-optimal exponential base per (s, d) grid point.
    OptimalP(OptimalPArgs),
    /// Monte Carlo vs closed-form variance over a random corpus.
    Variance(VarianceArgs),
    /// Variance separation between L2 and max-norm normalization.
    Separate(SeparateArgs),
    /// Deterministic multi-worker SGD runs with compressed gradients.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Nuq,
    QsgdL2,
    QsgdInf,
}

impl SchemeArg {
    fn norm(self) -> NormScheme {
        match self {
            SchemeArg::Nuq | SchemeArg::QsgdL2 => NormScheme::L2,
            SchemeArg::QsgdInf => NormScheme::Linf,
        }
    }

    /// Level grid and the codec level-code mode it supports.
    fn levels(self, p: f64, s: usize) -> Result<(LevelSequence, LevelCodeMode), AppError> {
        Ok(match self {
            SchemeArg::Nuq => {
                let mode = if p == 0.5 {
                    LevelCodeMode::LogPowerOfTwo
                } else {
                    LevelCodeMode::LevelIndex
                };
                (LevelSequence::exponential(p, s)?, mode)
            }
            SchemeArg::QsgdL2 | SchemeArg::QsgdInf => {
                (LevelSequence::uniform(s)?, LevelCodeMode::LevelIndex)
            }
        })
    }
}

#[derive(Args)]
struct QuantizeArgs {
    /// Vector file (one decimal per line) or generator: gaussian:<d> or
    /// sparse:<d>:<k>.
    #[arg(long)]
    input: String,
    #[arg(long, value_enum, default_value = "nuq")]
    scheme: SchemeArg,
    /// Exponential base for the nuq scheme.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Number of internal quantization levels.
    #[arg(long, default_value_t = 4)]
    s: usize,
    /// Bucket size; whole vector when absent.
    #[arg(long)]
    bucket: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    float_bits: u32,
}

#[derive(Serialize)]
struct QuantizeOutput {
    format_version: u32,
    scheme: String,
    s: usize,
    p: f64,
    seed: u64,
    dimension: usize,
    bucket: Option<usize>,
    closed_form_variance: f64,
    expected_nnz: f64,
    measured_bits: u64,
    quantized: Vec<QuantizedVector>,
}

#[derive(Args)]
struct CodecBenchArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    s: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, value_enum, default_value = "nuq")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    float_bits: u32,
    #[arg(long)]
    bucket: Option<usize>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    s: usize,
    #[arg(long)]
    d: usize,
    /// Float width used in code-length bounds.
    #[arg(long, default_value_t = 32)]
    b: u32,
}

#[derive(Serialize)]
struct BoundsOutput {
    format_version: u32,
    #[serde(flatten)]
    report: bounds::BoundReport,
    /// Why the expected-bits bound is absent, when it is.
    n_q_error: Option<String>,
}

#[derive(Args)]
struct OptimalPArgs {
    /// Comma-separated level counts.
    #[arg(long, value_delimiter = ',')]
    s: Vec<usize>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    d: Vec<usize>,
}

#[derive(Args)]
struct VarianceArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    s: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, value_enum, default_value = "nuq")]
    scheme: SchemeArg,
    /// Number of random vectors in the corpus.
    #[arg(long, default_value_t = 10)]
    vectors: usize,
    /// Monte Carlo draws per vector.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SeparateArgs {
    /// Explicit construction; omit K1/K2 to search candidates.
    #[arg(long, default_value_t = 10_000)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    s: usize,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
}

#[derive(Serialize)]
struct SeparateOutput {
    format_version: u32,
    inputs: SeparationInputs,
    /// First coordinate of the witness vector.
    vector_head: f64,
    /// Common value of all remaining coordinates.
    vector_tail: f64,
    var_nuq: f64,
    var_qinf_gap_s: f64,
    var_qinf_gap_s1: f64,
    separated_gap_s: bool,
    separated_gap_s1: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProblemArg {
    LeastSquares,
    Logistic,
    SmoothNonconvex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SimSchemeArg {
    FullPrecision,
    Nuq,
    QsgdL2,
    QsgdInf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LrArg {
    Const,
    InvSqrt,
    InvT,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TopologyArg {
    Ring,
    Complete,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long, default_value_t = 64)]
    d: usize,
    /// Dataset size.
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, value_enum, default_value = "full-precision")]
    scheme: SimSchemeArg,
    /// Workers.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Iterations.
    #[arg(long, default_value_t = 100)]
    t: u64,
    /// Base learning rate.
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "const")]
    lr: LrArg,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    s: usize,
    #[arg(long)]
    bucket: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    /// Momentum variant: 0 = heavy ball, 1 = Nesterov.
    #[arg(long, default_value_t = 0)]
    mode: u8,
    /// Maximum staleness; presence selects the asynchronous engine.
    #[arg(long = "async")]
    tau: Option<u64>,
    /// Mixing topology; presence selects the decentralized engine.
    #[arg(long, value_enum)]
    topology: Option<TopologyArg>,
    /// Use deterministic full gradients instead of single-row sampling.
    #[arg(long)]
    full_batch: bool,
    /// Shard the dataset across workers (decentralized runs).
    #[arg(long)]
    shard: bool,
    /// Project iterates onto a ball of this radius.
    #[arg(long)]
    ball: Option<f64>,
    #[arg(long, default_value_t = 32)]
    float_bits: u32,
}

/// Error classified by exit code.
struct AppError {
    code: u8,
    message: String,
}

impl AppError {
    fn usage(msg: impl Into<String>) -> Self {
        AppError { code: 1, message: msg.into() }
    }

    fn numerical(msg: impl Into<String>) -> Self {
        AppError { code: 2, message: msg.into() }
    }

    fn precondition(msg: impl Into<String>) -> Self {
        AppError { code: 3, message: msg.into() }
    }
}

impl From<QuantError> for AppError {
    fn from(e: QuantError) -> Self {
        match e {
            QuantError::BadLevels(_)
            | QuantError::BadBase(_)
            | QuantError::BadLevelCount(_)
            | QuantError::BadBucket => AppError::usage(e.to_string()),
            _ => AppError::precondition(e.to_string()),
        }
    }
}

impl From<CodecError> for AppError {
    fn from(e: CodecError) -> Self {
        AppError::numerical(e.to_string())
    }
}

impl From<BoundsError> for AppError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Solver(_) => AppError::numerical(e.to_string()),
            _ => AppError::precondition(e.to_string()),
        }
    }
}

impl From<VarianceError> for AppError {
    fn from(e: VarianceError) -> Self {
        match e {
            VarianceError::TooFewSamples { .. } => AppError::usage(e.to_string()),
            VarianceError::ConditionViolated(_) => AppError::precondition(e.to_string()),
            VarianceError::Quant(q) => q.into(),
            _ => AppError::numerical(e.to_string()),
        }
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BadConfig(_) | SimError::BadTopology(_) => AppError::usage(e.to_string()),
            _ => AppError::numerical(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Quantize(args) => cmd_quantize(args),
        Command::CodecBench(args) => cmd_codec_bench(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::OptimalP(args) => cmd_optimal_p(args),
        Command::Variance(args) => cmd_variance(args),
        Command::Separate(args) => cmd_separate(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(text) => match write_output(&cli.output, &text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn write_output(path: &Option<std::path::PathBuf>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Resolve `--input`: generator spec or newline-delimited decimal file.
fn load_vector(input: &str, seed: u64) -> Result<Vec<f64>, AppError> {
    if let Some(rest) = input.strip_prefix("gaussian:") {
        let d: usize = rest
            .parse()
            .map_err(|_| AppError::usage(format!("bad generator spec '{input}'")))?;
        if d == 0 {
            return Err(AppError::usage("generator dimension must be positive"));
        }
        return Ok(RandomSource::new(seed, 1).normal_vec(d));
    }
    if let Some(rest) = input.strip_prefix("sparse:") {
        let (d, k) = rest
            .split_once(':')
            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
            .ok_or_else(|| AppError::usage(format!("bad generator spec '{input}'")))?;
        if d == 0 || k == 0 || k > d {
            return Err(AppError::usage("sparse spec needs 0 < k <= d"));
        }
        let rng = RandomSource::new(seed, 1);
        let mut v = vec![0.0; d];
        for i in 0..k {
            v[i * d / k] = rng.normal(i as u64);
        }
        return Ok(v);
    }
    let text = std::fs::read_to_string(input)
        .map_err(|e| AppError::usage(format!("cannot read '{input}': {e}")))?;
    let mut v = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let x: f64 = line.parse().map_err(|_| {
            AppError::usage(format!("{input}:{}: not a decimal: '{line}'", lineno + 1))
        })?;
        v.push(x);
    }
    if v.is_empty() {
        return Err(AppError::usage(format!("'{input}' contains no values")));
    }
    Ok(v)
}

fn validate_p(p: f64) -> Result<(), AppError> {
    if !(0.0..1.0).contains(&p) || p == 0.0 {
        return Err(AppError::usage(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Quantize (possibly bucketed), encode every piece, and total the bits.
fn quantize_and_measure(
    v: &[f64],
    levels: &LevelSequence,
    norm: NormScheme,
    bucket: Option<usize>,
    codec: CodecConfig,
    rng: &RandomSource,
) -> Result<(Vec<QuantizedVector>, u64), AppError> {
    let parts = match bucket {
        None => vec![quantize_scheme(v, levels, norm, rng)?],
        Some(size) => quantize_bucketed(v, BucketSpec::new(size)?, norm, levels, rng)?,
    };
    let mut bits = 0u64;
    for q in &parts {
        bits += encode_gradient(q, levels, &codec)?.bit_len() as u64;
    }
    Ok((parts, bits))
}

fn cmd_quantize(args: &QuantizeArgs) -> Result<String, AppError> {
    validate_p(args.p)?;
    let v = load_vector(&args.input, args.seed)?;
    let (levels, mode) = args.scheme.levels(args.p, args.s)?;
    let codec = CodecConfig {
        float_bits: args.float_bits,
        level_code_mode: mode,
    };
    codec.validate()?;
    let rng = RandomSource::new(args.seed, 0);
    let (quantized, bits) =
        quantize_and_measure(&v, &levels, args.scheme.norm(), args.bucket, codec, &rng)?;
    // closed forms add across buckets because buckets are independent
    let chunk = args.bucket.unwrap_or(v.len());
    let mut var = 0.0;
    let mut nnz = 0.0;
    for piece in v.chunks(chunk) {
        if piece.iter().all(|&x| x == 0.0) {
            continue;
        }
        var += closed_form_variance(piece, &levels, args.scheme.norm())?;
        nnz += expected_nnz(piece, &levels)?;
    }
    let out = QuantizeOutput {
        format_version: FORMAT_VERSION,
        scheme: format!("{:?}", args.scheme),
        s: args.s,
        p: args.p,
        seed: args.seed,
        dimension: v.len(),
        bucket: args.bucket,
        closed_form_variance: var,
        expected_nnz: nnz,
        measured_bits: bits,
        quantized,
    };
    to_json(&out)
}

fn cmd_codec_bench(args: &CodecBenchArgs) -> Result<String, AppError> {
    validate_p(args.p)?;
    if args.trials == 0 {
        return Err(AppError::usage("trials must be positive"));
    }
    let (levels, mode) = args.scheme.levels(args.p, args.s)?;
    let codec = CodecConfig {
        float_bits: args.float_bits,
        level_code_mode: mode,
    };
    codec.validate()?;
    let mut rows = String::new();
    let mut total_bits = 0u64;
    for trial in 0..args.trials {
        let stream = RandomSource::new(args.seed, 0).substream(trial as u64);
        let v = stream.substream(1).normal_vec(args.d);
        let (parts, bits) = quantize_and_measure(
            &v,
            &levels,
            args.scheme.norm(),
            args.bucket,
            codec,
            &stream.substream(2),
        )?;
        let nnz: usize = parts.iter().map(|q| q.nnz()).sum();
        total_bits += bits;
        writeln!(rows, "{trial},{bits},{nnz}").unwrap();
    }
    let mean = total_bits as f64 / args.trials as f64;
    let bound = bounds::code_length_bound(args.s, args.d, args.float_bits, 1.0)
        .map_or("na".to_string(), |v| v.to_string());
    Ok(format!(
        "# format_version {FORMAT_VERSION}\n\
         # d {} s {} p {} scheme {:?} trials {} seed {} float_bits {}\n\
         # mean_bits {mean}\n\
         # expected_bits_bound {bound}\n\
         trial,bits,nnz\n{rows}",
        args.d, args.s, args.p, args.scheme, args.trials, args.seed, args.float_bits
    ))
}

fn cmd_bounds(args: &BoundsArgs) -> Result<String, AppError> {
    let report = bounds::BoundReport::compute(args.s, args.d, args.b)?;
    let n_q_error = bounds::code_length_bound(args.s, args.d, args.b, 1.0)
        .err()
        .map(|e| e.to_string());
    to_json(&BoundsOutput {
        format_version: FORMAT_VERSION,
        report,
        n_q_error,
    })
}

fn cmd_optimal_p(args: &OptimalPArgs) -> Result<String, AppError> {
    if args.s.is_empty() || args.d.is_empty() {
        return Err(AppError::usage("need at least one value for --s and --d"));
    }
    let mut out = format!("# format_version {FORMAT_VERSION}\ns,d,p_star,eps_qp\n");
    for &s in &args.s {
        for &d in &args.d {
            let (p_star, value) = bounds::optimal_p(s, d)?;
            writeln!(out, "{s},{d},{p_star},{value}").unwrap();
        }
    }
    Ok(out)
}

fn cmd_variance(args: &VarianceArgs) -> Result<String, AppError> {
    validate_p(args.p)?;
    if args.vectors == 0 {
        return Err(AppError::usage("vectors must be positive"));
    }
    let (levels, _) = args.scheme.levels(args.p, args.s)?;
    let vectors: Vec<Vec<f64>> = (0..args.vectors)
        .map(|i| {
            RandomSource::new(args.seed, 1)
                .substream(i as u64)
                .normal_vec(args.d)
        })
        .collect();
    let rows = variance::variance_corpus(
        &vectors,
        args.scheme.norm(),
        &levels,
        args.trials,
        args.seed,
    )?;
    Ok(format!(
        "# format_version {FORMAT_VERSION}\n\
         # d {} s {} p {} scheme {:?} vectors {} trials {} seed {}\n{}",
        args.d,
        args.s,
        args.p,
        args.scheme,
        args.vectors,
        args.trials,
        args.seed,
        variance::corpus_csv(&rows)
    ))
}

fn cmd_separate(args: &SeparateArgs) -> Result<String, AppError> {
    let (inputs, report) = match (args.k1, args.k2) {
        (Some(k1), Some(k2)) => {
            let inputs = SeparationInputs { d: args.d, s: args.s, k1, k2 };
            let report = variance::separation_vector(&inputs)?;
            (inputs, report)
        }
        (None, None) => variance::search_separation(&[args.d], &[args.s])
            .or_else(|| {
                variance::search_separation(&[4096, 10_000, 65_536], &[3, 4, 5])
            })
            .ok_or_else(|| {
                AppError::numerical("no admissible separation witness found")
            })?,
        _ => return Err(AppError::usage("provide both --k1 and --k2, or neither")),
    };
    let out = SeparateOutput {
        format_version: FORMAT_VERSION,
        inputs,
        vector_head: report.vector[0],
        vector_tail: report.vector[1],
        var_nuq: report.var_nuq,
        var_qinf_gap_s: report.var_qinf_gap_s,
        var_qinf_gap_s1: report.var_qinf_gap_s1,
        separated_gap_s: report.separated(true),
        separated_gap_s1: report.separated(false),
    };
    to_json(&out)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String, AppError> {
    let problem = match args.problem {
        ProblemArg::LeastSquares => Problem::least_squares(args.d, args.n, args.seed),
        ProblemArg::Logistic => Problem::logistic(args.d, args.n, args.seed),
        ProblemArg::SmoothNonconvex => Problem::smooth_nonconvex(args.d, args.n, args.seed),
    };
    let cfg = SimConfig {
        workers: args.k,
        iters: args.t,
        lr: match args.lr {
            LrArg::Const => LrSchedule::Const(args.alpha),
            LrArg::InvSqrt => LrSchedule::InvSqrt(args.alpha),
            LrArg::InvT => LrSchedule::InvT(args.alpha),
        },
        scheme: match args.scheme {
            SimSchemeArg::FullPrecision => Scheme::FullPrecision,
            SimSchemeArg::Nuq => Scheme::Nuq,
            SimSchemeArg::QsgdL2 => Scheme::QsgdL2,
            SimSchemeArg::QsgdInf => Scheme::QsgdInf,
        },
        s: args.s,
        bucket: args.bucket,
        codec: CodecConfig {
            float_bits: args.float_bits,
            ..CodecConfig::default()
        },
        seed: args.seed,
        momentum: args.momentum,
        momentum_mode: args.mode,
        tau_max: args.tau.unwrap_or(0),
        batch: if args.full_batch {
            BatchMode::Full
        } else {
            BatchMode::SingleRow
        },
        shard: args.shard,
        domain: args.ball.map_or(Domain::Unconstrained, Domain::Ball),
        topology: args.topology.map(|t| match t {
            TopologyArg::Ring => sim::ring_topology(args.k),
            TopologyArg::Complete => sim::complete_topology(args.k),
        }),
    };
    let trace: SimTrace = if cfg.topology.is_some() {
        sim::run_ecd_psgd(&problem, &cfg)?
    } else if args.tau.is_some() {
        sim::run_async(&problem, &cfg)?
    } else {
        sim::run_momentum(&problem, &cfg)?
    };
    if let Some(t) = trace.objective.iter().position(|v| !v.is_finite()) {
        return Err(AppError::numerical(format!(
            "objective became non-finite at iteration {t}"
        )));
    }
    let config_json =
        serde_json::to_string(&cfg).map_err(|e| AppError::numerical(e.to_string()))?;
    Ok(format!(
        "# format_version {FORMAT_VERSION}\n\
         # problem {} dim {} samples {}\n\
         # config {config_json}\n{}",
        problem.name,
        problem.dim,
        problem.n_samples,
        trace.csv()
    ))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, AppError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
