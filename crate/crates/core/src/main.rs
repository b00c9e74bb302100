use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sttc_af::cli::{self, RunManifest};
use sttc_af::search::{self, SearchMode, SearchSpace};
use sttc_af::sim::{self, DecoderNoiseModel, SimConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "sttc-af", version, about = "Space-time trellis codes for AF relay channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-event spectra, PEP bounds, union bound and design score for a code
    Analyze(AnalyzeArgs),
    /// Search label tables for codes optimizing the design criteria
    Search(SearchArgs),
    /// Monte Carlo BER/FER sweep with Viterbi decoding
    Simulate(SimulateArgs),
    /// List the built-in codes
    ListCodes,
    /// Re-run a command from a previously written manifest
    Replay { manifest: PathBuf },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Built-in code name or catalog file path
    #[arg(long)]
    code: String,
    /// Destination antennas N
    #[arg(long = "antennas-rx")]
    antennas_rx: usize,
    /// Comma-separated Es/N0 grid in dB
    #[arg(long = "snr-db", default_value = "10,14,18,22")]
    snr_db: String,
    /// Maximum error-event length in branches
    #[arg(long = "max-event-len", default_value_t = 8)]
    max_event_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    /// Source antennas M
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    states: usize,
    #[arg(long, default_value_t = 4)]
    inputs: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Random)]
    mode: ModeArg,
    /// Candidate count for random mode
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long = "antennas-rx")]
    antennas_rx: usize,
    #[arg(long = "max-event-len", default_value_t = 4)]
    max_event_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How many top codes to emit as catalog files
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long = "no-first-row-identity", default_value_t = false)]
    no_first_row_identity: bool,
    #[arg(long = "no-distinct-rows", default_value_t = false)]
    no_distinct_rows: bool,
    /// Output ranking CSV path; catalogs are written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exhaustive,
    Random,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    code: String,
    #[arg(long = "antennas-rx")]
    antennas_rx: usize,
    #[arg(long = "snr-db", default_value = "8,11,14,17,20,23,26")]
    snr_db: String,
    #[arg(long = "frame-len", default_value_t = 130)]
    frame_len: usize,
    #[arg(long = "max-frames", default_value_t = 100_000)]
    max_frames: u64,
    #[arg(long = "target-frame-errors", default_value_t = 100)]
    target_frame_errors: u64,
    #[arg(long, value_enum, default_value_t = DecoderArg::Exact)]
    decoder: DecoderArg,
    /// Relay gain alpha
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable all noise
    #[arg(long, default_value_t = false)]
    noiseless: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    /// Whitened metric with the exact per-frame noise covariance
    Exact,
    /// Scalar white-noise approximation metric
    White,
}

#[derive(Debug)]
struct AppError {
    message: String,
    exit: u8,
}

impl AppError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit: EXIT_USAGE,
        }
    }
    fn numerical(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit: EXIT_NUMERICAL,
        }
    }
    fn io(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit: EXIT_IO,
        }
    }
}

impl From<cli::CliError> for AppError {
    fn from(e: cli::CliError) -> Self {
        match e {
            cli::CliError::UnknownCode(_) | cli::CliError::Trellis(_) => AppError::usage(e.to_string()),
            cli::CliError::Io { .. } | cli::CliError::BadManifest(_) => AppError::io(e.to_string()),
            cli::CliError::Analysis(_) => AppError::numerical(e.to_string()),
        }
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>, AppError> {
    let grid: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| AppError::usage(format!("bad SNR grid entry '{t}'")))
        })
        .collect::<Result<_, _>>()?;
    if grid.is_empty() {
        return Err(AppError::usage("empty SNR grid"));
    }
    Ok(grid)
}

fn write_output(path: &Path, content: &str) -> Result<(), AppError> {
    std::fs::write(path, content)
        .map_err(|e| AppError::io(format!("cannot write {}: {e}", path.display())))
}

fn cmd_analyze(args: &AnalyzeArgs, raw_args: &[String]) -> Result<(), AppError> {
    let code = cli::resolve_code(&args.code)?;
    let grid = parse_grid(&args.snr_db)?;
    if args.max_event_len < 2 {
        return Err(AppError::usage("--max-event-len must be at least 2"));
    }
    let csv = cli::analyze_csv(&code, args.antennas_rx, &grid, args.max_event_len)
        .map_err(|e| AppError::numerical(e.to_string()))?;
    write_output(&args.out, &csv)?;
    let mut params = BTreeMap::new();
    params.insert("code".into(), args.code.clone());
    params.insert("antennas_rx".into(), args.antennas_rx.to_string());
    params.insert("snr_db".into(), args.snr_db.clone());
    params.insert("max_event_len".into(), args.max_event_len.to_string());
    params.insert("out".into(), args.out.display().to_string());
    RunManifest::new("analyze", raw_args, params, args.seed).write_alongside(&args.out)?;
    Ok(())
}

fn cmd_search(args: &SearchArgs, raw_args: &[String]) -> Result<(), AppError> {
    if matches!(args.mode, ModeArg::Random) && args.budget == 0 {
        return Err(AppError::usage("--budget must be positive in random mode"));
    }
    let space = SearchSpace {
        m: args.m,
        num_states: args.states,
        num_inputs: args.inputs,
        mode: match args.mode {
            ModeArg::Exhaustive => SearchMode::Exhaustive,
            ModeArg::Random => SearchMode::Random,
        },
        budget: args.budget,
        first_row_identity: !args.no_first_row_identity,
        distinct_rows: !args.no_distinct_rows,
    };
    let ranked = search::search_codes(&space, args.antennas_rx, args.max_event_len, args.seed)
        .map_err(|e| match e {
            search::SearchError::InvalidSpace(_) | search::SearchError::EmptySpace => {
                AppError::usage(e.to_string())
            }
            _ => AppError::numerical(e.to_string()),
        })?;
    let csv = cli::ranking_csv(&ranked);
    write_output(&args.out, &csv)?;
    let stem = args.out.with_extension("");
    for r in ranked.iter().take(args.top) {
        let path = PathBuf::from(format!("{}-rank{}.code", stem.display(), r.rank_position));
        write_output(&path, &r.code.to_catalog_string())?;
    }
    let mut params = BTreeMap::new();
    params.insert("m".into(), args.m.to_string());
    params.insert("states".into(), args.states.to_string());
    params.insert("inputs".into(), args.inputs.to_string());
    params.insert("budget".into(), args.budget.to_string());
    params.insert("antennas_rx".into(), args.antennas_rx.to_string());
    params.insert("max_event_len".into(), args.max_event_len.to_string());
    params.insert("top".into(), args.top.to_string());
    params.insert("out".into(), args.out.display().to_string());
    RunManifest::new("search", raw_args, params, args.seed).write_alongside(&args.out)?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, raw_args: &[String]) -> Result<(), AppError> {
    let code = cli::resolve_code(&args.code)?;
    let grid = parse_grid(&args.snr_db)?;
    let cfg = SimConfig {
        code,
        n: args.antennas_rx,
        alpha: args.alpha,
        frame_len: args.frame_len,
        snr_grid_db: grid,
        max_frames: args.max_frames,
        target_frame_errors: args.target_frame_errors,
        decoder_noise_model: match args.decoder {
            DecoderArg::Exact => DecoderNoiseModel::ExactWhitened,
            DecoderArg::White => DecoderNoiseModel::PaperWhite,
        },
        seed: args.seed,
        noiseless: args.noiseless,
    };
    cfg.validate()
        .map_err(|e| AppError::usage(e.to_string()))?;
    let result = sim::sweep(&cfg).map_err(|e| match e {
        sim::SimError::InvalidConfig(_) => AppError::usage(e.to_string()),
        _ => AppError::numerical(e.to_string()),
    })?;
    write_output(&args.out, &sim::sweep_csv(&result))?;
    let mut params = BTreeMap::new();
    params.insert("code".into(), args.code.clone());
    params.insert("antennas_rx".into(), args.antennas_rx.to_string());
    params.insert("snr_db".into(), args.snr_db.clone());
    params.insert("frame_len".into(), args.frame_len.to_string());
    params.insert("max_frames".into(), args.max_frames.to_string());
    params.insert("target_frame_errors".into(), args.target_frame_errors.to_string());
    params.insert("decoder".into(), cfg.decoder_noise_model.as_str().into());
    params.insert("alpha".into(), args.alpha.to_string());
    params.insert("noiseless".into(), args.noiseless.to_string());
    params.insert("out".into(), args.out.display().to_string());
    RunManifest::new("simulate", raw_args, params, args.seed).write_alongside(&args.out)?;
    Ok(())
}

fn dispatch(argv: Vec<String>) -> Result<(), AppError> {
    let cli = Cli::try_parse_from(&argv).map_err(|e| {
        // let clap print its own message; help/version are success paths
        let _ = e.print();
        AppError {
            message: String::new(),
            exit: if e.use_stderr() { EXIT_USAGE } else { 0 },
        }
    })?;
    match &cli.command {
        Command::Analyze(args) => cmd_analyze(args, &argv[1..]),
        Command::Search(args) => cmd_search(args, &argv[1..]),
        Command::Simulate(args) => cmd_simulate(args, &argv[1..]),
        Command::ListCodes => {
            print!("{}", cli::list_codes());
            Ok(())
        }
        Command::Replay { manifest } => {
            let loaded = RunManifest::read(manifest)?;
            let mut argv = vec!["sttc-af".to_string()];
            argv.extend(loaded.args.iter().cloned());
            dispatch(argv)
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("STTC_AF_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    match dispatch(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.exit)
        }
    }
}
