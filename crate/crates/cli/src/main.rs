//! `spadvid`: simulate, train, restore and score photon-counting video.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 data or model
//! invariant violated.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spad_core::sensor::{HotPixelMode, DEFAULT_HOT_PIXEL_DENSITY};

#[derive(Debug, Parser)]
#[command(name = "spadvid", version, about = "Photon-counting video simulation and restoration")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Degrade a clean frame directory into a low-bit photon-count sequence.
    Simulate(SimulateArgs),
    /// Build a training corpus of (degraded, clean) pairs.
    Dataset(DatasetArgs),
    /// Train a restoration network.
    Train(TrainArgs),
    /// Restore a low-bit sequence with a trained checkpoint.
    Restore(RestoreArgs),
    /// Score a sequence against a reference (PSNR, SSIM) as JSON.
    Eval(EvalArgs),
    /// Print the bit depth of a quantized sequence.
    DetectBits(DetectArgs),
    /// Tile frames of a sequence into one still image.
    ContactSheet(ContactSheetArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HotMode {
    Fixed,
    PerFrame,
}

impl From<HotMode> for HotPixelMode {
    fn from(m: HotMode) -> Self {
        match m {
            HotMode::Fixed => HotPixelMode::PerSequenceFixed,
            HotMode::PerFrame => HotPixelMode::PerFrameRandom,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Directory of clean frames (PGM, PNG, JPEG, BMP or TIFF).
    #[arg(long)]
    clean_dir: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    bits: u8,
    #[arg(long, default_value_t = DEFAULT_HOT_PIXEL_DENSITY)]
    hot_density: f64,
    #[arg(long, value_enum, default_value_t = HotMode::Fixed)]
    hot_mode: HotMode,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=spad_core::rng::MAX_SEED))]
    seed: u64,
    /// Output directory; receives the frames and `simulate.toml`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Existing manifest to regenerate from.
    #[arg(long, conflicts_with = "synthetic")]
    manifest: Option<PathBuf>,
    /// Use procedural constant / slow-ramp clips instead of video sources.
    #[arg(long)]
    synthetic: bool,
    /// Source video directories (one sequence source each).
    #[arg(long = "source", conflicts_with_all = ["manifest", "synthetic"])]
    sources: Vec<PathBuf>,
    #[arg(long, default_value_t = spad_core::dataset::DEFAULT_DOWNSAMPLE_FACTOR)]
    downsample: usize,
    #[arg(long, default_value_t = 2500)]
    count: usize,
    /// How many of `count` sequences go to the test split.
    #[arg(long, default_value_t = 0)]
    test: usize,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4), default_value_t = 1)]
    bits: u8,
    /// Sequence extent as FRAMES,HEIGHT,WIDTH.
    #[arg(long, value_parser = parse_triple, default_value = "64,100,100")]
    dims: [usize; 3],
    #[arg(long, default_value_t = DEFAULT_HOT_PIXEL_DENSITY)]
    hot_density: f64,
    #[arg(long, value_enum, default_value_t = HotMode::Fixed)]
    hot_mode: HotMode,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=spad_core::rng::MAX_SEED))]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Overrides `data` in the config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `train.steps`.
    #[arg(long)]
    steps: Option<u64>,
    /// Overrides `train.seed`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=spad_core::rng::MAX_SEED))]
    seed: Option<u64>,
    /// Overrides `train.sgd.learning_rate`.
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
struct RestoreArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Tile extent as FRAMES,HEIGHT,WIDTH.
    #[arg(long, value_parser = parse_triple, default_value = "38,60,60")]
    tile: [usize; 3],
    /// Tile overlap as FRAMES,HEIGHT,WIDTH.
    #[arg(long, value_parser = parse_triple, default_value = "8,10,10")]
    overlap: [usize; 3],
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// PGM mask (nonzero = hot) whose pixels are median-filled in the test
    /// sequence before scoring.
    #[arg(long, conflicts_with = "auto_hot_mask")]
    hot_mask: Option<PathBuf>,
    /// Derive the hot mask from temporal saturation of the test sequence.
    #[arg(long)]
    auto_hot_mask: bool,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Debug, Args)]
struct ContactSheetArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PGM file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    columns: usize,
    /// Use every n-th frame.
    #[arg(long, default_value_t = 1)]
    every: usize,
    #[arg(long, default_value_t = 64)]
    max_frames: usize,
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split([',', 'x']).collect();
    if parts.len() != 3 {
        return Err(format!("expected FRAMES,HEIGHT,WIDTH, got {s:?}"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SPADVID_LOG")
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(commands::EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Dataset(a) => commands::dataset(a),
        Command::Train(a) => commands::train(a),
        Command::Restore(a) => commands::restore(a),
        Command::Eval(a) => commands::eval(a),
        Command::DetectBits(a) => commands::detect_bits(a),
        Command::ContactSheet(a) => commands::contact_sheet(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
