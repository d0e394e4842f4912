//! `pronlearn`: generate synthetic corpora, train detectors, calibrate
//! thresholds, evaluate, and simulate engagement-gated correction.

mod commands;
mod failure;
mod scoring;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::scoring::Method;

#[derive(Parser)]
#[command(name = "pronlearn", version, about = "TTS mispronunciation detection and per-user correction")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus directory.
    GenData(GenArgs),
    /// Train a model and write its checkpoint and training log.
    Train(TrainArgs),
    /// Choose a detection threshold on the calibration split.
    Calibrate(CalibrateArgs),
    /// Score methods on the evaluation split at calibrated thresholds.
    Evaluate(EvaluateArgs),
    /// Run detect → qualify → correct over the evaluation split.
    SimulateCorrection(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Phoneme,
    Audio,
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Phoneme)]
    pub mode: Mode,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Comma-separated locale tags (default: ten built-in locales).
    #[arg(long)]
    pub locales: Option<String>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub mispronunciation_rate: Option<f64>,
    #[arg(long)]
    pub homograph_rate: Option<f64>,
    #[arg(long)]
    pub non_native_rate: Option<f64>,
    #[arg(long)]
    pub allophone_rate: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model directory; created if absent.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Window triplets sampled for dtw-siamese.
    #[arg(long, default_value_t = 4000)]
    pub triplets: usize,
    /// Cap on training pairs for mel-siamese.
    #[arg(long, default_value_t = 1000)]
    pub max_pairs: usize,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub target_precision: f64,
    /// Threshold JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Threshold JSON from `calibrate`; repeat once per method.
    #[arg(long = "threshold-file", required = true)]
    pub threshold_files: Vec<PathBuf>,
    /// Report JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long = "threshold-file")]
    pub threshold_file: PathBuf,
    /// Output directory for the store, outcomes and report.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub policy_min_seconds: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of simulated users sharing the interactions.
    #[arg(long, default_value_t = 20)]
    pub users: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::SimulateCorrection(a) => commands::simulate_correction(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
