//! The `fieldshift` command line: prepare | train | translate | evaluate | report.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 when training diverges.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::evalmetrics::Direction;
use config::{DataArgs, HyperArgs, ModelChoice, RunArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Caps the worker threads; unset means 1 so runs are reproducible.
pub const THREADS_ENV: &str = "FIELDSHIFT_NUM_THREADS";

#[derive(Parser, Debug)]
#[command(name = "fieldshift", version, about = "3T <-> 1.5T MRI slice translation with CycleGAN, plus a DCGAN baseline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract, normalize and split slices; writes PGM files and manifest.csv
    Prepare {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train a CycleGAN or DCGAN; writes history.csv, checkpoints and sample grids
    Train(TrainArgs),
    /// Translate images with a trained CycleGAN and reconstruct them
    Translate(TranslateArgs),
    /// Score a checkpoint on the test split; writes report.csv and report.txt
    Evaluate(EvaluateArgs),
    /// Merge report.csv files into one table
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Model to train
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Continue from this checkpoint directory
    #[arg(long, value_name = "DIR")]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    /// 3T -> 1.5T -> 3T (G then F)
    Forward,
    /// 1.5T -> 3T -> 1.5T (F then G)
    Backward,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Forward => Direction::Forward,
            DirectionArg::Backward => Direction::Backward,
        }
    }
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    /// CycleGAN checkpoint directory
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// Translation direction
    #[arg(long, value_enum, default_value = "forward")]
    pub direction: DirectionArg,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = config::DEFAULT_OUTPUT_DIR)]
    pub out: PathBuf,
    /// PGM images, or directories of them
    #[arg(required = true, value_name = "INPUT")]
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Checkpoint directory to score
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// Model the checkpoint holds (required for DCGAN checkpoints)
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Number of sampled test images
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// report.csv files to merge, in row order
    #[arg(required = true, value_name = "CSV")]
    pub inputs: Vec<PathBuf>,
    /// Also write the merged rows to this CSV file
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_INPUT,
    }
}

fn init_threads() -> Result<(), String> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?,
        Err(_) => 1,
    };
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse `args` (including the program name), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return EXIT_INPUT;
    }
    let result = match cli.command {
        Command::Prepare { run, data } => commands::prepare(run, data),
        Command::Train(a) => commands::train(a),
        Command::Translate(a) => commands::translate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
