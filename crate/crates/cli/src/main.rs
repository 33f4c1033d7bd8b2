//! `qnn`: run fixed-point models, print memory/op plans, benchmark kernels
//! against the naive oracles and generate activation tables.
//!
//! Exit codes: 0 success, 2 bad command line, 3 I/O failure, 4 invalid model,
//! input or parameters, 5 kernels and oracles disagree.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "qnn", version, about = "Fixed-point neural network inference kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one input through a model and print the outputs.
    Run(RunArgs),
    /// Print per-layer ops and the static memory plan.
    Plan(PlanArgs),
    /// Time the optimized kernels against the naive oracles, layer by layer.
    Bench(BenchArgs),
    /// Build a sigmoid/tanh table, write it and report its accuracy.
    GenTables(GenTablesArgs),
    /// Write a randomly initialised model to a directory.
    ExportModel(ExportModelArgs),
    /// Write a random input image.
    ExportInput(ExportInputArgs),
}

/// Where the model comes from.
#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Model directory (or its model.json).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Built-in model with random weights: `cifar10`, `cifar10-relu`, with an
    /// optional `:SEED` suffix.
    #[arg(long, value_name = "SPEC")]
    pub random_model: Option<String>,
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Input image file (8-byte header plus raw q7 HWC bytes).
    #[arg(long, required_unless_present = "random_input", conflicts_with = "random_input")]
    pub input: Option<PathBuf>,
    /// Use a random input generated from this seed.
    #[arg(long, value_name = "SEED")]
    pub random_input: Option<u64>,
    /// Also run the naive oracles and fail if any output differs.
    #[arg(long)]
    pub oracle: bool,
    /// Split convolution rows across threads.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Output pixels per im2col batch.
    #[arg(long, default_value_t = 2, conflicts_with = "full_im2col")]
    pub partial_cols: usize,
    /// Plan for a full im2col buffer instead.
    #[arg(long)]
    pub full_im2col: bool,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long, default_value_t = 10)]
    pub iters: u32,
    /// Seed of the random input used for timing.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Split convolution rows across threads in the optimized pipeline.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FuncArg {
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Unified,
    #[value(name = "two-region", alias = "two_region")]
    TwoRegion,
}

#[derive(Args)]
pub struct GenTablesArgs {
    #[arg(long, value_enum)]
    pub func: FuncArg,
    #[arg(long, value_enum, default_value = "unified")]
    pub mode: ModeArg,
    /// Input range: the table covers [-RANGE, RANGE). 4 or 8.
    #[arg(long, default_value_t = 8)]
    pub range: u32,
    /// Total number of entries (power of two).
    #[arg(long, default_value_t = 256)]
    pub entries: usize,
    /// Entry width in bits: 8 (q0.7) or 16 (q0.15).
    #[arg(long, default_value_t = 8)]
    pub entry_bits: u32,
    /// Sweep points for the error report.
    #[arg(long, default_value_t = 100_000)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExportModelArgs {
    /// Built-in model spec, as for `--random-model`.
    #[arg(long, default_value = "cifar10")]
    pub random_model: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ExportInputArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 7)]
    pub frac_bits: i32,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Plan(a) => commands::plan(a),
        Command::Bench(a) => commands::bench(a),
        Command::GenTables(a) => commands::gen_tables(a),
        Command::ExportModel(a) => commands::export_model(a),
        Command::ExportInput(a) => commands::export_input(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
