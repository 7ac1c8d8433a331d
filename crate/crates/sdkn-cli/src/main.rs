//! Command-line front end for structured deep kernel networks: reproducible
//! training and evaluation runs, polynomial compilation, small-shape
//! interpolation studies, and Gram conditioning diagnostics.
//!
//! Every run layers its configuration as explicit flags over `key=value`
//! config-file entries over built-in defaults, and writes the resolved
//! configuration next to its artifacts. Exit codes: 0 on success, 2 for
//! usage errors, 3 for data errors, 4 for numeric failures.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "sdkn",
    version,
    about = "Structured deep kernel networks: train, evaluate, construct, diagnose"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// Parsed once at startup; the size spread between subcommand payloads is
// irrelevant there.
#[allow(clippy::large_enum_variant)]
#[derive(Subcommand)]
enum Command {
    /// Train a network on a CSV dataset; writes model.txt and metrics.jsonl
    Train(TrainArgs),
    /// Evaluate a saved model on a CSV dataset; prints the MSE
    Eval(EvalArgs),
    /// Compile a polynomial spec into a network; writes the model and an
    /// error report
    CompilePoly(CompilePolyArgs),
    /// Sweep interpolant error against the interpolating polynomial over a
    /// list of shape parameters; writes (shape, sup-error) pairs
    FlatLimitStudy(FlatLimitStudyArgs),
    /// Print Gram condition numbers for a file of nodes
    DiagnoseConditioning(DiagnoseConditioningArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// key=value config file; explicit flags override file entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV dataset: input columns then target columns, no header
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for model.txt, metrics.jsonl, resolved-config.txt
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Number of input columns
    #[arg(long)]
    input_dim: Option<usize>,
    /// Number of target columns
    #[arg(long)]
    output_dim: Option<usize>,
    /// Comma-separated hidden layer widths
    #[arg(long)]
    widths: Option<String>,
    /// Activation kernel family (gaussian, matern0, matern-quadratic,
    /// wendland0, linear)
    #[arg(long)]
    family: Option<String>,
    /// Activation kernel shape parameter
    #[arg(long)]
    epsilon: Option<f64>,
    /// Update rule (sgd, adam)
    #[arg(long)]
    optimizer: Option<String>,
    /// Step size
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Adam first-moment decay
    #[arg(long)]
    beta1: Option<f64>,
    /// Adam second-moment decay
    #[arg(long)]
    beta2: Option<f64>,
    /// Adam denominator offset
    #[arg(long)]
    adam_epsilon: Option<f64>,
    /// Samples per update (clamped to the dataset size)
    #[arg(long)]
    batch_size: Option<usize>,
    /// Number of passes over the data
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of kernel centers selected from the dataset
    #[arg(long)]
    num_centers: Option<usize>,
    /// Center selection rule (first, random)
    #[arg(long)]
    center_rule: Option<String>,
    /// Seed for initialization, center selection, and batch shuffling
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated per-layer regularization weights (empty for none)
    #[arg(long)]
    reg_weights: Option<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// key=value config file; explicit flags override file entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Saved model file (column counts are taken from it)
    #[arg(long)]
    model: Option<PathBuf>,
    /// CSV dataset: input columns then target columns, no header
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for resolved-config.txt
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompilePolyArgs {
    /// key=value config file; explicit flags override file entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Polynomial spec file: one term per line as "coefficient e1 .. ed"
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Directory for compiled-model.txt, report.txt, resolved-config.txt
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Construction scale; smaller is more accurate
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of seeded sample points in the error report
    #[arg(long)]
    grid: Option<usize>,
    /// Seed for the report's sample points
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation box "lo,hi" applied to every variable (0 <= lo < hi)
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Args)]
pub struct FlatLimitStudyArgs {
    /// key=value config file; explicit flags override file entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated interpolation nodes (two or three)
    #[arg(long)]
    nodes: Option<String>,
    /// Comma-separated data values, one per node
    #[arg(long)]
    values: Option<String>,
    /// Kernel family to study
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated shape parameters to sweep
    #[arg(long)]
    eps_list: Option<String>,
    /// Number of evaluation grid points between the extreme nodes
    #[arg(long)]
    grid: Option<usize>,
    /// Directory for study.txt and resolved-config.txt
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct DiagnoseConditioningArgs {
    /// key=value config file; explicit flags override file entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// File with one node per line ('#' comments allowed)
    #[arg(long)]
    nodes_file: Option<PathBuf>,
    /// Kernel family to diagnose
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated shape parameters to sweep
    #[arg(long)]
    eps_list: Option<String>,
    /// Directory for resolved-config.txt
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::run_train(args),
        Command::Eval(args) => commands::run_eval(args),
        Command::CompilePoly(args) => commands::run_compile_poly(args),
        Command::FlatLimitStudy(args) => commands::run_flat_limit_study(args),
        Command::DiagnoseConditioning(args) => commands::run_diagnose_conditioning(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
