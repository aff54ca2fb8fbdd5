//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 on configuration errors (bad flags,
//! malformed config or inputs, missing artifacts), 2 on runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use graphvq::config::resolve_config;
use graphvq::error::CliError;
use graphvq::parse_seeds;
use graphvq::run::{run_task, Task};

#[derive(Parser, Debug)]
#[command(name = "graphvq", about = "Structure-aware graph tokenization and GNN-to-MLP distillation")]
struct Args {
    /// JSON configuration file; merged over the dataset's default block.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Task to run: train-tokenizer, distill, evaluate, tokenize,
    /// retrieve, benchmark, noise-sweep or ablate.
    #[arg(long)]
    task: String,

    /// Random seed, or a comma-separated list for multi-seed runs.
    #[arg(long, default_value = "0")]
    seed: String,

    /// Output directory for all artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Configuration overrides of the form key.path=value (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let task = Task::from_name(&args.task)?;
    let seeds = parse_seeds(&args.seed)?;
    let config = resolve_config(args.config.as_deref(), &args.overrides)?;
    run_task(task, &config, &seeds, &args.out)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
