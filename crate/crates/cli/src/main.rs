//! `qretina`: generate the synthetic dataset, train quantum or classical
//! stem detectors, evaluate and compare them, and run single-image inference.
//!
//! Exit status: 0 success, 2 usage, 3 divergence, 4 I/O or format,
//! 5 incompatible inputs.

mod error;
mod eval;
mod files;
mod generate;
mod infer;
mod manifest;
mod svg;
mod train;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "qretina", about = "Quanvolutional RetinaNet at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic dataset.
    Generate(generate::GenerateArgs),
    /// Train a detector and write a checkpoint.
    Train(train::TrainArgs),
    /// Score a checkpoint and write reports.
    Eval(eval::EvalArgs),
    /// Detect objects in one image.
    Infer(infer::InferArgs),
    /// Score several checkpoints side by side.
    Compare(eval::CompareArgs),
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run_eval(a),
        Command::Infer(a) => infer::run(a),
        Command::Compare(a) => eval::run_compare(a),
    }
}

fn main() -> ExitCode {
    let version = format!(
        "{} (checkpoint format v{})",
        env!("CARGO_PKG_VERSION"),
        qretina::train::FORMAT_VERSION
    );
    let matches = Cli::command().version(version.leak() as &str).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
