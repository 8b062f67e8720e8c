//! `sepmetric`: estimate, from training data alone, how well a feature
//! representation will classify, and check the estimate against a reference
//! classifier.

mod commands;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit code for bad input, missing files and schema mismatches.
pub const EXIT_INPUT: u8 = 2;
/// Exit code for numerical failure (non-convergence, NaN, degenerate data).
pub const EXIT_NUMERICAL: u8 = 3;
/// Exit code when a class has fewer than two samples.
pub const EXIT_CLASS_DATA: u8 = 4;

#[derive(Parser)]
#[command(name = "sepmetric", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labeled dataset from a Gaussian mixture spec.
    Synth(commands::SynthArgs),
    /// Stratified train/test split of a labeled dataset.
    Split(commands::SplitArgs),
    /// Project a feature file to low dimension.
    Embed(commands::EmbedArgs),
    /// Compute the separability metric A for a feature or embedding file.
    Estimate(commands::EstimateArgs),
    /// Train a reference classifier and report test accuracy and confusion.
    Eval(commands::EvalArgs),
    /// Correlate A with test accuracy across representations.
    Compare(commands::CompareArgs),
    /// Draw a class-coloured scatter plot of a 2-D embedding.
    Plot(commands::PlotArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<sepmetric::Error>() {
        Some(sepmetric::Error::InsufficientSamples { .. }) => EXIT_CLASS_DATA,
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Split(args) => commands::split(args),
        Command::Embed(args) => commands::embed(args),
        Command::Estimate(args) => commands::estimate(args),
        Command::Eval(args) => commands::eval(args),
        Command::Compare(args) => commands::compare(args),
        Command::Plot(args) => commands::plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
