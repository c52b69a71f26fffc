//! Batch front end: synthesize corpora, extract call records, train models,
//! predict API names and score predictions.

mod commands;

use clap::{Parser, Subcommand};

/// Exit codes are part of the contract: 0 success, 2 unusable input,
/// 3 empty result, 4 not enough data to train on.
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn empty(message: impl Into<String>) -> Failure {
        Failure {
            code: 3,
            message: message.into(),
        }
    }

    pub fn insufficient(message: impl Into<String>) -> Failure {
        Failure {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<apideob_core::Error> for Failure {
    fn from(e: apideob_core::Error) -> Failure {
        Failure::input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::input(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "apideob",
    about = "Recover obfuscated Windows API call names from x86 listings",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run listings through CFG construction, longest-path selection and
    /// symbolic execution; write call records as JSONL.
    Extract(commands::ExtractArgs),
    /// Balance, split and train a model; write the bundle and reports.
    Train(commands::TrainArgs),
    /// Rank candidate API names for each record in a file.
    Predict(commands::PredictArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(commands::SynthArgs),
    /// Score a predictions file against ground-truth labels.
    Eval(commands::EvalArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(args) => commands::extract(args),
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Synth(args) => commands::synth(args),
        Command::Eval(args) => commands::eval(args),
    };
    if let Err(f) = result {
        eprintln!("error: {}", f.message);
        std::process::exit(f.code);
    }
}
