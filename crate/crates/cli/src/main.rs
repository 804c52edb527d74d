//! `werpred` — WER prediction toolkit.
//!
//! Subcommands cover the full pipeline: synthesize a corpus, score
//! references, extract baseline features, train CNN or regression
//! predictors, predict, evaluate and compare systems.
//!
//! Exit codes: 0 success, 2 usage/data error, 3 internal error.

mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "werpred", version, about = "ASR word-error-rate prediction toolkit")]
struct Cli {
    /// Cap the worker-thread pool (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: manifest, WAV audio and baseline
    /// sidecars (lexicon, phoneme categories, POS tags).
    Synth(commands::SynthArgs),
    /// Score reference WER per utterance of a manifest.
    Score(commands::ScoreArgs),
    /// Extract baseline feature families to CSV.
    Extract(commands::ExtractArgs),
    /// Train a CNN predictor (text, signal or joint).
    TrainCnn(commands::TrainCnnArgs),
    /// Fit the regression baseline on extracted features.
    TrainReg(commands::TrainRegArgs),
    /// Predict WER for a manifest with a trained model.
    Predict(commands::PredictArgs),
    /// Evaluate predictions: metrics.json, aggregate.csv, histogram.csv.
    Evaluate(commands::EvaluateArgs),
    /// Compare two prediction files with a Wilcoxon signed-rank test.
    Compare(commands::CompareArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        werpred_core::parallel::configure_threads(jobs);
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Score(a) => commands::score(a),
        Command::Extract(a) => commands::extract(a),
        Command::TrainCnn(a) => commands::train_cnn(a),
        Command::TrainReg(a) => commands::train_reg(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => {}
        Err(commands::CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(commands::CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            std::process::exit(3);
        }
    }
}
