//! `tilt`: corpus generation, pretraining, frozen-LSTM transfer, evaluation
//! and reporting from the shell.
//!
//! Every subcommand reads `--config <file.toml>`, then `TILT_<KEY>`
//! environment variables, then `--set key=value` and dedicated flags, later
//! sources winning. Exit status is 0 on success, 2 on configuration errors
//! and 1 on runtime errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration; nothing was run.
    Config(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "tilt", version, about = "Structural transfer experiments for LSTM language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set lr0=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a corpus: uniform, zipf, nest, flat, grammar or text.
    Gen {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a language model on a corpus from scratch.
    Pretrain {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune the embedding side of a pretrained model with its LSTM frozen.
    Tilt {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Perplexity of a model on a corpus.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Typological distances, from the shipped table or a feature table.
    Wals {
        /// Tab-separated feature table (`language` column, then one column per feature).
        #[arg(long)]
        features: Option<PathBuf>,
        /// Languages to compare; all when omitted.
        languages: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Results table, scatter data, correlation and significance tests.
    Report {
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra L1 names to leave out of the distance analysis.
        #[arg(long, value_delimiter = ',')]
        non_linguistic: Vec<String>,
        /// `csv` or `md`.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Report the shipped reference results instead of a results file.
        #[arg(long)]
        reference: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run a grid of L1s and seeds end to end.
    Experiment {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands as c;
    match cli.command {
        Command::Gen { kind, out, common } => c::gen(&common, kind, out),
        Command::Pretrain {
            train,
            valid,
            out,
            common,
        } => c::pretrain(&common, train, valid, out),
        Command::Tilt {
            model,
            train,
            valid,
            out,
            common,
        } => c::tilt(&common, model, train, valid, out),
        Command::Eval { model, corpus, common } => c::eval(&common, model, corpus),
        Command::Wals {
            features,
            languages,
            common,
        } => c::wals(&common, features, languages),
        Command::Report {
            results,
            out,
            non_linguistic,
            format,
            reference,
            common,
        } => c::report(&common, results, out, non_linguistic, &format, reference),
        Command::Experiment { out, workers, common } => c::experiment(&common, out, workers),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
