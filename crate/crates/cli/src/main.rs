//! `talr`: tie-aware evaluation and training of linear hash functions.

mod commands;
mod data;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use talr_core::TalrError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "talr",
    version,
    about = "Tie-aware ranking metrics and hashing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a linear hash model by gradient ascent on a relaxed metric.
    Train(commands::TrainArgs),
    /// Rank the database for every query and report tie-aware metrics.
    Eval(commands::EvalArgs),
    /// Compare tie-breaking strategies with the tie-aware value.
    TiebreakAudit(commands::AuditArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(commands::GradcheckArgs),
    /// Write a synthetic Gaussian-cluster dataset.
    Synth(commands::SynthArgs),
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<TalrError> for Failure {
    fn from(e: TalrError) -> Self {
        let code = match &e {
            TalrError::Config { .. } | TalrError::CutoffOutOfRange { .. } => EXIT_USAGE,
            TalrError::Numeric(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        TalrError::from(e).into()
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("TALR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::usage(format!(
            "TALR_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_threads().and_then(|()| match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::TiebreakAudit(a) => commands::audit(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Synth(a) => commands::synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
