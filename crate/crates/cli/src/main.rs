//! `h2fmm` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 precondition or guard violation, 4 internal
//! failure (including failed acceptance criteria).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use h2fmm::Error;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "h2fmm", version, about = "Octrees, H2 matrices and FMM communication counts")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GlobalOpts {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Leave wall-clock timings out of reports so reruns are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Bin,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a particle distribution.
    Gen(commands::GenArgs),
    /// Tree depth against N for one or more distributions.
    TreeStats(commands::TreeStatsArgs),
    /// Build an H2 matrix and write the binary container.
    Compress(commands::CompressArgs),
    /// Multiply a seeded random vector and compare with the dense product.
    Matvec(commands::MatvecArgs),
    /// Count communication over virtual processes and fit scaling exponents.
    Commsim(commands::CommsimArgs),
    /// Run the acceptance criteria.
    Verify(commands::VerifyArgs),
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Precondition(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Precondition(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Precondition(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) => Failure::Usage(msg),
            Error::Lookup(_) => Failure::Internal(msg),
            _ => Failure::Precondition(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Precondition(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Precondition(e.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let g = cli.global;
    let outcome = std::panic::catch_unwind(move || match cli.command {
        Command::Gen(a) => commands::gen(&g, &a),
        Command::TreeStats(a) => commands::tree_stats(&g, &a),
        Command::Compress(a) => commands::compress(&g, &a),
        Command::Matvec(a) => commands::matvec(&g, &a),
        Command::Commsim(a) => commands::commsim(&g, &a),
        Command::Verify(a) => commands::verify(&g, &a),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
        Err(_) => ExitCode::from(4),
    }
}
