//! Command-line frontend: loads a job spec, computes covers and reports on
//! them.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod commands;
pub mod spec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] cover_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use cover_core::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Verification(_) => 5,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::PlanSyntax(_)
                | E::Csv { .. }
                | E::CsvFormat(_)
                | E::InvalidValue { .. }
                | E::DuplicateFactorKey(_)
                | E::ArityMismatch { .. }
                | E::DuplicateAttribute(_) => 2,
                E::UnsoundPlan(_) => 4,
                E::NotACover(_) | E::InconsistentInputs(_) => 5,
                _ => 3,
            },
        }
    }

    fn class(&self) -> &'static str {
        match self.exit_code() {
            2 => "parse error",
            3 => "validation error",
            4 => "unsound plan",
            5 => "verification failed",
            _ => "error",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cover-engine", version, about = "Compute, check and enumerate covers of query results")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Job spec file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Cover-join plan such as `((R1*R2)*R3)`, over bag names.
    #[arg(long)]
    pub plan: Option<String>,
    /// Shuffle blocks before pairing, for alternative covers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the multimap representation instead of the cover (cover only).
    #[arg(long)]
    pub emit_drep: bool,
    /// Verify the cover against the brute-force result before using it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a cover and print it as CSV.
    Cover(Common),
    /// Check whether a CSV relation is a cover of the spec's query result.
    Check {
        /// CSV file holding the candidate cover.
        cover: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Enumerate the query result from a cover.
    Enumerate(Common),
    /// Count the query result from a cover.
    Count(Common),
    /// Evaluate an aggregate query.
    Faq {
        /// Print the cover with its value columns instead of the table.
        #[arg(long)]
        emit_cover: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Report database, cover and result sizes and the width.
    Stats(Common),
    /// List the cover-join plans that follow the join tree.
    Plans(Common),
    /// Evaluate the query by brute force.
    Oracle(Common),
}

/// Runs one command, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    commands::dispatch(&cli.command, out)
}

/// Runs and maps the outcome to an exit code, printing one diagnostic line
/// on failure.
pub fn main_with(cli: &Cli) -> i32 {
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let res = run(cli, &mut out).and_then(|()| out.flush().map_err(CliError::from));
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            let msg = e.to_string();
            let class = e.class();
            let msg = msg.strip_prefix(&format!("{class}: ")).unwrap_or(&msg);
            eprintln!("{class}: {msg}");
            e.exit_code()
        }
    }
}
