//! `claimcheck` — batch driver for the claim-verification engine.
//!
//! Human-readable output goes to stdout, logs to stderr, artifacts to files.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error or missing input,
//! 3 provider configuration error.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use claimcheck_core::{ConfigError, EvaluationError, IndexError};

#[derive(Debug, Parser)]
#[command(
    name = "claimcheck",
    version,
    about = "Multi-source claim verification with negated-claim retrieval"
)]
pub struct Cli {
    /// TOML configuration file (default: ./claimcheck.toml when present).
    #[arg(long, global = true, env = "CLAIMCHECK_CONFIG")]
    pub config: Option<PathBuf>,

    /// Offline mode: use the mock verifier and refuse every remote provider.
    #[arg(long, global = true, env = "CLAIMCHECK_MOCK")]
    pub mock: bool,

    /// Output directory (index directory for `index`, run root for `evaluate`).
    #[arg(long, global = true, env = "CLAIMCHECK_OUT")]
    pub out: Option<PathBuf>,

    /// Comma-separated verdict sources, e.g. `wikipedia,pubmed,web,merged`.
    #[arg(long, global = true, env = "CLAIMCHECK_SOURCES")]
    pub sources: Option<String>,

    /// `original`, `original+negated`, or `all` (evaluate only).
    #[arg(long, global = true, env = "CLAIMCHECK_CONDITION")]
    pub condition: Option<String>,

    /// Evaluate a seeded random subset of this many claims.
    #[arg(long, global = true, env = "CLAIMCHECK_LIMIT")]
    pub limit: Option<usize>,

    /// Seed for subset selection.
    #[arg(long, global = true, env = "CLAIMCHECK_SEED")]
    pub seed: Option<u64>,

    /// Print a single JSON document instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, env = "CLAIMCHECK_LOG", default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a BM25 index from a JSONL corpus file or directory.
    Index { corpus: PathBuf },
    /// Print the negation of each claim.
    Negate {
        #[arg(required = true)]
        claims: Vec<String>,
    },
    /// Verify one claim end to end.
    Verify {
        claim: String,
        /// Identifier used in traces and mock fixtures.
        #[arg(long, default_value = "cli")]
        id: String,
    },
    /// Run the configured dataset through the pipeline and score it.
    Evaluate {
        /// Claims processed concurrently (default from config).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write density curves and plot data for a finished run.
    Analyze { run_dir: PathBuf },
}

/// A problem with how the command was invoked.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn config_exit_code(err: &ConfigError) -> u8 {
    match err {
        ConfigError::UnknownSource(_) => 2,
        ConfigError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        ConfigError::Index { source, .. } => index_exit_code(source),
        _ => 3,
    }
}

fn index_exit_code(err: &IndexError) -> u8 {
    match err {
        IndexError::MissingPath(_) => 2,
        _ => 1,
    }
}

/// Process exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return config_exit_code(e);
        }
        if let Some(e) = cause.downcast_ref::<IndexError>() {
            return index_exit_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EvaluationError>() {
            return match e {
                EvaluationError::FileMissing(_) => 2,
                EvaluationError::Config(c) => config_exit_code(c),
                _ => 1,
            };
        }
    }
    1
}

/// Runs one parsed command, writing human or JSON output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    commands::run(cli, out)
}

/// Parses `args` (program name first) and runs the command in-process.
/// Returns the exit status the binary would have used.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return u8::try_from(e.exit_code()).unwrap_or(2);
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            exit_code(&e)
        }
    }
}
