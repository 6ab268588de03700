//! `ipclab`: run invasion traces, outlet ensembles, verdicts and Bernoulli
//! correlation tables from key-value config files.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ipc_core::weightfield::MIXER_VERSION;
use ipc_core::TOOL_VERSION;

pub mod config;
pub mod correlation;
pub mod ensemble;
pub mod simulate;
pub mod verify;

pub use config::KvConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Run(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn run(e: impl std::fmt::Display) -> Self {
        CliError::Run(e.to_string())
    }
}

/// Exit status of a finished command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    ClaimFailed,
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_CLAIM_FAILED: u8 = 1;
/// Usage errors, and also runtime failures such as exceeded edge caps or
/// unreadable files: exit 1 is reserved for failed claims.
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ipclab", version, about = "Invasion percolation outlet experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one invasion and write its trace as JSONL.
    Simulate(simulate::SimulateArgs),
    /// Run (or resume) an outlet-count ensemble and its estimator tables.
    Ensemble(ensemble::EnsembleArgs),
    /// Judge an ensemble dataset and write a JSON verdict report.
    Verify(verify::VerifyArgs),
    /// Estimate crossing probabilities, correlation lengths and p_n.
    Correlation(correlation::CorrelationArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Key-value config file; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Common {
    pub fn base(&self) -> Result<KvConfig, CliError> {
        match &self.config {
            Some(p) => KvConfig::load(p),
            None => Ok(KvConfig::new()),
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Ensemble(a) => ensemble::run(&a),
        Command::Verify(a) => verify::run(&a),
        Command::Correlation(a) => correlation::run(&a),
    }
}

pub fn exit_code(result: &Result<Outcome, CliError>) -> ExitCode {
    ExitCode::from(match result {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::ClaimFailed) => EXIT_CLAIM_FAILED,
        Err(_) => EXIT_ERROR,
    })
}

/// Provenance written at the top of every CSV and text output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputHeader {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub mixer: String,
}

impl OutputHeader {
    pub fn new(config_hash: &str, master_seed: u64) -> Self {
        OutputHeader {
            tool_version: TOOL_VERSION.into(),
            config_hash: config_hash.into(),
            master_seed,
            mixer: MIXER_VERSION.into(),
        }
    }

    /// `#` comment lines, skipped by most CSV readers given a comment char.
    pub fn write_comments<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# tool_version = {}", self.tool_version)?;
        writeln!(w, "# config_hash = {}", self.config_hash)?;
        writeln!(w, "# master_seed = {}", self.master_seed)?;
        writeln!(w, "# mixer = {}", self.mixer)
    }
}

/// Creates `path` and writes the comment header followed by `body`.
pub fn write_csv<F>(path: &Path, header: &OutputHeader, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut io::BufWriter<std::fs::File>) -> io::Result<()>,
{
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    header.write_comments(&mut w)?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads the data lines of a CSV written by [`write_csv`]: comment lines and
/// the column header are dropped after the header is checked.
pub fn read_csv_rows(text: &str, columns: &str) -> Result<Vec<Vec<String>>, CliError> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == columns => {}
        other => return Err(CliError::Usage(format!("expected CSV columns {columns:?}, found {other:?}"))),
    }
    Ok(lines.map(|l| l.split(',').map(|c| c.trim().to_string()).collect()).collect())
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))
}
