//! Command-line surface over `toricsol-core`: polytopes, soliton vector fields, model checks and
//! continuity paths, each producing a deterministic JSON report.

pub mod commands;
pub mod config;
pub mod report;

use std::fs;
use std::path::Path;

use thiserror::Error;

pub use config::{Cli, Command, RunConfig};
pub use report::Report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("continuation failed: {message}")]
    Continuation { message: String, report: Option<Box<Report>> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 64,
            CliError::Verification(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Continuation { .. } => 3,
        }
    }
}

pub(crate) fn write_file(dir: Option<&Path>, name: &str, contents: &str) -> Result<(), CliError> {
    let Some(dir) = dir else { return Ok(()) };
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Runs one command. The report is also written to `<out>/report.json` when `--out` is given.
pub fn run(cfg: &RunConfig, echo: &str) -> Result<Report, CliError> {
    let input = match &cfg.input_path {
        Some(p) => Some(fs::read(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?),
        None => None,
    };
    let mut report = Report::new(echo.to_string(), report::digest(input.as_deref()));
    let text = input.as_deref().map(String::from_utf8_lossy);
    let text = text.as_deref();
    let out = cfg.output_dir.as_deref();
    let result = match &cfg.command {
        Command::Polytope => commands::polytope(cfg, text, &mut report),
        Command::SolitonVector => commands::soliton_vector(cfg, text, &mut report),
        Command::Verify { case } => commands::verify(cfg, *case, text, &mut report),
        Command::Continuity => commands::continuity(cfg, text, &mut report),
        Command::Fhat => commands::fhat(cfg, text, &mut report),
    };
    match result {
        Ok(()) => {
            write_file(out, "report.json", &report.to_json())?;
            Ok(report)
        }
        Err(CliError::Continuation { message, .. }) => {
            report.text("error", &message);
            write_file(out, "report.json", &report.to_json())?;
            Err(CliError::Continuation { message, report: Some(Box::new(report)) })
        }
        Err(e) => Err(e),
    }
}
