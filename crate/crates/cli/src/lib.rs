//! Configuration, stage orchestration and file output for the `dicke` tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{execute, run, Artifact, RunOutcome};
pub use config::{Command, Overrides, RunConfig};
pub use error::CliError;

use std::path::Path;

/// Loads `config` (defaults when absent), applies `overrides` and validates
/// everything `command` needs.
pub fn prepare(
    command: Command,
    config: Option<&Path>,
    overrides: &Overrides,
) -> Result<RunConfig, CliError> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(overrides, command.grid_target());
    cfg.validate(command)?;
    Ok(cfg)
}
