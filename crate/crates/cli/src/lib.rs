//! Library side of the `jumpsde` command-line tool.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, CliError, Command, Outcome};
pub use config::{parse_config, RunConfig};

use std::path::Path;

/// Reads and parses a configuration file. Unreadable files are configuration errors.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}
