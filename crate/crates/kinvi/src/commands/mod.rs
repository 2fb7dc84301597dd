//! The four subcommands. Each writes into its own output directory and
//! finishes by writing the directory's manifest.

pub mod ablate;
pub mod fit;
pub mod report;
pub mod synth;

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}
