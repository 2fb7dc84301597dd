//! On-disk formats. Configuration is TOML, tables are CSV with a header
//! row, checkpoints and manifests are JSON. Every format carries a
//! `version` field where it has a top level.

pub mod checkpoint;
pub mod log;
pub mod manifest;
pub mod model;
pub mod observations;
pub mod rig;
pub mod session;
pub mod truth;

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::at(path, e))
}

pub(crate) fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(CliError::at(
            path,
            format!("version: unsupported format version {version} (expected {FORMAT_VERSION})"),
        ));
    }
    Ok(())
}

/// Writes CSV rows of already formatted fields.
pub(crate) fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::at(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::at(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::at(path, e))?;
    write_text(
        path,
        &String::from_utf8(bytes).expect("csv output is utf-8"),
    )
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
