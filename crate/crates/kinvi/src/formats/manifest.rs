//! Run manifests. Every output directory gets one `manifest.json`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{write_text, FORMAT_VERSION};
use crate::error::Result;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub command: String,
    /// SHA-256 of every input byte that shaped the run.
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
}

impl Manifest {
    pub fn new(
        command: &str,
        inputs: &[u8],
        seed: u64,
        outputs: Vec<String>,
        wall_clock_s: f64,
    ) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("kinvi".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("format".into(), FORMAT_VERSION.to_string());
        Self {
            version: FORMAT_VERSION,
            command: command.into(),
            config_hash: hex::encode(Sha256::digest(inputs)),
            seed,
            versions,
            outputs,
            wall_clock_s,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        write_text(&dir.join(FILE_NAME), &s)
    }
}
