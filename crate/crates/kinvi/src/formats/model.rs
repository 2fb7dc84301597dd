//! Kinematic model files: a TOML [`ModelDescription`], or a bundled preset
//! named `preset:<name>`.

use std::path::Path;

use kinvi_core::kinematics::ModelDescription;
use kinvi_core::{presets, KinematicModel};

use super::{read_toml, write_text};
use crate::error::{CliError, Result};

pub const PRESETS: [&str; 2] = ["humanoid-lite", "paper-scale"];

pub fn preset(name: &str) -> Option<ModelDescription> {
    match name {
        "humanoid-lite" => Some(presets::humanoid_lite()),
        "paper-scale" => Some(presets::paper_scale()),
        _ => None,
    }
}

/// Resolves a model reference relative to `base`.
pub fn load(reference: &str, base: &Path) -> Result<(ModelDescription, KinematicModel)> {
    let (desc, origin) = match reference.strip_prefix("preset:") {
        Some(name) => {
            let d = preset(name).ok_or_else(|| {
                CliError::input(format!(
                    "model: unknown preset {name:?} (known: {})",
                    PRESETS.join(", ")
                ))
            })?;
            (d, reference.to_string())
        }
        None => {
            let path = base.join(reference);
            (
                read_toml::<ModelDescription>(&path)?,
                path.display().to_string(),
            )
        }
    };
    let model = KinematicModel::from_description(&desc)
        .map_err(|e| CliError::input(format!("{origin}: {e}")))?;
    Ok((desc, model))
}

pub fn write(path: &Path, desc: &ModelDescription) -> Result<()> {
    let text = toml::to_string(desc).map_err(|e| CliError::at(path, e))?;
    write_text(path, &text)
}
