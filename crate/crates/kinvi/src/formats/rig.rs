//! Camera rig files.
//!
//! ```toml
//! version = 1
//!
//! [[camera]]
//! name = "cam0"
//! image_size = [1280, 720]
//! fx = 1000.0
//! fy = 1000.0
//! cx = 640.0
//! cy = 360.0
//! distortion = [0.0, 0.0, 0.0, 0.0, 0.0]   # k1 k2 p1 p2 k3
//! rotation = [0.0, 0.0, 0.0]               # world-to-camera axis-angle
//! translation = [0.0, 0.0, 4.0]            # world-to-camera, meters
//! refine = false
//! ```

use std::path::Path;

use kinvi_core::camera::{CameraError, CameraModel, Intrinsics, Rig};
use serde::{Deserialize, Serialize};

use super::{check_version, read_toml, write_text, FORMAT_VERSION};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub name: String,
    pub image_size: [u32; 2],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub distortion: [f64; 5],
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    #[serde(default)]
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigFile {
    pub version: u32,
    #[serde(rename = "camera")]
    pub cameras: Vec<CameraEntry>,
}

impl RigFile {
    pub fn from_rig(rig: &Rig) -> Self {
        Self {
            version: FORMAT_VERSION,
            cameras: rig
                .cameras()
                .iter()
                .zip(rig.refine_mask())
                .map(|(c, &refine)| CameraEntry {
                    name: c.name.clone(),
                    image_size: [c.width, c.height],
                    fx: c.intrinsics.fx,
                    fy: c.intrinsics.fy,
                    cx: c.intrinsics.cx,
                    cy: c.intrinsics.cy,
                    distortion: c.distortion,
                    rotation: c.rotation,
                    translation: c.translation,
                    refine,
                })
                .collect(),
        }
    }

    pub fn to_rig(&self) -> std::result::Result<Rig, CameraError> {
        let cams = self
            .cameras
            .iter()
            .map(|c| CameraModel {
                name: c.name.clone(),
                intrinsics: Intrinsics {
                    fx: c.fx,
                    fy: c.fy,
                    cx: c.cx,
                    cy: c.cy,
                },
                distortion: c.distortion,
                rotation: c.rotation,
                translation: c.translation,
                width: c.image_size[0],
                height: c.image_size[1],
            })
            .collect();
        Rig::new(cams, self.cameras.iter().map(|c| c.refine).collect())
    }
}

fn describe(e: CameraError) -> String {
    match e {
        CameraError::Invalid {
            camera,
            field,
            message,
        } => format!("camera {camera:?}: {field}: {message}"),
        CameraError::Rig(m) => m,
    }
}

pub fn load(path: &Path) -> Result<Rig> {
    let file: RigFile = read_toml(path)?;
    check_version(path, file.version)?;
    file.to_rig().map_err(|e| CliError::at(path, describe(e)))
}

pub fn write(path: &Path, rig: &Rig) -> Result<()> {
    let text = toml::to_string(&RigFile::from_rig(rig)).map_err(|e| CliError::at(path, e))?;
    write_text(path, &text)
}
