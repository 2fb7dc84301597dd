//! `kinvi synth`: synthetic dataset generation.
//!
//! The config is a TOML file with `version`, `model` and every field of
//! [`SynthConfig`] at the top level, plus an optional `[session]` table
//! with fit settings for the session file written next to the data.

use std::path::{Path, PathBuf};
use std::time::Instant;

use kinvi_core::synth::{generate, Dataset, SynthConfig};
use kinvi_core::{Family, KinematicModel};
use serde::{Deserialize, Serialize};

use super::ensure_dir;
use crate::error::{CliError, Result};
use crate::formats::manifest::Manifest;
use crate::formats::session::{PosteriorOverrides, ScheduleOverrides, SessionFile, TrialEntry};
use crate::formats::{
    check_version, model, observations, read_text, rig, truth, write_text, FORMAT_VERSION,
};

/// Fit settings copied into the generated `session.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionTemplate {
    pub family: Family,
    pub learn_beta: bool,
    /// Start the root at its time-averaged true pose.
    pub initial_root_from_truth: bool,
    pub posterior: PosteriorOverrides,
    pub schedule: ScheduleOverrides,
}

impl Default for SessionTemplate {
    fn default() -> Self {
        Self {
            family: Family::default(),
            learn_beta: true,
            initial_root_from_truth: true,
            posterior: PosteriorOverrides::default(),
            schedule: ScheduleOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFile {
    pub version: u32,
    pub model: String,
    #[serde(default)]
    pub session: SessionTemplate,
    #[serde(flatten)]
    pub config: SynthConfig,
}

pub fn parse_config(text: &str, path: &Path) -> Result<SynthFile> {
    let table: toml::Table = toml::from_str(text).map_err(|e| CliError::at(path, e))?;
    let known = toml::Table::try_from(SynthConfig::default()).expect("default config serializes");
    for key in table.keys() {
        if !known.contains_key(key) && !["version", "model", "session"].contains(&key.as_str()) {
            return Err(CliError::at(path, format!("{key}: unknown field")));
        }
    }
    let file: SynthFile = toml::from_str(text).map_err(|e| CliError::at(path, e))?;
    check_version(path, file.version)?;
    Ok(file)
}

/// Files written by [`write_dataset`], relative to the output directory.
pub fn dataset_outputs(trials: usize) -> Vec<String> {
    let mut v = vec![
        "model.toml".to_string(),
        "rig.toml".to_string(),
        "session.toml".to_string(),
    ];
    for i in 0..trials {
        v.push(format!("trial{i}.csv"));
        v.push(format!("ground_truth_trial{i}.csv"));
    }
    v
}

/// Writes model, rig, observation and ground-truth tables and a session
/// file referencing them.
pub fn write_dataset(
    out: &Path,
    file: &SynthFile,
    model_desc: &kinvi_core::kinematics::ModelDescription,
    model: &KinematicModel,
    ds: &Dataset,
) -> Result<Vec<String>> {
    ensure_dir(out)?;
    model::write(&out.join("model.toml"), model_desc)?;
    rig::write(&out.join("rig.toml"), &ds.rig)?;
    let times: Vec<f64> = (0..file.config.frame_count())
        .map(|i| i as f64 / file.config.fps)
        .collect();
    let mut trials = Vec::new();
    for t in &ds.trials {
        observations::write(&out.join(format!("{}.csv", t.name)), &t.observations)?;
        truth::write(
            &out.join(format!("ground_truth_{}.csv", t.name)),
            model.dof_names(),
            &times,
            &t.poses,
        )?;
        trials.push(TrialEntry {
            name: t.name.clone(),
            observations: format!("{}.csv", t.name),
        });
    }
    let tpl = &file.session;
    let free_root = model.pose_dim() >= 6 && model.bounds()[..6].iter().all(|b| b.is_none());
    let initial_root = (tpl.initial_root_from_truth && free_root).then(|| {
        let poses = &ds.trials[0].poses;
        let mut r = [0.0; 6];
        for p in poses {
            for (a, x) in r.iter_mut().zip(&p[..6]) {
                *a += x / poses.len() as f64;
            }
        }
        r
    });
    let session = SessionFile {
        version: FORMAT_VERSION,
        model: "model.toml".into(),
        rig: "rig.toml".into(),
        seed: file.config.seed,
        family: tpl.family,
        learn_beta: tpl.learn_beta,
        psi_init: None,
        initial_mean: None,
        initial_root,
        posterior: tpl.posterior.clone(),
        schedule: tpl.schedule.clone(),
        trials,
    };
    let text = toml::to_string(&session).map_err(|e| CliError::input(e.to_string()))?;
    write_text(&out.join("session.toml"), &text)?;
    Ok(dataset_outputs(ds.trials.len()))
}

pub fn run(config: &Path, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let text = read_text(config)?;
    let file = parse_config(&text, config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let (desc, model) = model::load(&file.model, base)?;
    let ds = generate(&file.config, &model).map_err(|e| CliError::at(config, e))?;
    let outputs = write_dataset(out, &file, &desc, &model, &ds)?;
    let mut inputs = text.into_bytes();
    inputs.extend(toml::to_string(&desc).unwrap_or_default().into_bytes());
    Manifest::new(
        "synth",
        &inputs,
        file.config.seed,
        outputs,
        start.elapsed().as_secs_f64(),
    )
    .write(out)?;
    Ok(out.join("session.toml"))
}
