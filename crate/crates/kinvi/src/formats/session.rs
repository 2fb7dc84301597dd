//! Session files: which model, rig and observation tables to fit together,
//! plus fit settings. Paths are relative to the session file.
//!
//! ```toml
//! version = 1
//! model = "preset:humanoid-lite"
//! rig = "rig.toml"
//! seed = 0
//! family = "exponential"
//!
//! [posterior]
//! hidden = [128, 128, 128]
//! rank = 5
//!
//! [schedule]
//! total_steps = 5000
//!
//! [[trial]]
//! name = "trial0"
//! observations = "trial0.csv"
//! ```

use std::path::{Path, PathBuf};

use kinvi_core::inference::{FitConfig, Schedule};
use kinvi_core::kinematics::ModelDescription;
use kinvi_core::likelihood::PSI_INIT;
use kinvi_core::posterior::PosteriorConfig;
use kinvi_core::{Family, KinematicModel, ObservationSet, Rig};
use serde::{Deserialize, Serialize};

use super::{check_version, model, observations, read_text, rig};
use crate::error::{CliError, Result};

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_frequency_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_init: Option<f64>,
}

impl PosteriorOverrides {
    pub fn apply(&self, c: &mut PosteriorConfig) {
        if let Some(h) = &self.hidden {
            c.hidden = h.clone();
        }
        if let Some(r) = self.rank {
            c.rank = r;
        }
        if let Some(f) = self.min_frequency_hz {
            c.min_frequency_hz = f;
        }
        if let Some(d) = self.d_init {
            c.d_init = d;
        }
    }
}

/// Schedule fields left out keep their defaults. When `total_steps` is
/// given, milestones that are not given scale with it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood_enable_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_unfreeze_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrinsic_refine_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timesteps_per_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_weight: Option<f64>,
}

impl ScheduleOverrides {
    pub fn build(&self) -> Schedule {
        let mut s = Schedule::default();
        if let Some(t) = self.total_steps {
            s.rescale(t);
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { s.$f = v; })*};
        }
        set!(
            lr_start,
            lr_end,
            beta1,
            beta2,
            weight_decay,
            psi_lr,
            likelihood_enable_step,
            psi_unfreeze_step,
            extrinsic_refine_step,
            samples_per_step,
            timesteps_per_step,
            warmup_sigma,
            prior_weight
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub name: String,
    pub observations: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub version: u32,
    pub model: String,
    pub rig: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub family: Family,
    #[serde(default = "yes")]
    pub learn_beta: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_init: Option<[f64; 3]>,
    /// Starting mean for every time step (length K).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mean: Option<Vec<f64>>,
    /// Starting root pose `[tx, ty, tz, rx, ry, rz]`; other DoF start at
    /// their limit midpoints. Ignored when `initial_mean` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_root: Option<[f64; 6]>,
    #[serde(default)]
    pub posterior: PosteriorOverrides,
    #[serde(default)]
    pub schedule: ScheduleOverrides,
    #[serde(rename = "trial")]
    pub trials: Vec<TrialEntry>,
}

/// Command-line overrides for `fit` and `ablate`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub rank: Option<usize>,
    pub family: Option<Family>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
}

/// A session with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct Session {
    pub path: PathBuf,
    pub file: SessionFile,
    pub description: ModelDescription,
    pub model: KinematicModel,
    pub rig: Rig,
    pub trials: Vec<(String, ObservationSet)>,
    /// Raw bytes of the session and every file it references, for hashing.
    pub inputs: Vec<u8>,
}

impl SessionFile {
    pub fn fit_config(&self, model: &KinematicModel, overrides: &Overrides) -> Result<FitConfig> {
        let mut posterior = PosteriorConfig::default();
        self.posterior.apply(&mut posterior);
        if let Some(r) = overrides.rank {
            posterior.rank = r;
        }
        let mut schedule = self.schedule.build();
        if let Some(t) = overrides.steps {
            schedule.rescale(t);
        }
        schedule
            .validate()
            .map_err(|e| CliError::input(format!("schedule: {e}")))?;
        let k = model.pose_dim();
        let initial_mean = match (&self.initial_mean, &self.initial_root) {
            (Some(mu), _) => {
                if mu.len() != k {
                    return Err(CliError::input(format!(
                        "initial_mean: has {} entries, model has {k} DoF",
                        mu.len()
                    )));
                }
                Some(mu.clone())
            }
            (None, Some(root)) => {
                if k < 6 || model.bounds()[..6].iter().any(|b| b.is_some()) {
                    return Err(CliError::input(
                        "initial_root: model has no free root joint",
                    ));
                }
                let mut mu = model.neutral_pose();
                mu[..6].copy_from_slice(root);
                Some(mu)
            }
            (None, None) => None,
        };
        Ok(FitConfig {
            schedule,
            posterior,
            family: overrides.family.unwrap_or(self.family),
            psi_init: self.psi_init.unwrap_or(PSI_INIT),
            seed: overrides.seed.unwrap_or(self.seed),
            learn_beta: self.learn_beta,
            initial_mean,
        })
    }
}

pub fn load(path: &Path) -> Result<Session> {
    let text = read_text(path)?;
    let file: SessionFile = toml::from_str(&text).map_err(|e| CliError::at(path, e))?;
    check_version(path, file.version)?;
    if file.trials.is_empty() {
        return Err(CliError::at(
            path,
            "trial: a session needs at least one [[trial]]",
        ));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut inputs = text.into_bytes();
    let (description, model) = model::load(&file.model, base)?;
    if !file.model.starts_with("preset:") {
        inputs.extend(read_text(&base.join(&file.model))?.into_bytes());
    }
    let rig_path = base.join(&file.rig);
    inputs.extend(read_text(&rig_path)?.into_bytes());
    let rig = rig::load(&rig_path)?;
    let names: Vec<String> = rig.names().iter().map(|s| s.to_string()).collect();
    let mut trials = Vec::with_capacity(file.trials.len());
    for t in &file.trials {
        let p = base.join(&t.observations);
        let text = read_text(&p)?;
        let obs = observations::parse(&text, &p.display().to_string(), &names, model.site_count())?;
        inputs.extend(text.into_bytes());
        trials.push((t.name.clone(), obs));
    }
    Ok(Session {
        path: path.to_path_buf(),
        file,
        description,
        model,
        rig,
        trials,
        inputs,
    })
}
