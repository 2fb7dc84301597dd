//! Fit checkpoints: the complete session state as JSON. Observations are
//! embedded in their table format so a checkpoint is self-contained.

use std::path::Path;

use kinvi_core::inference::{FitConfig, Scene, SessionFit, Trial, EXTRINSIC_LEN};
use kinvi_core::kinematics::ModelDescription;
use kinvi_core::{KinematicModel, LikelihoodParams, PosteriorNet};
use serde::{Deserialize, Serialize};

use super::rig::RigFile;
use super::{check_version, observations, read_text, write_text, FORMAT_VERSION};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub name: String,
    pub duration: f64,
    pub params: Vec<f64>,
    pub observations: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelDescription,
    pub rig: RigFile,
    pub config: FitConfig,
    pub psi: [f64; 3],
    pub beta: Vec<f64>,
    pub extrinsics: Vec<[f64; EXTRINSIC_LEN]>,
    pub steps_done: usize,
    pub trials: Vec<TrialState>,
}

impl Checkpoint {
    pub fn from_fit(fit: &SessionFit, config: &FitConfig) -> Result<Self> {
        let Scene::Body { model, rig } = &fit.scene else {
            return Err(CliError::input("only body scenes can be checkpointed"));
        };
        Ok(Self {
            version: FORMAT_VERSION,
            model: model.description().clone(),
            rig: RigFile::from_rig(rig),
            config: FitConfig {
                family: fit.likelihood.family,
                ..config.clone()
            },
            psi: fit.likelihood.psi,
            beta: fit.beta.clone(),
            extrinsics: fit.extrinsics.clone(),
            steps_done: fit.steps_done,
            trials: fit
                .trials
                .iter()
                .map(|t| TrialState {
                    name: t.name.clone(),
                    duration: t.net.duration(),
                    params: t.net.params().to_vec(),
                    observations: observations::to_string(&t.observations),
                })
                .collect(),
        })
    }

    pub fn to_fit(&self) -> Result<SessionFit> {
        let bad = |m: String| CliError::input(format!("checkpoint: {m}"));
        let model =
            KinematicModel::from_description(&self.model).map_err(|e| bad(e.to_string()))?;
        let rig = self.rig.to_rig().map_err(|e| bad(e.to_string()))?;
        let names: Vec<String> = rig.names().iter().map(|s| s.to_string()).collect();
        let mut trials = Vec::with_capacity(self.trials.len());
        for t in &self.trials {
            let obs = observations::parse(
                &t.observations,
                &format!("checkpoint trial {:?}", t.name),
                &names,
                model.site_count(),
            )?;
            let net = PosteriorNet::from_parts(
                model.bounds(),
                self.config.posterior.clone(),
                t.duration,
                t.params.clone(),
            )
            .map_err(|e| bad(format!("trial {:?}: {e}", t.name)))?;
            trials.push(Trial {
                name: t.name.clone(),
                observations: obs,
                net,
            });
        }
        let likelihood = LikelihoodParams::new(self.psi, self.config.family);
        let mut fit = SessionFit::new(Scene::Body { model, rig }, likelihood, trials)
            .map_err(|e| bad(e.to_string()))?;
        if self.beta.len() != fit.beta.len() || self.extrinsics.len() != fit.extrinsics.len() {
            return Err(bad("beta or extrinsics have the wrong length".into()));
        }
        fit.beta = self.beta.clone();
        fit.extrinsics = self.extrinsics.clone();
        fit.steps_done = self.steps_done;
        Ok(fit)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    fn params_non_finite(&self) -> bool {
        let all = self
            .trials
            .iter()
            .flat_map(|t| t.params.iter())
            .chain(&self.beta)
            .chain(&self.psi)
            .chain(self.extrinsics.iter().flatten());
        all.into_iter().any(|x| !x.is_finite())
    }
}

pub fn write(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if ckpt.params_non_finite() {
        return Err(CliError::at(
            path,
            "refusing to write non-finite parameters",
        ));
    }
    write_text(path, &ckpt.to_json())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = read_text(path)?;
    let c: Checkpoint = serde_json::from_str(&text).map_err(|e| CliError::at(path, e))?;
    check_version(path, c.version)?;
    Ok(c)
}
