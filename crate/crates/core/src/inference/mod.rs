//! ELBO assembly and the optimization loop.
//!
//! A session shares one skeleton scale vector β, one likelihood ψ and one
//! camera rig across trials; every trial has its own posterior network.

mod elbo;
mod optim;
mod schedule;
mod trainer;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use elbo::{
    elbo_estimate, elbo_gradient, mean_reprojection, pose_log_prior, pose_log_prior_with,
    timestep_batch, ElboSpec, SessionGradient,
};
pub use optim::Adam;
pub use schedule::{Schedule, DEFAULT_TOTAL_STEPS};
pub use trainer::{fit, FitConfig, StepLog, Trainer};

use crate::camera::{CameraError, CameraModel, CameraPose, Rig};
use crate::gradcore::Ops;
use crate::kinematics::{JointBound, KinematicModel, ModelError};
use crate::likelihood::{LikelihoodParams, ObservationSet};
use crate::posterior::{PosteriorError, PosteriorMoments, PosteriorNet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// One-parameter toy: "camera" `c` observes `u = gain_c·θ + offset_c` of a
/// single unbounded DoF (and `v = 0`) through keypoint 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineScene {
    pub gains: Vec<f64>,
    pub offsets: Vec<f64>,
}

/// What maps a pose to predicted pixels.
#[derive(Debug, Clone, PartialEq)]
pub enum Scene {
    Body { model: KinematicModel, rig: Rig },
    Affine(AffineScene),
}

impl Scene {
    pub fn pose_dim(&self) -> usize {
        match self {
            Scene::Body { model, .. } => model.pose_dim(),
            Scene::Affine(_) => 1,
        }
    }

    pub fn bounds(&self) -> Vec<Option<JointBound>> {
        match self {
            Scene::Body { model, .. } => model.bounds().to_vec(),
            Scene::Affine(_) => vec![None],
        }
    }

    pub fn beta_len(&self) -> usize {
        match self {
            Scene::Body { model, .. } => model.beta_len(),
            Scene::Affine(_) => 0,
        }
    }

    pub fn camera_count(&self) -> usize {
        match self {
            Scene::Body { rig, .. } => rig.len(),
            Scene::Affine(a) => a.gains.len(),
        }
    }

    pub fn keypoint_count(&self) -> usize {
        match self {
            Scene::Body { model, .. } => model.site_count(),
            Scene::Affine(_) => 1,
        }
    }

    pub fn model(&self) -> Option<&KinematicModel> {
        match self {
            Scene::Body { model, .. } => Some(model),
            Scene::Affine(_) => None,
        }
    }

    pub fn rig(&self) -> Option<&Rig> {
        match self {
            Scene::Body { rig, .. } => Some(rig),
            Scene::Affine(_) => None,
        }
    }

    /// Predicted pixel of every keypoint in every camera, `None` when behind
    /// the camera. Indexed `[camera][keypoint]`.
    pub(crate) fn predict<O: Ops>(
        &self,
        o: &mut O,
        beta: &[O::V],
        theta: &[O::V],
        poses: &[CameraPose<O::V>],
        wanted: &[(usize, usize)],
    ) -> Result<Vec<Option<[O::V; 2]>>, ModelError> {
        match self {
            Scene::Body { model, rig } => {
                let sites = model.forward(o, beta, theta)?.sites;
                Ok(wanted
                    .iter()
                    .map(|&(c, j)| rig.cameras()[c].project_with(o, &poses[c], &sites[j]))
                    .collect())
            }
            Scene::Affine(a) => Ok(wanted
                .iter()
                .map(|&(c, _)| {
                    let u = o.linear(&[(theta[0], a.gains[c])], a.offsets[c]);
                    let v = o.constant(0.0);
                    Some([u, v])
                })
                .collect()),
        }
    }
}

/// One trial's data and posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub name: String,
    pub observations: ObservationSet,
    pub net: PosteriorNet,
}

impl Trial {
    /// Seconds since the trial's first frame for each frame.
    pub fn frame_times(&self) -> Vec<f64> {
        let t0 = self.observations.start_time();
        self.observations
            .frames()
            .iter()
            .map(|f| (f.time - t0).clamp(0.0, self.net.duration()))
            .collect()
    }
}

/// Number of extrinsic parameters per camera: rotation increment then
/// translation.
pub const EXTRINSIC_LEN: usize = 6;

/// Shared and per-trial state of a session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFit {
    pub scene: Scene,
    pub beta: Vec<f64>,
    pub likelihood: LikelihoodParams,
    /// Per camera: axis-angle increment on the calibrated rotation, then
    /// the translation. Empty for scenes without a rig.
    pub extrinsics: Vec<[f64; EXTRINSIC_LEN]>,
    pub trials: Vec<Trial>,
    pub steps_done: usize,
}

impl SessionFit {
    /// Fresh session: unit β, the given likelihood, untouched extrinsics.
    pub fn new(
        scene: Scene,
        likelihood: LikelihoodParams,
        trials: Vec<Trial>,
    ) -> Result<Self, FitError> {
        if trials.is_empty() {
            return Err(FitError::Config(
                "a session needs at least one trial".into(),
            ));
        }
        let beta = match &scene {
            Scene::Body { model, .. } => crate::kinematics::ScaleParams::identity(model).into_vec(),
            Scene::Affine(a) => {
                if a.gains.len() != a.offsets.len() || a.gains.is_empty() {
                    return Err(FitError::Config(
                        "affine scene needs matching, non-empty gains and offsets".into(),
                    ));
                }
                Vec::new()
            }
        };
        let extrinsics = match &scene {
            Scene::Body { rig, .. } => rig
                .cameras()
                .iter()
                .map(|c| {
                    let t = c.translation;
                    [0.0, 0.0, 0.0, t[0], t[1], t[2]]
                })
                .collect(),
            Scene::Affine(_) => Vec::new(),
        };
        for t in &trials {
            if t.observations.camera_names().len() != scene.camera_count() {
                return Err(FitError::Config(format!(
                    "trial {:?} has {} cameras, scene has {}",
                    t.name,
                    t.observations.camera_names().len(),
                    scene.camera_count()
                )));
            }
            if let Some(rig) = scene.rig() {
                if t.observations
                    .camera_names()
                    .iter()
                    .zip(rig.names())
                    .any(|(a, b)| a != b)
                {
                    return Err(FitError::Config(format!(
                        "trial {:?}: camera names differ from the rig",
                        t.name
                    )));
                }
            }
            if t.observations.keypoint_count() != scene.keypoint_count() {
                return Err(FitError::Config(format!(
                    "trial {:?} has {} keypoints, scene has {}",
                    t.name,
                    t.observations.keypoint_count(),
                    scene.keypoint_count()
                )));
            }
            if t.net.dim() != scene.pose_dim() {
                return Err(FitError::Config(format!(
                    "trial {:?}: posterior dimension mismatch",
                    t.name
                )));
            }
        }
        Ok(Self {
            scene,
            beta,
            likelihood,
            extrinsics,
            trials,
            steps_done: 0,
        })
    }

    /// Rig with the current extrinsic increments folded in.
    pub fn current_rig(&self) -> Option<Rig> {
        let rig = self.scene.rig()?;
        let mut out = rig.clone();
        for (i, (cam, e)) in rig.cameras().iter().zip(&self.extrinsics).enumerate() {
            if e[..3] == [0.0; 3] && e[3..] == cam.translation {
                continue;
            }
            let folded: CameraModel = cam.with_increment(&[e[0], e[1], e[2]], &[e[3], e[4], e[5]]);
            // A refined camera stays valid unless it diverged; keep the
            // calibrated one in that case.
            let _ = out.update_camera(i, folded);
        }
        Some(out)
    }

    /// Posterior moments at every observation frame of every trial.
    pub fn evaluate(&self) -> Result<Vec<Vec<PosteriorMoments>>, FitError> {
        self.trials
            .iter()
            .map(|t| {
                t.net
                    .evaluate_many(&t.frame_times())
                    .map_err(FitError::from)
            })
            .collect()
    }
}

/// Dense posterior evaluation at every observation frame.
pub fn evaluate_fit(fit: &SessionFit) -> Result<Vec<Vec<PosteriorMoments>>, FitError> {
    fit.evaluate()
}
