//! Synthetic sessions: ground-truth trajectories, camera rigs and
//! score-correlated keypoint noise.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Intrinsics, Rig};
use crate::inference::AffineScene;
use crate::kinematics::{KinematicModel, ScaleParams};
use crate::likelihood::{Family, Frame, Observation, ObservationSet};
use crate::math;
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },
}

fn config_err(field: impl Into<String>, message: impl Into<String>) -> SynthError {
    SynthError::Config {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RigLayout {
    #[default]
    Ring,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RigSpec {
    pub layout: RigLayout,
    pub cameras: usize,
    /// Distance from the target (m).
    pub radius: f64,
    pub height: f64,
    pub target: [f64; 3],
    pub image_size: [u32; 2],
    pub focal_px: f64,
    pub distortion: [f64; 5],
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            layout: RigLayout::Ring,
            cameras: 8,
            radius: 4.5,
            height: 1.4,
            target: [0.0, 0.0, 0.9],
            image_size: [1280, 720],
            focal_px: 1000.0,
            distortion: [-0.05, 0.01, 0.0, 0.0, 0.0],
        }
    }
}

impl RigSpec {
    pub fn build(&self) -> Result<Rig, SynthError> {
        if self.cameras == 0 {
            return Err(config_err("rig.cameras", "at least one camera is required"));
        }
        if !(self.radius > 0.0) {
            return Err(config_err("rig.radius", "must be positive"));
        }
        let intr = Intrinsics {
            fx: self.focal_px,
            fy: self.focal_px,
            cx: 0.5 * self.image_size[0] as f64,
            cy: 0.5 * self.image_size[1] as f64,
        };
        let n = self.cameras;
        let cams = (0..n)
            .map(|i| {
                let eye = match self.layout {
                    RigLayout::Ring => {
                        let a = TAU * i as f64 / n as f64 + 0.25 * PI;
                        [
                            self.target[0] + self.radius * math::cos(a),
                            self.target[1] + self.radius * math::sin(a),
                            self.height,
                        ]
                    }
                    RigLayout::Linear => {
                        let span = if n > 1 {
                            i as f64 / (n - 1) as f64 - 0.5
                        } else {
                            0.0
                        };
                        [
                            self.target[0] + 2.0 * span * self.radius * 0.5,
                            self.target[1] + self.radius,
                            self.height,
                        ]
                    }
                };
                let mut c = CameraModel::look_at(
                    &format!("cam{i}"),
                    eye,
                    self.target,
                    [0.0, 0.0, 1.0],
                    intr,
                    self.image_size[0],
                    self.image_size[1],
                );
                c.distortion = self.distortion;
                c
            })
            .collect();
        Rig::new(cams, vec![false; n]).map_err(|e| config_err("rig", e.to_string()))
    }
}

/// `center + rate·t + amplitude·sin(2π·f·t + phase)` for one DoF.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct JointMotion {
    pub dof: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub center: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub rate: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub amplitude: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub frequency_hz: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub phase: f64,
}

impl JointMotion {
    pub fn value(&self, t: f64, extra_phase: f64) -> f64 {
        self.center
            + self.rate * t
            + self.amplitude * math::sin(TAU * self.frequency_hz * t + self.phase + extra_phase)
    }
}

/// Noise family of the generator. The radial families draw the error
/// magnitude from the matching likelihood family with a uniform direction;
/// `Gaussian` draws an isotropic 2D normal with per-axis scale σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseFamily {
    #[default]
    Exponential,
    HalfCauchy,
    HalfNormal,
    Gaussian,
}

impl NoiseFamily {
    pub fn radial_family(&self) -> Option<Family> {
        match self {
            NoiseFamily::Exponential => Some(Family::Exponential),
            NoiseFamily::HalfCauchy => Some(Family::HalfCauchy),
            NoiseFamily::HalfNormal => Some(Family::HalfNormal),
            NoiseFamily::Gaussian => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    /// `σ_true(s) = c₀ + c₁·s + c₂·s²` (px).
    pub sigma: [f64; 3],
    /// Scores are uniform on `[0, score_max]`.
    pub score_max: f64,
    /// Scale of the v error relative to u; 1 is isotropic.
    pub anisotropy: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            family: NoiseFamily::Exponential,
            sigma: [1.0, 2.0, 0.0],
            score_max: 2.0,
            anisotropy: 1.0,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            sigma: [0.0; 3],
            ..Self::default()
        }
    }

    pub fn sigma_true(&self, s: f64) -> f64 {
        self.sigma[0] + self.sigma[1] * s + self.sigma[2] * s * s
    }

    /// Error vector for score `s`.
    pub fn draw<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> [f64; 2] {
        let sigma = self.sigma_true(s);
        let e = match self.family.radial_family() {
            Some(f) => {
                let p: f64 = rng.random();
                let r = if sigma > 0.0 {
                    f.quantile(p, sigma)
                } else {
                    0.0
                };
                let a: f64 = rng.random::<f64>() * TAU;
                [r * math::cos(a), r * math::sin(a)]
            }
            None => {
                let x: f64 = StandardNormal.sample(rng);
                let y: f64 = StandardNormal.sample(rng);
                [sigma * x, sigma * y]
            }
        };
        [e[0], e[1] * self.anisotropy]
    }
}

/// Camera `camera` sees nothing during `[start_s, end_s)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OcclusionWindow {
    pub camera: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SynthConfig {
    pub rig: RigSpec,
    /// Unlisted DoF stay at their limit midpoint (root DoF at 0).
    pub trajectory: Vec<JointMotion>,
    pub duration_s: f64,
    pub fps: f64,
    pub trials: usize,
    pub noise: NoiseSpec,
    pub occlusions: Vec<OcclusionWindow>,
    /// Additional radial noise (mean magnitude, px) on top of `noise`.
    pub extra_noise_px: f64,
    /// Keep only these cameras; all when empty.
    pub cameras: Vec<String>,
    /// Drop keypoints that project outside the image.
    pub clip_to_image: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rig: RigSpec::default(),
            trajectory: walking_trajectory(),
            duration_s: 4.0,
            fps: 50.0,
            trials: 1,
            noise: NoiseSpec::default(),
            occlusions: Vec::new(),
            extra_noise_px: 0.0,
            cameras: Vec::new(),
            clip_to_image: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn frame_count(&self) -> usize {
        math::floor(self.duration_s * self.fps + 1e-9) as usize
    }
}

/// Walking-like motion for the bundled small humanoid: the pelvis crosses
/// two meters along x while hips and knees swing at 1 Hz in antiphase.
pub fn walking_trajectory() -> Vec<JointMotion> {
    let m = |dof: &str, center: f64, rate: f64, amplitude: f64, frequency_hz: f64, phase: f64| {
        JointMotion {
            dof: dof.into(),
            center,
            rate,
            amplitude,
            frequency_hz,
            phase,
        }
    };
    vec![
        m("pelvis_tx", -1.0, 0.5, 0.0, 0.0, 0.0),
        m("pelvis_ty", 0.0, 0.0, 0.03, 1.0, 0.0),
        m("pelvis_tz", 0.93, 0.0, 0.02, 2.0, 0.5),
        m("pelvis_rx", 0.0, 0.0, 0.05, 1.0, 0.3),
        m("pelvis_ry", 0.05, 0.0, 0.03, 2.0, 0.0),
        m("pelvis_rz", 0.0, 0.0, 0.12, 1.0, 1.0),
        m("lumbar", 0.1, 0.0, 0.1, 2.0, 0.2),
        m("neck", 0.0, 0.0, 0.15, 0.5, 0.0),
        m("hip_r_x", 0.0, 0.0, 0.08, 1.0, 0.0),
        m("hip_r_y", -0.2, 0.0, 0.4, 1.0, 0.0),
        m("hip_r_z", 0.0, 0.0, 0.1, 1.0, 0.5),
        m("knee_r", 0.6, 0.0, 0.5, 1.0, 1.2),
        m("hip_l_x", 0.0, 0.0, 0.08, 1.0, PI),
        m("hip_l_y", -0.2, 0.0, 0.4, 1.0, PI),
        m("hip_l_z", 0.0, 0.0, 0.1, 1.0, 0.5 + PI),
        m("knee_l", 0.6, 0.0, 0.5, 1.0, 1.2 + PI),
    ]
}

/// Slow sinusoids on every bounded DoF at 30% of its half range, with the
/// root standing at `root_height`.
pub fn generic_trajectory(model: &KinematicModel, root_height: f64) -> Vec<JointMotion> {
    let mut out = Vec::new();
    for (k, (name, b)) in model.dof_names().iter().zip(model.bounds()).enumerate() {
        let (center, amplitude) = match b {
            None if k == 2 => (root_height, 0.02),
            None => (0.0, 0.05),
            Some(b) => (b.mid(), 0.3 * b.half_range()),
        };
        out.push(JointMotion {
            dof: name.clone(),
            center,
            rate: 0.0,
            amplitude,
            frequency_hz: 0.3 + 0.1 * (k % 7) as f64,
            phase: 0.9 * k as f64,
        });
    }
    out
}

/// One generated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrial {
    pub name: String,
    pub observations: ObservationSet,
    /// Ground-truth pose at every frame of `observations`.
    pub poses: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rig: Rig,
    pub beta: Vec<f64>,
    pub trials: Vec<SynthTrial>,
}

/// Ground-truth poses of trial `trial` at `times`.
pub fn trajectory_poses(
    model: &KinematicModel,
    motions: &[JointMotion],
    trial: usize,
    times: &[f64],
) -> Result<Vec<Vec<f64>>, SynthError> {
    let names = model.dof_names();
    let mut index = Vec::with_capacity(motions.len());
    for (i, m) in motions.iter().enumerate() {
        let k = names.iter().position(|n| n == &m.dof).ok_or_else(|| {
            config_err(
                format!("trajectory[{i}].dof"),
                format!("unknown DoF {:?}", m.dof),
            )
        })?;
        index.push(k);
    }
    let base: Vec<f64> = model
        .bounds()
        .iter()
        .map(|b| b.map_or(0.0, |b| b.mid()))
        .collect();
    let extra = 0.7 * trial as f64;
    let mut poses = Vec::with_capacity(times.len());
    for &t in times {
        let mut theta = base.clone();
        for (m, &k) in motions.iter().zip(&index) {
            theta[k] = m.value(t, extra);
        }
        let v = model
            .joint_limit_violation(&theta)
            .map_err(|e| config_err("trajectory", e.to_string()))?;
        if let Some(k) = v.iter().position(|&x| x > 0.0) {
            return Err(config_err(
                "trajectory",
                format!("DoF {} leaves its limits at t={t} ({})", names[k], theta[k]),
            ));
        }
        poses.push(theta);
    }
    Ok(poses)
}

/// Generates every trial of `config` for `model`.
pub fn generate(config: &SynthConfig, model: &KinematicModel) -> Result<Dataset, SynthError> {
    if !(config.fps > 0.0 && config.fps.is_finite()) {
        return Err(config_err(
            "fps",
            format!("must be positive, got {}", config.fps),
        ));
    }
    if !(config.duration_s > 0.0) {
        return Err(config_err("duration_s", "must be positive"));
    }
    if config.trials == 0 {
        return Err(config_err("trials", "must be at least 1"));
    }
    if !(config.extra_noise_px >= 0.0) {
        return Err(config_err("extra_noise_px", "must be nonnegative"));
    }
    if !(config.noise.score_max >= 0.0) {
        return Err(config_err("noise.score_max", "must be nonnegative"));
    }
    let full_rig = config.rig.build()?;
    let rig = if config.cameras.is_empty() {
        full_rig
    } else {
        let names: Vec<&str> = config.cameras.iter().map(|s| s.as_str()).collect();
        full_rig
            .subset(&names)
            .map_err(|e| config_err("cameras", e.to_string()))?
    };
    for (i, w) in config.occlusions.iter().enumerate() {
        if rig.index_of(&w.camera).is_none() {
            return Err(config_err(
                format!("occlusions[{i}].camera"),
                format!("unknown camera {:?}", w.camera),
            ));
        }
    }
    let beta = ScaleParams::identity(model).into_vec();
    let n = config.frame_count();
    if n < 2 {
        return Err(config_err("duration_s", "needs at least two frames"));
    }
    let times: Vec<f64> = (0..n).map(|i| i as f64 / config.fps).collect();
    let names: Vec<String> = rig.names().iter().map(|s| s.to_string()).collect();
    let mut trials = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let poses = trajectory_poses(model, &config.trajectory, trial, &times)?;
        let mut frames = Vec::with_capacity(n);
        for (fi, (theta, &t)) in poses.iter().zip(&times).enumerate() {
            let sites = model
                .markers(&beta, theta)
                .map_err(|e| config_err("model", e.to_string()))?;
            let mut obs = Vec::new();
            for (c, cam) in rig.cameras().iter().enumerate() {
                if config
                    .occlusions
                    .iter()
                    .any(|w| w.camera == cam.name && t >= w.start_s && t < w.end_s)
                {
                    continue;
                }
                let mut r = rng::stream(config.seed, &[trial as u64, fi as u64, c as u64]);
                for (j, x) in sites.iter().enumerate() {
                    // Draw regardless of visibility so streams stay aligned.
                    let s: f64 = r.random::<f64>() * config.noise.score_max;
                    let e = config.noise.draw(s, &mut r);
                    let Some(y) = cam.project(x) else { continue };
                    if config.clip_to_image
                        && !(y[0] >= 0.0
                            && y[0] < cam.width as f64
                            && y[1] >= 0.0
                            && y[1] < cam.height as f64)
                    {
                        continue;
                    }
                    obs.push(Observation {
                        frame: fi,
                        camera: c,
                        keypoint: j,
                        y: [y[0] + e[0], y[1] + e[1]],
                        score: s,
                        present: true,
                    });
                }
            }
            frames.push(Frame {
                index: fi as u64,
                time: t,
                observations: obs,
            });
        }
        let set = ObservationSet::new(names.clone(), model.site_count(), frames)
            .map_err(|e| config_err("observations", e.to_string()))?;
        let set = inject_noise(
            &set,
            config.extra_noise_px,
            rng::mix64(config.seed ^ (trial as u64 + 1)),
        );
        trials.push(SynthTrial {
            name: format!("trial{trial}"),
            observations: set,
            poses,
        });
    }
    Ok(Dataset { rig, beta, trials })
}

/// Adds radial noise with uniform direction and exponentially distributed
/// magnitude of mean `extra_px`; scores are untouched.
pub fn inject_noise(obs: &ObservationSet, extra_px: f64, seed: u64) -> ObservationSet {
    if extra_px == 0.0 {
        return obs.clone();
    }
    let mut r = rng::stream(seed, &[0x494e_4a45]);
    obs.map_observations(|o| {
        let p: f64 = r.random();
        let a: f64 = r.random::<f64>() * TAU;
        if !o.present {
            return *o;
        }
        let m = Family::Exponential.quantile(p, extra_px);
        Observation {
            y: [o.y[0] + m * math::cos(a), o.y[1] + m * math::sin(a)],
            ..*o
        }
    })
}

/// Restricts observations and rig to `names`. With
/// `require_joint_visibility`, only frames seen by every retained camera
/// are kept.
pub fn subset_cameras(
    obs: &ObservationSet,
    rig: &Rig,
    names: &[&str],
    require_joint_visibility: bool,
) -> Result<(ObservationSet, Rig), SynthError> {
    if require_joint_visibility && names.len() < 2 {
        return Err(config_err(
            "cameras",
            "joint visibility needs at least two cameras",
        ));
    }
    let sub_rig = rig
        .subset(names)
        .map_err(|e| config_err("cameras", e.to_string()))?;
    let keep: Vec<usize> = names
        .iter()
        .map(|n| obs.camera_names().iter().position(|c| c == n))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| config_err("cameras", "camera missing from observations"))?;
    let sub = obs
        .select(names, |f| {
            !require_joint_visibility
                || keep
                    .iter()
                    .all(|&c| f.observations.iter().any(|o| o.present && o.camera == c))
        })
        .map_err(|e| config_err("cameras", e.to_string()))?;
    if sub.present_count() == 0 {
        return Err(config_err("cameras", "no observations left"));
    }
    Ok((sub, sub_rig))
}

/// Affine toy session: `θ(t) = theta0 + theta_amp·sin(2π·t/duration)`
/// observed by each "camera" as `u = gain·θ + offset + N(0, σ²)`, `v = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineToy {
    pub gains: Vec<f64>,
    pub offsets: Vec<f64>,
    pub sigma: f64,
    pub frames: usize,
    pub fps: f64,
    pub theta0: f64,
    pub theta_amp: f64,
    pub seed: u64,
}

impl Default for AffineToy {
    fn default() -> Self {
        Self {
            gains: vec![1.0, 2.0, 0.5, 1.5],
            offsets: vec![0.0, 3.0, -1.0, 0.5],
            sigma: 0.5,
            frames: 8,
            fps: 4.0,
            theta0: 2.0,
            theta_amp: 0.5,
            seed: 0,
        }
    }
}

impl AffineToy {
    pub fn scene(&self) -> AffineScene {
        AffineScene {
            gains: self.gains.clone(),
            offsets: self.offsets.clone(),
        }
    }

    pub fn generate(&self) -> Result<(ObservationSet, Vec<f64>), SynthError> {
        if self.gains.len() != self.offsets.len() || self.gains.is_empty() {
            return Err(config_err(
                "gains",
                "gains and offsets must be non-empty and equally long",
            ));
        }
        if self.frames < 2 || !(self.fps > 0.0) {
            return Err(config_err(
                "frames",
                "need at least two frames and positive fps",
            ));
        }
        let duration = (self.frames - 1) as f64 / self.fps;
        let mut r = rng::stream(self.seed, &[0x4146_4649]);
        let mut truth = Vec::with_capacity(self.frames);
        let frames = (0..self.frames)
            .map(|i| {
                let t = i as f64 / self.fps;
                let theta = self.theta0 + self.theta_amp * math::sin(TAU * t / duration);
                truth.push(theta);
                let observations = self
                    .gains
                    .iter()
                    .zip(&self.offsets)
                    .enumerate()
                    .map(|(c, (a, b))| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        Observation {
                            frame: i,
                            camera: c,
                            keypoint: 0,
                            y: [a * theta + b + self.sigma * z, 0.0],
                            score: 0.0,
                            present: true,
                        }
                    })
                    .collect();
                Frame {
                    index: i as u64,
                    time: t,
                    observations,
                }
            })
            .collect();
        let names = (0..self.gains.len()).map(|c| format!("axis{c}")).collect();
        let set =
            ObservationSet::new(names, 1, frames).map_err(|e| config_err("toy", e.to_string()))?;
        Ok((set, truth))
    }

    /// Exact posterior `(mean, std)` per frame under a flat prior.
    pub fn analytic_posterior(&self, obs: &ObservationSet) -> Vec<(f64, f64)> {
        let saa: f64 = self.gains.iter().map(|a| a * a).sum();
        obs.frames()
            .iter()
            .map(|f| {
                let num: f64 = f
                    .observations
                    .iter()
                    .map(|o| self.gains[o.camera] * (o.y[0] - self.offsets[o.camera]))
                    .sum();
                (num / saa, self.sigma / math::sqrt(saa))
            })
            .collect()
    }
}
