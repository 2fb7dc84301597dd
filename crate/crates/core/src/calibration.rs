//! Image-space predictive distributions and expected calibration error.
//!
//! The pose posterior is pushed through kinematics and projection to first
//! order; the resulting 2D spread plus the (clipped) likelihood width gives
//! an isotropic predictive scale per keypoint. Radial errors of a
//! calibrated isotropic Gaussian follow a Rayleigh law, so the ECE is the
//! mean gap between sorted Rayleigh PIT values and the uniform quantiles.

use alloc::string::String;
use alloc::vec::Vec;

use crate::camera::CameraModel;
use crate::gradcore::{Ops, Tape};
use crate::inference::{FitError, SessionFit};
use crate::kinematics::{KinematicModel, ModelError};
use crate::likelihood::{Observation, ObservationSet};
use crate::math;
use crate::posterior::PosteriorMoments;

pub const DEFAULT_CLIPS: [f64; 4] = [0.0, 1.0, 2.0, 5.0];
pub const DEFAULT_FRACTION: f64 = 0.05;
/// Fewest present observations [`select_pseudo_gt`] accepts.
pub const MIN_OBSERVATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("pseudo ground truth needs at least {MIN_OBSERVATIONS} present observations, got {0}")]
    TooFewObservations(usize),
    #[error("selection fraction must be in (0, 1], got {0}")]
    Fraction(f64),
    #[error("calibration needs a body scene with a camera rig")]
    NoRig,
    #[error("no usable keypoints")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Linearized image-space distribution of one keypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedKeypoint {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

/// Per-keypoint mean `project(forward(μ))` and covariance `J·Σ·Jᵀ` in
/// camera `cam`; `None` for keypoints behind the camera.
pub fn pushforward(
    moments: &PosteriorMoments,
    model: &KinematicModel,
    beta: &[f64],
    cam: &CameraModel,
) -> Result<Vec<Option<ProjectedKeypoint>>, ModelError> {
    let k = moments.dim();
    let sigma = moments.covariance();
    let mut tape = Tape::new();
    let theta = tape.inputs(&moments.mu);
    let b: Vec<_> = beta.iter().map(|&x| tape.constant(x)).collect();
    let frames = model.forward(&mut tape, &b, &theta)?;
    let pose = cam.pose(&mut tape);
    let projected: Vec<_> = frames
        .sites
        .iter()
        .map(|x| cam.project_with(&mut tape, &pose, x))
        .collect();
    let mut adj = Vec::new();
    let mut jac = [alloc::vec![0.0; k], alloc::vec![0.0; k]];
    let mut out = Vec::with_capacity(projected.len());
    for p in projected {
        let Some(p) = p else {
            out.push(None);
            continue;
        };
        for (row, v) in jac.iter_mut().zip(p) {
            tape.adjoints_into(v, &mut adj)
                .map_err(|e| ModelError::Schema {
                    path: "pushforward".into(),
                    message: alloc::format!("{e}"),
                })?;
            for (j, t) in row.iter_mut().zip(&theta) {
                *j = adj[t.index()];
            }
        }
        let mut cov = [[0.0; 2]; 2];
        for a in 0..2 {
            for c in 0..2 {
                let mut s = 0.0;
                for i in 0..k {
                    let ji = jac[a][i];
                    if ji == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        s += ji * sigma[(i, j)] * jac[c][j];
                    }
                }
                cov[a][c] = s;
            }
        }
        out.push(Some(ProjectedKeypoint {
            mean: [tape.value(p[0]), tape.value(p[1])],
            cov,
        }));
    }
    Ok(out)
}

/// How the two marginal spreads are combined into one isotropic scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleAveraging {
    /// Mean of the marginal variances.
    #[default]
    Variance,
    /// Mean of the marginal standard deviations, squared.
    StdDev,
}

/// `σ_kp = sqrt(avg(cov) + min(σ_like, σ_clip)²)`.
pub fn predictive_scale(
    cov: &[[f64; 2]; 2],
    sigma_like: f64,
    sigma_clip: f64,
    averaging: ScaleAveraging,
) -> f64 {
    let var = match averaging {
        ScaleAveraging::Variance => 0.5 * (cov[0][0] + cov[1][1]),
        ScaleAveraging::StdDev => {
            let s = 0.5 * (math::sqrt(cov[0][0].max(0.0)) + math::sqrt(cov[1][1].max(0.0)));
            s * s
        }
    };
    let l = sigma_like.min(sigma_clip).max(0.0);
    math::sqrt(var.max(0.0) + l * l)
}

/// The `fraction` of present observations with the lowest noise score, ties
/// broken by canonical (frame, camera, keypoint) order.
pub fn select_pseudo_gt(
    obs: &ObservationSet,
    fraction: f64,
) -> Result<Vec<Observation>, CalibrationError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CalibrationError::Fraction(fraction));
    }
    let mut present: Vec<Observation> = obs.present().copied().collect();
    if present.len() < MIN_OBSERVATIONS {
        return Err(CalibrationError::TooFewObservations(present.len()));
    }
    // Canonical order already holds; a stable sort keeps it among ties.
    present.sort_by(|a, b| a.score.total_cmp(&b.score));
    let n = math::ceil(fraction * present.len() as f64 - 1e-9).max(1.0) as usize;
    present.truncate(n.min(present.len()));
    Ok(present)
}

/// Rayleigh PIT of a radial error.
pub fn rayleigh_cdf(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        -libm::expm1(-err * err / (2.0 * scale * scale))
    } else if err > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ece {
    pub value: f64,
    /// Sorted PIT values `c̃_i` paired with `p_i = i/N`.
    pub curve: Vec<(f64, f64)>,
}

/// ECE of `(radial error, σ_kp)` pairs.
pub fn ece(pairs: &[(f64, f64)]) -> Ece {
    let mut c: Vec<f64> = pairs.iter().map(|&(e, s)| rayleigh_cdf(e, s)).collect();
    c.sort_by(f64::total_cmp);
    let n = c.len() as f64;
    let curve: Vec<(f64, f64)> = c
        .iter()
        .enumerate()
        .map(|(i, &ci)| (ci, (i + 1) as f64 / n))
        .collect();
    let value = if curve.is_empty() {
        0.0
    } else {
        curve.iter().map(|(ci, p)| (ci - p).abs()).sum::<f64>() / n
    };
    Ece { value, curve }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EceReport {
    pub clip: f64,
    pub ece: f64,
    pub n: usize,
    pub fraction: f64,
    pub curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EceOptions {
    pub clips: Vec<f64>,
    pub fraction: f64,
    pub averaging: ScaleAveraging,
}

impl Default for EceOptions {
    fn default() -> Self {
        Self {
            clips: DEFAULT_CLIPS.to_vec(),
            fraction: DEFAULT_FRACTION,
            averaging: ScaleAveraging::Variance,
        }
    }
}

/// Pseudo-ground-truth keypoint with its predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointPredictive {
    pub frame: usize,
    pub camera: usize,
    pub keypoint: usize,
    pub observed: [f64; 2],
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub sigma_like: f64,
}

impl KeypointPredictive {
    pub fn error(&self) -> f64 {
        let du = self.observed[0] - self.mean[0];
        let dv = self.observed[1] - self.mean[1];
        math::sqrt(du * du + dv * dv)
    }

    pub fn scale(&self, clip: f64, averaging: ScaleAveraging) -> f64 {
        predictive_scale(&self.cov, self.sigma_like, clip, averaging)
    }
}

/// Predictive distributions of one trial's pseudo-ground-truth keypoints.
pub fn trial_predictives(
    fit: &SessionFit,
    trial: usize,
    fraction: f64,
) -> Result<Vec<KeypointPredictive>, CalibrationError> {
    let model = fit.scene.model().ok_or(CalibrationError::NoRig)?;
    let rig = fit.current_rig().ok_or(CalibrationError::NoRig)?;
    let t = &fit.trials[trial];
    let selected = select_pseudo_gt(&t.observations, fraction)?;
    let times = t.frame_times();
    let mut out = Vec::with_capacity(selected.len());
    let mut cache: Option<(usize, usize, Vec<Option<ProjectedKeypoint>>)> = None;
    let mut by_frame = selected;
    // Group by (frame, camera) so each pushforward is computed once.
    by_frame.sort_by_key(|o| (o.frame, o.camera, o.keypoint));
    let mut moments: Option<(usize, PosteriorMoments)> = None;
    for o in by_frame {
        if moments.as_ref().map(|m| m.0) != Some(o.frame) {
            moments = Some((
                o.frame,
                t.net.evaluate(times[o.frame]).map_err(FitError::from)?,
            ));
        }
        let m = &moments.as_ref().unwrap().1;
        if cache.as_ref().map(|c| (c.0, c.1)) != Some((o.frame, o.camera)) {
            cache = Some((
                o.frame,
                o.camera,
                pushforward(m, model, &fit.beta, &rig.cameras()[o.camera])?,
            ));
        }
        if let Some(p) = cache.as_ref().unwrap().2[o.keypoint] {
            out.push(KeypointPredictive {
                frame: o.frame,
                camera: o.camera,
                keypoint: o.keypoint,
                observed: o.y,
                mean: p.mean,
                cov: p.cov,
                sigma_like: fit.likelihood.sigma_of_score(o.score),
            });
        }
    }
    Ok(out)
}

fn reports(preds: &[KeypointPredictive], options: &EceOptions) -> Vec<EceReport> {
    options
        .clips
        .iter()
        .map(|&clip| {
            let pairs: Vec<(f64, f64)> = preds
                .iter()
                .map(|p| (p.error(), p.scale(clip, options.averaging)))
                .collect();
            let e = ece(&pairs);
            EceReport {
                clip,
                ece: e.value,
                n: pairs.len(),
                fraction: options.fraction,
                curve: e.curve,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionEce {
    pub per_trial: Vec<(String, Vec<EceReport>)>,
    pub pooled: Vec<EceReport>,
}

/// ECE per clip for every trial and pooled over trials.
pub fn ece_report(fit: &SessionFit, options: &EceOptions) -> Result<SessionEce, CalibrationError> {
    let mut all = Vec::new();
    let mut per_trial = Vec::with_capacity(fit.trials.len());
    for (i, t) in fit.trials.iter().enumerate() {
        let preds = trial_predictives(fit, i, options.fraction)?;
        per_trial.push((t.name.clone(), reports(&preds, options)));
        all.extend(preds);
    }
    if all.is_empty() {
        return Err(CalibrationError::Empty);
    }
    Ok(SessionEce {
        per_trial,
        pooled: reports(&all, options),
    })
}
