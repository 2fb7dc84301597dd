use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use super::{FitError, Scene, SessionFit, EXTRINSIC_LEN};
use crate::camera::CameraPose;
use crate::gradcore::{AdError, Eval, Op, Ops, Tape};
use crate::kinematics::JointBound;
use crate::likelihood::{keypoint_loglik_with, sigma_with};
use crate::math;
use crate::posterior::{entropy_with, sample_with};
use crate::rng;

const EPS_STREAM: u64 = 0x4550_5331;

/// What one ELBO estimate covers and how it is drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboSpec {
    /// Frame positions within the trial.
    pub frames: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Optimizer step; part of the noise stream key.
    pub step: u64,
    /// Use σ_ψ(s) for keypoints; otherwise a fixed `warmup_sigma`.
    pub likelihood_enabled: bool,
    /// Treat extrinsics of cameras in the refine mask as parameters.
    pub refine_extrinsics: bool,
    pub warmup_sigma: f64,
    pub prior_weight: f64,
}

/// ELBO value with its gradient (ascent direction) for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionGradient {
    pub elbo: f64,
    /// Mean entropy over the batch timesteps.
    pub entropy: f64,
    pub phi: Vec<f64>,
    pub psi: [f64; 3],
    pub beta: Vec<f64>,
    pub extrinsics: Vec<[f64; EXTRINSIC_LEN]>,
    /// Reprojection error of the posterior mean summed over present,
    /// in-front observations of the batch, and their count.
    pub reproj_sum: f64,
    pub reproj_count: usize,
}

/// `−λ·Σ_k excess_k²` over bounded DoF.
pub fn pose_log_prior(bounds: &[Option<JointBound>], theta: &[f64], weight: f64) -> f64 {
    pose_log_prior_with(&mut Eval, bounds, theta, weight)
}

pub fn pose_log_prior_with<O: Ops>(
    o: &mut O,
    bounds: &[Option<JointBound>],
    theta: &[O::V],
    weight: f64,
) -> O::V {
    let mut value = 0.0;
    let mut parts = Vec::new();
    for (b, &x) in bounds.iter().zip(theta) {
        if let Some(b) = b {
            let xv = o.val(x);
            let e = b.excess(xv);
            if e > 0.0 {
                value -= weight * e * e;
                let sign = if xv > b.upper { 1.0 } else { -1.0 };
                parts.push((x, -2.0 * weight * e * sign));
            }
        }
    }
    o.custom(Op::Fused("pose_prior"), value, &parts)
}

/// Frame positions for one step: all frames when they fit in the batch,
/// otherwise `batch` evenly spaced positions shifted by `phase ∈ [0, 1)`.
pub fn timestep_batch(n_frames: usize, batch: usize, phase: f64) -> Vec<usize> {
    if n_frames <= batch {
        return (0..n_frames).collect();
    }
    (0..batch)
        .map(|k| {
            (math::floor((k as f64 + phase) * n_frames as f64 / batch as f64) as usize)
                .min(n_frames - 1)
        })
        .collect()
}

struct Shared<V> {
    beta: Vec<V>,
    psi: [V; 3],
    poses: Vec<CameraPose<V>>,
    warmup_sigma: V,
}

fn shared_eval(fit: &SessionFit, spec: &ElboSpec) -> Shared<f64> {
    let o = &mut Eval;
    let poses = camera_poses(o, fit, spec, &fit.extrinsics);
    Shared {
        beta: fit.beta.clone(),
        psi: fit.likelihood.psi,
        poses,
        warmup_sigma: spec.warmup_sigma,
    }
}

fn camera_poses<O: Ops>(
    o: &mut O,
    fit: &SessionFit,
    spec: &ElboSpec,
    ext: &[[O::V; EXTRINSIC_LEN]],
) -> Vec<CameraPose<O::V>> {
    match &fit.scene {
        Scene::Body { rig, .. } => rig
            .cameras()
            .iter()
            .enumerate()
            .map(|(c, cam)| {
                let e = &ext[c];
                if spec.refine_extrinsics && rig.refine_mask()[c] {
                    cam.pose_with_increment(o, [e[0], e[1], e[2]], [e[3], e[4], e[5]])
                } else {
                    let ev = [o.val(e[0]), o.val(e[1]), o.val(e[2])];
                    let tv = [o.val(e[3]), o.val(e[4]), o.val(e[5])];
                    if ev == [0.0; 3] && tv == cam.translation {
                        cam.pose(o)
                    } else {
                        let d = ev.map(|x| o.constant(x));
                        let t = tv.map(|x| o.constant(x));
                        cam.pose_with_increment(o, d, t)
                    }
                }
            })
            .collect(),
        Scene::Affine(_) => Vec::new(),
    }
}

/// Sum over the batch of entropy plus the sample-averaged log joint.
fn trial_elbo<O: Ops>(
    o: &mut O,
    fit: &SessionFit,
    trial: usize,
    spec: &ElboSpec,
    raw: &[O::V],
    shared: &Shared<O::V>,
) -> Result<(O::V, f64), FitError> {
    let t = &fit.trials[trial];
    let net = &t.net;
    let (k, r, w) = (net.dim(), net.rank(), net.output_width());
    let bounds = net.bounds();
    let mut terms = Vec::with_capacity(spec.frames.len());
    let mut entropy_sum = 0.0;
    let inv_n = 1.0 / spec.samples as f64;
    let mut eps1 = vec![0.0; k];
    let mut eps2 = vec![0.0; r];
    for (b, &fi) in spec.frames.iter().enumerate() {
        let frame = &t.observations.frames()[fi];
        let m = net.moments_with(o, &raw[b * w..(b + 1) * w]);
        let h = entropy_with(o, &m.d, &m.u, r);
        entropy_sum += o.val(h);
        let present: Vec<_> = frame.observations.iter().filter(|ob| ob.present).collect();
        let wanted: Vec<(usize, usize)> =
            present.iter().map(|ob| (ob.camera, ob.keypoint)).collect();
        let sigmas: Vec<O::V> = present
            .iter()
            .map(|ob| {
                if spec.likelihood_enabled {
                    sigma_with(o, &shared.psi, ob.score)
                } else {
                    shared.warmup_sigma
                }
            })
            .collect();
        let mut stream = rng::stream(spec.seed, &[spec.step, trial as u64, fi as u64, EPS_STREAM]);
        let mut parts = Vec::with_capacity(spec.samples + 1);
        parts.push((h, 1.0));
        let mut lls = Vec::with_capacity(present.len() + 1);
        for _ in 0..spec.samples {
            for e in eps1.iter_mut() {
                *e = StandardNormal.sample(&mut stream);
            }
            for e in eps2.iter_mut() {
                *e = StandardNormal.sample(&mut stream);
            }
            let theta = sample_with(o, &m.mu, &m.d, &m.u, r, &eps1, &eps2);
            lls.clear();
            lls.push(pose_log_prior_with(o, bounds, &theta, spec.prior_weight));
            let preds = fit
                .scene
                .predict(o, &shared.beta, &theta, &shared.poses, &wanted)?;
            for ((ob, pred), &sigma) in present.iter().zip(preds).zip(&sigmas) {
                if let Some(p) = pred {
                    lls.push(keypoint_loglik_with(
                        o,
                        fit.likelihood.family,
                        p,
                        ob.y,
                        sigma,
                    ));
                }
            }
            let joint = o.sum(&lls);
            parts.push((joint, inv_n));
        }
        terms.push(o.linear(&parts, 0.0));
    }
    Ok((o.sum(&terms), entropy_sum))
}

fn times_of(fit: &SessionFit, trial: usize, frames: &[usize]) -> Result<Vec<f64>, FitError> {
    let all = fit.trials[trial].frame_times();
    frames
        .iter()
        .map(|&f| {
            all.get(f)
                .copied()
                .ok_or_else(|| FitError::Config(format!("frame position {f} out of range")))
        })
        .collect()
}

fn check_spec(fit: &SessionFit, trial: usize, spec: &ElboSpec) -> Result<(), FitError> {
    if trial >= fit.trials.len() {
        return Err(FitError::Config(format!("no trial {trial}")));
    }
    if spec.frames.is_empty() || spec.samples == 0 {
        return Err(FitError::Config(
            "ELBO batch needs at least one frame and one sample".into(),
        ));
    }
    Ok(())
}

/// Monte Carlo ELBO for the given frames of one trial; deterministic for a
/// fixed spec.
pub fn elbo_estimate(fit: &SessionFit, trial: usize, spec: &ElboSpec) -> Result<f64, FitError> {
    check_spec(fit, trial, spec)?;
    let trace = fit.trials[trial]
        .net
        .forward(&times_of(fit, trial, &spec.frames)?)?;
    let shared = shared_eval(fit, spec);
    let (v, _) = trial_elbo(&mut Eval, fit, trial, spec, trace.output(), &shared)?;
    if !v.is_finite() {
        return Err(FitError::Divergence {
            step: spec.step as usize,
            detail: format!("non-finite ELBO {v}"),
        });
    }
    Ok(v)
}

/// The same estimate as [`elbo_estimate`] together with its gradient with
/// respect to the trial's network, ψ, β and the extrinsics.
pub fn elbo_gradient(
    fit: &SessionFit,
    trial: usize,
    spec: &ElboSpec,
    tape: &mut Tape,
) -> Result<SessionGradient, FitError> {
    check_spec(fit, trial, spec)?;
    let net = &fit.trials[trial].net;
    let trace = net.forward(&times_of(fit, trial, &spec.frames)?)?;
    tape.clear();
    let raw = tape.inputs(trace.output());
    let psi_vars = tape.inputs(&fit.likelihood.psi);
    let psi = [psi_vars[0], psi_vars[1], psi_vars[2]];
    let beta = tape.inputs(&fit.beta);
    let ext: Vec<[_; EXTRINSIC_LEN]> = fit
        .extrinsics
        .iter()
        .map(|e| core::array::from_fn(|i| tape.input(e[i])))
        .collect();
    let poses = camera_poses(tape, fit, spec, &ext);
    let warmup_sigma = tape.constant(spec.warmup_sigma);
    let shared = Shared {
        beta: beta.clone(),
        psi,
        poses,
        warmup_sigma,
    };
    let (out, entropy_sum) = trial_elbo(tape, fit, trial, spec, &raw, &shared)?;
    let elbo = tape.value(out);
    let adj = tape.adjoints(out).map_err(|e| divergence(spec, e))?;
    if !elbo.is_finite() {
        return Err(FitError::Divergence {
            step: spec.step as usize,
            detail: format!("non-finite ELBO {elbo}"),
        });
    }
    let raw_adj: Vec<f64> = raw.iter().map(|v| adj[v.index()]).collect();
    let phi = net.backward(&trace, &raw_adj);
    let (reproj_sum, reproj_count) =
        reprojection_at_mean(fit, trial, &spec.frames, trace.output(), spec)?;
    Ok(SessionGradient {
        elbo,
        entropy: entropy_sum / spec.frames.len() as f64,
        phi,
        psi: psi.map(|v| adj[v.index()]),
        beta: beta.iter().map(|v| adj[v.index()]).collect(),
        extrinsics: ext.iter().map(|e| e.map(|v| adj[v.index()])).collect(),
        reproj_sum,
        reproj_count,
    })
}

fn divergence(spec: &ElboSpec, e: AdError) -> FitError {
    FitError::Divergence {
        step: spec.step as usize,
        detail: format!("{e}"),
    }
}

fn reprojection_at_mean(
    fit: &SessionFit,
    trial: usize,
    frames: &[usize],
    raw: &[f64],
    spec: &ElboSpec,
) -> Result<(f64, usize), FitError> {
    let t = &fit.trials[trial];
    let w = t.net.output_width();
    let shared = shared_eval(fit, spec);
    let (mut sum, mut count) = (0.0, 0);
    for (b, &fi) in frames.iter().enumerate() {
        let m = t.net.moments_from_raw(&raw[b * w..(b + 1) * w]);
        let frame = &t.observations.frames()[fi];
        let present: Vec<_> = frame.observations.iter().filter(|o| o.present).collect();
        let wanted: Vec<(usize, usize)> = present.iter().map(|o| (o.camera, o.keypoint)).collect();
        let preds = fit
            .scene
            .predict(&mut Eval, &shared.beta, &m.mu, &shared.poses, &wanted)?;
        for (o, p) in present.iter().zip(preds) {
            if let Some(p) = p {
                sum += math::sqrt(
                    (p[0] - o.y[0]) * (p[0] - o.y[0]) + (p[1] - o.y[1]) * (p[1] - o.y[1]),
                );
                count += 1;
            }
        }
    }
    Ok((sum, count))
}

/// Mean reprojection error (px) of the posterior mean over all frames of a
/// trial, using the current extrinsics.
pub fn mean_reprojection(fit: &SessionFit, trial: usize) -> Result<f64, FitError> {
    let t = &fit.trials[trial];
    let frames: Vec<usize> = (0..t.observations.frame_count()).collect();
    let trace = t.net.forward(&t.frame_times())?;
    let spec = ElboSpec {
        frames: frames.clone(),
        samples: 1,
        seed: 0,
        step: 0,
        likelihood_enabled: true,
        refine_extrinsics: true,
        warmup_sigma: 1.0,
        prior_weight: 0.0,
    };
    let (sum, count) = reprojection_at_mean(fit, trial, &frames, trace.output(), &spec)?;
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}
