use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::elbo::{elbo_gradient, timestep_batch, ElboSpec};
use super::{Adam, FitError, Scene, Schedule, SessionFit, Trial, EXTRINSIC_LEN};
use crate::gradcore::Tape;
use crate::likelihood::{Family, LikelihoodParams, ObservationSet, PSI_INIT};
use crate::posterior::{PosteriorConfig, PosteriorNet};
use crate::rng;

const NET_STREAM: u64 = 0x4e45_5430;
const PHASE_STREAM: u64 = 0x5048_4153;

/// Everything that shapes a fit besides the data.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FitConfig {
    pub schedule: Schedule,
    pub posterior: PosteriorConfig,
    pub family: Family,
    pub psi_init: [f64; 3],
    pub seed: u64,
    /// Whether β is optimized.
    pub learn_beta: bool,
    /// Starting posterior mean for every time step; limit midpoints and the
    /// origin when absent.
    pub initial_mean: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::default(),
            posterior: PosteriorConfig::default(),
            family: Family::Exponential,
            psi_init: PSI_INIT,
            seed: 0,
            learn_beta: true,
            initial_mean: None,
        }
    }
}

/// One row of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    /// ELBO estimate summed over trials.
    pub elbo: f64,
    /// Mean entropy per timestep.
    pub entropy: f64,
    pub mean_reproj_px: f64,
    pub lr: f64,
    pub psi: [f64; 3],
    pub sigma_at_median_score: f64,
}

/// Stateful optimizer over a [`SessionFit`].
#[derive(Debug, Clone)]
pub struct Trainer {
    fit: SessionFit,
    config: FitConfig,
    phi_opt: Vec<Adam>,
    beta_opt: Adam,
    psi_opt: Adam,
    ext_opt: Adam,
    tape: Tape,
    median_score: f64,
}

impl Trainer {
    pub fn new(
        scene: Scene,
        trials: Vec<(String, ObservationSet)>,
        config: FitConfig,
    ) -> Result<Self, FitError> {
        config.schedule.validate().map_err(FitError::Config)?;
        let bounds = scene.bounds();
        if let Some(mu) = &config.initial_mean {
            if mu.len() != bounds.len() {
                return Err(FitError::Config(format!(
                    "initial mean has {} entries, pose has {}",
                    mu.len(),
                    bounds.len()
                )));
            }
        }
        let mut built = Vec::with_capacity(trials.len());
        for (i, (name, obs)) in trials.into_iter().enumerate() {
            let mut r = rng::stream(config.seed, &[NET_STREAM, i as u64]);
            let mut net =
                PosteriorNet::new(&bounds, config.posterior.clone(), obs.duration(), &mut r)?;
            if let Some(mu) = &config.initial_mean {
                net.set_initial_mean(mu);
            }
            built.push(Trial {
                name,
                observations: obs,
                net,
            });
        }
        let likelihood = LikelihoodParams::new(config.psi_init, config.family);
        let fit = SessionFit::new(scene, likelihood, built)?;
        Ok(Self::resume(fit, config))
    }

    /// Continues optimizing an existing session with fresh optimizer state.
    pub fn resume(fit: SessionFit, config: FitConfig) -> Self {
        let s = &config.schedule;
        let phi_opt = fit
            .trials
            .iter()
            .map(|t| Adam::new(t.net.params().len(), s.beta1, s.beta2, s.weight_decay))
            .collect();
        let beta_opt = Adam::new(fit.beta.len(), s.beta1, s.beta2, 0.0);
        let psi_opt = Adam::new(3, 0.9, 0.999, 0.0);
        let ext_opt = Adam::new(fit.extrinsics.len() * EXTRINSIC_LEN, s.beta1, s.beta2, 0.0);
        let mut scores: Vec<f64> = fit
            .trials
            .iter()
            .flat_map(|t| t.observations.present().map(|o| o.score))
            .collect();
        scores.sort_by(f64::total_cmp);
        let median_score = if scores.is_empty() {
            0.0
        } else if scores.len() % 2 == 1 {
            scores[scores.len() / 2]
        } else {
            0.5 * (scores[scores.len() / 2 - 1] + scores[scores.len() / 2])
        };
        Self {
            fit,
            config,
            phi_opt,
            beta_opt,
            psi_opt,
            ext_opt,
            tape: Tape::new(),
            median_score,
        }
    }

    pub fn session(&self) -> &SessionFit {
        &self.fit
    }

    pub fn into_session(self) -> SessionFit {
        self.fit
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn finished(&self) -> bool {
        self.fit.steps_done >= self.config.schedule.total_steps
    }

    /// Runs one optimization step. On error nothing is updated.
    pub fn step(&mut self) -> Result<StepLog, FitError> {
        let s = self.fit.steps_done;
        let sched = &self.config.schedule;
        let lr = sched.lr_at(s);
        let refine = s >= sched.extrinsic_refine_step
            && self
                .fit
                .scene
                .rig()
                .is_some_and(|r| r.refine_mask().iter().any(|&m| m));
        let psi_active = s >= sched.psi_unfreeze_step;
        let mut spec = ElboSpec {
            frames: Vec::new(),
            samples: sched.samples_per_step,
            seed: self.config.seed,
            step: s as u64,
            likelihood_enabled: s >= sched.likelihood_enable_step,
            refine_extrinsics: refine,
            warmup_sigma: sched.warmup_sigma,
            prior_weight: sched.prior_weight,
        };
        let mut grads = Vec::with_capacity(self.fit.trials.len());
        for i in 0..self.fit.trials.len() {
            let n = self.fit.trials[i].observations.frame_count();
            let mut r = rng::stream(self.config.seed, &[s as u64, i as u64, PHASE_STREAM]);
            let phase: f64 = rand::Rng::random(&mut r);
            spec.frames = timestep_batch(n, sched.timesteps_per_step, phase);
            grads.push(elbo_gradient(&self.fit, i, &spec, &mut self.tape)?);
        }
        // Shared gradients accumulate in trial order.
        let mut g_beta = vec![0.0; self.fit.beta.len()];
        let mut g_psi = [0.0; 3];
        let mut g_ext = vec![0.0; self.fit.extrinsics.len() * EXTRINSIC_LEN];
        let (mut elbo, mut entropy, mut rsum, mut rcount) = (0.0, 0.0, 0.0, 0usize);
        for g in &grads {
            elbo += g.elbo;
            entropy += g.entropy / grads.len() as f64;
            rsum += g.reproj_sum;
            rcount += g.reproj_count;
            for (a, b) in g_beta.iter_mut().zip(&g.beta) {
                *a -= b;
            }
            for (a, b) in g_psi.iter_mut().zip(&g.psi) {
                *a -= b;
            }
            for (a, b) in g_ext.iter_mut().zip(g.extrinsics.iter().flatten()) {
                *a -= b;
            }
        }
        let psi_used = self.fit.likelihood.psi;
        let log = StepLog {
            step: s,
            elbo,
            entropy,
            mean_reproj_px: if rcount == 0 {
                0.0
            } else {
                rsum / rcount as f64
            },
            lr,
            psi: psi_used,
            sigma_at_median_score: self.fit.likelihood.sigma_of_score(self.median_score),
        };
        for ((trial, opt), g) in self
            .fit
            .trials
            .iter_mut()
            .zip(&mut self.phi_opt)
            .zip(&grads)
        {
            let neg: Vec<f64> = g.phi.iter().map(|x| -x).collect();
            opt.step(trial.net.params_mut(), &neg, lr);
        }
        if self.config.learn_beta && !g_beta.is_empty() {
            self.beta_opt.step(&mut self.fit.beta, &g_beta, lr);
        }
        if psi_active {
            self.psi_opt
                .step(&mut self.fit.likelihood.psi, &g_psi, sched.psi_lr);
        }
        if refine {
            let mask = self
                .fit
                .scene
                .rig()
                .map(|r| r.refine_mask().to_vec())
                .unwrap_or_default();
            for (c, m) in mask.iter().enumerate() {
                if !m {
                    g_ext[c * EXTRINSIC_LEN..(c + 1) * EXTRINSIC_LEN].fill(0.0);
                }
            }
            let mut flat: Vec<f64> = self.fit.extrinsics.iter().flatten().copied().collect();
            self.ext_opt.step(&mut flat, &g_ext, lr);
            for (c, e) in self.fit.extrinsics.iter_mut().enumerate() {
                if mask[c] {
                    e.copy_from_slice(&flat[c * EXTRINSIC_LEN..(c + 1) * EXTRINSIC_LEN]);
                }
            }
        }
        self.fit.steps_done += 1;
        Ok(log)
    }

    /// Steps until the schedule is exhausted.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepLog)) -> Result<(), FitError> {
        while !self.finished() {
            let log = self.step()?;
            on_step(&log);
        }
        Ok(())
    }
}

/// Fits a session from scratch. Use [`Trainer`] directly to keep the last
/// good state when a fit diverges.
pub fn fit(
    scene: Scene,
    trials: Vec<(String, ObservationSet)>,
    config: FitConfig,
    on_step: impl FnMut(&StepLog),
) -> Result<SessionFit, FitError> {
    let mut trainer = Trainer::new(scene, trials, config)?;
    trainer.run(on_step)?;
    Ok(trainer.into_session())
}
