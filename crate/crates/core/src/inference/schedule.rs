use alloc::format;
use alloc::string::String;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math;

/// Step counts, learning rates and stage milestones of a fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Schedule {
    pub total_steps: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Constant learning rate of the ψ optimizer.
    pub psi_lr: f64,
    pub likelihood_enable_step: usize,
    pub psi_unfreeze_step: usize,
    pub extrinsic_refine_step: usize,
    pub samples_per_step: usize,
    pub timesteps_per_step: usize,
    /// Keypoint width (px) used before the learned likelihood is enabled.
    pub warmup_sigma: f64,
    /// Out-of-limit penalty weight λ (nats/rad²).
    pub prior_weight: f64,
}

pub const DEFAULT_TOTAL_STEPS: usize = 30_000;

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total_steps: DEFAULT_TOTAL_STEPS,
            lr_start: 1e-3,
            lr_end: 1e-8,
            beta1: 0.8,
            beta2: 0.999,
            weight_decay: 1e-5,
            psi_lr: 1e-3,
            likelihood_enable_step: 2_500,
            psi_unfreeze_step: 7_000,
            extrinsic_refine_step: 10_000,
            samples_per_step: 8,
            timesteps_per_step: 100,
            warmup_sigma: 10.0,
            prior_weight: 1e4,
        }
    }
}

impl Schedule {
    /// Default schedule shortened or lengthened to `total` steps; milestones
    /// keep their fraction of the run.
    pub fn with_total_steps(total: usize) -> Self {
        let mut s = Self::default();
        s.rescale(total);
        s
    }

    /// Changes `total_steps`, moving the milestones proportionally.
    pub fn rescale(&mut self, total: usize) {
        let old = self.total_steps.max(1) as f64;
        let scale = |m: usize| -> usize {
            let v = math::floor(m as f64 * total as f64 / old + 0.5) as usize;
            v.min(total)
        };
        self.likelihood_enable_step = scale(self.likelihood_enable_step);
        self.psi_unfreeze_step = scale(self.psi_unfreeze_step);
        self.extrinsic_refine_step = scale(self.extrinsic_refine_step);
        self.total_steps = total;
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.likelihood_enable_step <= self.psi_unfreeze_step
            && self.psi_unfreeze_step <= self.extrinsic_refine_step
            && self.extrinsic_refine_step <= self.total_steps)
        {
            return Err(format!(
                "milestones must satisfy enable ({}) <= unfreeze ({}) <= refine ({}) <= total ({})",
                self.likelihood_enable_step,
                self.psi_unfreeze_step,
                self.extrinsic_refine_step,
                self.total_steps
            ));
        }
        for (name, v) in [
            ("lr_start", self.lr_start),
            ("lr_end", self.lr_end),
            ("psi_lr", self.psi_lr),
            ("warmup_sigma", self.warmup_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0) || !(self.prior_weight >= 0.0) {
            return Err("weight_decay and prior_weight must be nonnegative".into());
        }
        if self.samples_per_step == 0 || self.timesteps_per_step == 0 {
            return Err("samples_per_step and timesteps_per_step must be positive".into());
        }
        Ok(())
    }

    /// Main learning rate at `step`, decaying exponentially from `lr_start`
    /// to `lr_end` over the run.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.lr_start;
        }
        let f = step as f64 / self.total_steps as f64;
        self.lr_start * math::exp(f * math::ln(self.lr_end / self.lr_start))
    }
}
