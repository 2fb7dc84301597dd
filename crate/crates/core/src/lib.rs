//! Variational inference of articulated-body joint-angle trajectories from
//! multiview 2D keypoints.
//!
//! The crate is `no_std` (with `alloc`) and carries only the numerical core:
//! a scalar reverse-mode tape, forward kinematics, camera projection, the
//! low-rank Gaussian trajectory posterior, the score-conditioned keypoint
//! likelihood, the ELBO optimizer, calibration (ECE) and summary metrics, and
//! a synthetic data generator. File formats and the command line live in the
//! `kinvi` crate.
//!
//! Most numerical routines are written once against the [`gradcore::Ops`]
//! trait and run either on plain `f64` ([`gradcore::Eval`]) or on a recording
//! [`gradcore::Tape`] when gradients are needed.

#![cfg_attr(not(feature = "std"), no_std)]
// Validation uses `!(x > y)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod calibration;
pub mod camera;
pub mod gradcore;
pub mod inference;
pub mod kinematics;
pub mod likelihood;
pub mod math;
pub mod metrics;
pub mod posterior;
pub mod presets;
pub mod rng;
pub mod synth;

pub use camera::{CameraModel, Rig};
pub use kinematics::KinematicModel;
pub use likelihood::{Family, LikelihoodParams, Observation, ObservationSet};
pub use posterior::{PosteriorMoments, PosteriorNet};
