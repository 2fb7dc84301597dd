//! Score-conditioned radial keypoint error likelihood.
//!
//! The width of the error distribution is a quadratic in the noise score
//! with softplus-positive coefficients, `σ(s) = sp(ψ₀) + sp(ψ₁)·s + sp(ψ₂)·s²`
//! plus a small floor. Larger scores mean noisier keypoints.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::gradcore::{Op, Ops};
use crate::math;

/// Lower bound on σ (pixels).
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Default ψ: σ starts near ln 2 px with almost no score dependence.
pub const PSI_INIT: [f64; 3] = [0.0, -5.0, -5.0];

pub const HALF_NORMAL_WARNING: &str =
    "warning: the half_normal likelihood is known to diverge on real keypoint data \
(outliers dominate its quadratic penalty); exponential or half_cauchy are more robust";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Family {
    #[default]
    Exponential,
    HalfCauchy,
    HalfNormal,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Exponential, Family::HalfCauchy, Family::HalfNormal];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::HalfCauchy => "half_cauchy",
            Family::HalfNormal => "half_normal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    /// Caveat to show when a fit is configured with this family.
    pub fn warning(&self) -> Option<&'static str> {
        match self {
            Family::HalfNormal => Some(HALF_NORMAL_WARNING),
            _ => None,
        }
    }

    /// Log-density at error `eps` and width `sigma`, with partials
    /// `(f, ∂f/∂ε, ∂f/∂σ)`.
    pub fn log_density_partials(&self, eps: f64, sigma: f64) -> (f64, f64, f64) {
        let ls = math::ln(sigma);
        match self {
            Family::Exponential => (-ls - eps / sigma, -1.0 / sigma, (eps / sigma - 1.0) / sigma),
            Family::HalfCauchy => {
                let z = eps / sigma;
                let q = 1.0 + z * z;
                (
                    math::ln(2.0 / PI) - ls - math::ln_1p(z * z),
                    -2.0 * z / (sigma * q),
                    (2.0 * z * z / q - 1.0) / sigma,
                )
            }
            Family::HalfNormal => {
                let z = eps / sigma;
                (
                    0.5 * math::ln(2.0 / PI) - ls - 0.5 * z * z,
                    -z / sigma,
                    (z * z - 1.0) / sigma,
                )
            }
        }
    }

    /// Mean radial error for width `sigma` (infinite for half-Cauchy).
    pub fn mean(&self, sigma: f64) -> f64 {
        match self {
            Family::Exponential => sigma,
            Family::HalfCauchy => f64::INFINITY,
            Family::HalfNormal => sigma * math::sqrt(2.0 / PI),
        }
    }

    /// Quantile function of the radial error distribution.
    pub fn quantile(&self, p: f64, sigma: f64) -> f64 {
        match self {
            Family::Exponential => -sigma * math::ln_1p(-p),
            Family::HalfCauchy => sigma * math::tan(0.5 * PI * p),
            Family::HalfNormal => sigma * core::f64::consts::SQRT_2 * erf_inv(p),
        }
    }
}

/// Inverse error function (Giles' single-precision-style approximation
/// refined with two Newton steps).
fn erf_inv(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return f64::INFINITY;
    }
    let w = -math::ln((1.0 - x) * (1.0 + x));
    let mut p;
    if w < 5.0 {
        let w = w - 2.5;
        p = 2.810_226_36e-08;
        for c in [
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            0.000_218_580_87,
            -0.001_253_725_03,
            -0.004_177_681_64,
            0.246_640_727,
            1.501_409_41,
        ] {
            p = c + p * w;
        }
    } else {
        let w = math::sqrt(w) - 3.0;
        p = -0.000_200_214_257;
        for c in [
            0.000_100_950_558,
            0.001_349_343_22,
            -0.003_673_428_44,
            0.005_739_507_73,
            -0.007_622_461_3,
            0.009_438_870_47,
            1.001_674_06,
            2.832_976_82,
        ] {
            p = c + p * w;
        }
    }
    let mut y = p * x;
    for _ in 0..2 {
        let err = libm::erf(y) - x;
        y -= err / (2.0 / math::sqrt(PI) * math::exp(-y * y));
    }
    y
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LikelihoodError {
    #[error("negative radial error {0}")]
    NegativeError(f64),
    #[error("observations: {0}")]
    Invalid(String),
}

/// ψ coefficients and error family.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LikelihoodParams {
    pub psi: [f64; 3],
    pub family: Family,
}

impl Default for LikelihoodParams {
    fn default() -> Self {
        Self {
            psi: PSI_INIT,
            family: Family::Exponential,
        }
    }
}

impl LikelihoodParams {
    pub fn new(psi: [f64; 3], family: Family) -> Self {
        Self { psi, family }
    }

    pub fn sigma_of_score(&self, s: f64) -> f64 {
        sigma_of_score(&self.psi, s)
    }

    pub fn log_density(&self, eps: f64, s: f64) -> Result<f64, LikelihoodError> {
        log_density(self.family, eps, self.sigma_of_score(s))
    }

    /// Log-likelihood of one observation given the predicted pixel; absent
    /// observations contribute 0.
    pub fn keypoint_loglik(&self, predicted: [f64; 2], obs: &Observation) -> f64 {
        if !obs.present {
            return 0.0;
        }
        let eps = math::sqrt(sq(predicted[0] - obs.y[0]) + sq(predicted[1] - obs.y[1]));
        self.family
            .log_density_partials(eps, self.sigma_of_score(obs.score))
            .0
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

pub fn sigma_of_score(psi: &[f64; 3], s: f64) -> f64 {
    math::softplus(psi[0])
        + math::softplus(psi[1]) * s
        + math::softplus(psi[2]) * s * s
        + SIGMA_FLOOR
}

/// Differentiable σ(s) in ψ.
pub fn sigma_with<O: Ops>(o: &mut O, psi: &[O::V; 3], s: f64) -> O::V {
    let p = [o.val(psi[0]), o.val(psi[1]), o.val(psi[2])];
    let value = sigma_of_score(&p, s);
    o.custom(
        Op::Fused("sigma_of_score"),
        value,
        &[
            (psi[0], math::sigmoid(p[0])),
            (psi[1], math::sigmoid(p[1]) * s),
            (psi[2], math::sigmoid(p[2]) * s * s),
        ],
    )
}

pub fn log_density(family: Family, eps: f64, sigma: f64) -> Result<f64, LikelihoodError> {
    if eps < 0.0 {
        return Err(LikelihoodError::NegativeError(eps));
    }
    Ok(family.log_density_partials(eps, sigma).0)
}

/// Log-density of the radial distance between `predicted` and `y`, as one
/// node over `(u, v, σ)`. At zero distance the partial in the prediction is
/// taken as 0.
pub fn keypoint_loglik_with<O: Ops>(
    o: &mut O,
    family: Family,
    predicted: [O::V; 2],
    y: [f64; 2],
    sigma: O::V,
) -> O::V {
    let du = o.val(predicted[0]) - y[0];
    let dv = o.val(predicted[1]) - y[1];
    let eps = math::sqrt(du * du + dv * dv);
    let (f, df_de, df_ds) = family.log_density_partials(eps, o.val(sigma));
    let (gu, gv) = if eps > 0.0 {
        (df_de * du / eps, df_de * dv / eps)
    } else {
        (0.0, 0.0)
    };
    o.custom(
        Op::Fused("keypoint_loglik"),
        f,
        &[(predicted[0], gu), (predicted[1], gv), (sigma, df_ds)],
    )
}

/// One keypoint detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Position of the frame within its [`ObservationSet`].
    pub frame: usize,
    pub camera: usize,
    pub keypoint: usize,
    pub y: [f64; 2],
    pub score: f64,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Frame number as recorded in the source.
    pub index: u64,
    pub time: f64,
    pub observations: Vec<Observation>,
}

/// All detections of one trial, grouped by frame in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    camera_names: Vec<String>,
    keypoint_count: usize,
    frames: Vec<Frame>,
}

impl ObservationSet {
    /// Validates and canonicalises: frames sorted by time, observations
    /// within a frame sorted by (camera, keypoint).
    pub fn new(
        camera_names: Vec<String>,
        keypoint_count: usize,
        mut frames: Vec<Frame>,
    ) -> Result<Self, LikelihoodError> {
        let bad = |m: String| Err(LikelihoodError::Invalid(m));
        if frames.is_empty() {
            return bad("no frames".into());
        }
        frames.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.index.cmp(&b.index)));
        for w in frames.windows(2) {
            if !(w[1].time > w[0].time) {
                return bad(format!(
                    "frames {} and {} share time {}",
                    w[0].index, w[1].index, w[1].time
                ));
            }
        }
        for (fi, f) in frames.iter_mut().enumerate() {
            if !f.time.is_finite() || f.time < 0.0 {
                return bad(format!("frame {}: invalid time {}", f.index, f.time));
            }
            for o in f.observations.iter_mut() {
                o.frame = fi;
                if o.camera >= camera_names.len() {
                    return bad(format!(
                        "frame {}: camera index {} out of range",
                        f.index, o.camera
                    ));
                }
                if o.keypoint >= keypoint_count {
                    return bad(format!(
                        "frame {}: keypoint {} out of range",
                        f.index, o.keypoint
                    ));
                }
                if o.present
                    && !(o.y[0].is_finite()
                        && o.y[1].is_finite()
                        && o.score.is_finite()
                        && o.score >= 0.0)
                {
                    return bad(format!(
                        "frame {} camera {} keypoint {}: non-finite pixel or negative score",
                        f.index, o.camera, o.keypoint
                    ));
                }
            }
            f.observations.sort_by_key(|o| (o.camera, o.keypoint));
            if f.observations
                .windows(2)
                .any(|w| (w[0].camera, w[0].keypoint) == (w[1].camera, w[1].keypoint))
            {
                return bad(format!(
                    "frame {}: duplicate (camera, keypoint) row",
                    f.index
                ));
            }
        }
        Ok(Self {
            camera_names,
            keypoint_count,
            frames,
        })
    }

    pub fn camera_names(&self) -> &[String] {
        &self.camera_names
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoint_count
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn start_time(&self) -> f64 {
        self.frames[0].time
    }

    /// Time span from the first to the last frame (seconds).
    pub fn duration(&self) -> f64 {
        self.frames[self.frames.len() - 1].time - self.frames[0].time
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.frames.iter().flat_map(|f| f.observations.iter())
    }

    pub fn present(&self) -> impl Iterator<Item = &Observation> {
        self.iter().filter(|o| o.present)
    }

    pub fn present_count(&self) -> usize {
        self.present().count()
    }

    /// Applies `f` to every observation, keeping frame structure.
    pub fn map_observations(&self, mut f: impl FnMut(&Observation) -> Observation) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|fr| Frame {
                index: fr.index,
                time: fr.time,
                observations: fr.observations.iter().map(&mut f).collect(),
            })
            .collect();
        Self {
            camera_names: self.camera_names.clone(),
            keypoint_count: self.keypoint_count,
            frames,
        }
    }

    /// Restricts to the named cameras (re-indexed in the given order) and to
    /// frames accepted by `keep_frame`.
    pub fn select(
        &self,
        cameras: &[&str],
        mut keep_frame: impl FnMut(&Frame) -> bool,
    ) -> Result<Self, LikelihoodError> {
        let mut remap = alloc::vec![None; self.camera_names.len()];
        for (new, name) in cameras.iter().enumerate() {
            let old = self
                .camera_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| LikelihoodError::Invalid(format!("unknown camera {name:?}")))?;
            remap[old] = Some(new);
        }
        let frames = self
            .frames
            .iter()
            .filter(|f| keep_frame(f))
            .map(|f| Frame {
                index: f.index,
                time: f.time,
                observations: f
                    .observations
                    .iter()
                    .filter_map(|o| remap[o.camera].map(|c| Observation { camera: c, ..*o }))
                    .collect(),
            })
            .collect();
        Self::new(
            cameras.iter().map(|s| String::from(*s)).collect(),
            self.keypoint_count,
            frames,
        )
    }
}
