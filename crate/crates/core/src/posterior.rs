//! Implicit trajectory posterior: an MLP maps time to the moments of a
//! Gaussian over the pose, `q(θ_t) = N(μ(t), diag(d(t)²) + U(t)·U(t)ᵀ)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::gradcore::{cholesky, Matrix, Mlp, MlpTrace, Op, Ops};
use crate::kinematics::JointBound;
use crate::math;
use crate::rng;

/// Floor added to the softplus diagonal.
pub const D_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PosteriorError {
    #[error("time {t} outside [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("invalid posterior configuration: {0}")]
    Config(String),
    #[error("non-finite network output at t={0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PosteriorConfig {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Rank R of the low-rank covariance factor.
    pub rank: usize,
    /// Lowest frequency (Hz) the time encoding must resolve.
    pub min_frequency_hz: f64,
    /// Initial diagonal standard deviation.
    pub d_init: f64,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 256, 512, 1024],
            rank: 20,
            min_frequency_hz: 80.0,
            d_init: 0.1,
        }
    }
}

/// Number of octaves `B` of the time encoding: the smallest `B` with
/// `2^B ≥ 2·f_min·duration` (at least 1).
pub fn octaves(duration: f64, min_frequency_hz: f64) -> usize {
    let required = 2.0 * min_frequency_hz * duration;
    if required <= 2.0 {
        return 1;
    }
    math::ceil(math::log2(required)) as usize
}

/// `[τ, sin(2⁰τ), cos(2⁰τ), …, sin(2^{B−1}τ), cos(2^{B−1}τ)]` with
/// `τ = π·t/duration`.
pub fn encode_time(
    t: f64,
    duration: f64,
    min_frequency_hz: f64,
) -> Result<Vec<f64>, PosteriorError> {
    let mut out = Vec::new();
    encode_time_into(t, duration, octaves(duration, min_frequency_hz), &mut out)?;
    Ok(out)
}

fn encode_time_into(
    t: f64,
    duration: f64,
    b: usize,
    out: &mut Vec<f64>,
) -> Result<(), PosteriorError> {
    if !(t >= 0.0 && t <= duration) {
        return Err(PosteriorError::TimeOutOfRange { t, duration });
    }
    let tau = if duration > 0.0 {
        PI * t / duration
    } else {
        0.0
    };
    out.push(tau);
    let mut f = 1.0;
    for _ in 0..b {
        out.push(math::sin(f * tau));
        out.push(math::cos(f * tau));
        f *= 2.0;
    }
    Ok(())
}

/// Moments of the pose posterior at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mu: Vec<f64>,
    pub d: Vec<f64>,
    /// K×R factor.
    pub u: Matrix,
}

impl PosteriorMoments {
    pub fn new(mu: Vec<f64>, d: Vec<f64>, u: Matrix) -> Self {
        assert_eq!(mu.len(), d.len());
        assert_eq!(u.rows(), mu.len());
        Self { mu, d, u }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    /// `diag(d²) + U·Uᵀ`.
    pub fn covariance(&self) -> Matrix {
        let k = self.dim();
        let mut s = self.u.matmul(&self.u.transpose());
        for i in 0..k {
            s[(i, i)] += self.d[i] * self.d[i];
        }
        s
    }

    /// Marginal standard deviations `sqrt(Σ_kk)`.
    pub fn std(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let row = self.u.row(i);
                math::sqrt(self.d[i] * self.d[i] + row.iter().map(|x| x * x).sum::<f64>())
            })
            .collect()
    }

    pub fn correlation(&self) -> Matrix {
        correlation_of(&self.covariance())
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        entropy_parts(&self.d, self.u.as_slice(), self.rank(), false).0
    }

    /// `n` draws using the stream for `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, &[0x5a4d_504c]);
        (0..n).map(|_| self.sample_one(&mut r)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (k, r) = (self.dim(), self.rank());
        let eps1: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        let eps2: Vec<f64> = (0..r).map(|_| StandardNormal.sample(rng)).collect();
        (0..k)
            .map(|i| {
                let row = self.u.row(i);
                self.mu[i]
                    + self.d[i] * eps1[i]
                    + row.iter().zip(&eps2).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

/// `D^{-1/2}·Σ·D^{-1/2}` with `D = diag(Σ)`; the diagonal is exactly 1.
pub fn correlation_of(cov: &Matrix) -> Matrix {
    let k = cov.rows();
    let s: Vec<f64> = (0..k).map(|i| math::sqrt(cov[(i, i)])).collect();
    let mut c = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            c[(i, j)] = if i == j {
                1.0
            } else {
                cov[(i, j)] / (s[i] * s[j])
            };
        }
    }
    c
}

/// Entropy and, if requested, its partials in `d` and `U` (row-major K×R).
fn entropy_parts(d: &[f64], u: &[f64], r: usize, partials: bool) -> (f64, Vec<f64>, Vec<f64>) {
    let k = d.len();
    let mut h = 0.0;
    for &di in d {
        h += math::ln(di);
    }
    h += 0.5 * k as f64 * math::ln(2.0 * PI * core::f64::consts::E);
    if r == 0 {
        let gd = if partials {
            d.iter().map(|x| 1.0 / x).collect()
        } else {
            Vec::new()
        };
        return (h, gd, Vec::new());
    }
    // A = I + Uᵀ D⁻² U
    let mut a = Matrix::identity(r);
    for i in 0..k {
        let w = 1.0 / (d[i] * d[i]);
        let row = &u[i * r..(i + 1) * r];
        for p in 0..r {
            let x = w * row[p];
            for q in 0..r {
                a[(p, q)] += x * row[q];
            }
        }
    }
    // Only fails for non-finite or vanishing scales; NaN lets the caller report divergence.
    let Some(l) = cholesky(&a) else {
        let nan = |n: usize| {
            if partials {
                vec![f64::NAN; n]
            } else {
                Vec::new()
            }
        };
        return (f64::NAN, nan(k), nan(k * r));
    };
    h += 0.5 * l.cholesky_logdet();
    if !partials {
        return (h, Vec::new(), Vec::new());
    }
    let ainv = l.cholesky_inverse();
    let mut gu = vec![0.0; k * r];
    let mut gd = vec![0.0; k];
    for i in 0..k {
        let w = 1.0 / (d[i] * d[i]);
        let row = &u[i * r..(i + 1) * r];
        let mut quad = 0.0;
        for q in 0..r {
            let mut s = 0.0;
            for p in 0..r {
                s += row[p] * ainv[(p, q)];
            }
            gu[i * r + q] = w * s;
            quad += s * row[q];
        }
        gd[i] = 1.0 / d[i] - quad / (d[i] * d[i] * d[i]);
    }
    (h, gd, gu)
}

/// Differentiable entropy of `N(·, diag(d²) + UUᵀ)` as a single node.
pub fn entropy_with<O: Ops>(o: &mut O, d: &[O::V], u: &[O::V], r: usize) -> O::V {
    let dv: Vec<f64> = d.iter().map(|&x| o.val(x)).collect();
    let uv: Vec<f64> = u.iter().map(|&x| o.val(x)).collect();
    let records = o.records();
    let (h, gd, gu) = entropy_parts(&dv, &uv, r, records);
    if !records {
        return o.custom(Op::Fused("entropy"), h, &[]);
    }
    let mut parts = Vec::with_capacity(d.len() + u.len());
    parts.extend(d.iter().zip(&gd).map(|(&v, &g)| (v, g)));
    parts.extend(u.iter().zip(&gu).map(|(&v, &g)| (v, g)));
    o.custom(Op::Fused("entropy"), h, &parts)
}

/// Reparameterised draw `μ + d⊙ε₁ + U·ε₂`, one node per component.
pub fn sample_with<O: Ops>(
    o: &mut O,
    mu: &[O::V],
    d: &[O::V],
    u: &[O::V],
    r: usize,
    eps1: &[f64],
    eps2: &[f64],
) -> Vec<O::V> {
    let mut parts = Vec::with_capacity(r + 2);
    (0..mu.len())
        .map(|i| {
            parts.clear();
            let mut value = o.val(mu[i]) + o.val(d[i]) * eps1[i];
            parts.push((mu[i], 1.0));
            parts.push((d[i], eps1[i]));
            for q in 0..r {
                value += o.val(u[i * r + q]) * eps2[q];
                parts.push((u[i * r + q], eps2[q]));
            }
            o.custom(Op::Fused("reparameterize"), value, &parts)
        })
        .collect()
}

/// Recorded moments at one time.
#[derive(Debug, Clone)]
pub struct MomentVars<V> {
    pub mu: Vec<V>,
    pub d: Vec<V>,
    /// Row-major K×R.
    pub u: Vec<V>,
}

/// Time-to-moments network for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorNet {
    config: PosteriorConfig,
    bounds: Vec<Option<JointBound>>,
    duration: f64,
    octaves: usize,
    mlp: Mlp,
}

impl PosteriorNet {
    /// Fresh network; the output layer is zero so μ starts at the limit
    /// midpoints (root at the origin) and `d` at `config.d_init`.
    pub fn new<R: Rng + ?Sized>(
        bounds: &[Option<JointBound>],
        config: PosteriorConfig,
        duration: f64,
        rng: &mut R,
    ) -> Result<Self, PosteriorError> {
        let (widths, octaves) = Self::layout(bounds.len(), &config, duration)?;
        let mlp = Mlp::new(&widths, rng);
        let mut net = Self {
            config,
            bounds: bounds.to_vec(),
            duration,
            octaves,
            mlp,
        };
        let k = net.dim();
        let raw_d = math::softplus_inv(net.config.d_init - D_FLOOR);
        for b in &mut net.mlp.output_bias_mut()[k..2 * k] {
            *b = raw_d;
        }
        Ok(net)
    }

    /// Network from stored parameters.
    pub fn from_parts(
        bounds: &[Option<JointBound>],
        config: PosteriorConfig,
        duration: f64,
        params: Vec<f64>,
    ) -> Result<Self, PosteriorError> {
        let (widths, octaves) = Self::layout(bounds.len(), &config, duration)?;
        let expected = Mlp::count_params(&widths);
        let got = params.len();
        let mlp = Mlp::from_params(&widths, params).ok_or_else(|| {
            PosteriorError::Config(format!("expected {expected} parameters, got {got}"))
        })?;
        Ok(Self {
            config,
            bounds: bounds.to_vec(),
            duration,
            octaves,
            mlp,
        })
    }

    fn layout(
        k: usize,
        config: &PosteriorConfig,
        duration: f64,
    ) -> Result<(Vec<usize>, usize), PosteriorError> {
        if config.rank > k {
            return Err(PosteriorError::Config(format!(
                "rank {} exceeds pose dimension {k}",
                config.rank
            )));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(PosteriorError::Config(format!(
                "trial duration must be positive, got {duration}"
            )));
        }
        if !(config.min_frequency_hz > 0.0) {
            return Err(PosteriorError::Config(
                "min_frequency_hz must be positive".into(),
            ));
        }
        if !(config.d_init > D_FLOOR) {
            return Err(PosteriorError::Config(format!(
                "d_init must exceed {D_FLOOR}"
            )));
        }
        if config.hidden.contains(&0) {
            return Err(PosteriorError::Config(
                "hidden widths must be positive".into(),
            ));
        }
        let b = octaves(duration, config.min_frequency_hz);
        let mut widths = vec![1 + 2 * b];
        widths.extend_from_slice(&config.hidden);
        widths.push(k * (2 + config.rank));
        Ok((widths, b))
    }

    pub fn bounds(&self) -> &[Option<JointBound>] {
        &self.bounds
    }

    pub fn config(&self) -> &PosteriorConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn rank(&self) -> usize {
        self.config.rank
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn octaves(&self) -> usize {
        self.octaves
    }

    pub fn output_width(&self) -> usize {
        self.mlp.output_width()
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.mlp.params_mut()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Shifts the output bias so the mean at every time starts at `mu`
    /// (bounded entries are pulled strictly inside their limits).
    pub fn set_initial_mean(&mut self, mu: &[f64]) {
        let bounds = self.bounds.clone();
        let bias = self.mlp.output_bias_mut();
        for (i, (&m, b)) in mu.iter().zip(&bounds).enumerate() {
            bias[i] = match b {
                None => m,
                Some(b) => {
                    let z = ((m - b.mid()) / b.half_range()).clamp(-0.999, 0.999);
                    0.5 * math::ln((1.0 + z) / (1.0 - z))
                }
            };
        }
    }

    /// Runs the network on a batch of times (seconds since trial start).
    pub fn forward(&self, times: &[f64]) -> Result<MlpTrace, PosteriorError> {
        let mut inputs = Vec::with_capacity(times.len() * (1 + 2 * self.octaves));
        for &t in times {
            encode_time_into(t, self.duration, self.octaves, &mut inputs)?;
        }
        let trace = self.mlp.forward(&inputs);
        if let Some(i) = trace.output().iter().position(|x| !x.is_finite()) {
            return Err(PosteriorError::NonFinite(times[i / self.output_width()]));
        }
        Ok(trace)
    }

    /// Adjoints of the flat parameters from adjoints of the batched output.
    pub fn backward(&self, trace: &MlpTrace, grad_out: &[f64]) -> Vec<f64> {
        self.mlp.backward(trace, grad_out)
    }

    pub fn evaluate(&self, t: f64) -> Result<PosteriorMoments, PosteriorError> {
        let trace = self.forward(&[t])?;
        Ok(self.moments_from_raw(trace.output()))
    }

    pub fn evaluate_many(&self, times: &[f64]) -> Result<Vec<PosteriorMoments>, PosteriorError> {
        let trace = self.forward(times)?;
        let w = self.output_width();
        Ok(trace
            .output()
            .chunks(w)
            .map(|raw| self.moments_from_raw(raw))
            .collect())
    }

    pub fn moments_from_raw(&self, raw: &[f64]) -> PosteriorMoments {
        let m = self.moments_with(&mut crate::gradcore::Eval, raw);
        PosteriorMoments::new(m.mu, m.d, Matrix::from_vec(self.dim(), self.rank(), m.u))
    }

    /// Squashes one time step of raw outputs into moments.
    pub fn moments_with<O: Ops>(&self, o: &mut O, raw: &[O::V]) -> MomentVars<O::V> {
        let k = self.dim();
        let mu = (0..k)
            .map(|i| match self.bounds[i] {
                None => raw[i],
                Some(b) => {
                    let t = math::tanh(o.val(raw[i]));
                    let h = b.half_range();
                    o.custom(
                        Op::Fused("bounded_mean"),
                        b.mid() + h * t,
                        &[(raw[i], h * (1.0 - t * t))],
                    )
                }
            })
            .collect();
        let d = (0..k)
            .map(|i| {
                let x = o.val(raw[k + i]);
                o.custom(
                    Op::Fused("diag_scale"),
                    math::softplus(x) + D_FLOOR,
                    &[(raw[k + i], math::sigmoid(x))],
                )
            })
            .collect();
        let u = raw[2 * k..].to_vec();
        MomentVars { mu, d, u }
    }
}
