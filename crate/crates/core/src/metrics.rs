//! Population-style summaries of a fitted posterior: sampled spatial
//! spread of segment positions, per-joint standard deviation percentiles
//! and the time-averaged correlation structure.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::gradcore::{Eval, Matrix};
use crate::inference::{FitError, SessionFit};
use crate::kinematics::{KinematicModel, ModelError};
use crate::math;
use crate::posterior::PosteriorMoments;
use crate::rng;

pub const WEISZFELD_TOL: f64 = 1e-9;
pub const WEISZFELD_MAX_ITER: usize = 200;
pub const DEFAULT_SPATIAL_SAMPLES: usize = 250;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("summary needs a body scene")]
    NoModel,
    #[error("no fits to summarize")]
    Empty,
    #[error("trials disagree on pose dimension")]
    Dimension,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Percentile `p ∈ [0, 100]` with linear interpolation between order
/// statistics; NaN for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, p)
}

pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    math::norm3(&math::sub3(a, b))
}

fn coordinate_median(points: &[[f64; 3]]) -> [f64; 3] {
    core::array::from_fn(|k| {
        let c: Vec<f64> = points.iter().map(|p| p[k]).collect();
        percentile(&c, 50.0)
    })
}

/// Weiszfeld iteration from the centroid. Returns the median and whether it
/// converged; on failure the coordinate-wise median is returned instead.
pub fn geometric_median(points: &[[f64; 3]]) -> ([f64; 3], bool) {
    if points.is_empty() {
        return ([f64::NAN; 3], false);
    }
    let n = points.len() as f64;
    let mut y: [f64; 3] = core::array::from_fn(|k| points.iter().map(|p| p[k]).sum::<f64>() / n);
    for _ in 0..WEISZFELD_MAX_ITER {
        let mut num = [0.0; 3];
        let mut den = 0.0;
        for p in points {
            let mut d = dist(p, &y);
            if d == 0.0 {
                // Iterate sits on a sample: nudge it off.
                y[0] += 1e-12;
                d = dist(p, &y);
            }
            let w = 1.0 / d;
            for k in 0..3 {
                num[k] += w * p[k];
            }
            den += w;
        }
        let next = [num[0] / den, num[1] / den, num[2] / den];
        let step = dist(&next, &y);
        y = next;
        if !step.is_finite() {
            break;
        }
        if step < WEISZFELD_TOL {
            return (y, true);
        }
    }
    (coordinate_median(points), false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpread {
    pub segment: String,
    /// Time averages of the per-frame radial error percentiles (mm).
    pub p50_mm: f64,
    pub p95_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialErrorSummary {
    pub trial: String,
    pub segments: Vec<SegmentSpread>,
    pub samples: usize,
    /// Frame positions where the geometric median fell back to the
    /// coordinate-wise median.
    pub flagged_frames: Vec<usize>,
}

/// Per-frame 50th/95th percentile distances (m) of sampled segment origins
/// from their geometric median, one `[p50, p95]` per segment.
pub fn frame_spatial_errors(
    moments: &PosteriorMoments,
    model: &KinematicModel,
    beta: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(Vec<[f64; 2]>, bool), ModelError> {
    let segs = model.segment_count();
    let mut pts = vec![Vec::with_capacity(samples); segs];
    let mut r = rng::stream(seed, &[]);
    for _ in 0..samples {
        let th = moments.sample_one(&mut r);
        let f = model.forward(&mut Eval, beta, &th)?;
        for (s, p) in f.segment_positions.iter().enumerate() {
            pts[s].push(*p);
        }
    }
    let mut ok = true;
    let out = pts
        .iter()
        .map(|p| {
            let (m, conv) = geometric_median(p);
            ok &= conv;
            let mut d: Vec<f64> = p.iter().map(|x| dist(x, &m)).collect();
            d.sort_by(f64::total_cmp);
            [percentile_sorted(&d, 50.0), percentile_sorted(&d, 95.0)]
        })
        .collect();
    Ok((out, ok))
}

/// Spatial spread summary of one trial, seed-reproducible.
pub fn spatial_errors(
    fit: &SessionFit,
    trial: usize,
    samples: usize,
    seed: u64,
) -> Result<SpatialErrorSummary, MetricsError> {
    let model = fit.scene.model().ok_or(MetricsError::NoModel)?;
    let t = &fit.trials[trial];
    let moments = t
        .net
        .evaluate_many(&t.frame_times())
        .map_err(FitError::from)?;
    let segs = model.segment_count();
    let mut acc = vec![[0.0; 2]; segs];
    let mut flagged = Vec::new();
    for (f, m) in moments.iter().enumerate() {
        let (e, ok) = frame_spatial_errors(
            m,
            model,
            &fit.beta,
            samples,
            rng::mix64(seed ^ rng::mix64(((trial as u64) << 32) | f as u64)),
        )?;
        if !ok {
            flagged.push(f);
        }
        for (a, e) in acc.iter_mut().zip(&e) {
            a[0] += e[0];
            a[1] += e[1];
        }
    }
    let n = moments.len().max(1) as f64;
    Ok(SpatialErrorSummary {
        trial: t.name.clone(),
        segments: model
            .segment_names()
            .iter()
            .zip(&acc)
            .map(|(name, a)| SegmentSpread {
                segment: (*name).into(),
                p50_mm: 1e3 * a[0] / n,
                p95_mm: 1e3 * a[1] / n,
            })
            .collect(),
        samples,
        flagged_frames: flagged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpread {
    pub dof: String,
    /// "deg" for angles, "mm" for root translation.
    pub unit: &'static str,
    pub p50: f64,
    pub p95: f64,
}

/// Time percentiles of the posterior standard deviation of each DoF.
pub fn joint_angle_summary(
    moments: &[PosteriorMoments],
    model: &KinematicModel,
) -> Vec<JointSpread> {
    let k = model.pose_dim();
    let stds: Vec<Vec<f64>> = moments.iter().map(|m| m.std()).collect();
    (0..k)
        .map(|j| {
            let (unit, factor) = if model.is_angular(j) {
                ("deg", 180.0 / math::PI)
            } else {
                ("mm", 1e3)
            };
            let series: Vec<f64> = stds.iter().map(|s| s[j] * factor).collect();
            JointSpread {
                dof: model.dof_names()[j].clone(),
                unit,
                p50: percentile(&series, 50.0),
                p95: percentile(&series, 95.0),
            }
        })
        .collect()
}

/// Joint spread of every trial of a fit.
pub fn session_joint_summary(
    fit: &SessionFit,
) -> Result<Vec<(String, Vec<JointSpread>)>, MetricsError> {
    let model = fit.scene.model().ok_or(MetricsError::NoModel)?;
    let all = fit.evaluate()?;
    Ok(fit
        .trials
        .iter()
        .zip(&all)
        .map(|(t, m)| (t.name.clone(), joint_angle_summary(m, model)))
        .collect())
}

/// Mean correlation matrix over time.
pub fn mean_correlation(moments: &[PosteriorMoments]) -> Option<Matrix> {
    let k = moments.first()?.dim();
    let mut acc = Matrix::zeros(k, k);
    for m in moments {
        let c = m.correlation();
        for (a, b) in acc.as_mut_slice().iter_mut().zip(c.as_slice()) {
            *a += b;
        }
    }
    Some(acc.scale(1.0 / moments.len() as f64))
}

/// Elementwise median over trials of the absolute time-averaged
/// correlation.
pub fn correlation_summary(trials: &[&[PosteriorMoments]]) -> Result<Matrix, MetricsError> {
    let means: Vec<Matrix> = trials.iter().filter_map(|m| mean_correlation(m)).collect();
    let first = means.first().ok_or(MetricsError::Empty)?;
    let k = first.rows();
    if means.iter().any(|m| m.rows() != k) {
        return Err(MetricsError::Dimension);
    }
    let mut out = Matrix::zeros(k, k);
    let mut buf = Vec::with_capacity(means.len());
    for i in 0..k {
        for j in 0..k {
            buf.clear();
            buf.extend(means.iter().map(|m| m[(i, j)].abs()));
            out[(i, j)] = percentile(&buf, 50.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&v, 50.0) - 50.5).abs() < 1e-12);
        assert!((percentile(&v, 95.0) - 95.05).abs() < 1e-12);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
        assert!(percentile(&[], 50.0).is_nan());
    }

    #[test]
    fn percentile_matches_sort_oracle() {
        let mut r = rng::stream(4, &[]);
        for n in [2usize, 7, 31, 200] {
            let v: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            for p in [0.0, 13.0, 50.0, 95.0, 100.0] {
                // h = (n-1)p/100; x = s[⌊h⌋] + (h-⌊h⌋)(s[⌊h⌋+1]-s[⌊h⌋]).
                let h = (n - 1) as f64 * p / 100.0;
                let i = h.floor() as usize;
                let expect = if i + 1 < n {
                    s[i] + (h - i as f64) * (s[i + 1] - s[i])
                } else {
                    s[i]
                };
                assert!((percentile(&v, p) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weiszfeld_on_symmetric_and_isotropic_points() {
        let pts = [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, -2.0, 0.0],
        ];
        let (m, ok) = geometric_median(&pts);
        assert!(ok);
        assert!(m.iter().all(|x| x.abs() < 1e-8));
        let mut r = rng::stream(8, &[]);
        let n = 2000;
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                core::array::from_fn(|_| {
                    0.01 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)
                        + 0.3
                })
            })
            .collect();
        let (g, ok) = geometric_median(&pts);
        assert!(ok);
        let c = coordinate_median(&pts);
        // Median standard error ≈ 1.2533·σ/√n per coordinate.
        let se = 1.2533 * 0.01 / (n as f64).sqrt();
        assert!(dist(&g, &c) < 2.0 * se * 3f64.sqrt());
    }

    #[test]
    fn coincident_points_converge() {
        let pts = [[0.5, 0.5, 0.5]; 5];
        let (m, _) = geometric_median(&pts);
        assert!(dist(&m, &pts[0]) < 1e-9);
    }

    fn lite() -> KinematicModel {
        KinematicModel::from_description(&presets::humanoid_lite()).unwrap()
    }

    #[test]
    fn degenerate_posterior_has_tiny_spread() {
        let model = lite();
        let beta = crate::kinematics::ScaleParams::identity(&model).into_vec();
        let m = PosteriorMoments::new(model.neutral_pose(), vec![1e-6; 16], Matrix::zeros(16, 0));
        let (e, ok) = frame_spatial_errors(&m, &model, &beta, 250, 1).unwrap();
        assert!(ok);
        assert!(e.iter().all(|x| x[1] * 1e3 < 0.1));
    }

    /// Median of the Maxwell–Boltzmann radius with scale σ by bisection on a
    /// Simpson quadrature of its density.
    fn maxwell_median(sigma: f64) -> f64 {
        let pdf = |r: f64| {
            (2.0 / math::PI).sqrt() * r * r / sigma.powi(3) * (-r * r / (2.0 * sigma * sigma)).exp()
        };
        let cdf = |x: f64| {
            let n = 2000;
            let h = x / n as f64;
            let mut s = pdf(0.0) + pdf(x);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
            }
            s * h / 3.0
        };
        let (mut lo, mut hi) = (0.0, 10.0 * sigma);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn isotropic_root_spread_matches_maxwell_median() {
        let model = lite();
        let beta = crate::kinematics::ScaleParams::identity(&model).into_vec();
        let mut d = vec![1e-9; 16];
        d[..3].fill(0.01);
        let m = PosteriorMoments::new(model.neutral_pose(), d, Matrix::zeros(16, 0));
        let (e, _) = frame_spatial_errors(&m, &model, &beta, 40_000, 2).unwrap();
        let expect = maxwell_median(0.01);
        assert!(
            (e[0][0] / expect - 1.0).abs() < 0.03,
            "{} vs {expect}",
            e[0][0]
        );
        assert!(e.iter().all(|x| x[1] >= x[0] && x[0] >= 0.0));
    }

    #[test]
    fn joint_summary_of_constant_and_ramp() {
        let model = lite();
        let mut d = vec![0.01; 16];
        d[3] = 2.0 * math::PI / 180.0;
        let m = PosteriorMoments::new(model.neutral_pose(), d, Matrix::zeros(16, 0));
        let s = joint_angle_summary(&vec![m; 5], &model);
        assert!((s[3].p50 - 2.0).abs() < 1e-12 && (s[3].p95 - 2.0).abs() < 1e-12);
        assert_eq!(s[0].unit, "mm");
        assert!((s[0].p50 - 10.0).abs() < 1e-12);
        let ramp: Vec<PosteriorMoments> = (1..=100)
            .map(|i| {
                let mut d = vec![0.01; 16];
                d[6] = i as f64 * math::PI / 180.0;
                PosteriorMoments::new(model.neutral_pose(), d, Matrix::zeros(16, 0))
            })
            .collect();
        let s = joint_angle_summary(&ramp, &model);
        assert!((s[6].p50 - 50.5).abs() < 1e-9);
        assert!((s[6].p95 - 95.05).abs() < 1e-9);
    }

    #[test]
    fn correlation_aggregate() {
        let k = 6;
        let plain = vec![PosteriorMoments::new(vec![0.0; k], vec![0.1; k], Matrix::zeros(k, 1)); 3];
        let c = correlation_summary(&[&plain]).unwrap();
        assert_eq!(c, Matrix::identity(k));
        // Shared column on entries 0 and 3: corr = u0·u3 / sqrt((d0²+u0²)(d3²+u3²)).
        let mut u = Matrix::zeros(k, 1);
        u[(0, 0)] = 0.3;
        u[(3, 0)] = -0.2;
        let coupled = vec![PosteriorMoments::new(vec![0.0; k], vec![0.1; k], u); 4];
        let c = correlation_summary(&[&coupled, &plain, &coupled]).unwrap();
        let expect = 0.06 / ((0.01f64 + 0.09) * (0.01 + 0.04)).sqrt();
        assert!((c[(0, 3)] - expect).abs() < 1e-12 && expect > 0.5);
        for i in 0..k {
            assert_eq!(c[(i, i)], 1.0);
        }
        assert_eq!(correlation_summary(&[]), Err(MetricsError::Empty));
    }
}
