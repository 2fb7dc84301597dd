//! `kinvi report`: summaries of a fitted checkpoint.
//!
//! Writes `ece.csv` and `pp_curve.csv` (calibration per trial and pooled),
//! `spatial.csv`, `joints.csv`, `correlation.csv`, `timeseries.csv`
//! (posterior mean with 95% band per frame and DoF) and, given ground
//! truth, `coverage.csv`.

use std::path::Path;
use std::time::Instant;

use kinvi_core::calibration::{
    ece_report, EceOptions, ScaleAveraging, DEFAULT_CLIPS, DEFAULT_FRACTION,
};
use kinvi_core::inference::SessionFit;
use kinvi_core::metrics::{
    correlation_summary, joint_angle_summary, spatial_errors, DEFAULT_SPATIAL_SAMPLES,
};
use kinvi_core::PosteriorMoments;

use super::ensure_dir;
use crate::error::{CliError, Result};
use crate::formats::checkpoint;
use crate::formats::manifest::Manifest;
use crate::formats::{fmt_f64, read_text, truth, write_csv};

/// Half-width of the reported band in standard deviations.
pub const BAND_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub clips: Vec<f64>,
    pub fraction: f64,
    pub samples: usize,
    pub averaging: ScaleAveraging,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            clips: DEFAULT_CLIPS.to_vec(),
            fraction: DEFAULT_FRACTION,
            samples: DEFAULT_SPATIAL_SAMPLES,
            averaging: ScaleAveraging::Variance,
            seed: 0,
        }
    }
}

/// Fraction of (frame, DoF) pairs whose true value lies inside the band.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub per_dof: Vec<(String, usize, usize)>,
    pub inside: usize,
    pub total: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.inside as f64 / self.total.max(1) as f64
    }
}

pub fn coverage(
    moments: &[PosteriorMoments],
    truth: &[Vec<f64>],
    dof_names: &[String],
) -> Coverage {
    let mut per = vec![0usize; dof_names.len()];
    let mut total = 0;
    for (m, gt) in moments.iter().zip(truth) {
        let s = m.std();
        for k in 0..dof_names.len() {
            if (m.mu[k] - gt[k]).abs() <= BAND_Z * s[k] {
                per[k] += 1;
            }
        }
        total += dof_names.len();
    }
    let n = moments.len().min(truth.len());
    Coverage {
        per_dof: dof_names
            .iter()
            .cloned()
            .zip(per.iter().copied())
            .map(|(d, c)| (d, c, n))
            .collect(),
        inside: per.iter().sum(),
        total,
    }
}

fn write_ece(out: &Path, fit: &SessionFit, opts: &ReportOptions) -> Result<Vec<String>> {
    let ece = ece_report(
        fit,
        &EceOptions {
            clips: opts.clips.clone(),
            fraction: opts.fraction,
            averaging: opts.averaging,
        },
    )
    .map_err(|e| CliError::input(format!("ece: {e}")))?;
    let groups: Vec<(&str, &Vec<_>)> = ece
        .per_trial
        .iter()
        .map(|(n, r)| (n.as_str(), r))
        .chain(std::iter::once(("pooled", &ece.pooled)))
        .collect();
    let mut rows = Vec::new();
    let mut curve = Vec::new();
    for (name, reports) in &groups {
        for r in reports.iter() {
            rows.push(vec![
                name.to_string(),
                fmt_f64(r.clip),
                fmt_f64(r.ece),
                r.n.to_string(),
                fmt_f64(r.fraction),
            ]);
            for (i, (c, p)) in r.curve.iter().enumerate() {
                curve.push(vec![
                    name.to_string(),
                    fmt_f64(r.clip),
                    i.to_string(),
                    fmt_f64(*p),
                    fmt_f64(*c),
                ]);
            }
        }
    }
    write_csv(
        &out.join("ece.csv"),
        &["trial", "sigma_clip_px", "ece", "n", "fraction"],
        rows,
    )?;
    write_csv(
        &out.join("pp_curve.csv"),
        &["trial", "sigma_clip_px", "rank", "expected", "observed"],
        curve,
    )?;
    Ok(vec!["ece.csv".into(), "pp_curve.csv".into()])
}

pub fn run(
    checkpoint_path: &Path,
    out: &Path,
    opts: &ReportOptions,
    truth_dir: Option<&Path>,
) -> Result<()> {
    let start = Instant::now();
    if !checkpoint_path.is_file() {
        return Err(CliError::input(format!(
            "{}: checkpoint not found",
            checkpoint_path.display()
        )));
    }
    let raw = read_text(checkpoint_path)?;
    let ckpt = checkpoint::load(checkpoint_path)?;
    let fit = ckpt.to_fit()?;
    let model = fit
        .scene
        .model()
        .expect("checkpoints hold body scenes")
        .clone();
    let names = model.dof_names().to_vec();
    let all = fit.evaluate().map_err(|e| CliError::input(e.to_string()))?;
    ensure_dir(out)?;
    let mut outputs = write_ece(out, &fit, opts)?;

    let mut spatial = Vec::new();
    for i in 0..fit.trials.len() {
        let s = spatial_errors(&fit, i, opts.samples, opts.seed)
            .map_err(|e| CliError::input(format!("spatial: {e}")))?;
        for seg in &s.segments {
            spatial.push(vec![
                s.trial.clone(),
                seg.segment.clone(),
                fmt_f64(seg.p50_mm),
                fmt_f64(seg.p95_mm),
            ]);
        }
        if !s.flagged_frames.is_empty() {
            eprintln!(
                "note: {}: geometric median fell back to the coordinate median on {} frame(s)",
                s.trial,
                s.flagged_frames.len()
            );
        }
    }
    write_csv(
        &out.join("spatial.csv"),
        &["trial", "segment", "p50_mm", "p95_mm"],
        spatial,
    )?;
    outputs.push("spatial.csv".into());

    let mut joints = Vec::new();
    for (t, m) in fit.trials.iter().zip(&all) {
        for j in joint_angle_summary(m, &model) {
            joints.push(vec![
                t.name.clone(),
                j.dof,
                j.unit.to_string(),
                fmt_f64(j.p50),
                fmt_f64(j.p95),
            ]);
        }
    }
    write_csv(
        &out.join("joints.csv"),
        &["trial", "dof", "unit", "std_p50", "std_p95"],
        joints,
    )?;
    outputs.push("joints.csv".into());

    let refs: Vec<&[PosteriorMoments]> = all.iter().map(|m| m.as_slice()).collect();
    let corr =
        correlation_summary(&refs).map_err(|e| CliError::input(format!("correlation: {e}")))?;
    let mut header = vec!["dof"];
    header.extend(names.iter().map(|s| s.as_str()));
    let rows = (0..names.len()).map(|i| {
        let mut r = vec![names[i].clone()];
        r.extend((0..names.len()).map(|j| fmt_f64(corr[(i, j)])));
        r
    });
    write_csv(&out.join("correlation.csv"), &header, rows)?;
    outputs.push("correlation.csv".into());

    let mut series = Vec::new();
    for (t, m) in fit.trials.iter().zip(&all) {
        for (f, mm) in t.observations.frames().iter().zip(m) {
            let s = mm.std();
            for k in 0..names.len() {
                series.push(vec![
                    t.name.clone(),
                    f.index.to_string(),
                    fmt_f64(f.time),
                    names[k].clone(),
                    fmt_f64(mm.mu[k]),
                    fmt_f64(s[k]),
                    fmt_f64(mm.mu[k] - BAND_Z * s[k]),
                    fmt_f64(mm.mu[k] + BAND_Z * s[k]),
                ]);
            }
        }
    }
    write_csv(
        &out.join("timeseries.csv"),
        &[
            "trial",
            "frame_idx",
            "time_s",
            "dof",
            "mean",
            "std",
            "lower",
            "upper",
        ],
        series,
    )?;
    outputs.push("timeseries.csv".into());

    if let Some(dir) = truth_dir {
        let mut rows = Vec::new();
        for (t, m) in fit.trials.iter().zip(&all) {
            let p = dir.join(format!("ground_truth_{}.csv", t.name));
            let gt = truth::load(&p)?;
            if gt.dof_names != names || gt.poses.len() != m.len() {
                return Err(CliError::at(
                    &p,
                    "does not match the checkpoint's model or frame count",
                ));
            }
            if t.frame_times()
                .iter()
                .zip(&gt.times)
                .any(|(a, b)| (a - b).abs() > 1e-9)
            {
                return Err(CliError::at(
                    &p,
                    "time_s: does not match the observation times",
                ));
            }
            let c = coverage(m, &gt.poses, &names);
            for (d, inside, total) in &c.per_dof {
                rows.push(vec![
                    t.name.clone(),
                    d.clone(),
                    inside.to_string(),
                    total.to_string(),
                    fmt_f64(*inside as f64 / *total as f64),
                ]);
            }
            rows.push(vec![
                t.name.clone(),
                "all".into(),
                c.inside.to_string(),
                c.total.to_string(),
                fmt_f64(c.fraction()),
            ]);
        }
        write_csv(
            &out.join("coverage.csv"),
            &["trial", "dof", "inside", "total", "fraction"],
            rows,
        )?;
        outputs.push("coverage.csv".into());
    }

    let mut inputs = raw.into_bytes();
    inputs.extend(format!("{opts:?}").into_bytes());
    Manifest::new(
        "report",
        &inputs,
        opts.seed,
        outputs,
        start.elapsed().as_secs_f64(),
    )
    .write(out)?;
    Ok(())
}
