//! `kinvi ablate`: one fit per grid value and seed on a shared dataset.
//!
//! Modes:
//! - `noise`: extra radial noise (px) injected into every observation,
//!   scores unchanged;
//! - `cameras`: number of cameras kept, evenly spaced around the rig, on
//!   frames seen by all of them;
//! - `rank`: posterior covariance rank.
//!
//! Cells run sequentially unless `KINVI_THREADS` asks for more workers.
//! Results do not depend on the worker count.

use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use kinvi_core::calibration::{ece_report, EceOptions};
use kinvi_core::inference::{FitConfig, SessionFit};
use kinvi_core::metrics::{percentile, spatial_errors};
use kinvi_core::rng;
use kinvi_core::synth::{inject_noise, subset_cameras};

use super::ensure_dir;
use super::fit::optimize;
use crate::error::{CliError, Result};
use crate::formats::manifest::Manifest;
use crate::formats::session::{self, Overrides, Session};
use crate::formats::{fmt_f64, write_csv};

pub const THREADS_ENV: &str = "KINVI_THREADS";
pub const SWEEP: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Noise,
    Cameras,
    Rank,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Noise => "noise",
            Mode::Cameras => "cameras",
            Mode::Rank => "rank",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "noise" => Ok(Mode::Noise),
            "cameras" => Ok(Mode::Cameras),
            "rank" => Ok(Mode::Rank),
            _ => Err(format!("unknown mode {s:?} (noise, cameras, rank)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateOptions {
    pub mode: Mode,
    pub grid: Vec<f64>,
    pub seeds: usize,
    pub overrides: Overrides,
    pub threads: usize,
    pub spatial_samples: usize,
}

/// Summary of one converged cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    /// Mean posterior entropy per time step (nats).
    pub entropy: f64,
    /// Median over frames and bounded DoF of the posterior std (degrees).
    pub median_joint_std_deg: f64,
    pub psi: [f64; 3],
    pub sigma0_px: f64,
    pub median_spatial_mm: f64,
    /// Pooled ECE at σ_clip = 0 and 2 px; NaN if too few observations.
    pub ece0: f64,
    pub ece2: f64,
    pub reproj_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub value: f64,
    pub seed: u64,
    pub outcome: std::result::Result<CellSummary, String>,
}

/// Evenly spaced camera indices, nested for growing `n`.
pub fn spread_cameras(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| i * total / n).collect()
}

pub fn summarize(fit: &SessionFit, spatial_samples: usize, seed: u64) -> Result<CellSummary> {
    let model = fit
        .scene
        .model()
        .ok_or_else(|| CliError::input("body scene required"))?;
    let all = fit.evaluate().map_err(|e| CliError::input(e.to_string()))?;
    let bounded: Vec<usize> = (0..model.pose_dim())
        .filter(|&k| model.bounds()[k].is_some())
        .collect();
    let (mut h, mut n) = (0.0, 0usize);
    let mut stds = Vec::new();
    for m in all.iter().flatten() {
        h += m.entropy();
        n += 1;
        let s = m.std();
        stds.extend(bounded.iter().map(|&k| s[k].to_degrees()));
    }
    let mut spatial = Vec::new();
    for i in 0..fit.trials.len() {
        let s = spatial_errors(fit, i, spatial_samples, seed)
            .map_err(|e| CliError::input(e.to_string()))?;
        spatial.extend(s.segments.iter().map(|g| g.p50_mm));
    }
    let (ece0, ece2) = match ece_report(
        fit,
        &EceOptions {
            clips: vec![0.0, 2.0],
            ..Default::default()
        },
    ) {
        Ok(r) => (r.pooled[0].ece, r.pooled[1].ece),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let mut reproj = 0.0;
    for i in 0..fit.trials.len() {
        reproj += kinvi_core::inference::mean_reprojection(fit, i)
            .map_err(|e| CliError::input(e.to_string()))?
            / fit.trials.len() as f64;
    }
    Ok(CellSummary {
        entropy: h / n.max(1) as f64,
        median_joint_std_deg: if stds.is_empty() {
            f64::NAN
        } else {
            percentile(&stds, 50.0)
        },
        psi: fit.likelihood.psi,
        sigma0_px: fit.likelihood.sigma_of_score(0.0),
        median_spatial_mm: if spatial.is_empty() {
            f64::NAN
        } else {
            percentile(&spatial, 50.0)
        },
        ece0,
        ece2,
        reproj_px: reproj,
    })
}

/// The session and fit configuration of one cell.
pub fn cell_inputs(
    base: &Session,
    config: &FitConfig,
    mode: Mode,
    value: f64,
    seed: u64,
) -> Result<(Session, FitConfig)> {
    let mut s = base.clone();
    let mut c = config.clone();
    c.seed = seed;
    match mode {
        Mode::Noise => {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CliError::input(format!(
                    "noise level must be nonnegative, got {value}"
                )));
            }
            for (i, (_, obs)) in s.trials.iter_mut().enumerate() {
                *obs = inject_noise(obs, value, rng::mix64(seed ^ rng::mix64(i as u64 + 1)));
            }
        }
        Mode::Cameras => {
            let total = base.rig.len();
            if value.fract() != 0.0 || value < 1.0 || value > total as f64 {
                return Err(CliError::input(format!(
                    "camera count must be an integer in 1..={total}, got {value}"
                )));
            }
            let n = value as usize;
            let names = base.rig.names();
            let keep: Vec<&str> = spread_cameras(total, n)
                .into_iter()
                .map(|i| names[i])
                .collect();
            let mut rig = None;
            for (_, obs) in s.trials.iter_mut() {
                let (o, r) = subset_cameras(obs, &base.rig, &keep, n >= 2)
                    .map_err(|e| CliError::input(e.to_string()))?;
                *obs = o;
                rig = Some(r);
            }
            s.rig = rig.expect("sessions have trials");
        }
        Mode::Rank => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(CliError::input(format!(
                    "rank must be a nonnegative integer, got {value}"
                )));
            }
            c.posterior.rank = value as usize;
        }
    }
    Ok((s, c))
}

pub fn run_cell(
    base: &Session,
    config: &FitConfig,
    mode: Mode,
    value: f64,
    seed: u64,
    spatial_samples: usize,
) -> Result<CellSummary> {
    let (s, c) = cell_inputs(base, config, mode, value, seed)?;
    let (fit, _) = optimize(&s, &c, |_| {}).map_err(|f| f.2)?;
    summarize(&fit, spatial_samples, seed)
}

/// Runs every cell. Failures are recorded per cell.
pub fn sweep(base: &Session, opts: &AblateOptions) -> Result<Vec<CellResult>> {
    if opts.grid.is_empty() {
        return Err(CliError::input("grid: at least one value is required"));
    }
    if opts.seeds == 0 {
        return Err(CliError::input("seeds: at least one seed is required"));
    }
    let config = base.file.fit_config(&base.model, &opts.overrides)?;
    let cells: Vec<(f64, u64)> = opts
        .grid
        .iter()
        .flat_map(|&v| (0..opts.seeds as u64).map(move |s| (v, s)))
        .map(|(v, s)| (v, config.seed.wrapping_add(s)))
        .collect();
    let results: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(value, seed)) = cells.get(i) else {
            break;
        };
        let outcome = run_cell(base, &config, opts.mode, value, seed, opts.spatial_samples)
            .map_err(|e| e.to_string());
        results.lock().expect("no worker panicked")[i] = Some(CellResult {
            value,
            seed,
            outcome,
        });
    };
    let threads = opts.threads.clamp(1, cells.len());
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|sc| {
            for _ in 0..threads {
                sc.spawn(&work);
            }
        });
    }
    Ok(results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect())
}

pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                CliError::input(format!(
                    "{THREADS_ENV}: expected a positive integer, got {v:?}"
                ))
            }),
        Err(_) => Ok(1),
    }
}

pub fn write_sweep(path: &Path, mode: Mode, results: &[CellResult]) -> Result<()> {
    let baseline = |seed: u64| {
        results
            .iter()
            .find(|r| r.seed == seed)
            .and_then(|r| r.outcome.as_ref().ok())
            .map(|s| s.entropy)
            .unwrap_or(f64::NAN)
    };
    let header = [
        "mode",
        "value",
        "seed",
        "status",
        "entropy",
        "entropy_delta",
        "median_joint_std_deg",
        "psi0",
        "psi1",
        "psi2",
        "sigma0_px",
        "median_spatial_mm",
        "ece0",
        "ece2",
        "reproj_px",
        "message",
    ];
    let rows = results.iter().map(|r| {
        let mut row = vec![
            mode.as_str().to_string(),
            fmt_f64(r.value),
            r.seed.to_string(),
        ];
        match &r.outcome {
            Ok(s) => {
                row.push("ok".into());
                row.extend(
                    [
                        s.entropy,
                        s.entropy - baseline(r.seed),
                        s.median_joint_std_deg,
                        s.psi[0],
                        s.psi[1],
                        s.psi[2],
                        s.sigma0_px,
                        s.median_spatial_mm,
                        s.ece0,
                        s.ece2,
                        s.reproj_px,
                    ]
                    .map(fmt_f64),
                );
                row.push(String::new());
            }
            Err(e) => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n(String::new(), 11));
                row.push(e.clone());
            }
        }
        row
    });
    write_csv(path, &header, rows)
}

pub fn run(session_path: &Path, out: &Path, opts: &AblateOptions) -> Result<Vec<CellResult>> {
    let start = Instant::now();
    let base = session::load(session_path)?;
    let results = sweep(&base, opts)?;
    ensure_dir(out)?;
    write_sweep(&out.join(SWEEP), opts.mode, &results)?;
    for r in &results {
        if let Err(e) = &r.outcome {
            eprintln!(
                "cell {}={} seed {} failed: {e}",
                opts.mode.as_str(),
                r.value,
                r.seed
            );
        }
    }
    let mut inputs = base.inputs.clone();
    inputs.extend(
        format!(
            "{:?} {:?} {} {:?}",
            opts.mode, opts.grid, opts.seeds, opts.overrides
        )
        .into_bytes(),
    );
    let seed = base.file.fit_config(&base.model, &opts.overrides)?.seed;
    Manifest::new(
        "ablate",
        &inputs,
        seed,
        vec![SWEEP.into()],
        start.elapsed().as_secs_f64(),
    )
    .write(out)?;
    Ok(results)
}
