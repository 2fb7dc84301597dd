//! `kinvi fit`: optimize a session and write a checkpoint and convergence
//! log.

use std::path::Path;
use std::time::Instant;

use kinvi_core::inference::{FitConfig, FitError, Scene, SessionFit, StepLog, Trainer};

use super::ensure_dir;
use crate::error::{CliError, Result};
use crate::formats::checkpoint::{self, Checkpoint};
use crate::formats::log;
use crate::formats::manifest::Manifest;
use crate::formats::session::{self, Overrides, Session};

pub const CHECKPOINT: &str = "checkpoint.json";
pub const LOG: &str = "convergence.csv";

pub fn fit_error(e: FitError) -> CliError {
    match e {
        FitError::Divergence { step, detail } => {
            CliError::Divergence(format!("diverged at step {step}: {detail}"))
        }
        other => CliError::input(other.to_string()),
    }
}

/// The last good state (if any), the steps logged before the failure, and the error.
pub type Failure = (Option<SessionFit>, Vec<StepLog>, CliError);

/// Runs the optimizer to the end of the schedule. On divergence the last
/// good state is returned along with the error.
pub fn optimize(
    session: &Session,
    config: &FitConfig,
    mut on_step: impl FnMut(&StepLog),
) -> std::result::Result<(SessionFit, Vec<StepLog>), Box<Failure>> {
    let scene = Scene::Body {
        model: session.model.clone(),
        rig: session.rig.clone(),
    };
    let mut trainer = Trainer::new(scene, session.trials.clone(), config.clone())
        .map_err(|e| Box::new((None, Vec::new(), fit_error(e))))?;
    let mut logs = Vec::with_capacity(config.schedule.total_steps);
    while !trainer.finished() {
        match trainer.step() {
            Ok(l) => {
                on_step(&l);
                logs.push(l);
            }
            Err(e) => return Err(Box::new((Some(trainer.into_session()), logs, fit_error(e)))),
        }
    }
    Ok((trainer.into_session(), logs))
}

pub fn run(session_path: &Path, out: &Path, overrides: &Overrides, quiet: bool) -> Result<()> {
    let start = Instant::now();
    let session = session::load(session_path)?;
    let config = session.file.fit_config(&session.model, overrides)?;
    if let Some(w) = config.family.warning() {
        eprintln!("{w}");
    }
    ensure_dir(out)?;
    let total = config.schedule.total_steps;
    let every = (total / 20).max(1);
    let progress = |l: &StepLog| {
        if !quiet && (l.step % every == 0 || l.step + 1 == total) {
            eprintln!(
                "step {:>6}/{total}  elbo {:.4e}  entropy {:.3}  reproj {:.3} px",
                l.step + 1,
                l.elbo,
                l.entropy,
                l.mean_reproj_px
            );
        }
    };
    let (fit, logs, failure) = match optimize(&session, &config, progress) {
        Ok((fit, logs)) => (Some(fit), logs, None),
        Err(f) => {
            let (fit, logs, e) = *f;
            (fit, logs, Some(e))
        }
    };
    let mut outputs = Vec::new();
    if let Some(fit) = &fit {
        checkpoint::write(&out.join(CHECKPOINT), &Checkpoint::from_fit(fit, &config)?)?;
        outputs.push(CHECKPOINT.to_string());
    }
    log::write(&out.join(LOG), &logs)?;
    outputs.push(LOG.to_string());
    let mut inputs = session.inputs.clone();
    inputs.extend(format!("{overrides:?}").into_bytes());
    Manifest::new(
        "fit",
        &inputs,
        config.seed,
        outputs,
        start.elapsed().as_secs_f64(),
    )
    .write(out)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
