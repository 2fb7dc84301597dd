//! Convergence log: one CSV row per optimization step.

use std::path::Path;

use kinvi_core::inference::StepLog;

use super::{fmt_f64, write_csv};
use crate::error::Result;

pub const HEADER: [&str; 9] = [
    "step",
    "elbo",
    "entropy",
    "mean_reproj_px",
    "lr",
    "psi0",
    "psi1",
    "psi2",
    "sigma_at_median_score",
];

pub fn write(path: &Path, rows: &[StepLog]) -> Result<()> {
    write_csv(
        path,
        &HEADER,
        rows.iter().map(|r| {
            vec![
                r.step.to_string(),
                fmt_f64(r.elbo),
                fmt_f64(r.entropy),
                fmt_f64(r.mean_reproj_px),
                fmt_f64(r.lr),
                fmt_f64(r.psi[0]),
                fmt_f64(r.psi[1]),
                fmt_f64(r.psi[2]),
                fmt_f64(r.sigma_at_median_score),
            ]
        }),
    )
}
