//! Ground-truth pose tables written by `synth`: `frame_idx,time_s` followed
//! by one column per degree of freedom, in model order.

use std::path::Path;

use super::{fmt_f64, read_text, write_csv};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dof_names: Vec<String>,
    pub times: Vec<f64>,
    pub poses: Vec<Vec<f64>>,
}

pub fn write(path: &Path, dof_names: &[String], times: &[f64], poses: &[Vec<f64>]) -> Result<()> {
    let mut header = vec!["frame_idx", "time_s"];
    header.extend(dof_names.iter().map(|s| s.as_str()));
    let rows = times.iter().zip(poses).enumerate().map(|(i, (t, p))| {
        let mut r = vec![i.to_string(), fmt_f64(*t)];
        r.extend(p.iter().map(|&x| fmt_f64(x)));
        r
    });
    write_csv(path, &header, rows)
}

pub fn load(path: &Path) -> Result<GroundTruth> {
    let text = read_text(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::at(path, e))?.clone();
    if header.len() < 3 || &header[0] != "frame_idx" || &header[1] != "time_s" {
        return Err(CliError::at(
            path,
            "header must start with frame_idx,time_s",
        ));
    }
    let dof_names: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let (mut times, mut poses) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::at(path, e))?;
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                CliError::input(format!("{}:{}: non-numeric value", path.display(), i + 2))
            })?;
        if vals.len() != dof_names.len() + 1 {
            return Err(CliError::input(format!(
                "{}:{}: wrong column count",
                path.display(),
                i + 2
            )));
        }
        times.push(vals[0]);
        poses.push(vals[1..].to_vec());
    }
    Ok(GroundTruth {
        dof_names,
        times,
        poses,
    })
}
