//! Keypoint observation tables.
//!
//! The first line is a version marker, `# kinvi observations v1`, then a
//! header and one row per present detection:
//!
//! ```text
//! frame_idx,time_s,camera_name,keypoint_idx,u_px,v_px,score
//! 0,0.0,cam0,3,612.5,233.25,0.4
//! ```
//!
//! Missing detections are omitted. A frame without any detection is kept as
//! a row with only `frame_idx` and `time_s` filled in, so the time grid
//! survives a round trip.

use std::collections::BTreeMap;
use std::path::Path;

use kinvi_core::likelihood::Frame;
use kinvi_core::{Observation, ObservationSet};

use super::{fmt_f64, read_text, write_text, FORMAT_VERSION};
use crate::error::{CliError, Result};

pub const MARKER: &str = "# kinvi observations v";
pub const HEADER: [&str; 7] = [
    "frame_idx",
    "time_s",
    "camera_name",
    "keypoint_idx",
    "u_px",
    "v_px",
    "score",
];

pub fn to_string(obs: &ObservationSet) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for f in obs.frames() {
        let mut any = false;
        for o in f.observations.iter().filter(|o| o.present) {
            any = true;
            w.write_record([
                f.index.to_string(),
                fmt_f64(f.time),
                obs.camera_names()[o.camera].clone(),
                o.keypoint.to_string(),
                fmt_f64(o.y[0]),
                fmt_f64(o.y[1]),
                fmt_f64(o.score),
            ])
            .expect("in-memory write");
        }
        if !any {
            w.write_record([
                f.index.to_string(),
                fmt_f64(f.time),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])
            .expect("in-memory write");
        }
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8");
    format!("{MARKER}{FORMAT_VERSION}\n{body}")
}

pub fn write(path: &Path, obs: &ObservationSet) -> Result<()> {
    write_text(path, &to_string(obs))
}

/// Parses a table against the rig's camera order and the model's keypoint
/// count. `origin` names the source in error messages.
pub fn parse(
    text: &str,
    origin: &str,
    cameras: &[String],
    keypoints: usize,
) -> Result<ObservationSet> {
    let err = |line: usize, m: String| CliError::input(format!("{origin}:{line}: {m}"));
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let version = first
        .trim_end()
        .strip_prefix(MARKER)
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| {
            err(
                1,
                format!("missing version marker \"{MARKER}{FORMAT_VERSION}\""),
            )
        })?;
    if version != FORMAT_VERSION {
        return Err(err(1, format!("unsupported version {version}")));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(rest.as_bytes());
    let header = rdr.headers().map_err(|e| err(2, e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(err(2, format!("header must be {}", HEADER.join(","))));
    }
    let mut frames: BTreeMap<u64, Frame> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let num = |k: usize| -> Result<f64> {
            field(k)
                .parse::<f64>()
                .map_err(|_| err(line, format!("{}: not a number: {:?}", HEADER[k], field(k))))
        };
        let index: u64 = field(0)
            .parse()
            .map_err(|_| err(line, format!("frame_idx: not an integer: {:?}", field(0))))?;
        let time = num(1)?;
        let frame = frames.entry(index).or_insert_with(|| Frame {
            index,
            time,
            observations: Vec::new(),
        });
        if frame.time != time {
            return Err(err(
                line,
                format!(
                    "time_s: frame {index} listed with times {} and {time}",
                    frame.time
                ),
            ));
        }
        if (2..7).all(|k| field(k).is_empty()) {
            continue;
        }
        let camera = cameras
            .iter()
            .position(|c| c == field(2))
            .ok_or_else(|| err(line, format!("camera_name: unknown camera {:?}", field(2))))?;
        let keypoint: usize = field(3).parse().map_err(|_| {
            err(
                line,
                format!("keypoint_idx: not an integer: {:?}", field(3)),
            )
        })?;
        if keypoint >= keypoints {
            return Err(err(
                line,
                format!("keypoint_idx: {keypoint} out of range (model has {keypoints})"),
            ));
        }
        let (u, v, score) = (num(4)?, num(5)?, num(6)?);
        if !(u.is_finite() && v.is_finite()) {
            return Err(err(line, "u_px/v_px: non-finite pixel".into()));
        }
        if !(score.is_finite() && score >= 0.0) {
            return Err(err(
                line,
                format!("score: must be finite and nonnegative, got {score}"),
            ));
        }
        frame.observations.push(Observation {
            frame: 0,
            camera,
            keypoint,
            y: [u, v],
            score,
            present: true,
        });
    }
    if frames.is_empty() {
        return Err(CliError::input(format!("{origin}: no rows")));
    }
    ObservationSet::new(cameras.to_vec(), keypoints, frames.into_values().collect())
        .map_err(|e| CliError::input(format!("{origin}: {e}")))
}

pub fn load(path: &Path, cameras: &[String], keypoints: usize) -> Result<ObservationSet> {
    parse(
        &read_text(path)?,
        &path.display().to_string(),
        cameras,
        keypoints,
    )
}
