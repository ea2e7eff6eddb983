//! Trajectory error metrics and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};
use crate::se3::{rotation_angle, RigidTransform};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePair {
    pub estimated: RigidTransform,
    pub ground_truth: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryResult {
    pub frames: Vec<FramePair>,
}

impl TrajectoryResult {
    pub fn new(frames: Vec<FramePair>) -> Self {
        Self { frames }
    }

    pub fn from_pairs(estimated: &[RigidTransform], ground_truth: &[RigidTransform]) -> Result<Self> {
        if estimated.len() != ground_truth.len() {
            return Err(Error::LengthMismatch {
                left: estimated.len(),
                right: ground_truth.len(),
            });
        }
        Ok(Self::new(
            estimated
                .iter()
                .zip(ground_truth)
                .map(|(&estimated, &ground_truth)| FramePair { estimated, ground_truth })
                .collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn position_errors(&self) -> Vec<f64> {
        self.frames
            .iter()
            .map(|f| (f.estimated.translation - f.ground_truth.translation).norm())
            .collect()
    }

    pub fn orientation_errors_deg(&self) -> Vec<f64> {
        self.frames
            .iter()
            .map(|f| orientation_error_deg(&f.estimated, &f.ground_truth))
            .collect()
    }
}

/// Geodesic angle between the two rotations, trace argument clamped.
pub fn orientation_error_deg(a: &RigidTransform, b: &RigidTransform) -> f64 {
    rotation_angle(&(a.rotation.transpose() * b.rotation)).to_degrees()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn mpe(r: &TrajectoryResult) -> f64 {
    mean(&r.position_errors())
}

pub fn moe(r: &TrajectoryResult) -> f64 {
    mean(&r.orientation_errors_deg())
}

/// Linear interpolation between order statistics at rank `p/100·(n−1)`.
pub fn percentile_of(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn percentile(r: &TrajectoryResult, p: f64) -> f64 {
    percentile_of(&r.position_errors(), p)
}

pub fn median_position_error(r: &TrajectoryResult) -> f64 {
    percentile(r, 50.0)
}

/// Fraction of frames with position error strictly below each threshold.
pub fn success_at(r: &TrajectoryResult, thresholds: &[f64]) -> Vec<f64> {
    let errs = r.position_errors();
    thresholds
        .iter()
        .map(|&t| {
            if errs.is_empty() {
                0.0
            } else {
                errs.iter().filter(|&&e| e < t).count() as f64 / errs.len() as f64
            }
        })
        .collect()
}

/// Fraction of frames with position error at most each grid value.
pub fn error_cdf(r: &TrajectoryResult, grid: &[f64]) -> Vec<f64> {
    let mut errs = r.position_errors();
    errs.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&g| {
            if errs.is_empty() {
                0.0
            } else {
                errs.partition_point(|&e| e <= g) as f64 / errs.len() as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema_version: u32,
    pub frames: usize,
    pub mpe_m: f64,
    pub moe_deg: f64,
    pub medpe_m: f64,
    pub p99_m: f64,
    /// Keyed `success@<threshold>`.
    #[serde(flatten)]
    pub success: BTreeMap<String, f64>,
}

pub fn success_key(threshold: f64) -> String {
    format!("success@{threshold}")
}

pub fn summarize(r: &TrajectoryResult, thresholds: &[f64]) -> Result<ReportSummary> {
    if r.is_empty() {
        return Err(Error::EmptyScan);
    }
    let success = thresholds
        .iter()
        .zip(success_at(r, thresholds))
        .map(|(&t, f)| (success_key(t), f))
        .collect();
    Ok(ReportSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        frames: r.len(),
        mpe_m: mpe(r),
        moe_deg: moe(r),
        medpe_m: median_position_error(r),
        p99_m: percentile(r, 99.0),
        success,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame: usize,
    pub pos_err_m: f64,
    pub ori_err_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub summary: ReportSummary,
    pub per_frame: Vec<FrameError>,
}

impl Report {
    pub fn build(r: &TrajectoryResult, thresholds: &[f64]) -> Result<Self> {
        let summary = summarize(r, thresholds)?;
        let per_frame = r
            .position_errors()
            .into_iter()
            .zip(r.orientation_errors_deg())
            .enumerate()
            .map(|(frame, (pos_err_m, ori_err_deg))| FrameError {
                frame,
                pos_err_m,
                ori_err_deg,
            })
            .collect();
        Ok(Self { summary, per_frame })
    }

    /// The CSV form lists `frame,pos_err_m,ori_err_deg` rows, a blank line,
    /// then `key,value` summary rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,pos_err_m,ori_err_deg\n");
        for f in &self.per_frame {
            let _ = writeln!(s, "{},{},{}", f.frame, f.pos_err_m, f.ori_err_deg);
        }
        s.push_str("\nkey,value\n");
        let value = serde_json::to_value(&self.summary).expect("summary serializes");
        for (k, v) in value.as_object().expect("summary is an object") {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (frames, summary) = text
            .split_once("\n\n")
            .ok_or_else(|| Error::parse(0, "report CSV lacks a summary block"))?;
        let mut per_frame = Vec::new();
        let mut reader = csv::Reader::from_reader(frames.as_bytes());
        for row in reader.deserialize::<FrameError>() {
            per_frame.push(row.map_err(|e| Error::parse(0, e.to_string()))?);
        }
        let mut object = serde_json::Map::new();
        for (i, line) in summary.lines().skip(1).enumerate() {
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(per_frame.len() + i + 4, "summary row needs key,value"))?;
            let v: serde_json::Value = serde_json::from_str(v).map_err(|e| Error::parse(per_frame.len() + i + 4, e.to_string()))?;
            object.insert(k.to_string(), v);
        }
        let summary = serde_json::from_value(serde_json::Value::Object(object)).map_err(|e| Error::parse(0, e.to_string()))?;
        Ok(Self { summary, per_frame })
    }
}

pub fn emit_report(r: &TrajectoryResult, thresholds: &[f64], path: &Path, format: ReportFormat) -> Result<Report> {
    let report = Report::build(r, thresholds)?;
    let text = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
    };
    write_atomic(path, text.as_bytes())?;
    Ok(report)
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Report> {
    let text = read_text(path)?;
    match format {
        ReportFormat::Csv => Report::from_csv(&text),
        ReportFormat::Json => Report::from_json(&text),
    }
}
