//! File formats: point-cloud CSV, pose text files, voxel dumps.
//!
//! Every writer goes through [`write_atomic`] (temp file + rename).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{ProjectionConfig, Voxel, VoxelCloud};
use crate::se3::{Point3, PointCloud, RigidTransform};
use crate::synth::ReliabilityClass;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp: PathBuf = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    x: f64,
    y: f64,
    z: f64,
    intensity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<ReliabilityClass>,
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(line, e.to_string())
}

fn to_csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::parse(0, e.to_string()))
}

/// CSV `x,y,z,intensity`, or `x,y,z,intensity,class` when `classes` is given.
pub fn points_to_csv(cloud: &PointCloud, classes: Option<&[ReliabilityClass]>) -> Result<Vec<u8>> {
    if let Some(c) = classes {
        if c.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                left: cloud.len(),
                right: c.len(),
            });
        }
    }
    if classes.is_none() && cloud.is_empty() {
        return Ok(b"x,y,z,intensity\n".to_vec());
    }
    to_csv_bytes(cloud.iter().enumerate().map(|(i, p)| PointRow {
        x: p.x,
        y: p.y,
        z: p.z,
        intensity: p.intensity,
        class: classes.map(|c| c[i]),
    }))
}

pub fn write_points_csv(path: &Path, cloud: &PointCloud, classes: Option<&[ReliabilityClass]>) -> Result<()> {
    write_atomic(path, &points_to_csv(cloud, classes)?)
}

/// Parses a point CSV. The header must start with `x,y,z,intensity`; an
/// optional `class` column is returned when present.
pub fn points_from_csv(text: &str) -> Result<(PointCloud, Option<Vec<ReliabilityClass>>)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 4 || names[..4] != ["x", "y", "z", "intensity"] {
        return Err(Error::parse(1, "header must start with x,y,z,intensity"));
    }
    let has_class = names.get(4) == Some(&"class");
    let mut points = Vec::new();
    let mut classes = Vec::new();
    for (i, row) in reader.deserialize::<PointRow>().enumerate() {
        let row = row.map_err(csv_error)?;
        let p = Point3::new(row.x, row.y, row.z, row.intensity);
        p.validate(i).map_err(|e| Error::parse(i + 2, e.to_string()))?;
        points.push(p);
        if has_class {
            classes.push(row.class.ok_or_else(|| Error::parse(i + 2, "missing class"))?);
        }
    }
    Ok((PointCloud::new(points), has_class.then_some(classes)))
}

pub fn read_points_csv(path: &Path) -> Result<(PointCloud, Option<Vec<ReliabilityClass>>)> {
    points_from_csv(&read_text(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CoordRow {
    gx: f64,
    gy: f64,
    gz: f64,
}

/// CSV `gx,gy,gz` of per-point world coordinates.
pub fn coords_to_csv(coords: &[Vector3<f64>]) -> Result<Vec<u8>> {
    if coords.is_empty() {
        return Ok(b"gx,gy,gz\n".to_vec());
    }
    to_csv_bytes(coords.iter().map(|c| CoordRow {
        gx: c.x,
        gy: c.y,
        gz: c.z,
    }))
}

pub fn coords_from_csv(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize::<CoordRow>()
        .map(|r| r.map(|r| Vector3::new(r.gx, r.gy, r.gz)).map_err(csv_error))
        .collect()
}

/// Twelve whitespace-separated numbers, row-major `[R|t]`.
pub fn pose_to_text(t: &RigidTransform) -> String {
    let v = t.to_row_major();
    let mut s = String::new();
    for row in v.chunks(4) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    s
}

pub fn pose_from_text(text: &str) -> Result<RigidTransform> {
    let values = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| Error::parse(1, format!("pose value `{tok}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let arr: [f64; 12] = values
        .try_into()
        .map_err(|v: Vec<f64>| Error::parse(1, format!("pose needs 12 numbers, found {}", v.len())))?;
    let t = RigidTransform::from_row_major(&arr);
    RigidTransform::new(t.rotation, t.translation).map_err(|e| Error::parse(1, e.to_string()))
}

pub fn write_pose(path: &Path, t: &RigidTransform) -> Result<()> {
    write_atomic(path, pose_to_text(t).as_bytes())
}

pub fn read_pose(path: &Path) -> Result<RigidTransform> {
    pose_from_text(&read_text(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct VoxelRow {
    ix: i64,
    iy: i64,
    iz: i64,
    px: f64,
    py: f64,
    pz: f64,
    intensity: f64,
    source_index: usize,
}

/// CSV `ix,iy,iz,px,py,pz,intensity,source_index`.
pub fn voxels_to_csv(v: &VoxelCloud) -> Result<Vec<u8>> {
    if v.is_empty() {
        return Ok(b"ix,iy,iz,px,py,pz,intensity,source_index\n".to_vec());
    }
    to_csv_bytes(v.voxels.iter().map(|vox| VoxelRow {
        ix: vox.key[0],
        iy: vox.key[1],
        iz: vox.key[2],
        px: vox.representative.x,
        py: vox.representative.y,
        pz: vox.representative.z,
        intensity: vox.representative.intensity,
        source_index: vox.source_index,
    }))
}

pub fn voxels_from_csv(text: &str, config: ProjectionConfig) -> Result<VoxelCloud> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let ring = config.ring();
    let voxels = reader
        .deserialize::<VoxelRow>()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(csv_error)?;
            if !(0..ring).contains(&r.ix) {
                return Err(Error::parse(i + 2, format!("ix {} outside [0, {ring})", r.ix)));
            }
            Ok(Voxel {
                key: [r.ix, r.iy, r.iz],
                representative: Point3::new(r.px, r.py, r.pz, r.intensity),
                source_index: r.source_index,
                padded: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VoxelCloud { voxels, config })
}
