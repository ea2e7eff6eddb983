//! Pipeline configuration as a flat `key = value` text file.
//!
//! Blank lines and `#` comments are ignored; keys absent from a file keep
//! their defaults. [`PipelineConfig::to_text`] writes every key, in the
//! order of [`CONFIG_KEYS`], so a written file parses back to an equal value.

use std::fmt::Write as _;
use std::path::Path;

use crate::encoder::{parse_activation, activation_tag, EncoderConfig};
use crate::error::{Error, Result};
use crate::io::read_text;
use crate::metrics::DEFAULT_THRESHOLDS;
use crate::plane::RansacPlaneParams;
use crate::pose::{RansacPoseParams, SelectionPolicy};
use crate::projection::ProjectionConfig;
use crate::synth::{OracleCorruption, Perturbation, SensorSpec, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalCoords {
    /// The retained point of each voxel, in the rectified frame.
    Representative,
    /// Cartesian recovery at voxel centers.
    VoxelCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Trr,
    Mean,
    Matching,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trr" => Ok(LossKind::Trr),
            "mean" => Ok(LossKind::Mean),
            "matching" => Ok(LossKind::Matching),
            _ => Err(Error::InvalidConfig(format!("unknown loss `{s}`"))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LossKind::Trr => "trr",
            LossKind::Mean => "mean",
            LossKind::Matching => "matching",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub scans: usize,
    /// Loop arc the training poses span, degrees.
    pub arc_deg: f64,
    pub points_per_scan: usize,
    pub epochs: usize,
    pub lr: f64,
    pub gamma: f64,
    pub loss: LossKind,
    pub sigma_max: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scans: 20,
            arc_deg: 0.0,
            points_per_scan: 256,
            epochs: 40,
            lr: 0.01,
            gamma: 0.95,
            loss: LossKind::Trr,
            sigma_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub projection: ProjectionConfig,
    pub local_coords: LocalCoords,
    pub plane: RansacPlaneParams,
    pub encoder: EncoderConfig,
    pub encoder_seed: u64,
    pub regressor_layers: usize,
    pub regressor_heads: usize,
    pub regressor_seed: u64,
    pub selection: SelectionPolicy,
    pub ransac: RansacPoseParams,
    pub world: WorldSpec,
    pub world_seed: u64,
    pub sensor: SensorSpec,
    pub scans: usize,
    pub sensor_height: f64,
    pub oracle: OracleCorruption,
    pub train_oracle: OracleCorruption,
    pub perturbations: Vec<Perturbation>,
    pub train: TrainConfig,
    pub thresholds: Vec<f64>,
    pub encoder_weights: String,
    pub regressor_weights: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            projection: ProjectionConfig::default(),
            local_coords: LocalCoords::Representative,
            plane: RansacPlaneParams::default(),
            encoder: EncoderConfig::toy(),
            encoder_seed: 1,
            regressor_layers: 2,
            regressor_heads: 4,
            regressor_seed: 2,
            selection: SelectionPolicy::default(),
            ransac: RansacPoseParams::default(),
            world: WorldSpec::default(),
            world_seed: 2024,
            sensor: SensorSpec::default(),
            scans: 100,
            sensor_height: 1.8,
            oracle: OracleCorruption::default(),
            train_oracle: OracleCorruption {
                sigma_reliable: 0.0,
                outlier_box: 20.0,
                ambiguous_fraction: None,
            },
            perturbations: vec![
                Perturbation::None,
                Perturbation::Yaw(std::f64::consts::PI),
                Perturbation::RandomYaw,
                Perturbation::Dropout(0.5),
                Perturbation::GaussianNoise(0.05),
                Perturbation::PitchRoll(10.0),
                Perturbation::FovLimit(180.0),
            ],
            train: TrainConfig::default(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            encoder_weights: String::new(),
            regressor_weights: String::new(),
        }
    }
}

/// Every key with a one-line description, in file order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("seed", "global seed; per-scan streams are derived from it"),
    ("projection.voxel_size", "voxel edge length δ in meters"),
    ("projection.ring_cells", "circumferential cells L_x (even, divisible by 16 for the encoder)"),
    ("projection.local_coords", "local point per voxel: representative | voxel_center"),
    ("plane.iterations", "ground-plane RANSAC iterations"),
    ("plane.inlier_threshold", "ground-plane inlier distance in meters"),
    ("plane.min_inliers", "minimum ground inliers"),
    ("encoder.stem_width", "stem output channels"),
    ("encoder.widths", "five comma-separated stage widths"),
    ("encoder.fused_width", "final feature width"),
    ("encoder.activation", "leaky_relu:<slope> | identity"),
    ("encoder.seed", "seed of the frozen random encoder weights"),
    ("regressor.layers", "stacked multi-head blocks"),
    ("regressor.heads", "heads per block"),
    ("regressor.seed", "seed of the initial regressor weights"),
    ("selection.top_fraction", "fraction of most reliable voxels kept for the pose solve"),
    ("selection.min_count", "keep every voxel when the top fraction is smaller than this"),
    ("ransac.iterations", "pose RANSAC hypotheses"),
    ("ransac.inlier_threshold", "pose inlier residual in meters"),
    ("ransac.refit", "refit on the consensus set: true | false"),
    ("world.seed", "seed of the synthetic world layout"),
    ("world.half_extent", "half width of the square world in meters"),
    ("world.height", "world ceiling in meters"),
    ("world.buildings", "number of box buildings"),
    ("world.cylinders", "number of thin vegetation cylinders"),
    ("world.loop_radius", "radius of the benchmark loop trajectory in meters"),
    ("world.building_clearance", "building-free band around the loop in meters"),
    ("world.cylinder_clearance", "vegetation-free band around the loop in meters"),
    ("sensor.azimuth_rays", "rays per revolution"),
    ("sensor.elevation_rays", "rays per column"),
    ("sensor.elevation_min_deg", "lowest beam elevation"),
    ("sensor.elevation_max_deg", "highest beam elevation"),
    ("sensor.max_range", "maximum range in meters"),
    ("sensor.fov_azimuth_deg", "horizontal field of view in degrees"),
    ("sensor.range_noise_sigma", "Gaussian range noise in meters"),
    ("sensor.azimuth_phase", "offset of the first ray as a fraction of one azimuth step"),
    ("bench.scans", "poses on the loop trajectory"),
    ("bench.sensor_height", "sensor height above ground in meters"),
    ("bench.perturbations", "semicolon-separated KIND[=VALUE] conditions"),
    ("oracle.sigma_reliable", "Gaussian error of reliable oracle predictions in meters"),
    ("oracle.outlier_box", "edge of the cube ambiguous predictions are drawn from, meters"),
    ("oracle.ambiguous_fraction", "fraction of points treated as ambiguous, or `surface` to use surface classes"),
    ("train.scans", "training scans drawn evenly from the loop"),
    ("train.arc_deg", "loop arc spanned by the training poses, degrees"),
    ("train.points_per_scan", "voxels sampled per training scan"),
    ("train.epochs", "gradient-descent epochs"),
    ("train.lr", "initial learning rate"),
    ("train.gamma", "multiplicative learning-rate decay per epoch"),
    ("train.loss", "trr | mean | matching"),
    ("train.sigma_max", "σ_max of the matching loss"),
    ("train.label_sigma", "Gaussian label noise on reliable training targets, meters"),
    ("train.label_box", "edge of the label-noise cube for ambiguous training targets"),
    ("report.thresholds", "comma-separated success thresholds in meters"),
    ("paths.encoder_weights", "encoder weights file; empty uses encoder.seed"),
    ("paths.regressor_weights", "regressor weights file; empty uses regressor.seed"),
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::InvalidConfig(format!("`{key}` cannot be `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("`{key}` must be true or false"))),
    }
}

fn join<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

fn format_fraction(f: Option<f64>) -> String {
    f.map_or_else(|| "surface".into(), |v| v.to_string())
}

fn parse_fraction(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "surface" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

impl PipelineConfig {
    pub fn value(&self, key: &str) -> Option<String> {
        let v = match key {
            "seed" => self.seed.to_string(),
            "projection.voxel_size" => self.projection.voxel_size.to_string(),
            "projection.ring_cells" => self.projection.ring_cells.to_string(),
            "projection.local_coords" => match self.local_coords {
                LocalCoords::Representative => "representative".into(),
                LocalCoords::VoxelCenter => "voxel_center".into(),
            },
            "plane.iterations" => self.plane.iterations.to_string(),
            "plane.inlier_threshold" => self.plane.inlier_threshold.to_string(),
            "plane.min_inliers" => self.plane.min_inliers.to_string(),
            "encoder.stem_width" => self.encoder.stem_width.to_string(),
            "encoder.widths" => join(&self.encoder.widths, ","),
            "encoder.fused_width" => self.encoder.fused_width.to_string(),
            "encoder.activation" => activation_tag(&self.encoder.activation),
            "encoder.seed" => self.encoder_seed.to_string(),
            "regressor.layers" => self.regressor_layers.to_string(),
            "regressor.heads" => self.regressor_heads.to_string(),
            "regressor.seed" => self.regressor_seed.to_string(),
            "selection.top_fraction" => self.selection.top_fraction.to_string(),
            "selection.min_count" => self.selection.min_count.to_string(),
            "ransac.iterations" => self.ransac.iterations.to_string(),
            "ransac.inlier_threshold" => self.ransac.inlier_threshold.to_string(),
            "ransac.refit" => self.ransac.refit_on_inliers.to_string(),
            "world.seed" => self.world_seed.to_string(),
            "world.half_extent" => self.world.half_extent.to_string(),
            "world.height" => self.world.height.to_string(),
            "world.buildings" => self.world.buildings.to_string(),
            "world.cylinders" => self.world.cylinders.to_string(),
            "world.loop_radius" => self.world.loop_radius.to_string(),
            "world.building_clearance" => self.world.building_clearance.to_string(),
            "world.cylinder_clearance" => self.world.cylinder_clearance.to_string(),
            "sensor.azimuth_rays" => self.sensor.azimuth_rays.to_string(),
            "sensor.elevation_rays" => self.sensor.elevation_rays.to_string(),
            "sensor.elevation_min_deg" => self.sensor.elevation_min_deg.to_string(),
            "sensor.elevation_max_deg" => self.sensor.elevation_max_deg.to_string(),
            "sensor.max_range" => self.sensor.max_range.to_string(),
            "sensor.fov_azimuth_deg" => self.sensor.fov_azimuth_deg.to_string(),
            "sensor.range_noise_sigma" => self.sensor.range_noise_sigma.to_string(),
            "sensor.azimuth_phase" => self.sensor.azimuth_phase.to_string(),
            "bench.scans" => self.scans.to_string(),
            "bench.sensor_height" => self.sensor_height.to_string(),
            "bench.perturbations" => self.perturbations.iter().map(Perturbation::label).collect::<Vec<_>>().join(";"),
            "oracle.sigma_reliable" => self.oracle.sigma_reliable.to_string(),
            "oracle.outlier_box" => self.oracle.outlier_box.to_string(),
            "oracle.ambiguous_fraction" => format_fraction(self.oracle.ambiguous_fraction),
            "train.scans" => self.train.scans.to_string(),
            "train.arc_deg" => self.train.arc_deg.to_string(),
            "train.points_per_scan" => self.train.points_per_scan.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.lr" => self.train.lr.to_string(),
            "train.gamma" => self.train.gamma.to_string(),
            "train.loss" => self.train.loss.tag().into(),
            "train.sigma_max" => self.train.sigma_max.to_string(),
            "train.label_sigma" => self.train_oracle.sigma_reliable.to_string(),
            "train.label_box" => self.train_oracle.outlier_box.to_string(),
            "report.thresholds" => join(&self.thresholds, ","),
            "paths.encoder_weights" => self.encoder_weights.clone(),
            "paths.regressor_weights" => self.regressor_weights.clone(),
            _ => return None,
        };
        Some(v)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "projection.voxel_size" => self.projection.voxel_size = parse_num(key, value)?,
            "projection.ring_cells" => self.projection.ring_cells = parse_num(key, value)?,
            "projection.local_coords" => {
                self.local_coords = match value {
                    "representative" => LocalCoords::Representative,
                    "voxel_center" => LocalCoords::VoxelCenter,
                    _ => return Err(Error::InvalidConfig(format!("`{key}` cannot be `{value}`"))),
                }
            }
            "plane.iterations" => self.plane.iterations = parse_num(key, value)?,
            "plane.inlier_threshold" => self.plane.inlier_threshold = parse_num(key, value)?,
            "plane.min_inliers" => self.plane.min_inliers = parse_num(key, value)?,
            "encoder.stem_width" => self.encoder.stem_width = parse_num(key, value)?,
            "encoder.widths" => {
                let w: Vec<usize> = value.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_>>()?;
                self.encoder.widths = w
                    .try_into()
                    .map_err(|_| Error::InvalidConfig(format!("`{key}` needs five widths")))?;
            }
            "encoder.fused_width" => self.encoder.fused_width = parse_num(key, value)?,
            "encoder.activation" => self.encoder.activation = parse_activation(value)?,
            "encoder.seed" => self.encoder_seed = parse_num(key, value)?,
            "regressor.layers" => self.regressor_layers = parse_num(key, value)?,
            "regressor.heads" => self.regressor_heads = parse_num(key, value)?,
            "regressor.seed" => self.regressor_seed = parse_num(key, value)?,
            "selection.top_fraction" => self.selection.top_fraction = parse_num(key, value)?,
            "selection.min_count" => self.selection.min_count = parse_num(key, value)?,
            "ransac.iterations" => self.ransac.iterations = parse_num(key, value)?,
            "ransac.inlier_threshold" => self.ransac.inlier_threshold = parse_num(key, value)?,
            "ransac.refit" => self.ransac.refit_on_inliers = parse_bool(key, value)?,
            "world.seed" => self.world_seed = parse_num(key, value)?,
            "world.half_extent" => self.world.half_extent = parse_num(key, value)?,
            "world.height" => self.world.height = parse_num(key, value)?,
            "world.buildings" => self.world.buildings = parse_num(key, value)?,
            "world.cylinders" => self.world.cylinders = parse_num(key, value)?,
            "world.loop_radius" => self.world.loop_radius = parse_num(key, value)?,
            "world.building_clearance" => self.world.building_clearance = parse_num(key, value)?,
            "world.cylinder_clearance" => self.world.cylinder_clearance = parse_num(key, value)?,
            "sensor.azimuth_rays" => self.sensor.azimuth_rays = parse_num(key, value)?,
            "sensor.elevation_rays" => self.sensor.elevation_rays = parse_num(key, value)?,
            "sensor.elevation_min_deg" => self.sensor.elevation_min_deg = parse_num(key, value)?,
            "sensor.elevation_max_deg" => self.sensor.elevation_max_deg = parse_num(key, value)?,
            "sensor.max_range" => self.sensor.max_range = parse_num(key, value)?,
            "sensor.fov_azimuth_deg" => self.sensor.fov_azimuth_deg = parse_num(key, value)?,
            "sensor.range_noise_sigma" => self.sensor.range_noise_sigma = parse_num(key, value)?,
            "sensor.azimuth_phase" => self.sensor.azimuth_phase = parse_num(key, value)?,
            "bench.scans" => self.scans = parse_num(key, value)?,
            "bench.sensor_height" => self.sensor_height = parse_num(key, value)?,
            "bench.perturbations" => {
                self.perturbations = value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(Perturbation::parse)
                    .collect::<Result<_>>()?
            }
            "oracle.sigma_reliable" => self.oracle.sigma_reliable = parse_num(key, value)?,
            "oracle.outlier_box" => self.oracle.outlier_box = parse_num(key, value)?,
            "oracle.ambiguous_fraction" => self.oracle.ambiguous_fraction = parse_fraction(key, value)?,
            "train.scans" => self.train.scans = parse_num(key, value)?,
            "train.arc_deg" => self.train.arc_deg = parse_num(key, value)?,
            "train.points_per_scan" => self.train.points_per_scan = parse_num(key, value)?,
            "train.epochs" => self.train.epochs = parse_num(key, value)?,
            "train.lr" => self.train.lr = parse_num(key, value)?,
            "train.gamma" => self.train.gamma = parse_num(key, value)?,
            "train.loss" => self.train.loss = LossKind::parse(value)?,
            "train.sigma_max" => self.train.sigma_max = parse_num(key, value)?,
            "train.label_sigma" => self.train_oracle.sigma_reliable = parse_num(key, value)?,
            "train.label_box" => self.train_oracle.outlier_box = parse_num(key, value)?,
            "report.thresholds" => {
                self.thresholds = value.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_>>()?
            }
            "paths.encoder_weights" => self.encoder_weights = value.to_string(),
            "paths.regressor_weights" => self.regressor_weights = value.to_string(),
            _ => return Err(Error::InvalidConfig(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        self.plane.validate()?;
        self.selection.validate()?;
        self.ransac.validate()?;
        self.world.validate()?;
        self.sensor.validate()?;
        self.oracle.validate()?;
        self.train_oracle.validate()?;
        for p in &self.perturbations {
            p.validate()?;
        }
        if self.regressor_heads == 0 || self.scans == 0 {
            return Err(Error::InvalidConfig("regressor.heads and bench.scans must be positive".into()));
        }
        if !(self.train.lr >= 0.0 && self.train.gamma > 0.0 && self.train.gamma <= 1.0) {
            return Err(Error::InvalidConfig("train.lr must be ≥ 0 and train.gamma in (0, 1]".into()));
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidConfig("report.thresholds must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (key, _) in CONFIG_KEYS {
            let _ = writeln!(s, "{key} = {}", self.value(key).expect("every listed key has a value"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n + 1, format!("expected key = value, found `{line}`")))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::InvalidConfig(m) => Error::InvalidConfig(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_text(path)?)
    }

    /// One line per key for `--help`.
    pub fn key_help() -> String {
        let defaults = Self::default();
        let mut s = String::new();
        for (key, doc) in CONFIG_KEYS {
            let _ = writeln!(s, "  {key:<28} {doc} [default: {}]", defaults.value(key).unwrap_or_default());
        }
        s
    }
}
