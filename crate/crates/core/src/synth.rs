//! Synthetic worlds, ray-cast scans, scan perturbations, and an oracle
//! predictor standing in for a trained network.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regressor::PredictionSet;
use crate::se3::{Point3, PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReliabilityClass {
    Reliable,
    Ambiguous,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed for item `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x5eed)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Horizontal plane `z = height`.
    Ground { height: f64 },
    Box { min: Vector3<f64>, max: Vector3<f64> },
    /// Vertical cylinder, side wall only.
    Cylinder { x: f64, y: f64, radius: f64, z_min: f64, z_max: f64 },
}

const HIT_EPS: f64 = 1e-9;

impl Surface {
    /// Nearest ray parameter `t > 0` with `origin + t·dir` on the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Surface::Ground { height } => {
                if dir.z.abs() < 1e-12 {
                    return None;
                }
                let t = (height - origin.z) / dir.z;
                (t > HIT_EPS).then_some(t)
            }
            Surface::Box { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for a in 0..3 {
                    if dir[a].abs() < 1e-15 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (min[a] - origin[a]) / dir[a];
                    let t2 = (max[a] - origin[a]) / dir[a];
                    t_near = t_near.max(t1.min(t2));
                    t_far = t_far.min(t1.max(t2));
                }
                if t_near > t_far {
                    None
                } else if t_near > HIT_EPS {
                    Some(t_near)
                } else {
                    (t_far > HIT_EPS).then_some(t_far)
                }
            }
            Surface::Cylinder { x, y, radius, z_min, z_max } => {
                let (ox, oy) = (origin.x - x, origin.y - y);
                let a = dir.x * dir.x + dir.y * dir.y;
                if a < 1e-15 {
                    return None;
                }
                let b = 2.0 * (ox * dir.x + oy * dir.y);
                let c = ox * ox + oy * oy - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)].into_iter().find(|&t| {
                    let z = origin.z + t * dir.z;
                    t > HIT_EPS && (z_min..=z_max).contains(&z)
                })
            }
        }
    }

    fn contained_in(&self, lo: &Vector3<f64>, hi: &Vector3<f64>) -> bool {
        match *self {
            Surface::Ground { height } => (lo.z..=hi.z).contains(&height),
            Surface::Box { min, max } => (0..3).all(|a| min[a] >= lo[a] && max[a] <= hi[a]),
            Surface::Cylinder { x, y, radius, z_min, z_max } => {
                x - radius >= lo.x && x + radius <= hi.x && y - radius >= lo.y && y + radius <= hi.y && z_min >= lo.z && z_max <= hi.z
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceEntry {
    pub surface: Surface,
    pub class: ReliabilityClass,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub surfaces: Vec<SurfaceEntry>,
    pub bounds_min: Vector3<f64>,
    pub bounds_max: Vector3<f64>,
}

impl SyntheticWorld {
    pub fn validate(&self) -> Result<()> {
        if self.surfaces.is_empty() {
            return Err(Error::InvalidConfig("world has no surfaces".into()));
        }
        if let Some(i) = self
            .surfaces
            .iter()
            .position(|s| !s.surface.contained_in(&self.bounds_min, &self.bounds_max))
        {
            return Err(Error::InvalidConfig(format!("surface {i} leaves the world bounds")));
        }
        Ok(())
    }

    /// Nearest hit within `max_range`: `(t, surface index)`.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, s) in self.surfaces.iter().enumerate() {
            if let Some(t) = s.surface.intersect(origin, dir) {
                let inside = t <= max_range && best.is_none_or(|(b, _)| t < b);
                let p = origin + dir * t;
                let in_bounds = (0..2).all(|a| p[a] >= self.bounds_min[a] && p[a] <= self.bounds_max[a]);
                if inside && in_bounds {
                    best = Some((t, i));
                }
            }
        }
        best
    }
}

/// World layout: buildings stay outside an annulus around the loop
/// trajectory, vegetation keeps a small clearance from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldSpec {
    pub half_extent: f64,
    pub height: f64,
    pub buildings: usize,
    pub cylinders: usize,
    pub loop_radius: f64,
    pub building_clearance: f64,
    pub cylinder_clearance: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            half_extent: 70.0,
            height: 40.0,
            buildings: 28,
            cylinders: 40,
            loop_radius: 30.0,
            building_clearance: 7.0,
            cylinder_clearance: 3.0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.half_extent, self.height, self.loop_radius].iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.building_clearance < 0.0 || self.cylinder_clearance < 0.0 {
            return Err(Error::InvalidConfig("world extents must be positive".into()));
        }
        if self.loop_radius + self.building_clearance >= self.half_extent {
            return Err(Error::InvalidConfig("loop trajectory does not fit in the world".into()));
        }
        Ok(())
    }
}

fn annulus_distance(x: f64, y: f64, radius: f64) -> f64 {
    (x.hypot(y) - radius).abs()
}

/// Distance from the loop circle to the nearest point of an axis-aligned
/// rectangle, conservatively via its corners and edge midpoints.
fn rect_clear_of_loop(min: &Vector3<f64>, max: &Vector3<f64>, radius: f64, clearance: f64) -> bool {
    let nearest = Vector3::new(0.0f64.clamp(min.x, max.x), 0.0f64.clamp(min.y, max.y), 0.0);
    let farthest = Vector3::new(
        if min.x.abs() > max.x.abs() { min.x } else { max.x },
        if min.y.abs() > max.y.abs() { min.y } else { max.y },
        0.0,
    );
    let r_near = nearest.norm();
    let r_far = farthest.norm();
    r_far < radius - clearance || r_near > radius + clearance
}

pub fn generate_world(spec: &WorldSpec, seed: u64) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = spec.half_extent;
    let bounds_min = Vector3::new(-h, -h, -1.0);
    let bounds_max = Vector3::new(h, h, spec.height);
    let mut surfaces = vec![SurfaceEntry {
        surface: Surface::Ground { height: 0.0 },
        class: ReliabilityClass::Ambiguous,
        intensity: 0.3,
    }];
    let mut placed = 0;
    let mut attempts = 0;
    while placed < spec.buildings && attempts < spec.buildings * 200 {
        attempts += 1;
        let sx = rng.random_range(4.0..14.0);
        let sy = rng.random_range(4.0..14.0);
        let sz = rng.random_range(5.0..spec.height.min(25.0).max(5.5));
        let cx = rng.random_range(-h + sx / 2.0..h - sx / 2.0);
        let cy = rng.random_range(-h + sy / 2.0..h - sy / 2.0);
        let min = Vector3::new(cx - sx / 2.0, cy - sy / 2.0, 0.0);
        let max = Vector3::new(cx + sx / 2.0, cy + sy / 2.0, sz);
        if !rect_clear_of_loop(&min, &max, spec.loop_radius, spec.building_clearance) {
            continue;
        }
        surfaces.push(SurfaceEntry {
            surface: Surface::Box { min, max },
            class: ReliabilityClass::Reliable,
            intensity: rng.random_range(0.6..0.95),
        });
        placed += 1;
    }
    let mut placed = 0;
    let mut attempts = 0;
    while placed < spec.cylinders && attempts < spec.cylinders * 200 {
        attempts += 1;
        let radius = rng.random_range(0.15..0.5);
        let x = rng.random_range(-h + radius..h - radius);
        let y = rng.random_range(-h + radius..h - radius);
        if annulus_distance(x, y, spec.loop_radius) < spec.cylinder_clearance + radius {
            continue;
        }
        surfaces.push(SurfaceEntry {
            surface: Surface::Cylinder {
                x,
                y,
                radius,
                z_min: 0.0,
                z_max: rng.random_range(3.0..8.0f64).min(spec.height),
            },
            class: ReliabilityClass::Ambiguous,
            intensity: rng.random_range(0.1..0.4),
        });
        placed += 1;
    }
    let world = SyntheticWorld {
        surfaces,
        bounds_min,
        bounds_max,
    };
    world.validate()?;
    Ok(world)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub azimuth_rays: usize,
    pub elevation_rays: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub max_range: f64,
    pub fov_azimuth_deg: f64,
    pub range_noise_sigma: f64,
    /// Fraction of one azimuth step by which the first ray is offset, so
    /// rays avoid the voxel boundaries at `2π·k/azimuth_rays`.
    pub azimuth_phase: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            azimuth_rays: 64,
            elevation_rays: 16,
            elevation_min_deg: -15.0,
            elevation_max_deg: 15.0,
            max_range: 80.0,
            fov_azimuth_deg: 360.0,
            range_noise_sigma: 0.02,
            azimuth_phase: 0.37,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.azimuth_rays == 0 || self.elevation_rays == 0 {
            return Err(Error::InvalidConfig("sensor needs at least one ray".into()));
        }
        if !(self.max_range > 0.0) || !(self.range_noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("sensor range must be positive and noise non-negative".into()));
        }
        if !(self.fov_azimuth_deg > 0.0 && self.fov_azimuth_deg <= 360.0) {
            return Err(Error::InvalidConfig("azimuth field of view must be in (0, 360]".into()));
        }
        if self.elevation_min_deg > self.elevation_max_deg {
            return Err(Error::InvalidConfig("elevation range is inverted".into()));
        }
        Ok(())
    }

    /// Unit ray directions in the sensor frame, azimuth-major.
    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let fov = self.fov_azimuth_deg.to_radians();
        let az_step = fov / self.azimuth_rays as f64;
        let start = if self.fov_azimuth_deg >= 360.0 { 0.0 } else { -fov / 2.0 };
        let mut dirs = Vec::with_capacity(self.azimuth_rays * self.elevation_rays);
        for a in 0..self.azimuth_rays {
            let az = start + (a as f64 + self.azimuth_phase) * az_step;
            for e in 0..self.elevation_rays {
                let el = if self.elevation_rays == 1 {
                    self.elevation_min_deg
                } else {
                    self.elevation_min_deg
                        + (self.elevation_max_deg - self.elevation_min_deg) * e as f64 / (self.elevation_rays - 1) as f64
                }
                .to_radians();
                dirs.push(Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()));
            }
        }
        dirs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScan {
    /// Sensor-frame points.
    pub cloud: PointCloud,
    /// Noiseless world coordinate of every point.
    pub ground_truth: Vec<Vector3<f64>>,
    pub classes: Vec<ReliabilityClass>,
    /// Sensor-to-world pose.
    pub pose: RigidTransform,
}

impl SimulatedScan {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Casts every ray of `sensor` from `pose`. Range noise is Gaussian along each
/// ray; ground truth is the noiseless hit.
pub fn simulate_scan(world: &SyntheticWorld, pose: &RigidTransform, sensor: &SensorSpec, seed: u64) -> Result<SimulatedScan> {
    sensor.validate()?;
    let noise = Normal::new(0.0, sensor.range_noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = pose.translation;
    let mut points = Vec::new();
    let mut ground_truth = Vec::new();
    let mut classes = Vec::new();
    for dir in sensor.directions() {
        let world_dir = pose.rotation * dir;
        let Some((t, i)) = world.cast(&origin, &world_dir, sensor.max_range) else {
            continue;
        };
        let entry = &world.surfaces[i];
        let range = if sensor.range_noise_sigma > 0.0 {
            (t + noise.sample(&mut rng)).max(1e-3)
        } else {
            t
        };
        points.push(Point3::from_vector(dir * range, entry.intensity));
        ground_truth.push(origin + world_dir * t);
        classes.push(entry.class);
    }
    if points.is_empty() {
        return Err(Error::EmptyScan);
    }
    Ok(SimulatedScan {
        cloud: PointCloud::new(points),
        ground_truth,
        classes,
        pose: *pose,
    })
}

/// `n` sensor poses evenly spaced on a circle, heading along the tangent.
pub fn loop_trajectory(n: usize, radius: f64, sensor_height: f64) -> Vec<RigidTransform> {
    arc_trajectory(n, radius, sensor_height, TAU)
}

/// `n` poses spaced `arc / n` radians apart along the loop, starting at
/// angle 0.
pub fn arc_trajectory(n: usize, radius: f64, sensor_height: f64, arc: f64) -> Vec<RigidTransform> {
    (0..n)
        .map(|i| {
            let theta = arc * i as f64 / n as f64;
            RigidTransform::yaw(theta + PI / 2.0).with_translation(Vector3::new(
                radius * theta.cos(),
                radius * theta.sin(),
                sensor_height,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    None,
    /// Rotation about the sensor's vertical axis, radians.
    Yaw(f64),
    /// Yaw drawn uniformly from `[0, 2π)` by the perturbation seed.
    RandomYaw,
    /// Keep points within `±deg/2` of the sensor's forward axis.
    FovLimit(f64),
    /// Remove each point independently with this probability.
    Dropout(f64),
    /// Independent Gaussian offsets per coordinate, meters.
    GaussianNoise(f64),
    /// Random pitch and roll, each uniform in `±deg`.
    PitchRoll(f64),
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Perturbation::None | Perturbation::RandomYaw => true,
            Perturbation::Yaw(a) => a.is_finite(),
            Perturbation::FovLimit(d) => d > 0.0 && d <= 360.0,
            Perturbation::Dropout(f) => (0.0..=0.5).contains(&f),
            Perturbation::GaussianNoise(s) => s >= 0.0 && s.is_finite(),
            Perturbation::PitchRoll(d) => (0.0..=10.0).contains(&d),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("perturbation {} out of range", self.label())))
        }
    }

    /// `KIND=VALUE`; yaw and angles in degrees.
    pub fn parse(text: &str) -> Result<Self> {
        let (kind, value) = text.split_once('=').unwrap_or((text, ""));
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("perturbation `{text}` needs a numeric value")))
        };
        let p = match kind {
            "none" | "baseline" => Perturbation::None,
            "yaw" => Perturbation::Yaw(num()?.to_radians()),
            "random_yaw" => Perturbation::RandomYaw,
            "fov_limit" => Perturbation::FovLimit(num()?),
            "dropout" => Perturbation::Dropout(num()?),
            "gaussian_noise" => Perturbation::GaussianNoise(num()?),
            "pitch_roll" => Perturbation::PitchRoll(num()?),
            _ => return Err(Error::InvalidConfig(format!("unknown perturbation `{kind}`"))),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn label(&self) -> String {
        match *self {
            Perturbation::None => "none".into(),
            Perturbation::Yaw(a) => format!("yaw={}", a.to_degrees()),
            Perturbation::RandomYaw => "random_yaw".into(),
            Perturbation::FovLimit(d) => format!("fov_limit={d}"),
            Perturbation::Dropout(f) => format!("dropout={f}"),
            Perturbation::GaussianNoise(s) => format!("gaussian_noise={s}"),
            Perturbation::PitchRoll(d) => format!("pitch_roll={d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedCloud {
    pub cloud: PointCloud,
    /// Indices of surviving points in the input cloud.
    pub kept: Vec<usize>,
    /// Maps the old sensor frame to the new one: `new = frame_change · old`.
    pub frame_change: RigidTransform,
}

impl PerturbedCloud {
    /// Sensor-to-world pose of the perturbed cloud.
    pub fn pose(&self, original: &RigidTransform) -> RigidTransform {
        original.compose(&self.frame_change.inverse())
    }
}

pub fn perturb(cloud: &PointCloud, p: &Perturbation, seed: u64) -> Result<PerturbedCloud> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..cloud.len()).collect();
    let rigid = |t: RigidTransform| PerturbedCloud {
        cloud: t.apply(cloud),
        kept: all.clone(),
        frame_change: t,
    };
    let out = match *p {
        Perturbation::None => rigid(RigidTransform::identity()),
        Perturbation::Yaw(a) => rigid(RigidTransform::yaw(a)),
        Perturbation::RandomYaw => rigid(RigidTransform::yaw(rng.random_range(0.0..TAU))),
        Perturbation::PitchRoll(d) => {
            let bound = d.to_radians();
            let pitch = if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
            let roll = if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
            rigid(RigidTransform::pitch(pitch).compose(&RigidTransform::roll(roll)))
        }
        Perturbation::FovLimit(d) => {
            let half = d.to_radians() / 2.0;
            let kept: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&i| {
                    let q = &cloud.points[i];
                    q.y.atan2(q.x).abs() <= half
                })
                .collect();
            PerturbedCloud {
                cloud: cloud.select(&kept),
                kept,
                frame_change: RigidTransform::identity(),
            }
        }
        Perturbation::Dropout(f) => {
            let kept: Vec<usize> = all.iter().copied().filter(|_| !rng.random_bool(f)).collect();
            PerturbedCloud {
                cloud: cloud.select(&kept),
                kept,
                frame_change: RigidTransform::identity(),
            }
        }
        Perturbation::GaussianNoise(s) => {
            let normal = Normal::new(0.0, s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let points = cloud
                .iter()
                .map(|q| {
                    let mut q = *q;
                    if s > 0.0 {
                        q.x += normal.sample(&mut rng);
                        q.y += normal.sample(&mut rng);
                        q.z += normal.sample(&mut rng);
                    }
                    q
                })
                .collect();
            PerturbedCloud {
                cloud: PointCloud::new(points),
                kept: all.clone(),
                frame_change: RigidTransform::identity(),
            }
        }
    };
    if out.cloud.is_empty() {
        return Err(Error::EmptyScan);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCorruption {
    pub sigma_reliable: f64,
    /// Edge length of the cube, centered on the truth, that ambiguous
    /// predictions are drawn from.
    pub outlier_box: f64,
    /// When set, exactly `round(f·n)` points drawn by the seed act as
    /// ambiguous and the rest as reliable, regardless of surface class.
    pub ambiguous_fraction: Option<f64>,
}

impl Default for OracleCorruption {
    fn default() -> Self {
        Self {
            sigma_reliable: 0.05,
            outlier_box: 20.0,
            ambiguous_fraction: Some(0.2),
        }
    }
}

impl OracleCorruption {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = self.ambiguous_fraction.is_none_or(|f| (0.0..=1.0).contains(&f));
        if !(self.sigma_reliable >= 0.0 && self.outlier_box >= 0.0 && frac_ok) {
            return Err(Error::InvalidConfig("oracle corruption out of range".into()));
        }
        Ok(())
    }

    /// Per-point class the oracle acts on.
    pub fn effective_classes(&self, classes: &[ReliabilityClass], seed: u64) -> Vec<ReliabilityClass> {
        match self.ambiguous_fraction {
            None => classes.to_vec(),
            Some(f) => {
                let n = classes.len();
                let count = ((f * n as f64).round() as usize).min(n);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
                let mut out = vec![ReliabilityClass::Reliable; n];
                for i in index::sample(&mut rng, n, count) {
                    out[i] = ReliabilityClass::Ambiguous;
                }
                out
            }
        }
    }
}

/// Reliable points get `gt + N(0, σ²)` with `u ∈ [2, 10]`; ambiguous points a
/// uniform draw from the outlier cube with `u ∈ [−10, −2]`. Each point's draw
/// depends only on `(seed, index)`.
pub fn oracle_predict(
    scan: &PointCloud,
    ground_truth: &[Vector3<f64>],
    classes: &[ReliabilityClass],
    corruption: &OracleCorruption,
    seed: u64,
) -> Result<PredictionSet> {
    corruption.validate()?;
    if scan.len() != ground_truth.len() || scan.len() != classes.len() {
        return Err(Error::LengthMismatch {
            left: scan.len(),
            right: ground_truth.len().min(classes.len()),
        });
    }
    let effective = corruption.effective_classes(classes, seed);
    let half = corruption.outlier_box / 2.0;
    let normal = Normal::new(0.0, corruption.sigma_reliable).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut coords = Vec::with_capacity(scan.len());
    let mut reliability = Vec::with_capacity(scan.len());
    for (i, (gt, class)) in ground_truth.iter().zip(&effective).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        match class {
            ReliabilityClass::Reliable => {
                let noise = if corruption.sigma_reliable > 0.0 {
                    Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng))
                } else {
                    Vector3::zeros()
                };
                coords.push(gt + noise);
                reliability.push(rng.random_range(2.0..=10.0));
            }
            ReliabilityClass::Ambiguous => {
                let offset = if half > 0.0 {
                    Vector3::new(
                        rng.random_range(-half..=half),
                        rng.random_range(-half..=half),
                        rng.random_range(-half..=half),
                    )
                } else {
                    Vector3::zeros()
                };
                coords.push(gt + offset);
                reliability.push(rng.random_range(-10.0..=-2.0));
            }
        }
    }
    Ok(PredictionSet { coords, reliability })
}
