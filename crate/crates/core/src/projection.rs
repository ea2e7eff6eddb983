//! Cylindrical projection, voxelization, cyclic padding and Cartesian
//! recovery.
//!
//! A yaw rotation of the rectified cloud becomes a translation along the
//! circumferential axis `x^p = s·atan2(y', x')`, which wraps every `L_x`
//! voxels. Padding and seam handling work on integer voxel indices, where
//! the wrap is exactly `L_x`.

use std::collections::HashMap;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::se3::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Voxel edge length δ in meters.
    pub voxel_size: f64,
    /// Circumferential resolution `L_x` in voxels.
    pub ring_cells: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.2,
            ring_cells: 1024,
        }
    }
}

impl ProjectionConfig {
    pub fn new(voxel_size: f64, ring_cells: usize) -> Result<Self> {
        let cfg = Self {
            voxel_size,
            ring_cells,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::InvalidConfig("voxel_size must be > 0".into()));
        }
        if self.ring_cells < 8 || self.ring_cells % 2 != 0 {
            return Err(Error::InvalidConfig("ring_cells must be even and ≥ 8".into()));
        }
        Ok(())
    }

    /// Scale `s = L_x·δ / 2π` in meters per radian.
    pub fn scale(&self) -> f64 {
        self.ring_cells as f64 * self.voxel_size / TAU
    }

    /// Circumferential extent `2πs = L_x·δ` in projected meters.
    pub fn circumference(&self) -> f64 {
        self.ring_cells as f64 * self.voxel_size
    }

    pub fn ring(&self) -> i64 {
        self.ring_cells as i64
    }
}

/// Which projection the spatial transform uses. Spherical exists only as a
/// benchmark comparator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionKind {
    #[default]
    Cylindrical,
    Spherical,
}

/// Azimuth in `[0, 2π)`.
fn azimuth(x: f64, y: f64) -> f64 {
    let a = y.atan2(x);
    let a = if a < 0.0 { a + TAU } else { a };
    // -tiny + 2π rounds to 2π
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// `(x, y, z) ↦ (s·atan2(y, x), √(x² + y²), z)`; intensity and order kept.
pub fn project_cylindrical(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<PointCloud> {
    let s = cfg.scale();
    cloud
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.x == 0.0 && p.y == 0.0 {
                return Err(Error::OriginPoint { index: i });
            }
            let xp = (s * azimuth(p.x, p.y)).min(cfg.circumference().next_down());
            Ok(Point3::new(xp, p.x.hypot(p.y), p.z, p.intensity))
        })
        .collect::<Result<Vec<_>>>()
        .map(PointCloud::new)
}

/// Spherical comparator: `(s·azimuth, range, s·elevation)`.
pub fn project_spherical(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<PointCloud> {
    let s = cfg.scale();
    cloud
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.x == 0.0 && p.y == 0.0 {
                return Err(Error::OriginPoint { index: i });
            }
            let horizontal = p.x.hypot(p.y);
            let xp = (s * azimuth(p.x, p.y)).min(cfg.circumference().next_down());
            Ok(Point3::new(
                xp,
                horizontal.hypot(p.z),
                s * p.z.atan2(horizontal),
                p.intensity,
            ))
        })
        .collect::<Result<Vec<_>>>()
        .map(PointCloud::new)
}

pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig, kind: ProjectionKind) -> Result<PointCloud> {
    match kind {
        ProjectionKind::Cylindrical => project_cylindrical(cloud, cfg),
        ProjectionKind::Spherical => project_spherical(cloud, cfg),
    }
}

/// Integer voxel key `(ix, iy, iz)`.
pub type VoxelKey = [i64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub key: VoxelKey,
    /// The retained projected point.
    pub representative: Point3,
    /// Index of the retained point in the cloud that was projected.
    pub source_index: usize,
    /// True for copies created by [`cyclic_pad`].
    pub padded: bool,
}

/// One representative point per occupied voxel, in first-occurrence order.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCloud {
    pub voxels: Vec<Voxel>,
    pub config: ProjectionConfig,
}

impl VoxelCloud {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = VoxelKey> + '_ {
        self.voxels.iter().map(|v| v.key)
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.voxels.iter().map(|v| v.source_index).collect()
    }

    /// Drops padded copies and anything outside `[0, L_x)`.
    pub fn strip(&self) -> VoxelCloud {
        let ring = self.config.ring();
        VoxelCloud {
            voxels: self
                .voxels
                .iter()
                .filter(|v| !v.padded && (0..ring).contains(&v.key[0]))
                .copied()
                .collect(),
            config: self.config,
        }
    }

    /// Shifts every voxel by `delta` ring cells (mod `L_x`), moving the
    /// representative's circumferential coordinate along with it.
    pub fn shift_circumferential(&self, delta: i64) -> VoxelCloud {
        let ring = self.config.ring();
        let circumference = self.config.circumference();
        let step = self.config.voxel_size;
        let voxels = self
            .voxels
            .iter()
            .map(|v| {
                let ix = (v.key[0] + delta).rem_euclid(ring);
                let moved = v.key[0] + delta - ix;
                let mut rep = v.representative;
                rep.x = (rep.x + (delta - moved) as f64 * step).rem_euclid(circumference);
                Voxel {
                    key: [ix, v.key[1], v.key[2]],
                    representative: rep,
                    ..*v
                }
            })
            .collect();
        VoxelCloud {
            voxels,
            config: self.config,
        }
    }
}

fn voxel_index(coord: f64, size: f64) -> i64 {
    (coord / size).floor() as i64
}

/// Quantizes projected points with cell size δ. The first point (lowest
/// input index) in a cell becomes its representative.
pub fn voxelize(projected: &PointCloud, cfg: &ProjectionConfig) -> VoxelCloud {
    let ring = cfg.ring();
    let mut seen: HashMap<VoxelKey, usize> = HashMap::with_capacity(projected.len());
    let mut voxels = Vec::new();
    for (i, p) in projected.iter().enumerate() {
        let key = [
            voxel_index(p.x, cfg.voxel_size).rem_euclid(ring),
            voxel_index(p.y, cfg.voxel_size),
            voxel_index(p.z, cfg.voxel_size),
        ];
        seen.entry(key).or_insert_with(|| {
            voxels.push(Voxel {
                key,
                representative: *p,
                source_index: i,
                padded: false,
            });
            voxels.len() - 1
        });
    }
    VoxelCloud {
        voxels,
        config: *cfg,
    }
}

/// Ring indices that receive a wrapped copy, and the shift applied:
/// `ix < w` is copied to `ix + L_x`, `ix > L_x − w` to `ix − L_x`.
pub fn pad_shifts(ix: i64, w: i64, ring: i64) -> impl Iterator<Item = i64> {
    let plus = (ix < w).then_some(ring);
    let minus = (ix > ring - w).then_some(-ring);
    plus.into_iter().chain(minus)
}

/// Symmetric cyclic padding of the circumferential axis. Originals come
/// first, followed by flagged copies.
pub fn cyclic_pad(v: &VoxelCloud, w: i64) -> VoxelCloud {
    let ring = v.config.ring();
    let circumference = v.config.circumference();
    let mut voxels = v.voxels.clone();
    for vox in &v.voxels {
        for shift in pad_shifts(vox.key[0], w, ring) {
            let mut rep = vox.representative;
            rep.x += circumference * shift.signum() as f64;
            voxels.push(Voxel {
                key: [vox.key[0] + shift, vox.key[1], vox.key[2]],
                representative: rep,
                source_index: vox.source_index,
                padded: true,
            });
        }
    }
    VoxelCloud {
        voxels,
        config: v.config,
    }
}

/// Voxel center in projected coordinates.
pub fn voxel_center(key: &VoxelKey, cfg: &ProjectionConfig) -> [f64; 3] {
    let d = cfg.voxel_size;
    [
        (key[0] as f64 + 0.5) * d,
        (key[1] as f64 + 0.5) * d,
        (key[2] as f64 + 0.5) * d,
    ]
}

/// Inverse projection at voxel centers: `(y^q cos(x^q/s), y^q sin(x^q/s), z^q)`.
/// Intensity comes from each voxel's representative.
pub fn recover_cartesian(v: &VoxelCloud) -> PointCloud {
    let s = v.config.scale();
    v.voxels
        .iter()
        .map(|vox| {
            let [xq, yq, zq] = voxel_center(&vox.key, &v.config);
            recover_point(xq, yq, zq, s, vox.representative.intensity)
        })
        .collect()
}

pub fn recover_point(xq: f64, yq: f64, zq: f64, scale: f64, intensity: f64) -> Point3 {
    let (sin, cos) = (xq / scale).sin_cos();
    Point3::new(yq * cos, yq * sin, zq, intensity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::RigidTransform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cfg() -> ProjectionConfig {
        ProjectionConfig::default()
    }

    fn single(x: f64, y: f64, z: f64) -> PointCloud {
        PointCloud::new(vec![Point3::new(x, y, z, 0.4)])
    }

    #[test]
    fn projection_examples() {
        let c = cfg();
        let s = c.scale();
        let p = project_cylindrical(&single(1.0, 0.0, 0.0), &c).unwrap().points[0];
        assert_eq!((p.x, p.y, p.z, p.intensity), (0.0, 1.0, 0.0, 0.4));
        let p = project_cylindrical(&single(0.0, 1.0, 0.0), &c).unwrap().points[0];
        assert!((p.x - s * FRAC_PI_2).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-15);
        let p = project_cylindrical(&single(-1.0, 0.0, 0.0), &c).unwrap().points[0];
        assert!((p.x - s * PI).abs() < 1e-12);
        let p = project_cylindrical(&single(1.0, -1e-300, 2.0), &c).unwrap().points[0];
        assert!(p.x < c.circumference() && p.x >= 0.0);
    }

    #[test]
    fn origin_points_are_rejected() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 1.0, 0.0, 0.0), Point3::new(0.0, 0.0, 3.0, 0.0)]);
        assert!(matches!(
            project_cylindrical(&cloud, &cfg()),
            Err(Error::OriginPoint { index: 1 })
        ));
    }

    #[test]
    fn scale_matches_ring() {
        let c = cfg();
        assert!((c.ring_cells as f64 - TAU * c.scale() / c.voxel_size).abs() < 1e-9);
        assert!(ProjectionConfig::new(0.2, 7).is_err());
        assert!(ProjectionConfig::new(0.0, 16).is_err());
        assert!(ProjectionConfig::new(0.2, 6).is_err());
    }

    #[test]
    fn voxelize_examples() {
        let c = cfg();
        let v = voxelize(&single(0.05, 1.31, -0.39), &c);
        assert_eq!(v.voxels[0].key, [0, 6, -2]);

        let two = PointCloud::new(vec![Point3::new(0.05, 1.31, -0.39, 0.1), Point3::new(0.06, 1.32, -0.38, 0.9)]);
        let v = voxelize(&two, &c);
        assert_eq!(v.len(), 1);
        assert_eq!(v.voxels[0].source_index, 0);
        assert_eq!(v.voxels[0].representative.intensity, 0.1);

        let v = voxelize(&single(204.79, 1.0, 0.0), &c);
        assert_eq!(v.voxels[0].key[0], 1023);
    }

    fn ring_cloud(ixs: &[i64], ring: usize) -> VoxelCloud {
        let config = ProjectionConfig::new(0.2, ring).unwrap();
        VoxelCloud {
            voxels: ixs
                .iter()
                .enumerate()
                .map(|(i, &ix)| Voxel {
                    key: [ix, 3, 0],
                    representative: Point3::new((ix as f64 + 0.5) * 0.2, 0.7, 0.1, 0.5),
                    source_index: i,
                    padded: false,
                })
                .collect(),
            config,
        }
    }

    fn ix_set(v: &VoxelCloud) -> Vec<i64> {
        let mut s: Vec<i64> = v.keys().map(|k| k[0]).collect();
        s.sort();
        s
    }

    #[test]
    fn cyclic_pad_examples() {
        assert_eq!(ix_set(&cyclic_pad(&ring_cloud(&[0, 7], 8), 2)), vec![-1, 0, 7, 8]);
        let untouched = ring_cloud(&[2, 4, 5], 8);
        assert_eq!(cyclic_pad(&untouched, 1), untouched);
        assert_eq!(ix_set(&cyclic_pad(&ring_cloud(&[1, 6], 8), 3)), vec![-2, 1, 6, 9]);
    }

    #[test]
    fn pad_then_strip_is_identity() {
        let v = ring_cloud(&[0, 1, 2, 5, 13, 14, 15], 16);
        for w in 1..8 {
            let padded = cyclic_pad(&v, w);
            assert!(padded.voxels.iter().skip(v.len()).all(|x| x.padded));
            assert_eq!(padded.strip(), v);
        }
    }

    #[test]
    fn recover_examples() {
        let c = cfg();
        let s = c.scale();
        let p = recover_point(0.0, 3.0, 1.5, s, 0.0);
        assert_eq!((p.x, p.y, p.z), (3.0, 0.0, 1.5));
        let p = recover_point(s * FRAC_PI_2, 2.0, 0.3, s, 0.0);
        assert!(p.x.abs() < 1e-9 && (p.y - 2.0).abs() < 1e-9 && p.z == 0.3);
    }

    fn random_scene(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r = rng.random_range(1.0..40.0);
                let a = rng.random_range(0.0..TAU);
                Point3::new(r * a.cos(), r * a.sin(), rng.random_range(-2.0..6.0), rng.random_range(0.0..1.0))
            })
            .collect()
    }

    #[test]
    fn round_trip_within_quantization_bound() {
        let c = cfg();
        let cloud = random_scene(17, 5000);
        let projected = project_cylindrical(&cloud, &c).unwrap();
        let v = voxelize(&projected, &c);
        let recovered = recover_cartesian(&v);
        let d = c.voxel_size;
        for (vox, q) in v.voxels.iter().zip(recovered.iter()) {
            let p = cloud.points[vox.source_index];
            let bound = 3f64.sqrt() * d * (vox.representative.y / d).max(1.0);
            assert!((p.xyz() - q.xyz()).norm() <= bound);
        }
    }

    #[test]
    fn on_grid_yaw_shifts_voxel_indices() {
        let c = ProjectionConfig::new(0.2, 256).unwrap();
        let cloud = random_scene(23, 2000);
        let base = voxelize(&project_cylindrical(&cloud, &c).unwrap(), &c);
        for delta in [1i64, 16, 100, 255] {
            let yaw = RigidTransform::yaw(delta as f64 * TAU / c.ring_cells as f64);
            let rotated = voxelize(&project_cylindrical(&yaw.apply(&cloud), &c).unwrap(), &c);
            let mismatched = base
                .voxels
                .iter()
                .zip(rotated.voxels.iter())
                .filter(|(a, b)| {
                    a.key[1] != b.key[1]
                        || a.key[2] != b.key[2]
                        || (a.key[0] + delta).rem_euclid(256) != b.key[0]
                })
                .count();
            assert_eq!(base.len(), rotated.len());
            assert_eq!(mismatched, 0, "delta {delta}");
            for (a, b) in base.voxels.iter().zip(rotated.voxels.iter()) {
                assert!((a.representative.y - b.representative.y).abs() < 1e-9);
                assert!((a.representative.z - b.representative.z).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shift_circumferential_wraps() {
        let v = ring_cloud(&[0, 7], 8);
        let s = v.shift_circumferential(3);
        assert_eq!(ix_set(&s), vec![2, 3]);
        assert!(s.voxels.iter().all(|x| x.representative.x >= 0.0 && x.representative.x < 1.6));
        let back = s.shift_circumferential(-3);
        for (a, b) in back.voxels.iter().zip(v.voxels.iter()) {
            assert_eq!(a.key, b.key);
            assert!((a.representative.x - b.representative.x).abs() < 1e-12);
        }
    }
}
