//! Ground-plane estimation and planar rectification.
//!
//! RANSAC over point triples, least-squares refit on the consensus set, then a
//! minimal rotation (Rodrigues) taking the upward normal onto +z together with
//! the translation that puts the plane at `z = 0`.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::se3::{rodrigues, PointCloud, RigidTransform};

/// Plane `n·p + d = 0` with a unit, upward-oriented normal.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub inlier_indices: Vec<usize>,
}

impl PlaneModel {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacPlaneParams {
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacPlaneParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold: 0.1,
            min_inliers: 50,
            seed: 0,
        }
    }
}

impl RansacPlaneParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("plane iterations must be ≥ 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidConfig("plane inlier_threshold must be > 0".into()));
        }
        Ok(())
    }
}

/// Relative cross-product magnitude below which a triple counts as collinear.
const COLLINEAR_EPS: f64 = 1e-9;
const REFIT_ROUNDS: usize = 5;

fn plane_through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let n = e1.cross(&e2);
    let scale = e1.norm() * e2.norm();
    if scale == 0.0 || n.norm() <= COLLINEAR_EPS * scale {
        return None;
    }
    let n = orient_up(n.normalize());
    Some((n, -n.dot(a)))
}

fn orient_up(n: Vector3<f64>) -> Vector3<f64> {
    if n.z < 0.0 {
        -n
    } else {
        n
    }
}

fn inliers_of(points: &[Vector3<f64>], normal: &Vector3<f64>, offset: f64, threshold: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (normal.dot(p) + offset).abs() <= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Total least-squares plane through `indices`: normal is the eigenvector
/// of the scatter matrix with the smallest eigenvalue.
fn refit(points: &[Vector3<f64>], indices: &[usize]) -> Option<(Vector3<f64>, f64)> {
    let n = indices.len() as f64;
    let centroid = indices.iter().fold(Vector3::zeros(), |acc, &i| acc + points[i]) / n;
    let mut scatter = Matrix3::zeros();
    for &i in indices {
        let d = points[i] - centroid;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal = eig.eigenvectors.column(k).into_owned();
    if !normal.iter().all(|v| v.is_finite()) || normal.norm() == 0.0 {
        return None;
    }
    let normal = orient_up(normal.normalize());
    Some((normal, -normal.dot(&centroid)))
}

/// Fits the dominant plane with seeded RANSAC, then alternates least-squares
/// refits and inlier updates until the consensus set settles.
pub fn fit_plane_ransac(cloud: &PointCloud, params: &RansacPlaneParams) -> Result<PlaneModel> {
    params.validate()?;
    let points = cloud.positions();
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane fit needs ≥ 3 points, got {}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = points.len();
    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..params.iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for m in [i.min(j), i.max(j)] {
            if k >= m {
                k += 1;
            }
        }
        let Some((normal, offset)) = plane_through(&points[i], &points[j], &points[k]) else {
            continue;
        };
        let count = points
            .iter()
            .filter(|p| (normal.dot(p) + offset).abs() <= params.inlier_threshold)
            .count();
        if best.as_ref().is_none_or(|b| count > b.0) {
            best = Some((count, normal, offset));
        }
    }
    let (_, normal, offset) =
        best.ok_or_else(|| Error::DegenerateInput("every sampled triple is collinear".into()))?;

    let mut inliers = inliers_of(&points, &normal, offset, params.inlier_threshold);
    let (mut normal, mut offset) = (normal, offset);
    for _ in 0..REFIT_ROUNDS {
        if inliers.len() < 3 {
            break;
        }
        let Some((n2, d2)) = refit(&points, &inliers) else {
            break;
        };
        let refit_inliers = inliers_of(&points, &n2, d2, params.inlier_threshold);
        if refit_inliers.len() < 3 {
            break;
        }
        normal = n2;
        offset = d2;
        let stable = refit_inliers == inliers;
        inliers = refit_inliers;
        if stable {
            break;
        }
    }
    if inliers.is_empty() || inliers.len() < params.min_inliers {
        return Err(Error::DegenerateInput(format!(
            "plane has {} inliers, {} required",
            inliers.len(),
            params.min_inliers
        )));
    }
    Ok(PlaneModel {
        normal,
        offset,
        inlier_indices: inliers,
    })
}

/// Minimal rotation taking the unit vector `normal` onto `+z`.
///
/// The antiparallel case uses the fixed axis `(1, 0, 0)` with angle π.
pub fn align_normal(normal: &Vector3<f64>) -> RigidTransform {
    let ez = Vector3::z();
    let cross = normal.cross(&ez);
    let sin = cross.norm();
    let cos = normal.dot(&ez);
    // atan2 form of arccos(n·e_z) keeps precision for nearly aligned normals.
    let theta = sin.atan2(cos);
    if sin <= 1e-15 {
        return if cos > 0.0 {
            RigidTransform::identity()
        } else {
            RigidTransform::from_rotation(rodrigues(Vector3::x(), std::f64::consts::PI))
        };
    }
    RigidTransform::from_rotation(rodrigues(cross / sin, theta))
}

/// Rectifying transform for `plane`: plane points land on `z = 0`.
pub fn build_plane_transform(plane: &PlaneModel) -> RigidTransform {
    let norm2 = plane.normal.norm_squared();
    let unit = plane.normal / norm2.sqrt();
    let rotation = align_normal(&unit);
    // R·(p + d/‖n‖²·n) = R·p + d/‖n‖²·(R·n); R·n is ‖n‖·e_z.
    let translation = rotation.rotation * (plane.normal * (plane.offset / norm2));
    rotation.with_translation(translation)
}

/// Fits the ground plane and maps the cloud into the rectified frame.
/// Returns `(P', T_plane)` with `P' = T_plane · P`.
pub fn rectify(cloud: &PointCloud, params: &RansacPlaneParams) -> Result<(PointCloud, RigidTransform, PlaneModel)> {
    let plane = fit_plane_ransac(cloud, params)?;
    let t_plane = build_plane_transform(&plane);
    Ok((t_plane.apply(cloud), t_plane, plane))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Point3;
    use rand_distr::{Distribution, UnitSphere};

    fn flat_with_outliers(z: f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for _ in 0..1000 {
            pts.push(Point3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), z, 0.5));
        }
        for _ in 0..100 {
            pts.push(Point3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(z + 0.5..z + 5.0),
                0.5,
            ));
        }
        PointCloud::new(pts)
    }

    #[test]
    fn recovers_plane_through_outliers() {
        let plane = fit_plane_ransac(&flat_with_outliers(0.0, 1), &RansacPlaneParams::default()).unwrap();
        assert!((plane.normal - Vector3::z()).amax() < 1e-3);
        assert!(plane.offset.abs() < 1e-3);
        assert!(plane.inlier_indices.len() >= 990);
        assert!(plane.inlier_indices.iter().all(|&i| i < 1000));
    }

    #[test]
    fn three_point_plane_is_exact() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0, 0.0),
        ]);
        let params = RansacPlaneParams {
            min_inliers: 3,
            ..Default::default()
        };
        let plane = fit_plane_ransac(&cloud, &params).unwrap();
        assert_eq!(plane.normal, Vector3::z());
        assert_eq!(plane.offset, 0.0);
        assert_eq!(plane.inlier_indices, vec![0, 1, 2]);
    }

    #[test]
    fn elevated_plane_offset() {
        let plane = fit_plane_ransac(&flat_with_outliers(0.5, 2), &RansacPlaneParams::default()).unwrap();
        assert!((plane.offset + 0.5).abs() < 1e-3);
    }

    #[test]
    fn collinear_input_is_degenerate() {
        let cloud: PointCloud = (0..100).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0, 0.0)).collect();
        let params = RansacPlaneParams {
            min_inliers: 3,
            ..Default::default()
        };
        assert!(matches!(fit_plane_ransac(&cloud, &params), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn noise_cloud_without_plane_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud: PointCloud = (0..500)
            .map(|_| {
                Point3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    0.0,
                )
            })
            .collect();
        let params = RansacPlaneParams {
            min_inliers: 400,
            ..Default::default()
        };
        assert!(matches!(rectify(&cloud, &params), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cloud = flat_with_outliers(0.2, 9);
        let params = RansacPlaneParams {
            seed: 42,
            ..Default::default()
        };
        let a = fit_plane_ransac(&cloud, &params).unwrap();
        let b = fit_plane_ransac(&cloud, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.normal.map(f64::to_bits), b.normal.map(f64::to_bits));
    }

    #[test]
    fn align_normal_cases() {
        assert_eq!(align_normal(&Vector3::z()), RigidTransform::identity());

        let r = align_normal(&Vector3::x());
        assert!((r.rotation * Vector3::x() - Vector3::z()).amax() < 1e-15);
        // Numeric Rodrigues about (0, -1, 0) by 90°.
        let expected = rodrigues(Vector3::new(0.0, -1.0, 0.0), std::f64::consts::FRAC_PI_2);
        assert!((r.rotation - expected).amax() < 1e-15);
        assert!((r.rotation_angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        let flip = align_normal(&-Vector3::z());
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        assert!((flip.rotation - expected).amax() < 1e-15);
    }

    #[test]
    fn align_normal_random_unit_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let v: [f64; 3] = UnitSphere.sample(&mut rng);
            let n = Vector3::from(v).normalize();
            let r = align_normal(&n);
            assert!((r.rotation * n - Vector3::z()).amax() <= 1e-9, "{n:?}");
            let minimal = n.z.clamp(-1.0, 1.0).acos();
            assert!((r.rotation_angle() - minimal).abs() < 1e-7);
        }
    }

    #[test]
    fn plane_transform_cases() {
        let ground = |normal: Vector3<f64>, offset: f64| PlaneModel {
            normal,
            offset,
            inlier_indices: vec![0],
        };
        assert_eq!(build_plane_transform(&ground(Vector3::z(), 0.0)), RigidTransform::identity());

        let t = build_plane_transform(&ground(Vector3::z(), -0.5));
        let p = t.transform_vector(&Vector3::new(3.0, 4.0, 0.5));
        assert!((p - Vector3::new(3.0, 4.0, 0.0)).amax() < 1e-9);

        let t = build_plane_transform(&ground(Vector3::x(), 0.0));
        assert!(t.transform_vector(&Vector3::new(0.0, 7.0, 2.0)).z.abs() < 1e-9);
    }

    #[test]
    fn plane_points_land_on_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let v: [f64; 3] = UnitSphere.sample(&mut rng);
            let n = orient_up(Vector3::from(v).normalize());
            let d = rng.random_range(-5.0..5.0);
            let t = build_plane_transform(&PlaneModel {
                normal: n,
                offset: d,
                inlier_indices: vec![0],
            });
            // Points on the plane: foot point plus in-plane offsets.
            let foot = -d * n;
            let u = n.cross(&Vector3::new(0.3, -0.7, 0.2)).normalize();
            let w = n.cross(&u);
            for _ in 0..10 {
                let p = foot + u * rng.random_range(-20.0..20.0) + w * rng.random_range(-20.0..20.0);
                assert!(t.transform_vector(&p).z.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rectify_tilted_scene() {
        let flat = flat_with_outliers(-1.5, 4);
        let params = RansacPlaneParams::default();
        let (_, t_flat, _) = rectify(&flat, &params).unwrap();
        assert!(t_flat.rotation_angle().to_degrees() < 0.1);

        let tilt = RigidTransform::roll(10f64.to_radians());
        let tilted = tilt.apply(&flat);
        let (rectified, t_plane, plane) = rectify(&tilted, &params).unwrap();
        let ground_normal = t_plane.rotation * plane.normal;
        assert!(ground_normal.angle(&Vector3::z()).to_degrees() < 0.1);
        for &i in &plane.inlier_indices {
            assert!(rectified.points[i].z.abs() <= params.inlier_threshold + 1e-12);
        }

        let (_, again, _) = rectify(&rectified, &params).unwrap();
        assert!(again.rotation_angle().to_degrees() < 0.1);
    }
}
