//! Reliability-filtered correspondence selection, RANSAC rigid pose, and
//! plane compensation.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    pub top_fraction: f64,
    pub min_count: usize,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            top_fraction: 0.25,
            min_count: 50,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!("top_fraction {} outside (0, 1]", self.top_fraction)));
        }
        if self.min_count < 3 {
            return Err(Error::InvalidConfig(format!("min_count {} below 3", self.min_count)));
        }
        Ok(())
    }
}

/// Indices of the `⌈fraction·n⌉` most reliable points in ascending order, or
/// every index when that count falls below `min_count`.
pub fn select_reliable(u: &[f64], policy: &SelectionPolicy) -> Vec<usize> {
    let n = u.len();
    let k = (policy.top_fraction * n as f64).ceil() as usize;
    if k < policy.min_count {
        return (0..n).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    let mut chosen = order[..k.min(n)].to_vec();
    chosen.sort_unstable();
    chosen
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Least-squares rigid transform taking `src` onto `dst`.
pub fn kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch {
            left: src.len(),
            right: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::DegenerateInput(format!("{} correspondences, need 3", src.len())));
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let mut scatter = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s - cs;
        scatter += a * a.transpose();
        cross += a * (d - cd).transpose();
    }
    let mut spread = SymmetricEigen::new(scatter).eigenvalues.as_slice().to_vec();
    spread.sort_by(|a, b| b.total_cmp(a));
    if spread[0] <= 0.0 || spread[1] <= 1e-12 * spread[0] {
        return Err(Error::DegenerateInput("collinear correspondences".into()));
    }
    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V"));
    let v = v_t.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    // nalgebra sorts singular values descending, so column 2 is the smallest.
    let rotation = v * fix * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: cd - rotation * cs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacPoseParams {
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub sample_size: usize,
    pub seed: u64,
    pub refit_on_inliers: bool,
}

impl Default for RansacPoseParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold: 0.5,
            sample_size: 3,
            seed: 0,
            refit_on_inliers: true,
        }
    }
}

impl RansacPoseParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("ransac iterations must be at least 1".into()));
        }
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!("inlier threshold {} must be positive", self.inlier_threshold)));
        }
        if self.sample_size < 3 {
            return Err(Error::InvalidConfig("sample size must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub transform: RigidTransform,
    pub inliers: Vec<usize>,
    pub rms_residual: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSidecar {
    pub inlier_count: usize,
    pub rms_residual: f64,
    pub seed: u64,
}

impl PoseEstimate {
    pub fn sidecar(&self) -> PoseSidecar {
        PoseSidecar {
            inlier_count: self.inliers.len(),
            rms_residual: self.rms_residual,
            seed: self.seed,
        }
    }
}

fn score(t: &RigidTransform, src: &[Vector3<f64>], dst: &[Vector3<f64>], threshold: f64) -> (Vec<usize>, f64) {
    let mut inliers = Vec::new();
    let mut sq = 0.0;
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let r = (t.transform_vector(s) - d).norm();
        if r < threshold {
            inliers.push(i);
            sq += r * r;
        }
    }
    let rms = if inliers.is_empty() { f64::INFINITY } else { (sq / inliers.len() as f64).sqrt() };
    (inliers, rms)
}

/// Hypothesize-and-verify over pre-drawn minimal samples. The best
/// hypothesis has the most inliers, then the lower inlier RMS, then the
/// earlier sample.
pub fn estimate_pose_ransac(local: &[Vector3<f64>], pred: &[Vector3<f64>], params: &RansacPoseParams) -> Result<PoseEstimate> {
    params.validate()?;
    if local.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: local.len(),
            right: pred.len(),
        });
    }
    let n = local.len();
    if n < params.sample_size {
        return Err(Error::NoConsensus {
            best: 0,
            required: params.sample_size,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let samples: Vec<Vec<usize>> = (0..params.iterations)
        .map(|_| index::sample(&mut rng, n, params.sample_size).into_vec())
        .collect();
    let best = samples
        .par_iter()
        .enumerate()
        .filter_map(|(it, s)| {
            let src: Vec<_> = s.iter().map(|&i| local[i]).collect();
            let dst: Vec<_> = s.iter().map(|&i| pred[i]).collect();
            let t = kabsch(&src, &dst).ok()?;
            let (inliers, rms) = score(&t, local, pred, params.inlier_threshold);
            Some((it, t, inliers, rms))
        })
        .min_by(|a, b| {
            b.2.len()
                .cmp(&a.2.len())
                .then(a.3.total_cmp(&b.3))
                .then(a.0.cmp(&b.0))
        });
    let Some((_, mut transform, mut inliers, mut rms)) = best else {
        return Err(Error::NoConsensus {
            best: 0,
            required: params.sample_size,
        });
    };
    if inliers.len() < params.sample_size {
        return Err(Error::NoConsensus {
            best: inliers.len(),
            required: params.sample_size,
        });
    }
    if params.refit_on_inliers {
        let src: Vec<_> = inliers.iter().map(|&i| local[i]).collect();
        let dst: Vec<_> = inliers.iter().map(|&i| pred[i]).collect();
        if let Ok(refit) = kabsch(&src, &dst) {
            let (refit_inliers, refit_rms) = score(&refit, local, pred, params.inlier_threshold);
            if refit_inliers.len() >= params.sample_size {
                transform = refit;
                inliers = refit_inliers;
                rms = refit_rms;
            }
        }
    }
    Ok(PoseEstimate {
        transform,
        inliers,
        rms_residual: rms,
        seed: params.seed,
    })
}

/// `T* · P⁻¹`, where `plane_pose` maps rectified-frame coordinates back to
/// the raw sensor frame (the inverse of the transform returned by
/// [`crate::plane::rectify`]).
pub fn compensate(t_star: &RigidTransform, plane_pose: &RigidTransform) -> RigidTransform {
    t_star.compose(&plane_pose.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn cloud(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                )
            })
            .collect()
    }

    fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        (a.rotation - b.rotation).abs().max() < tol && (a.translation - b.translation).norm() < tol
    }

    #[test]
    fn fallback_when_top_fraction_is_small() {
        let u: Vec<f64> = (0..40).map(|i| i as f64).collect();
        assert_eq!(select_reliable(&u, &SelectionPolicy::default()), (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn top_quarter_of_four_hundred() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..400).map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = select_reliable(&u, &SelectionPolicy::default());
        assert_eq!(s.len(), 100);
        let inside = s.iter().map(|&i| u[i]).fold(f64::INFINITY, f64::min);
        let outside = (0..400)
            .filter(|i| s.binary_search(i).is_err())
            .map(|i| u[i])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(inside >= outside);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn boundary_ties_prefer_lower_indices() {
        let mut u = vec![0.0; 200];
        u[7] = 5.0;
        let s = select_reliable(&u, &SelectionPolicy::default());
        assert_eq!(s.len(), 50);
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        u[150] = 5.0;
        let s = select_reliable(&u, &SelectionPolicy::default());
        assert_eq!(s, (0..49).chain([150]).collect::<Vec<_>>());
    }

    #[test]
    fn kabsch_identity_and_known_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let src = cloud(&mut rng, 4, 3.0);
        assert!(close(&kabsch(&src, &src).unwrap(), &RigidTransform::identity(), 1e-9));
        let t = RigidTransform::yaw(FRAC_PI_2).with_translation(Vector3::new(1.0, 2.0, 3.0));
        let dst: Vec<_> = src.iter().map(|p| t.transform_vector(p)).collect();
        assert!(close(&kabsch(&src, &dst).unwrap(), &t, 1e-9));

        let planar: Vec<_> = cloud(&mut rng, 6, 2.0).into_iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect();
        let dst: Vec<_> = planar.iter().map(|p| t.transform_vector(p)).collect();
        let est = kabsch(&planar, &dst).unwrap();
        assert!(close(&est, &t, 1e-9));
        assert!((est.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kabsch_rejects_collinear_points() {
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.5)).collect();
        assert!(matches!(kabsch(&line, &line), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn kabsch_never_returns_a_reflection() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src = cloud(&mut rng, 8, 1.0);
        let mirrored: Vec<_> = src.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let est = kabsch(&src, &mirrored).unwrap();
        assert!((est.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ransac_recovers_noiseless_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = cloud(&mut rng, 50, 10.0);
        let t = RigidTransform::from_axis_angle(Vector3::new(0.2, -0.4, 1.0), 2.1).with_translation(Vector3::new(-4.0, 7.0, 0.3));
        let dst: Vec<_> = src.iter().map(|p| t.transform_vector(p)).collect();
        let est = estimate_pose_ransac(&src, &dst, &RansacPoseParams::default()).unwrap();
        assert!(close(&est.transform, &t, 1e-9));
        assert_eq!(est.inliers.len(), 50);
    }

    #[test]
    fn ransac_with_outliers_excludes_them() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = cloud(&mut rng, 100, 20.0);
        let t = RigidTransform::yaw(0.8).with_translation(Vector3::new(10.0, -5.0, 1.0));
        let mut dst: Vec<_> = src.iter().map(|p| t.transform_vector(p)).collect();
        for d in dst.iter_mut().skip(80) {
            *d = Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        }
        let est = estimate_pose_ransac(&src, &dst, &RansacPoseParams::default()).unwrap();
        assert!(close(&est.transform, &t, 1e-6));
        assert_eq!(est.inliers, (0..80).collect::<Vec<_>>());
    }

    #[test]
    fn ransac_needs_three_correspondences() {
        let pts = [Vector3::zeros(), Vector3::x()];
        let err = estimate_pose_ransac(&pts, &pts, &RansacPoseParams::default()).unwrap_err();
        assert_eq!(err.code(), "E_NOCONSENSUS");
    }

    #[test]
    fn ransac_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = cloud(&mut rng, 60, 5.0);
        let dst: Vec<_> = cloud(&mut rng, 60, 5.0);
        let p = RansacPoseParams {
            seed: 77,
            ..Default::default()
        };
        let a = estimate_pose_ransac(&src, &dst, &p);
        let b = estimate_pose_ransac(&src, &dst, &p);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn compensation_identities() {
        let t = RigidTransform::yaw(0.3).with_translation(Vector3::new(1.0, 0.0, 2.0));
        assert!(close(&compensate(&t, &RigidTransform::identity()), &t, 1e-15));
        let p = RigidTransform::from_axis_angle(Vector3::new(1.0, 1.0, 0.0), 0.1).with_translation(Vector3::new(0.0, 0.0, -1.7));
        assert!(close(&compensate(&t, &p).compose(&p), &t, 1e-9));
    }
}
