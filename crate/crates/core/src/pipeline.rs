//! End-to-end localization and the synthetic robustness benchmark.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::config::{LocalCoords, PipelineConfig};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::plane::{rectify, RansacPlaneParams};
use crate::pose::{compensate, estimate_pose_ransac, select_reliable, PoseEstimate, RansacPoseParams};
use crate::projection::{project_cylindrical, recover_cartesian, voxelize, VoxelCloud};
use crate::regressor::{regress, PredictionSet, RegressorWeights};
use crate::se3::{PointCloud, RigidTransform};
use crate::synth::{
    derive_seed, generate_world, loop_trajectory, oracle_predict, perturb, simulate_scan, OracleCorruption,
    SimulatedScan, SyntheticWorld,
};
use crate::metrics::{FramePair, TrajectoryResult};

/// Sub-stream indices mixed into a per-scan seed.
pub const SIMULATION_STREAM: u64 = 0;
pub const PERTURBATION_STREAM: u64 = 1;
pub const ORACLE_STREAM: u64 = 2;
pub const RANSAC_STREAM: u64 = 3;
pub const PLANE_STREAM: u64 = 4;

/// Seed of scan `index` under the global seed.
pub fn scan_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

#[derive(Debug, Clone)]
pub struct PreparedScan {
    pub rectified: PointCloud,
    /// `rectified = rectification · raw`.
    pub rectification: RigidTransform,
    pub voxels: VoxelCloud,
    /// Local coordinates paired with each voxel, in the rectified frame.
    pub local: Vec<Vector3<f64>>,
}

pub fn prepare_scan(cloud: &PointCloud, cfg: &PipelineConfig, seed: u64) -> Result<PreparedScan> {
    cloud.ensure_nonempty()?;
    let plane = RansacPlaneParams {
        seed: derive_seed(seed, PLANE_STREAM),
        ..cfg.plane
    };
    let (rectified, rectification, _) = rectify(cloud, &plane)?;
    let projected = project_cylindrical(&rectified, &cfg.projection)?;
    let voxels = voxelize(&projected, &cfg.projection);
    let local = match cfg.local_coords {
        LocalCoords::Representative => voxels
            .voxels
            .iter()
            .map(|v| rectified.points[v.source_index].xyz())
            .collect(),
        LocalCoords::VoxelCenter => recover_cartesian(&voxels).positions(),
    };
    Ok(PreparedScan {
        rectified,
        rectification,
        voxels,
        local,
    })
}

#[derive(Debug, Clone)]
pub struct Localization {
    /// Sensor-to-world estimate for the raw scan.
    pub transform: RigidTransform,
    pub scan: PreparedScan,
    pub predictions: PredictionSet,
    pub selected: Vec<usize>,
    pub pose: PoseEstimate,
}

/// Rectify, voxelize, predict world coordinates per voxel, keep the most
/// reliable voxels, solve the pose and undo the rectification.
pub fn localize<F>(cloud: &PointCloud, cfg: &PipelineConfig, seed: u64, predict: F) -> Result<Localization>
where
    F: FnOnce(&PreparedScan) -> Result<PredictionSet>,
{
    let scan = prepare_scan(cloud, cfg, seed)?;
    let predictions = predict(&scan)?;
    if predictions.len() != scan.voxels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: scan.voxels.len(),
        });
    }
    let selected = select_reliable(&predictions.reliability, &cfg.selection);
    let local: Vec<_> = selected.iter().map(|&i| scan.local[i]).collect();
    let pred: Vec<_> = selected.iter().map(|&i| predictions.coords[i]).collect();
    let params = RansacPoseParams {
        seed: derive_seed(seed, RANSAC_STREAM),
        ..cfg.ransac
    };
    let pose = estimate_pose_ransac(&local, &pred, &params)?;
    let transform = compensate(&pose.transform, &scan.rectification.inverse());
    Ok(Localization {
        transform,
        scan,
        predictions,
        selected,
        pose,
    })
}

/// Encoder followed by the regressor.
pub fn learned_predictions(encoder: &Encoder, regressor: &RegressorWeights, scan: &PreparedScan) -> Result<PredictionSet> {
    regress(&encoder.encode(&scan.voxels)?, regressor)
}

/// Oracle predictions for each voxel. `origin[j]` maps point `j` of the
/// localized cloud back to its index in the simulated scan, so that draws stay
/// attached to the same physical point across perturbations.
pub fn oracle_predictions(
    sim: &SimulatedScan,
    origin: &[usize],
    corruption: &OracleCorruption,
    seed: u64,
    scan: &PreparedScan,
) -> Result<PredictionSet> {
    let full = oracle_predict(&sim.cloud, &sim.ground_truth, &sim.classes, corruption, seed)?;
    let idx: Vec<usize> = scan.voxels.voxels.iter().map(|v| origin[v.source_index]).collect();
    Ok(full.select(&idx))
}

#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Oracle(&'a OracleCorruption),
    Learned(&'a Encoder, &'a RegressorWeights),
}

#[derive(Debug, Clone)]
pub struct BenchScene {
    pub world: SyntheticWorld,
    pub scans: Vec<SimulatedScan>,
}

pub fn build_scene(cfg: &PipelineConfig) -> Result<BenchScene> {
    let world = generate_world(&cfg.world, cfg.world_seed)?;
    let poses = loop_trajectory(cfg.scans, cfg.world.loop_radius, cfg.sensor_height);
    let scans = poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            simulate_scan(&world, pose, &cfg.sensor, derive_seed(scan_seed(cfg.seed, i), SIMULATION_STREAM))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchScene { world, scans })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanFailure {
    pub scan: usize,
    pub code: &'static str,
}

#[derive(Debug, Clone)]
pub struct ConditionResult {
    pub label: String,
    /// Frames that produced a pose, in scan order.
    pub trajectory: TrajectoryResult,
    pub scan_indices: Vec<usize>,
    pub failures: Vec<ScanFailure>,
}

impl ConditionResult {
    pub fn no_consensus(&self) -> usize {
        self.failures.iter().filter(|f| f.code == "E_NOCONSENSUS").count()
    }
}

/// Localizes one scan under one perturbation. Returns `(estimate, truth)`.
pub fn run_scan(
    scene: &BenchScene,
    index: usize,
    perturbation: &crate::synth::Perturbation,
    cfg: &PipelineConfig,
    predictor: Predictor<'_>,
) -> Result<FramePair> {
    let sim = &scene.scans[index];
    let seed = scan_seed(cfg.seed, index);
    let perturbed = perturb(&sim.cloud, perturbation, derive_seed(seed, PERTURBATION_STREAM))?;
    let oracle_seed = derive_seed(seed, ORACLE_STREAM);
    let loc = localize(&perturbed.cloud, cfg, seed, |scan| match predictor {
        Predictor::Oracle(c) => oracle_predictions(sim, &perturbed.kept, c, oracle_seed, scan),
        Predictor::Learned(e, r) => learned_predictions(e, r, scan),
    })?;
    Ok(FramePair {
        estimated: loc.transform,
        ground_truth: perturbed.pose(&sim.pose),
    })
}

/// Every configured perturbation over every scan of the scene.
pub fn run_bench(scene: &BenchScene, cfg: &PipelineConfig, predictor: Predictor<'_>) -> Vec<ConditionResult> {
    let n = scene.scans.len();
    let jobs: Vec<(usize, usize)> = (0..cfg.perturbations.len()).flat_map(|c| (0..n).map(move |s| (c, s))).collect();
    let outcomes: Vec<Result<FramePair>> = jobs
        .par_iter()
        .map(|&(c, s)| run_scan(scene, s, &cfg.perturbations[c], cfg, predictor))
        .collect();
    cfg.perturbations
        .iter()
        .enumerate()
        .map(|(c, p)| {
            let mut result = ConditionResult {
                label: p.label(),
                trajectory: TrajectoryResult::default(),
                scan_indices: Vec::new(),
                failures: Vec::new(),
            };
            for (s, outcome) in outcomes[c * n..(c + 1) * n].iter().enumerate() {
                match outcome {
                    Ok(pair) => {
                        result.trajectory.frames.push(*pair);
                        result.scan_indices.push(s);
                    }
                    Err(e) => result.failures.push(ScanFailure { scan: s, code: e.code() }),
                }
            }
            result
        })
        .collect()
}
