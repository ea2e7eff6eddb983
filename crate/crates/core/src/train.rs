//! Toy regressor training on synthetic scans with corrupted targets.

use nalgebra::Vector3;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{LossKind, PipelineConfig};
use crate::encoder::{Encoder, PointFeatures};
use crate::error::{Error, Result};
use crate::loss::{matching_gradients, mean_euclidean_gradients, trr_gradients};
use crate::pipeline::{prepare_scan, scan_seed, SIMULATION_STREAM};
use crate::regressor::{regress, regress_backward, RegressorWeights};
use crate::synth::{arc_trajectory, derive_seed, generate_world, oracle_predict, simulate_scan, ReliabilityClass};

const TRAIN_STREAM: u64 = 5;
const SUBSAMPLE_STREAM: u64 = 6;
const LABEL_STREAM: u64 = 7;

#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub features: PointFeatures,
    /// Corrupted regression targets.
    pub targets: Vec<Vector3<f64>>,
    /// Clean world coordinates, used only for evaluation.
    pub truth: Vec<Vector3<f64>>,
    pub classes: Vec<ReliabilityClass>,
}

impl TrainingSample {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn gather_rows(f: &PointFeatures, rows: &[usize]) -> PointFeatures {
    PointFeatures {
        width: f.width,
        data: rows.iter().flat_map(|&r| f.row(r).iter().copied()).collect(),
    }
}

/// Simulates `train.scans` poses along `train.arc_deg` of the loop, encodes each scan with the
/// frozen encoder and keeps a seeded subset of `train.points_per_scan`
/// voxels. Targets come from the oracle under `train_oracle`.
pub fn build_training_set(cfg: &PipelineConfig, encoder: &Encoder) -> Result<Vec<TrainingSample>> {
    let world = generate_world(&cfg.world, cfg.world_seed)?;
    let poses = arc_trajectory(cfg.train.scans, cfg.world.loop_radius, cfg.sensor_height, cfg.train.arc_deg.to_radians());
    let base = derive_seed(cfg.seed, TRAIN_STREAM);
    poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let seed = scan_seed(base, i);
            let sim = simulate_scan(&world, pose, &cfg.sensor, derive_seed(seed, SIMULATION_STREAM))?;
            let scan = prepare_scan(&sim.cloud, cfg, seed)?;
            let features = encoder.encode(&scan.voxels)?;
            let n = scan.voxels.len();
            let k = cfg.train.points_per_scan.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SUBSAMPLE_STREAM));
            let mut rows = index::sample(&mut rng, n, k).into_vec();
            rows.sort_unstable();
            let labels = oracle_predict(
                &sim.cloud,
                &sim.ground_truth,
                &sim.classes,
                &cfg.train_oracle,
                derive_seed(seed, LABEL_STREAM),
            )?;
            let src: Vec<usize> = rows.iter().map(|&r| scan.voxels.voxels[r].source_index).collect();
            Ok(TrainingSample {
                features: gather_rows(&features, &rows),
                targets: src.iter().map(|&s| labels.coords[s]).collect(),
                truth: src.iter().map(|&s| sim.ground_truth[s]).collect(),
                classes: src.iter().map(|&s| sim.classes[s]).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochTelemetry {
    pub epoch: usize,
    /// Mean loss over scans, evaluated before each scan's update.
    pub loss: f64,
    /// Points whose `|u|` exceeded the clamp, summed over scans.
    pub clamp_exceeding: usize,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: RegressorWeights,
    pub initial_loss: f64,
    pub telemetry: Vec<EpochTelemetry>,
}

/// Loss, clamp count and upstream gradients for one sample.
fn loss_step(
    kind: LossKind,
    sigma_max: f64,
    coords: &[Vector3<f64>],
    targets: &[Vector3<f64>],
    u: &[f64],
) -> Result<(f64, usize, Vec<Vector3<f64>>, Vec<f64>)> {
    match kind {
        LossKind::Trr => {
            let (b, g) = trr_gradients(coords, targets, u)?;
            Ok((b.total, b.clamp_exceeding(), g.coords, g.reliability))
        }
        LossKind::Mean => {
            let (total, dc) = mean_euclidean_gradients(coords, targets)?;
            Ok((total, 0, dc, vec![0.0; u.len()]))
        }
        LossKind::Matching => {
            // σ = −u keeps "larger u means more reliable".
            let sigma: Vec<f64> = u.iter().map(|v| -v).collect();
            let (total, dc, ds) = matching_gradients(coords, targets, &sigma, sigma_max)?;
            Ok((total, 0, dc, ds.into_iter().map(|v| -v).collect()))
        }
    }
}

pub fn evaluate_loss(samples: &[TrainingSample], w: &RegressorWeights, kind: LossKind, sigma_max: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyScan);
    }
    let mut sum = 0.0;
    for s in samples {
        let p = regress(&s.features, w)?;
        sum += loss_step(kind, sigma_max, &p.coords, &s.targets, &p.reliability)?.0;
    }
    Ok(sum / samples.len() as f64)
}

/// One full-batch gradient step per sample per epoch; the learning rate is
/// multiplied by `gamma` after every epoch.
pub fn train_regressor(samples: &[TrainingSample], init: RegressorWeights, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    let t = &cfg.train;
    let initial_loss = evaluate_loss(samples, &init, t.loss, t.sigma_max)?;
    let mut w = init;
    let mut lr = t.lr;
    let mut telemetry = Vec::with_capacity(t.epochs);
    for epoch in 1..=t.epochs {
        let mut sum = 0.0;
        let mut exceeding = 0;
        for s in samples {
            let p = regress(&s.features, &w)?;
            let (loss, over, dc, du) = loss_step(t.loss, t.sigma_max, &p.coords, &s.targets, &p.reliability)?;
            sum += loss;
            exceeding += over;
            let (grad, _) = regress_backward(&s.features, &w, &dc, &du)?;
            w.descend(&grad, lr);
        }
        telemetry.push(EpochTelemetry {
            epoch,
            loss: sum / samples.len() as f64,
            clamp_exceeding: exceeding,
            lr,
        });
        lr *= t.gamma;
    }
    Ok(TrainOutcome {
        weights: w,
        initial_loss,
        telemetry,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuartileTable {
    /// Counted from the most reliable quartile.
    pub label_error: [f64; 4],
    pub clean_error: [f64; 4],
    pub mean_reliability: [f64; 4],
}

/// Mean error per reliability quartile, against the corrupted training
/// labels and against clean truth. Points are pooled over samples and ranked
/// by `u` descending, ties by pooled index.
pub fn reliability_quartiles(samples: &[TrainingSample], w: &RegressorWeights) -> Result<QuartileTable> {
    let mut pooled: Vec<[f64; 3]> = Vec::new();
    for s in samples {
        let p = regress(&s.features, w)?;
        for i in 0..s.len() {
            let c = p.coords[i];
            pooled.push([p.reliability[i], (c - s.targets[i]).norm(), (c - s.truth[i]).norm()]);
        }
    }
    if pooled.len() < 4 {
        return Err(Error::EmptyScan);
    }
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[b][0].total_cmp(&pooled[a][0]).then(a.cmp(&b)));
    let n = order.len();
    let mut table = QuartileTable {
        label_error: [0.0; 4],
        clean_error: [0.0; 4],
        mean_reliability: [0.0; 4],
    };
    for q in 0..4 {
        let part = &order[q * n / 4..(q + 1) * n / 4];
        let mean = |k: usize| part.iter().map(|&i| pooled[i][k]).sum::<f64>() / part.len() as f64;
        table.mean_reliability[q] = mean(0);
        table.label_error[q] = mean(1);
        table.clean_error[q] = mean(2);
    }
    Ok(table)
}

/// Initial regressor for the configured encoder width. Inputs are
/// standardized over the training features and outputs scaled to the world
/// half extent.
pub fn initial_regressor(cfg: &PipelineConfig, samples: &[TrainingSample]) -> RegressorWeights {
    let features: Vec<&PointFeatures> = samples.iter().map(|s| &s.features).collect();
    RegressorWeights::random(cfg.regressor_layers, cfg.regressor_heads, cfg.encoder.fused_width, cfg.regressor_seed)
        .with_output_map(Vector3::zeros(), cfg.world.half_extent)
        .with_input_standardization(&features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderWeights;

    fn tiny_cfg() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.train.scans = 2;
        cfg.train.points_per_scan = 64;
        cfg.train.epochs = 3;
        cfg
    }

    #[test]
    fn telemetry_and_quartiles_are_well_formed() {
        let cfg = tiny_cfg();
        let encoder = Encoder::new(EncoderWeights::random(cfg.encoder.clone(), cfg.encoder_seed)).unwrap();
        let set = build_training_set(&cfg, &encoder).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.iter().all(|s| s.len() == 64 && s.features.len() == 64));
        let out = train_regressor(&set, initial_regressor(&cfg, &set), &cfg).unwrap();
        assert_eq!(out.telemetry.len(), 3);
        assert!(out.telemetry.iter().all(|e| e.loss.is_finite()));
        assert!((out.telemetry[1].lr - cfg.train.lr * cfg.train.gamma).abs() < 1e-15);
        let q = reliability_quartiles(&set, &out.weights).unwrap();
        assert!(q.label_error.iter().chain(&q.clean_error).all(|v| v.is_finite()));
        assert!(q.mean_reliability.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let mut cfg = tiny_cfg();
        cfg.train.lr = 0.0;
        cfg.train.loss = LossKind::Matching;
        let encoder = Encoder::new(EncoderWeights::random(cfg.encoder.clone(), cfg.encoder_seed)).unwrap();
        let set = build_training_set(&cfg, &encoder).unwrap();
        let init = initial_regressor(&cfg, &set);
        let out = train_regressor(&set, init.clone(), &cfg).unwrap();
        assert_eq!(out.weights, init);
        assert!((out.telemetry[0].loss - out.initial_loss).abs() < 1e-12);
    }
}
