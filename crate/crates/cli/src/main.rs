use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leader_geo::archive::TensorArchive;
use leader_geo::config::{LossKind, PipelineConfig};
use leader_geo::encoder::{Encoder, EncoderWeights, PointFeatures};
use leader_geo::io::{
    coords_to_csv, points_to_csv, read_points_csv, read_text, voxels_from_csv, voxels_to_csv, write_atomic, write_pose,
    coords_from_csv,
};
use leader_geo::metrics::{success_key, Report};
use leader_geo::pipeline::{
    build_scene, learned_predictions, localize, run_bench, scan_seed, ConditionResult, Predictor, ORACLE_STREAM,
    PERTURBATION_STREAM,
};
use leader_geo::plane::{rectify, RansacPlaneParams};
use leader_geo::projection::{project_cylindrical, recover_cartesian, voxelize};
use leader_geo::regressor::{PredictionSet, RegressorWeights};
use leader_geo::synth::{derive_seed, oracle_predict, perturb, Perturbation};
use leader_geo::train::{build_training_set, initial_regressor, reliability_quartiles, train_regressor};
use leader_geo::{Error, Result};
use nalgebra::Vector3;
use serde::Serialize;

fn config_help() -> &'static str {
    static HELP: OnceLock<String> = OnceLock::new();
    HELP.get_or_init(|| {
        format!(
            "Configuration keys (`key = value`, `#` starts a comment):\n{}\nEnvironment:\n  LEADER_GEO_THREADS           cap on worker threads",
            PipelineConfig::key_help()
        )
    })
}

#[derive(Parser)]
#[command(name = "leader-geo", version, about = "Yaw-robust LiDAR relocalization on synthetic scenes")]
#[command(after_long_help = config_help())]
struct Cli {
    /// Configuration file; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictorArg {
    Oracle,
    Regressor,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Trr,
    Mean,
    Matching,
}

#[derive(Args)]
struct InputArg {
    /// Input file.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the effective configuration to `config.cfg`.
    Config,
    /// Simulate one benchmark scan: `scan.csv`, `gt.csv`, `gt_pose.txt`.
    Simulate {
        #[arg(long, default_value_t = 0)]
        scan: usize,
        #[arg(long, value_name = "KIND=VALUE")]
        perturb: Option<String>,
    },
    /// Fit the ground plane: `rectified.csv`, `plane_transform.txt`.
    Rectify(InputArg),
    /// Cylindrical projection and voxelization of a rectified cloud:
    /// `projected.csv`, `voxels.csv`.
    Project(InputArg),
    /// Cartesian points at voxel centers: `recovered.csv`.
    Recover(InputArg),
    /// Per-voxel encoder features: `features.csv`.
    Encode(InputArg),
    /// Estimate the sensor pose of a raw scan: `pose.txt`, `pose.json`.
    Localize {
        #[command(flatten)]
        input: InputArg,
        #[arg(long, value_enum, default_value = "oracle")]
        predictor: PredictorArg,
        /// World coordinates per point, required by the oracle.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Every scan under every perturbation: `bench.json`, `bench.csv`.
    Bench {
        #[arg(long, value_enum, default_value = "oracle")]
        predictor: PredictorArg,
        /// Replaces `bench.perturbations`; repeatable.
        #[arg(long, value_name = "KIND=VALUE")]
        perturb: Vec<String>,
    },
    /// Train the regressor on frozen encoder features: `telemetry.csv`,
    /// `quartiles.csv`, `regressor.bin`.
    TrainToy {
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn load_encoder(cfg: &PipelineConfig) -> Result<Encoder> {
    let weights = if cfg.encoder_weights.is_empty() {
        EncoderWeights::random(cfg.encoder.clone(), cfg.encoder_seed)
    } else {
        EncoderWeights::from_archive(&TensorArchive::load(Path::new(&cfg.encoder_weights))?)?
    };
    Encoder::new(weights)
}

fn load_regressor(cfg: &PipelineConfig) -> Result<RegressorWeights> {
    if cfg.regressor_weights.is_empty() {
        Ok(
            RegressorWeights::random(cfg.regressor_layers, cfg.regressor_heads, cfg.encoder.fused_width, cfg.regressor_seed)
                .with_output_map(Vector3::zeros(), cfg.world.half_extent),
        )
    } else {
        RegressorWeights::from_archive(&TensorArchive::load(Path::new(&cfg.regressor_weights))?)
    }
}

fn features_to_csv(f: &PointFeatures) -> String {
    let mut s = (0..f.width).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for i in 0..f.len() {
        let row: Vec<String> = f.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct FailureRow {
    scan: usize,
    code: &'static str,
}

#[derive(Serialize)]
struct ConditionReport {
    perturbation: String,
    no_consensus: usize,
    failures: Vec<FailureRow>,
    report: Option<Report>,
}

#[derive(Serialize)]
struct BenchReport {
    predictor: &'static str,
    scans: usize,
    conditions: Vec<ConditionReport>,
}

fn bench_table(conditions: &[ConditionResult], thresholds: &[f64]) -> Result<String> {
    let mut s = String::from("perturbation,frames,failures,no_consensus,mpe_m,moe_deg,medpe_m,p99_m");
    for t in thresholds {
        let _ = write!(s, ",{}", success_key(*t));
    }
    s.push('\n');
    for c in conditions {
        let _ = write!(s, "{},{},{},{}", c.label, c.trajectory.len(), c.failures.len(), c.no_consensus());
        if c.trajectory.is_empty() {
            s.push_str(&",".repeat(4 + thresholds.len()));
        } else {
            let r = Report::build(&c.trajectory, thresholds)?.summary;
            let _ = write!(s, ",{},{},{},{}", r.mpe_m, r.moe_deg, r.medpe_m, r.p99_m);
            for t in thresholds {
                let _ = write!(s, ",{}", r.success[&success_key(*t)]);
            }
        }
        s.push('\n');
    }
    Ok(s)
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let out = &cli.out;
    create_dir(out)?;
    match &cli.command {
        Command::Config => write_atomic(&out.join("config.cfg"), cfg.to_text().as_bytes()),
        Command::Simulate { scan, perturb: p } => {
            let mut one = cfg.clone();
            one.scans = cfg.scans.max(scan + 1);
            let scene = build_scene(&one)?;
            let sim = &scene.scans[*scan];
            let p = match p {
                Some(t) => Perturbation::parse(t)?,
                None => Perturbation::None,
            };
            let seed = scan_seed(cfg.seed, *scan);
            let perturbed = perturb(&sim.cloud, &p, derive_seed(seed, PERTURBATION_STREAM))?;
            let classes: Vec<_> = perturbed.kept.iter().map(|&i| sim.classes[i]).collect();
            let gt: Vec<_> = perturbed.kept.iter().map(|&i| sim.ground_truth[i]).collect();
            write_atomic(&out.join("scan.csv"), &points_to_csv(&perturbed.cloud, Some(&classes))?)?;
            write_atomic(&out.join("gt.csv"), &coords_to_csv(&gt)?)?;
            write_pose(&out.join("gt_pose.txt"), &perturbed.pose(&sim.pose))
        }
        Command::Rectify(a) => {
            let (cloud, classes) = read_points_csv(&a.input)?;
            let params = RansacPlaneParams {
                seed: cfg.seed,
                ..cfg.plane
            };
            let (rectified, t, _) = rectify(&cloud, &params)?;
            write_atomic(&out.join("rectified.csv"), &points_to_csv(&rectified, classes.as_deref())?)?;
            write_pose(&out.join("plane_transform.txt"), &t)
        }
        Command::Project(a) => {
            let (cloud, _) = read_points_csv(&a.input)?;
            let projected = project_cylindrical(&cloud, &cfg.projection)?;
            let voxels = voxelize(&projected, &cfg.projection);
            write_atomic(&out.join("projected.csv"), &points_to_csv(&projected, None)?)?;
            write_atomic(&out.join("voxels.csv"), &voxels_to_csv(&voxels)?)
        }
        Command::Recover(a) => {
            let voxels = voxels_from_csv(&read_text(&a.input)?, cfg.projection)?;
            write_atomic(&out.join("recovered.csv"), &points_to_csv(&recover_cartesian(&voxels), None)?)
        }
        Command::Encode(a) => {
            let voxels = voxels_from_csv(&read_text(&a.input)?, cfg.projection)?;
            let features = load_encoder(&cfg)?.encode(&voxels)?;
            write_atomic(&out.join("features.csv"), features_to_csv(&features).as_bytes())
        }
        Command::Localize { input, predictor, gt } => {
            let (cloud, classes) = read_points_csv(&input.input)?;
            let seed = cfg.seed;
            let loc = match predictor {
                PredictorArg::Oracle => {
                    let gt_path = gt
                        .as_ref()
                        .ok_or_else(|| Error::InvalidConfig("the oracle predictor needs --gt".into()))?;
                    let gt = coords_from_csv(&read_text(gt_path)?)?;
                    let classes = classes
                        .ok_or_else(|| Error::InvalidConfig("the oracle predictor needs a class column".into()))?;
                    let full = oracle_predict(&cloud, &gt, &classes, &cfg.oracle, derive_seed(seed, ORACLE_STREAM))?;
                    localize(&cloud, &cfg, seed, |scan| -> Result<PredictionSet> {
                        Ok(full.select(&scan.voxels.source_indices()))
                    })?
                }
                PredictorArg::Regressor => {
                    let encoder = load_encoder(&cfg)?;
                    let regressor = load_regressor(&cfg)?;
                    localize(&cloud, &cfg, seed, |scan| learned_predictions(&encoder, &regressor, scan))?
                }
            };
            write_pose(&out.join("pose.txt"), &loc.transform)?;
            let mut sidecar = serde_json::to_string_pretty(&loc.pose.sidecar()).expect("sidecar serializes");
            sidecar.push('\n');
            write_atomic(&out.join("pose.json"), sidecar.as_bytes())
        }
        Command::Bench { predictor, perturb: p } => {
            if !p.is_empty() {
                cfg.perturbations = p.iter().map(|t| Perturbation::parse(t)).collect::<Result<_>>()?;
            }
            let scene = build_scene(&cfg)?;
            let (conditions, name) = match predictor {
                PredictorArg::Oracle => (run_bench(&scene, &cfg, Predictor::Oracle(&cfg.oracle)), "oracle"),
                PredictorArg::Regressor => {
                    let encoder = load_encoder(&cfg)?;
                    let regressor = load_regressor(&cfg)?;
                    (run_bench(&scene, &cfg, Predictor::Learned(&encoder, &regressor)), "regressor")
                }
            };
            let report = BenchReport {
                predictor: name,
                scans: cfg.scans,
                conditions: conditions
                    .iter()
                    .map(|c| {
                        Ok(ConditionReport {
                            perturbation: c.label.clone(),
                            no_consensus: c.no_consensus(),
                            failures: c.failures.iter().map(|f| FailureRow { scan: f.scan, code: f.code }).collect(),
                            report: if c.trajectory.is_empty() {
                                None
                            } else {
                                Some(Report::build(&c.trajectory, &cfg.thresholds)?)
                            },
                        })
                    })
                    .collect::<Result<_>>()?,
            };
            let mut json = serde_json::to_string_pretty(&report).expect("bench report serializes");
            json.push('\n');
            write_atomic(&out.join("bench.json"), json.as_bytes())?;
            write_atomic(&out.join("bench.csv"), bench_table(&conditions, &cfg.thresholds)?.as_bytes())
        }
        Command::TrainToy { loss, epochs } => {
            if let Some(l) = loss {
                cfg.train.loss = match l {
                    LossArg::Trr => LossKind::Trr,
                    LossArg::Mean => LossKind::Mean,
                    LossArg::Matching => LossKind::Matching,
                };
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            let encoder = load_encoder(&cfg)?;
            let samples = build_training_set(&cfg, &encoder)?;
            let outcome = train_regressor(&samples, initial_regressor(&cfg, &samples), &cfg)?;
            let mut telemetry = String::from("epoch,loss,clamp_exceeding,lr\n");
            for e in &outcome.telemetry {
                let _ = writeln!(telemetry, "{},{},{},{}", e.epoch, e.loss, e.clamp_exceeding, e.lr);
            }
            let q = reliability_quartiles(&samples, &outcome.weights)?;
            let mut table = String::from("quartile,mean_reliability,label_error_m,clean_error_m\n");
            for i in 0..4 {
                let _ = writeln!(
                    table,
                    "Q{},{},{},{}",
                    i + 1,
                    q.mean_reliability[i],
                    q.label_error[i],
                    q.clean_error[i]
                );
            }
            write_atomic(&out.join("telemetry.csv"), telemetry.as_bytes())?;
            write_atomic(&out.join("quartiles.csv"), table.as_bytes())?;
            write_atomic(&out.join("initial_loss.txt"), format!("{}\n", outcome.initial_loss).as_bytes())?;
            outcome.weights.to_archive().save(&out.join("regressor.bin"))
        }
    }
}

fn exit_code(code: &str) -> u8 {
    match code {
        "E_PARSE" => 2,
        "E_CONFIG" => 3,
        "E_IO" => 4,
        "E_DEGENERATE" => 5,
        "E_NOCONSENSUS" => 6,
        "E_EMPTY" => 7,
        _ => 8,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("LEADER_GEO_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(e.code()))
        }
    }
}
