//! Yaw-robust LiDAR relocalization by scene-coordinate regression.
//!
//! The pipeline: ground-plane rectification ([`plane`]), cylindrical
//! projection and voxelization ([`projection`]), cyclic sparse convolution
//! encoding ([`encoder`]), multi-head max regression ([`regressor`]),
//! reliability-weighted training loss ([`loss`]), and reliability-filtered
//! RANSAC pose estimation ([`pose`]). [`synth`] provides synthetic worlds,
//! scan simulation and an oracle predictor; [`metrics`] the evaluation.

pub mod archive;
pub mod config;
pub mod encoder;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod plane;
pub mod pose;
pub mod projection;
pub mod regressor;
pub mod se3;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use se3::{Point3, PointCloud, RigidTransform};
