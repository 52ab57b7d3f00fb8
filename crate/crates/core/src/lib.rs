//! Core data types, fisheye stereo geometry, character spawning, synthetic
//! data generation and evaluation metrics for egocentric 3D pose estimation.

pub mod camera;
pub mod error;
pub mod hash;
pub mod heatmap;
pub mod metrics;
pub mod pose;
pub mod record;
pub mod skeleton;
pub mod spawner;
pub mod stats;
pub mod synth;
pub mod tensorio;

pub use error::{Error, Result};
pub use pose::{HeatmapStack, Keypoint, Keypoints2D, Pose3D, PoseFrame};
