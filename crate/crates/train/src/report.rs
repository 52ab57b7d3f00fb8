//! Per-run training reports.

use std::path::Path;

use egopose_core::hash::config_hash;
use egopose_core::metrics::{FrameScore, RunScores};
use egopose_core::record::Split;
use egopose_model::Variant;
use serde::{Deserialize, Serialize};

use crate::config::Strategy;
use crate::eval::KeypointAccuracy;
use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pose2D,
    Pose3D,
    EndToEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: Phase,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Checksum of the 2D module's parameters at the end of the epoch.
    pub pose2d_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    pub strategy: Strategy,
    pub variant: Variant,
    pub backbone_depth: u32,
    pub weight_sharing: bool,
    pub encoder_params: usize,
    pub pose2d_params: usize,
    pub pose3d_params: usize,
    pub train_frames: usize,
    pub eval_split: Split,
    pub epochs: Vec<EpochLog>,
    pub scores: RunScores,
    pub keypoints: KeypointAccuracy,
    pub frame_scores: Vec<FrameScore>,
    /// Checksum of all parameters after training.
    pub param_checksum: String,
    pub wall_clock_s: f64,
}

impl RunReport {
    /// Hash of everything except the wall-clock time, equal across reruns
    /// with the same seed and config.
    pub fn checksum(&self) -> String {
        let mut stable = self.clone();
        stable.wall_clock_s = 0.0;
        config_hash(&stable)
    }

    pub fn losses(&self, phase: Phase) -> Vec<f64> {
        self.epochs.iter().filter(|e| e.phase == phase).map(|e| e.train_loss).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
