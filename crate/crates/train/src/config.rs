use std::path::Path;

use egopose_core::hash::config_hash;
use egopose_core::record::Split;
use egopose_model::ModelConfig;
use egopose_nn::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// 2D module first, then the 3D module on the frozen 2D module's output.
    Separate,
    /// Both modules optimized jointly.
    End2end,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Separate, Strategy::End2end];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Separate => "separate",
            Strategy::End2end => "end2end",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Must be even: the first half runs at `base_lr`, the second half decays.
    pub epochs: usize,
    pub base_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub strategy: Strategy,
    pub runs: usize,
    /// Base seed; run `i` uses `seed + i` unless `seeds` is given.
    pub seed: u64,
    pub seeds: Vec<u64>,
    /// Weight of the 3D loss in end-to-end training.
    pub loss3d_weight: f64,
    /// Train the separate strategy's 3D phase on ground-truth heatmaps
    /// instead of the frozen 2D module's predictions.
    pub gt_heatmaps_for_3d: bool,
    /// Gaussian sigma of target heatmaps, in heatmap pixels.
    pub heatmap_sigma: f64,
    pub train_split: Split,
    pub eval_split: Split,
    pub max_train_frames: Option<usize>,
    pub max_val_frames: Option<usize>,
    pub max_eval_frames: Option<usize>,
    /// Decoded samples are kept in memory when a split has at most this many frames.
    pub cache_frames: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 10,
            base_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            strategy: Strategy::Separate,
            runs: 3,
            seed: 1,
            seeds: Vec::new(),
            loss3d_weight: 1.0,
            gt_heatmaps_for_3d: false,
            heatmap_sigma: 2.0,
            train_split: Split::Train,
            eval_split: Split::Test,
            max_train_frames: None,
            max_val_frames: Some(256),
            max_eval_frames: None,
            cache_frames: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.epochs == 0 || self.epochs % 2 != 0 {
            return bad(format!("epochs must be positive and even, got {}", self.epochs));
        }
        if !(self.base_lr > 0.0) {
            return bad("base_lr must be positive".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        let seeds = self.run_seeds();
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != seeds.len() {
            return bad("run seeds must be distinct".into());
        }
        if !self.seeds.is_empty() && self.seeds.len() < self.runs {
            return bad(format!("{} runs requested but only {} seeds listed", self.runs, self.seeds.len()));
        }
        if !(self.heatmap_sigma > 0.0) {
            return bad("heatmap_sigma must be positive".into());
        }
        Ok(())
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.runs as u64).map(|i| self.seed + i).collect()
        } else {
            self.seeds.iter().take(self.runs).copied().collect()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Everything one training invocation needs, loadable from a JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Experiment {
    /// Dataset root; may be left empty and supplied by the caller.
    pub data_root: Option<String>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// Hash of the model and training settings (the data root is excluded).
    pub fn config_hash(&self) -> String {
        config_hash(&(&self.model, &self.train))
    }
}
