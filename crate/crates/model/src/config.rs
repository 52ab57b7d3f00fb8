use serde::{Deserialize, Serialize};

use crate::resnet::depth_layout;
use crate::{ModelError, Result};

/// How the 2D module treats the stereo pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Encoders applied to both views, features concatenated per stage and
    /// decoded by one decoder emitting both views' heatmaps.
    StereoShared,
    /// Two independent single-view encoder-decoder modules.
    StereoDual,
    /// Left view only.
    Monocular,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::StereoShared, Variant::StereoDual, Variant::Monocular];

    pub fn name(self) -> &'static str {
        match self {
            Variant::StereoShared => "stereo-shared",
            Variant::StereoDual => "stereo-dual",
            Variant::Monocular => "monocular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn views(self) -> usize {
        match self {
            Variant::Monocular => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pose2DConfig {
    pub backbone_depth: u32,
    /// One encoder parameter set for both views; only meaningful for
    /// [`Variant::StereoShared`].
    pub weight_sharing: bool,
    pub variant: Variant,
    /// Channel width of the first residual stage (64 in the standard nets).
    pub base_width: usize,
    /// Number of residual stages used (4 in the standard nets).
    pub stages: usize,
    pub input_size: usize,
    /// Optional tensor bundle with encoder weights, names relative to the encoder.
    pub pretrained_encoder: Option<String>,
    /// Per-channel normalization applied to RGB values in [0, 1].
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Pose2DConfig {
    fn default() -> Self {
        Self {
            backbone_depth: 18,
            weight_sharing: true,
            variant: Variant::StereoShared,
            base_width: 16,
            stages: 4,
            input_size: 256,
            pretrained_encoder: None,
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl Pose2DConfig {
    pub fn validate(&self) -> Result<()> {
        if depth_layout(self.backbone_depth).is_none() {
            return Err(ModelError::Config(format!(
                "backbone depth must be one of 18, 34, 50, 101; got {}",
                self.backbone_depth
            )));
        }
        if !(1..=4).contains(&self.stages) || self.base_width == 0 {
            return Err(ModelError::Config("stages must be 1..=4 and base_width positive".into()));
        }
        if !self.weight_sharing && self.variant != Variant::StereoShared {
            return Err(ModelError::Config(format!(
                "weight_sharing=false only applies to stereo-shared, not {}",
                self.variant.name()
            )));
        }
        let stride = 4 << (self.stages - 1);
        if self.input_size % stride != 0 {
            return Err(ModelError::Config(format!(
                "input size {} must be divisible by {stride}",
                self.input_size
            )));
        }
        if self.std.iter().any(|s| *s <= 0.0) {
            return Err(ModelError::Config("std must be positive".into()));
        }
        Ok(())
    }

    pub fn heatmap_size(&self) -> usize {
        self.input_size / 4
    }

    /// HWC `u8` RGB pixels to normalized CHW values.
    pub fn normalize(&self, rgb: &[u8]) -> Vec<f32> {
        let n = self.input_size * self.input_size;
        assert_eq!(rgb.len(), n * 3, "expected {}x{} RGB image", self.input_size, self.input_size);
        let mut out = vec![0.0; n * 3];
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * n + i] = (px[c] as f32 / 255.0 - self.mean[c]) / self.std[c];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pose3DConfig {
    pub heatmap_size: usize,
    /// Output channels of the strided convolutions (one entry per stage).
    pub encoder_channels: Vec<usize>,
    pub embedding_dim: usize,
    pub pose_hidden: usize,
    /// Pose-branch outputs are multiplied by this before being read as cm.
    pub pose_scale: f64,
    pub lambda_pose: f64,
    pub lambda_cos: f64,
    pub lambda_hm: f64,
}

impl Default for Pose3DConfig {
    fn default() -> Self {
        Self {
            heatmap_size: 64,
            encoder_channels: vec![32, 64, 128, 256],
            embedding_dim: 512,
            pose_hidden: 512,
            pose_scale: 100.0,
            lambda_pose: 0.1,
            lambda_cos: 0.01,
            lambda_hm: 0.001,
        }
    }
}

impl Pose3DConfig {
    pub fn validate(&self) -> Result<()> {
        let stages = self.encoder_channels.len();
        if stages == 0 || self.encoder_channels.contains(&0) {
            return Err(ModelError::Config("3D encoder needs at least one non-empty stage".into()));
        }
        if self.heatmap_size % (1 << stages) != 0 {
            return Err(ModelError::Config(format!(
                "heatmap size {} not divisible by 2^{stages}",
                self.heatmap_size
            )));
        }
        if self.embedding_dim == 0 || self.pose_hidden == 0 {
            return Err(ModelError::Config("embedding and hidden sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn bottleneck_size(&self) -> usize {
        self.heatmap_size >> self.encoder_channels.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub pose2d: Pose2DConfig,
    pub pose3d: Pose3DConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.pose2d.validate()?;
        self.pose3d.validate()?;
        if self.pose2d.heatmap_size() != self.pose3d.heatmap_size {
            return Err(ModelError::Config(format!(
                "2D module emits {}x{} heatmaps but 3D module expects {}",
                self.pose2d.heatmap_size(),
                self.pose2d.heatmap_size(),
                self.pose3d.heatmap_size
            )));
        }
        Ok(())
    }

    /// Miniature configuration for gradient checks: 2-stage encoder on 8×8
    /// inputs and a 3D module over 8×8 heatmaps with a 16-wide embedding.
    /// The 2D module emits 2×2 heatmaps, so the two are built separately.
    pub fn miniature() -> (Pose2DConfig, Pose3DConfig) {
        (
            Pose2DConfig {
                base_width: 2,
                stages: 2,
                input_size: 8,
                ..Pose2DConfig::default()
            },
            Pose3DConfig {
                heatmap_size: 8,
                encoder_channels: vec![4, 8],
                embedding_dim: 16,
                pose_hidden: 16,
                ..Pose3DConfig::default()
            },
        )
    }
}
