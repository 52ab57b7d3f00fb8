//! Test-time inference and scoring.

use egopose_core::heatmap::decode_heatmaps;
use egopose_core::metrics::{score_frame, FrameScore};
use egopose_core::{HeatmapStack, Keypoints2D, Pose3D, PoseFrame};
use egopose_model::Models;
use egopose_nn::{Graph, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::{Batch, SplitData};
use crate::Result;

/// Decoded 2D keypoints within `radius_cells` heatmap cells of ground truth,
/// counted over joints visible in the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointAccuracy {
    pub radius_cells: f64,
    pub visible: usize,
    pub within: usize,
}

impl KeypointAccuracy {
    pub const DEFAULT_RADIUS: f64 = 2.0;

    pub fn new(radius_cells: f64) -> Self {
        Self {
            radius_cells,
            visible: 0,
            within: 0,
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.visible == 0 {
            0.0
        } else {
            self.within as f64 / self.visible as f64
        }
    }

    /// Adds one view; `cell_px` is the size of one heatmap cell in image pixels.
    pub fn add(&mut self, truth: &Keypoints2D, pred: &Keypoints2D, cell_px: f64) {
        for (t, p) in truth.points.iter().zip(&pred.points) {
            if !t.visible {
                continue;
            }
            self.visible += 1;
            let d = ((t.u - p.u).powi(2) + (t.v - p.v).powi(2)).sqrt() / cell_px;
            if d <= self.radius_cells {
                self.within += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub frames: Vec<FrameScore>,
    pub keypoints: KeypointAccuracy,
}

/// Predicted heatmaps and poses for one batch, in inference mode.
pub struct Prediction {
    pub heatmaps_left: Tensor<f32>,
    pub heatmaps_right: Option<Tensor<f32>>,
    pub poses: Vec<Pose3D>,
}

pub fn predict(models: &Models<f32>, batch: &Batch) -> Result<Prediction> {
    let mut g = Graph::frozen(&models.store);
    let l = g.input(batch.left.clone());
    let r = batch.right.clone().map(|t| g.input(t));
    let out = models.pose2d.forward(&mut g, l, r, false)?;
    let p = models.pose3d.forward(&mut g, out.left, out.right)?;
    let flat = g.value(p.pose).data();
    let poses = flat
        .chunks_exact(48)
        .map(|c| Pose3D::from_flat(PoseFrame::Device, &c.iter().map(|v| f64::from(*v)).collect::<Vec<_>>()))
        .collect::<egopose_core::Result<Vec<_>>>()?;
    Ok(Prediction {
        heatmaps_left: g.value(out.left).clone(),
        heatmaps_right: out.right.map(|v| g.value(v).clone()),
        poses,
    })
}

fn stack_item(t: &Tensor<f32>, i: usize) -> HeatmapStack {
    let size = t.shape()[2];
    HeatmapStack::from_vec(size, t.batch_item(i).to_vec()).expect("15-channel square heatmaps")
}

/// Scores every frame of `data` in device-frame mm.
pub fn evaluate(models: &Models<f32>, data: &SplitData, batch_size: usize) -> Result<Evaluation> {
    let cfg = &models.pose2d.config;
    let mut frames = Vec::with_capacity(data.len());
    let mut keypoints = KeypointAccuracy::new(KeypointAccuracy::DEFAULT_RADIUS);
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        // Heatmap targets are unused here; sigma only needs to be valid.
        let batch = data.batch(chunk, cfg, 1.0)?;
        let pred = predict(models, &batch)?;
        for (i, s) in batch.samples.iter().enumerate() {
            frames.push(score_frame(&s.category, &s.pose, &pred.poses[i])?);
            let cell = f64::from(s.image_size) / pred.heatmaps_left.shape()[2] as f64;
            let left = decode_heatmaps(&stack_item(&pred.heatmaps_left, i), s.image_size);
            keypoints.add(&s.keypoints.left, &left, cell);
            if let Some(h) = &pred.heatmaps_right {
                let right = decode_heatmaps(&stack_item(h, i), s.image_size);
                keypoints.add(&s.keypoints.right, &right, cell);
            }
        }
    }
    Ok(Evaluation { frames, keypoints })
}

/// Scores ground truth against itself; every metric is zero.
pub fn evaluate_oracle(data: &SplitData) -> Result<Vec<FrameScore>> {
    (0..data.len())
        .map(|i| {
            let s = data.sample(i)?;
            Ok(score_frame(&s.category, &s.pose, &s.pose)?)
        })
        .collect()
}
