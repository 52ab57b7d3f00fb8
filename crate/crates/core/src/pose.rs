use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{self, NUM_HEATMAP_JOINTS, NUM_JOINTS};

/// Reference frame a [`Pose3D`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseFrame {
    World,
    /// Origin at the midpoint between the two cameras, axes fixed to the glasses.
    Device,
    /// Origin at the midpoint of the two thigh joints, device-frame axes.
    Pelvis,
}

/// 16 joint positions in centimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub frame: PoseFrame,
    pub coords: [[f64; 3]; NUM_JOINTS],
}

impl Pose3D {
    pub fn new(frame: PoseFrame, coords: [[f64; 3]; NUM_JOINTS]) -> Result<Self> {
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite joint coordinate".into()));
        }
        Ok(Self { frame, coords })
    }

    pub fn from_flat(frame: PoseFrame, flat: &[f64]) -> Result<Self> {
        if flat.len() != NUM_JOINTS * 3 {
            return Err(Error::Shape {
                expected: vec![NUM_JOINTS, 3],
                actual: vec![flat.len()],
            });
        }
        let mut coords = [[0.0; 3]; NUM_JOINTS];
        for (j, c) in coords.iter_mut().enumerate() {
            c.copy_from_slice(&flat[j * 3..j * 3 + 3]);
        }
        Self::new(frame, coords)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.coords.iter().flatten().copied().collect()
    }

    pub fn joint(&self, j: usize) -> [f64; 3] {
        self.coords[j]
    }

    /// Child-minus-parent vectors for every bone of the topology.
    pub fn bone_vectors(&self) -> Vec<[f64; 3]> {
        skeleton::topology()
            .bones
            .iter()
            .map(|b| sub(self.coords[b.child], self.coords[b.parent]))
            .collect()
    }

    pub fn bone_lengths(&self) -> Vec<f64> {
        self.bone_vectors().iter().map(|v| norm(*v)).collect()
    }

    pub fn pelvis(&self) -> [f64; 3] {
        let l = self.coords[skeleton::LEFT_THIGH];
        let r = self.coords[skeleton::RIGHT_THIGH];
        [(l[0] + r[0]) / 2.0, (l[1] + r[1]) / 2.0, (l[2] + r[2]) / 2.0]
    }

    /// Re-express a device-frame pose relative to its pelvis.
    pub fn pelvis_relative(&self) -> Pose3D {
        let p = self.pelvis();
        let mut coords = self.coords;
        for c in coords.iter_mut() {
            *c = sub(*c, p);
        }
        Pose3D {
            frame: PoseFrame::Pelvis,
            coords,
        }
    }

    pub fn translated(&self, t: [f64; 3]) -> Pose3D {
        let mut coords = self.coords;
        for c in coords.iter_mut() {
            *c = [c[0] + t[0], c[1] + t[1], c[2] + t[2]];
        }
        Pose3D {
            frame: self.frame,
            coords,
        }
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

/// Pixel keypoints of the 15 heatmap joints for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoints2D {
    pub points: Vec<Keypoint>,
}

impl Keypoints2D {
    pub fn new(points: Vec<Keypoint>) -> Result<Self> {
        if points.len() != NUM_HEATMAP_JOINTS {
            return Err(Error::Shape {
                expected: vec![NUM_HEATMAP_JOINTS],
                actual: vec![points.len()],
            });
        }
        Ok(Self { points })
    }

    pub fn visible_count(&self) -> usize {
        self.points.iter().filter(|k| k.visible).count()
    }

    /// Visible keypoints must lie within `[0, size]²`.
    pub fn check_bounds(&self, image_size: u32) -> bool {
        let s = f64::from(image_size);
        self.points
            .iter()
            .filter(|k| k.visible)
            .all(|k| (0.0..=s).contains(&k.u) && (0.0..=s).contains(&k.v))
    }
}

/// Per-joint heatmaps, channel-major `(channels, size, size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    pub size: usize,
    pub data: Vec<f32>,
}

impl HeatmapStack {
    pub const CHANNELS: usize = NUM_HEATMAP_JOINTS;
    pub const SIZE: usize = 64;

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; Self::CHANNELS * size * size],
        }
    }

    pub fn from_vec(size: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != Self::CHANNELS * size * size {
            return Err(Error::Shape {
                expected: vec![Self::CHANNELS, size, size],
                actual: vec![data.len()],
            });
        }
        Ok(Self { size, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        [Self::CHANNELS, self.size, self.size]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.size * self.size;
        &mut self.data[c * n..(c + 1) * n]
    }
}
