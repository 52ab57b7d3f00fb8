//! Per-frame metadata, split manifests and their on-disk JSON form.
//!
//! Camera poses are 4×4 camera-to-world matrices in row-vector convention:
//! `[x y z 1] · M = [x' y' z' 1]`, so the translation occupies the last row.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Matrix4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{project_pose, StereoKeypoints, StereoRig, View};
use crate::error::{Error, Result};
use crate::pose::Pose3D;

pub type RowMajor4 = [[f64; 4]; 4];

/// Reprojection residual above which a record is flagged.
pub const REPROJECTION_TOLERANCE_PX: f64 = 0.5;

pub fn isometry_to_rows(iso: &Isometry3<f64>) -> RowMajor4 {
    let m: Matrix4<f64> = iso.to_homogeneous().transpose();
    let mut out = [[0.0; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

pub fn transform_row(m: &RowMajor4, p: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = p[0] * m[0][c] + p[1] * m[1][c] + p[2] * m[2][c] + m[3][c];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoImages {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPoses {
    pub left: Option<RowMajor4>,
    pub right: Option<RowMajor4>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub motion_id: String,
    pub images: StereoImages,
    pub camera_poses: CameraPoses,
    pub joints_world: Option<Pose3D>,
    pub joints_device: Option<Pose3D>,
    pub keypoints: Option<StereoKeypoints>,
    pub motion_category: String,
}

impl FrameRecord {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn device_pose(&self) -> Option<&Pose3D> {
        self.joints_device.as_ref()
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub max_residual_px: f64,
    pub visibility_mismatches: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("frame {frame}: missing field {field}")]
    MissingField { frame: String, field: &'static str },
    #[error("frame {frame}: expected {expected} keypoints per view, found {found}")]
    KeypointCount {
        frame: String,
        expected: usize,
        found: usize,
    },
}

/// Reprojects `joints_device` through the rig and compares with the stored
/// keypoints. Residuals are measured over keypoints visible in both.
pub fn validate_frame(
    record: &FrameRecord,
    rig: &StereoRig,
) -> std::result::Result<ValidationReport, ValidationError> {
    let missing = |field| ValidationError::MissingField {
        frame: record.frame_id.clone(),
        field,
    };
    if record.camera_poses.left.is_none() {
        return Err(missing("camera_poses.left"));
    }
    if record.camera_poses.right.is_none() {
        return Err(missing("camera_poses.right"));
    }
    if record.joints_world.is_none() {
        return Err(missing("joints_world"));
    }
    let device = record
        .joints_device
        .as_ref()
        .ok_or_else(|| missing("joints_device"))?;
    let stored = record.keypoints.as_ref().ok_or_else(|| missing("keypoints"))?;

    let expected = project_pose(device, rig);
    let mut max_residual = 0.0f64;
    let mut mismatches = 0;
    for view in View::BOTH {
        let (e, s) = (expected.view(view), stored.view(view));
        if s.points.len() != e.points.len() {
            return Err(ValidationError::KeypointCount {
                frame: record.frame_id.clone(),
                expected: e.points.len(),
                found: s.points.len(),
            });
        }
        for (a, b) in e.points.iter().zip(&s.points) {
            if a.visible != b.visible {
                mismatches += 1;
            } else if a.visible {
                max_residual = max_residual.max((a.u - b.u).hypot(a.v - b.v));
            }
        }
    }
    Ok(ValidationReport {
        max_residual_px: max_residual,
        visibility_mismatches: mismatches,
        flagged: max_residual > REPROJECTION_TOLERANCE_PX || mismatches > 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionEntry {
    pub motion_id: String,
    pub category: String,
    pub character_id: u32,
    pub frame_count: usize,
    /// Metadata paths relative to the dataset root.
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub motions: Vec<MotionEntry>,
}

impl DatasetManifest {
    pub fn file_name(split: Split) -> String {
        format!("manifest.{}", split.name())
    }

    pub fn path(root: &Path, split: Split) -> PathBuf {
        root.join(Self::file_name(split))
    }

    pub fn frame_count(&self) -> usize {
        self.motions.iter().map(|m| m.frames.len()).sum()
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write_json(&Self::path(root, self.split), self)
    }

    /// Loads a split manifest and checks that every referenced file exists.
    pub fn load(root: &Path, split: Split) -> Result<Self> {
        let path = Self::path(root, split);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        for m in &manifest.motions {
            for f in &m.frames {
                let p = root.join(f);
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "referenced frame missing"),
                    ));
                }
            }
        }
        Ok(manifest)
    }

    pub fn motion_ids(&self) -> BTreeSet<&str> {
        self.motions.iter().map(|m| m.motion_id.as_str()).collect()
    }
}

/// True when no motion id appears in more than one manifest.
pub fn splits_disjoint(manifests: &[DatasetManifest]) -> bool {
    let mut seen = BTreeSet::new();
    manifests
        .iter()
        .flat_map(|m| m.motions.iter())
        .all(|m| seen.insert(m.motion_id.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::RigConfig;
    use crate::pose::PoseFrame;
    use nalgebra::{Translation3, UnitQuaternion};

    fn record() -> (FrameRecord, StereoRig) {
        let rig = RigConfig::default().build().unwrap();
        let mut coords = [[0.0; 3]; 16];
        for (j, c) in coords.iter_mut().enumerate() {
            *c = [j as f64 * 2.0 - 15.0, 20.0 + j as f64, -30.0 - 5.0 * j as f64];
        }
        let device = Pose3D::new(PoseFrame::Device, coords).unwrap();
        let keypoints = project_pose(&device, &rig);
        let iso = Isometry3::from_parts(
            Translation3::new(1.0, 2.0, 160.0),
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
        );
        let rows = isometry_to_rows(&iso);
        let rec = FrameRecord {
            frame_id: "m0000/frame_0".into(),
            motion_id: "m0000".into(),
            images: StereoImages {
                left: "a.png".into(),
                right: "b.png".into(),
            },
            camera_poses: CameraPoses {
                left: Some(rows),
                right: Some(rows),
            },
            joints_world: Some(Pose3D {
                frame: PoseFrame::World,
                coords,
            }),
            joints_device: Some(device),
            keypoints: Some(keypoints),
            motion_category: "jumping".into(),
        };
        (rec, rig)
    }

    #[test]
    fn consistent_record_passes() {
        let (rec, rig) = record();
        let rep = validate_frame(&rec, &rig).unwrap();
        assert!(rep.max_residual_px < 1e-6);
        assert!(!rep.flagged);
    }

    #[test]
    fn perturbed_keypoint_is_flagged() {
        let (mut rec, rig) = record();
        let kp = rec.keypoints.as_mut().unwrap();
        let idx = kp.left.points.iter().position(|k| k.visible).unwrap();
        kp.left.points[idx].u += 3.0;
        let rep = validate_frame(&rec, &rig).unwrap();
        assert!((rep.max_residual_px - 3.0).abs() < 1e-9);
        assert!(rep.flagged);
    }

    #[test]
    fn missing_right_camera_is_structured_failure() {
        let (mut rec, rig) = record();
        rec.camera_poses.right = None;
        assert_eq!(
            validate_frame(&rec, &rig),
            Err(ValidationError::MissingField {
                frame: "m0000/frame_0".into(),
                field: "camera_poses.right"
            })
        );
    }

    #[test]
    fn row_convention_matches_isometry() {
        let iso = Isometry3::from_parts(
            Translation3::new(4.0, -2.0, 7.0),
            UnitQuaternion::from_euler_angles(0.4, -0.2, 1.3),
        );
        let rows = isometry_to_rows(&iso);
        let p = [1.5, -3.0, 0.25];
        let a = transform_row(&rows, p);
        let b = iso.transform_point(&nalgebra::Point3::from(p));
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
        assert_eq!(rows[3][..3], [4.0, -2.0, 7.0]);
    }

    #[test]
    fn json_roundtrip() {
        let (rec, _) = record();
        let text = serde_json::to_string(&rec).unwrap();
        let back: FrameRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
    }
}
