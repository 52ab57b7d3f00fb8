//! Equidistant fisheye cameras mounted on a stereo eyeglass rig.
//!
//! Camera frames are right-handed with `+z` along the optical axis, `+x`
//! toward increasing `u` and `+y` toward increasing `v`. Pixel coordinates
//! are continuous: pixel `(i, j)` covers `[j, j+1) × [i, i+1)` and the image
//! center sits at `(size/2, size/2)`.
//!
//! The device frame has its origin midway between the two camera centers,
//! `+x` toward the wearer's right, `+y` forward and `+z` up.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Keypoint, Keypoints2D, Pose3D};
use crate::skeleton;

/// Rig parameters as stored in a rig config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub baseline_cm: f64,
    pub fov_deg: f64,
    pub image_size: u32,
    pub heatmap_size: usize,
    /// Gaussian sigma in heatmap pixels.
    pub sigma: f64,
    /// Downward pitch of both cameras relative to the glasses.
    pub pitch_deg: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            baseline_cm: 12.0,
            fov_deg: 170.0,
            image_size: 256,
            heatmap_size: 64,
            sigma: 2.0,
            pitch_deg: 30.0,
        }
    }
}

impl RigConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn build(&self) -> Result<StereoRig> {
        let intr = FisheyeIntrinsics::new(self.image_size, self.fov_deg.to_radians())?;
        StereoRig::new(self.baseline_cm, self.pitch_deg.to_radians(), intr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisheyeIntrinsics {
    pub image_size: u32,
    pub fov: f64,
    /// Pixels per radian of incidence angle.
    pub focal: f64,
}

impl FisheyeIntrinsics {
    /// The focal length maps `fov / 2` onto the inscribed image circle.
    pub fn new(image_size: u32, fov: f64) -> Result<Self> {
        if !(fov > 0.0 && fov < PI) {
            return Err(Error::InvalidArgument(format!(
                "field of view must lie in (0, pi), got {fov}"
            )));
        }
        if image_size == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        let radius = f64::from(image_size) / 2.0;
        Ok(Self {
            image_size,
            fov,
            focal: radius / (fov / 2.0),
        })
    }

    pub fn center(&self) -> f64 {
        f64::from(self.image_size) / 2.0
    }

    pub fn radius(&self) -> f64 {
        self.focal * self.fov / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub theta: f64,
    pub visible: bool,
}

/// Equidistant projection `r = f·θ` of a camera-frame point.
pub fn project(point_cam: [f64; 3], intr: &FisheyeIntrinsics) -> Result<Projection> {
    let [x, y, z] = point_cam;
    let rho = x.hypot(y);
    if rho == 0.0 && z == 0.0 {
        return Err(Error::Domain);
    }
    let theta = rho.atan2(z);
    let r = intr.focal * theta;
    let c = intr.center();
    let (du, dv) = if rho > 0.0 {
        (r * x / rho, r * y / rho)
    } else {
        (0.0, 0.0)
    };
    Ok(Projection {
        u: c + du,
        v: c + dv,
        theta,
        visible: theta <= intr.fov / 2.0,
    })
}

/// Inverse of [`project`]: unit viewing ray for a pixel.
pub fn unproject(u: f64, v: f64, intr: &FisheyeIntrinsics) -> [f64; 3] {
    let c = intr.center();
    let (du, dv) = (u - c, v - c);
    let r = du.hypot(dv);
    let theta = r / intr.focal;
    if r == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    let s = theta.sin();
    [s * du / r, s * dv / r, theta.cos()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoRig {
    pub baseline: f64,
    pub pitch: f64,
    pub intrinsics: FisheyeIntrinsics,
    /// Camera-to-device transforms.
    pub left: Isometry3<f64>,
    pub right: Isometry3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Left,
    Right,
}

impl View {
    pub const BOTH: [View; 2] = [View::Left, View::Right];

    pub fn name(self) -> &'static str {
        match self {
            View::Left => "left",
            View::Right => "right",
        }
    }
}

impl StereoRig {
    pub fn new(baseline: f64, pitch: f64, intrinsics: FisheyeIntrinsics) -> Result<Self> {
        if !(baseline > 0.0 && baseline.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "baseline must be positive, got {baseline}"
            )));
        }
        let (s, c) = pitch.sin_cos();
        let x = Vector3::new(1.0, 0.0, 0.0);
        let y = Vector3::new(0.0, -s, -c);
        let z = Vector3::new(0.0, c, -s);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let half = baseline / 2.0;
        Ok(Self {
            baseline,
            pitch,
            intrinsics,
            left: Isometry3::from_parts(Translation3::new(-half, 0.0, 0.0), q),
            right: Isometry3::from_parts(Translation3::new(half, 0.0, 0.0), q),
        })
    }

    pub fn camera_to_device(&self, view: View) -> &Isometry3<f64> {
        match view {
            View::Left => &self.left,
            View::Right => &self.right,
        }
    }

    pub fn to_camera(&self, view: View, p_device: [f64; 3]) -> [f64; 3] {
        let p = self
            .camera_to_device(view)
            .inverse_transform_point(&Point3::from(p_device));
        [p.x, p.y, p.z]
    }

    pub fn project_device(&self, view: View, p_device: [f64; 3]) -> Result<Projection> {
        project(self.to_camera(view, p_device), &self.intrinsics)
    }

    pub fn camera_center(&self, view: View) -> [f64; 3] {
        let t = self.camera_to_device(view).translation.vector;
        [t.x, t.y, t.z]
    }
}

/// Keypoints of both views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoKeypoints {
    pub left: Keypoints2D,
    pub right: Keypoints2D,
}

impl StereoKeypoints {
    pub fn view(&self, view: View) -> &Keypoints2D {
        match view {
            View::Left => &self.left,
            View::Right => &self.right,
        }
    }
}

/// Projects the heatmap joints of a device-frame pose into both views.
/// Joints at a camera center come back invisible at `(0, 0)`.
pub fn project_pose(pose: &Pose3D, rig: &StereoRig) -> StereoKeypoints {
    let subset = &skeleton::topology().heatmap_subset;
    let view_kps = |view: View| {
        let points = subset
            .iter()
            .map(|&j| match rig.project_device(view, pose.coords[j]) {
                Ok(p) => Keypoint {
                    u: p.u,
                    v: p.v,
                    visible: p.visible,
                },
                Err(_) => Keypoint {
                    u: 0.0,
                    v: 0.0,
                    visible: false,
                },
            })
            .collect();
        Keypoints2D { points }
    };
    StereoKeypoints {
        left: view_kps(View::Left),
        right: view_kps(View::Right),
    }
}

/// Rotation about the camera's optical axis, used by equivariance checks.
pub fn roll_about_axis(point_cam: [f64; 3], phi: f64) -> [f64; 3] {
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), phi);
    let p = r * Vector3::from(point_cam);
    [p.x, p.y, p.z]
}
