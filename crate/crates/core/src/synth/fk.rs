//! Forward kinematics over the skeleton tree.
//!
//! Each bone carries a local rotation `Rz(c)·Ry(b)·Rx(a)` applied at its
//! parent joint: `F_child = F_parent · R_bone` and
//! `p_child = p_parent + F_child · rest_offset`. Angles are given in
//! left-side semantics; right-side bones are mirrored across the sagittal
//! plane, which negates their `b` and `c` angles.

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};

use super::profile::{CharacterProfile, CROWN_CM};
use crate::error::{Error, Result};
use crate::pose::{Pose3D, PoseFrame};
use crate::skeleton::{self, NUM_BONES, NUM_JOINTS};

/// Glasses position in the head frame (cm).
pub const DEVICE_OFFSET: [f64; 3] = [0.0, 10.0, 0.0];

fn rest_direction(bone: usize) -> Vector3<f64> {
    let left = match if bone >= 8 { bone - 7 } else { bone } {
        0 => Vector3::new(0.0, 0.0, 1.0),
        1 => Vector3::new(-1.0, 0.0, -0.15),
        2 | 3 => Vector3::new(-1.0, 0.0, 0.0),
        4 => Vector3::new(-0.2, 0.0, -1.0),
        5 | 6 => Vector3::new(0.0, 0.0, -1.0),
        _ => Vector3::new(0.0, 0.9, -0.45),
    }
    .normalize();
    if bone >= 8 {
        Vector3::new(-left.x, left.y, left.z)
    } else {
        left
    }
}

pub fn is_right_bone(bone: usize) -> bool {
    bone >= 8
}

/// Local rotation of a bone from left-semantic Euler angles (radians).
pub fn bone_rotation(bone: usize, angles: [f64; 3]) -> Rotation3<f64> {
    let [a, mut b, mut c] = angles;
    if is_right_bone(bone) {
        b = -b;
        c = -c;
    }
    Rotation3::from_axis_angle(&Vector3::z_axis(), c)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), b)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), a)
}

/// Root orientation from heading, lean and sideways roll.
pub fn root_rotation(yaw: f64, pitch: f64, roll: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), roll)
}

/// World-space joints and the glasses transform for one frame.
#[derive(Debug, Clone)]
pub struct Skinned {
    pub joints: [[f64; 3]; NUM_JOINTS],
    pub frames: [Rotation3<f64>; NUM_JOINTS],
    /// Device-to-world transform.
    pub device: Isometry3<f64>,
}

pub fn solve(
    profile: &CharacterProfile,
    root_position: [f64; 3],
    root_orientation: Rotation3<f64>,
    angles: &[[f64; 3]; NUM_BONES],
) -> Skinned {
    let topo = skeleton::topology();
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    let mut frames = [Rotation3::identity(); NUM_JOINTS];
    let root = topo.root();
    joints[root] = root_position;
    frames[root] = root_orientation;
    for j in topo.topological_order() {
        let Some(parent) = topo.parent_index[j] else {
            continue;
        };
        // bones are stored in child-joint order
        let bone = j - 1;
        let frame = frames[parent] * bone_rotation(bone, angles[bone]);
        let offset = frame * (rest_direction(bone) * profile.bone_lengths[bone]);
        let p = joints[parent];
        joints[j] = [p[0] + offset.x, p[1] + offset.y, p[2] + offset.z];
        frames[j] = frame;
    }
    let head = joints[skeleton::HEAD];
    let head_frame = frames[skeleton::HEAD];
    let origin = Point3::from(head) + head_frame * Vector3::from(DEVICE_OFFSET);
    let device = Isometry3::from_parts(
        Translation3::from(origin.coords),
        UnitQuaternion::from_rotation_matrix(&head_frame),
    );
    Skinned {
        joints,
        frames,
        device,
    }
}

impl Skinned {
    pub fn world_pose(&self) -> Pose3D {
        Pose3D {
            frame: PoseFrame::World,
            coords: self.joints,
        }
    }

    pub fn device_pose(&self) -> Pose3D {
        let mut coords = [[0.0; 3]; NUM_JOINTS];
        for (c, w) in coords.iter_mut().zip(&self.joints) {
            let p = self.device.inverse_transform_point(&Point3::from(*w));
            *c = [p.x, p.y, p.z];
        }
        Pose3D {
            frame: PoseFrame::Device,
            coords,
        }
    }
}

/// Rest pose with the root at the origin and identity orientation.
pub fn rest_pose(profile: &CharacterProfile) -> Skinned {
    solve(
        profile,
        [0.0; 3],
        Rotation3::identity(),
        &[[0.0; 3]; NUM_BONES],
    )
}

pub fn rest_lowest_point(profile: &CharacterProfile) -> f64 {
    rest_pose(profile)
        .joints
        .iter()
        .map(|p| p[2])
        .fold(f64::INFINITY, f64::min)
}

pub fn standing_height(profile: &CharacterProfile) -> f64 {
    let rest = rest_pose(profile);
    rest.joints[skeleton::HEAD][2] + CROWN_CM - rest_lowest_point(profile)
}

pub fn check_frame(index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::FrameIndex { index, len });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rest_pose_layout() {
        let p = CharacterProfile::nominal(0);
        let r = rest_pose(&p);
        let j = r.joints;
        assert_eq!(j[NECK], [0.0; 3]);
        assert!((j[HEAD][2] - 20.0).abs() < 1e-12);
        // T-pose analog: forearms horizontal, left arm toward -x
        assert!((j[LEFT_HAND][2] - j[LEFT_UPPER_ARM][2]).abs() < 1e-12);
        assert!(j[LEFT_HAND][0] < j[LEFT_LOWER_ARM][0]);
        assert!(j[RIGHT_HAND][0] > j[RIGHT_LOWER_ARM][0]);
        // mirror symmetry
        for (l, r) in [(LEFT_HAND, RIGHT_HAND), (LEFT_BALL, RIGHT_BALL)] {
            assert!((j[l][0] + j[r][0]).abs() < 1e-12);
            assert!((j[l][1] - j[r][1]).abs() < 1e-12);
            assert!((j[l][2] - j[r][2]).abs() < 1e-12);
        }
    }

    #[test]
    fn one_bone_rotation_is_analytic() {
        // Thigh->calf bone (femur) of 30 cm hanging along -z; a +90° hip
        // flexion about the horizontal x axis swings it to +y.
        let mut p = CharacterProfile::nominal(0);
        p.bone_lengths[5] = 30.0;
        let mut angles = [[0.0; 3]; NUM_BONES];
        angles[5] = [FRAC_PI_2, 0.0, 0.0];
        let s = solve(&p, [0.0; 3], Rotation3::identity(), &angles);
        let d = [
            s.joints[LEFT_CALF][0] - s.joints[LEFT_THIGH][0],
            s.joints[LEFT_CALF][1] - s.joints[LEFT_THIGH][1],
            s.joints[LEFT_CALF][2] - s.joints[LEFT_THIGH][2],
        ];
        assert!(d[0].abs() < 1e-12);
        assert!((d[1] - 30.0).abs() < 1e-12);
        assert!(d[2].abs() < 1e-12);
    }

    #[test]
    fn mirrored_angles_give_mirrored_pose() {
        let p = CharacterProfile::nominal(0);
        let mut angles = [[0.0; 3]; NUM_BONES];
        for b in 1..8 {
            angles[b] = [0.3 * b as f64, -0.2, 0.15 * b as f64 - 0.5];
            angles[b + 7] = angles[b];
        }
        let s = solve(&p, [0.0; 3], Rotation3::identity(), &angles);
        for (l, r) in [(LEFT_HAND, RIGHT_HAND), (LEFT_BALL, RIGHT_BALL), (LEFT_CALF, RIGHT_CALF)] {
            assert!((s.joints[l][0] + s.joints[r][0]).abs() < 1e-9);
            assert!((s.joints[l][1] - s.joints[r][1]).abs() < 1e-9);
            assert!((s.joints[l][2] - s.joints[r][2]).abs() < 1e-9);
        }
    }

    #[test]
    fn device_sits_in_front_of_head() {
        let r = rest_pose(&CharacterProfile::nominal(0));
        let d = r.device_pose();
        let h = d.coords[HEAD];
        assert!((h[0]).abs() < 1e-12 && (h[1] + 10.0).abs() < 1e-12 && h[2].abs() < 1e-12);
    }
}
