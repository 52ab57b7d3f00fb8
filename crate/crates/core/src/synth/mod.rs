//! Procedural stand-in for the rendering pipeline: character profiles,
//! motion templates, forward kinematics, rasterization and dataset writing.

pub mod dataset;
pub mod fk;
pub mod motion;
pub mod profile;
pub mod render;

pub use dataset::{build_dataset, split_sizes, DatasetLock, DatasetSummary, GenConfig};
pub use motion::{fk_pose, generate_motion, MotionClip, CATEGORIES, FPS};
pub use profile::CharacterProfile;
pub use render::{render_stereo, StereoFrame};

use crate::camera::StereoRig;
use crate::error::Result;
use crate::record::{isometry_to_rows, CameraPoses, FrameRecord, StereoImages};

/// Renders one frame of a clip and fills the matching metadata record.
/// Image paths in the record are left for the caller to assign.
pub fn render_frame(
    clip: &MotionClip,
    frame_idx: usize,
    rig: &StereoRig,
    profile: &CharacterProfile,
    background_seed: u64,
) -> Result<(StereoFrame, FrameRecord)> {
    let skinned = clip.skin(frame_idx, profile)?;
    let frame = render_stereo(&skinned, rig, profile, background_seed);
    let cam = |v| isometry_to_rows(&(skinned.device * rig.camera_to_device(v)));
    let record = FrameRecord {
        frame_id: format!("frame_{frame_idx}"),
        motion_id: String::new(),
        images: StereoImages {
            left: String::new(),
            right: String::new(),
        },
        camera_poses: CameraPoses {
            left: Some(cam(crate::camera::View::Left)),
            right: Some(cam(crate::camera::View::Right)),
        },
        joints_world: Some(skinned.world_pose()),
        joints_device: Some(skinned.device_pose()),
        keypoints: Some(frame.keypoints.clone()),
        motion_category: clip.category.clone(),
    };
    Ok((frame, record))
}
