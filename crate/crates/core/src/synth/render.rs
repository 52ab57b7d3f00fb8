//! Minimal stereo fisheye rasterizer: seeded value-noise background plus
//! anti-aliased capsules per bone and a head sphere, depth-tested.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fk::Skinned;
use super::profile::CharacterProfile;
use crate::camera::{project, project_pose, StereoKeypoints, StereoRig, View};
use crate::pose::Pose3D;
use crate::skeleton;

const MAX_DISC_RADIUS_PX: f64 = 80.0;

pub struct StereoFrame {
    pub left: RgbImage,
    pub right: RgbImage,
    /// Per-pixel flag marking body coverage, row-major per view.
    pub left_mask: Vec<bool>,
    pub right_mask: Vec<bool>,
    pub keypoints: StereoKeypoints,
}

impl StereoFrame {
    pub fn image(&self, view: View) -> &RgbImage {
        match view {
            View::Left => &self.left,
            View::Right => &self.right,
        }
    }

    pub fn mask(&self, view: View) -> &[bool] {
        match view {
            View::Left => &self.left_mask,
            View::Right => &self.right_mask,
        }
    }
}

/// Smooth random background from a coarse color lattice plus pixel noise.
pub fn background(size: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const CELLS: usize = 6;
    let lattice: Vec<[f64; 3]> = (0..(CELLS + 1) * (CELLS + 1))
        .map(|_| {
            let base = rng.random_range(40.0..160.0);
            [
                base + rng.random_range(-30.0..30.0),
                base + rng.random_range(-30.0..30.0),
                base + rng.random_range(-30.0..30.0),
            ]
        })
        .collect();
    let step = f64::from(size) / CELLS as f64;
    RgbImage::from_fn(size, size, |x, y| {
        let fx = f64::from(x) / step;
        let fy = f64::from(y) / step;
        let (ix, iy) = ((fx as usize).min(CELLS - 1), (fy as usize).min(CELLS - 1));
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let at = |i: usize, j: usize| lattice[j * (CELLS + 1) + i];
        let mut px = [0u8; 3];
        let noise = rng.random_range(-8.0..8.0);
        for (c, out) in px.iter_mut().enumerate() {
            let top = at(ix, iy)[c] * (1.0 - tx) + at(ix + 1, iy)[c] * tx;
            let bot = at(ix, iy + 1)[c] * (1.0 - tx) + at(ix + 1, iy + 1)[c] * tx;
            *out = (top * (1.0 - ty) + bot * ty + noise).clamp(0.0, 255.0) as u8;
        }
        image::Rgb(px)
    })
}

struct Canvas<'a> {
    img: &'a mut RgbImage,
    depth: Vec<f64>,
    mask: Vec<bool>,
    size: i64,
}

impl Canvas<'_> {
    fn stamp(&mut self, u: f64, v: f64, radius: f64, depth: f64, color: [u8; 3], shade: f64) {
        let r = radius.min(MAX_DISC_RADIUS_PX).max(0.6);
        let x0 = ((u - r - 1.0).floor() as i64).max(0);
        let x1 = ((u + r + 1.0).ceil() as i64).min(self.size - 1);
        let y0 = ((v - r - 1.0).floor() as i64).max(0);
        let y1 = ((v + r + 1.0).ceil() as i64).min(self.size - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = (x as f64 + 0.5 - u).hypot(y as f64 + 0.5 - v);
                let alpha = (r + 0.5 - d).clamp(0.0, 1.0);
                if alpha <= 0.0 {
                    continue;
                }
                let idx = (y * self.size + x) as usize;
                if depth >= self.depth[idx] {
                    continue;
                }
                // darker toward the silhouette edge
                let s = shade * (1.0 - 0.35 * (d / r).min(1.0).powi(2));
                let px = self.img.get_pixel_mut(x as u32, y as u32);
                for c in 0..3 {
                    let target = f64::from(color[c]) * s;
                    let cur = f64::from(px.0[c]);
                    px.0[c] = (cur + (target - cur) * alpha).round().clamp(0.0, 255.0) as u8;
                }
                if alpha >= 0.5 {
                    self.depth[idx] = depth;
                    self.mask[idx] = true;
                }
            }
        }
    }
}

fn render_view(
    device_pose: &Pose3D,
    rig: &StereoRig,
    view: View,
    profile: &CharacterProfile,
    background_seed: u64,
) -> (RgbImage, Vec<bool>) {
    let size = rig.intrinsics.image_size;
    let mut img = background(size, background_seed);
    let n = (size * size) as usize;
    let mut canvas = Canvas {
        img: &mut img,
        depth: vec![f64::INFINITY; n],
        mask: vec![false; n],
        size: i64::from(size),
    };
    let intr = rig.intrinsics;
    let limit = intr.fov / 2.0 + 0.2;
    let draw_sphere = |p_dev: [f64; 3], radius_cm: f64, color: [u8; 3], canvas: &mut Canvas| {
        let pc = rig.to_camera(view, p_dev);
        let dist = (pc[0] * pc[0] + pc[1] * pc[1] + pc[2] * pc[2]).sqrt();
        if dist <= radius_cm {
            return;
        }
        let Ok(pr) = project(pc, &intr) else { return };
        if pr.theta > limit {
            return;
        }
        let ang = (radius_cm / dist).asin();
        canvas.stamp(pr.u, pr.v, intr.focal * ang, dist - radius_cm, color, 1.0);
    };

    for (b, bone) in skeleton::topology().bones.iter().enumerate() {
        let radius = profile.bone_radii[b];
        if radius <= 0.0 {
            continue;
        }
        let a = device_pose.coords[bone.parent];
        let c = device_pose.coords[bone.child];
        let len = ((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2) + (c[2] - a[2]).powi(2)).sqrt();
        let steps = ((len / (radius * 0.25).max(0.5)).ceil() as usize).clamp(2, 400);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let p = [
                a[0] + (c[0] - a[0]) * t,
                a[1] + (c[1] - a[1]) * t,
                a[2] + (c[2] - a[2]) * t,
            ];
            draw_sphere(p, radius, profile.colors[b], &mut canvas);
        }
    }
    draw_sphere(
        device_pose.coords[skeleton::HEAD],
        profile.head_radius,
        profile.colors[0],
        &mut canvas,
    );
    let mask = canvas.mask;
    (img, mask)
}

/// Renders both views of a device-frame pose.
pub fn render_stereo(
    skinned: &Skinned,
    rig: &StereoRig,
    profile: &CharacterProfile,
    background_seed: u64,
) -> StereoFrame {
    let device_pose = skinned.device_pose();
    let (left, left_mask) = render_view(&device_pose, rig, View::Left, profile, background_seed);
    let (right, right_mask) = render_view(
        &device_pose,
        rig,
        View::Right,
        profile,
        background_seed.wrapping_add(1),
    );
    StereoFrame {
        left,
        right,
        left_mask,
        right_mask,
        keypoints: project_pose(&device_pose, rig),
    }
}
