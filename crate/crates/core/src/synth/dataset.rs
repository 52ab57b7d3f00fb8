//! Writes synthetic stereo datasets to disk.
//!
//! Layout: `<root>/<split>/<motion_id>/frame_<k>.{left,right}.png`,
//! `frame_<k>.meta` (JSON [`FrameRecord`]), one `manifest.<split>` per
//! split and a `dataset.lock` recording the seed and config hash.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::motion::{category_index, generate_motion, CATEGORIES};
use super::profile::CharacterProfile;
use super::render::render_stereo;
use crate::camera::{RigConfig, StereoRig, View};
use crate::error::{Error, Result};
use crate::hash::{config_hash, mix_seed};
use crate::record::{
    isometry_to_rows, write_json, CameraPoses, DatasetManifest, FrameRecord, MotionEntry, Split,
    StereoImages,
};
use crate::spawner::{place_characters, Scene, SpawnConfig};

pub const LOCK_FILE: &str = "dataset.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub motions: usize,
    /// Empty means every category.
    pub categories: Vec<String>,
    pub split_ratios: [f64; 3],
    pub duration_s: f64,
    /// Keep every `frame_stride`-th frame of each clip.
    pub frame_stride: usize,
    pub characters: u32,
    pub seed: u64,
    pub rig: RigConfig,
    pub spawn: SpawnConfig,
    pub scene: Scene,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            motions: 30,
            categories: Vec::new(),
            split_ratios: [0.8, 0.1, 0.1],
            duration_s: 2.0,
            frame_stride: 5,
            characters: 17,
            seed: 0,
            rig: RigConfig::default(),
            spawn: SpawnConfig::default(),
            scene: Scene::default_floor(),
        }
    }
}

impl GenConfig {
    pub fn category_list(&self) -> Result<Vec<String>> {
        if self.categories.is_empty() {
            return Ok(CATEGORIES.iter().map(|c| c.to_string()).collect());
        }
        for c in &self.categories {
            category_index(c)?;
        }
        Ok(self.categories.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split_ratios.iter().sum();
        if self.split_ratios.iter().any(|r| *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be non-negative and sum to 1, got {:?}",
                self.split_ratios
            )));
        }
        if self.motions == 0 {
            return Err(Error::InvalidArgument("at least one motion required".into()));
        }
        if self.frame_stride == 0 || self.characters == 0 {
            return Err(Error::InvalidArgument("frame_stride and characters must be positive".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::InvalidArgument("duration must be positive".into()));
        }
        if self.scene.regions.is_empty() {
            return Err(Error::InvalidArgument("scene has no spawn regions".into()));
        }
        self.spawn.validate()?;
        self.category_list().map(|_| ())
    }
}

/// Motion-level split sizes `(train, val, test)`.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let train = ((n as f64) * ratios[0]).round() as usize;
    let val = (((n as f64) * ratios[1]).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    [train, val, n - train - val]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLock {
    pub seed: u64,
    pub config_hash: String,
    pub generator: String,
}

#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub root: PathBuf,
    pub manifests: Vec<DatasetManifest>,
    pub lock: DatasetLock,
}

impl DatasetSummary {
    pub fn frames(&self) -> usize {
        self.manifests.iter().map(DatasetManifest::frame_count).sum()
    }

    pub fn motions(&self) -> usize {
        self.manifests.iter().map(|m| m.motions.len()).sum()
    }
}

struct PlannedMotion {
    motion_id: String,
    category: String,
    character: u32,
    start: [f64; 3],
    yaw: f64,
}

fn plan_motions(config: &GenConfig, profiles: &[CharacterProfile], rng: &mut ChaCha8Rng) -> Result<Vec<PlannedMotion>> {
    let cats = config.category_list()?;
    let mut plans = Vec::with_capacity(config.motions);
    let mut queue: Vec<([f64; 3], f64)> = Vec::new();
    for k in 0..config.motions {
        let character = rng.random_range(0..config.characters);
        if queue.is_empty() {
            let lowest: Vec<f64> = profiles.iter().map(CharacterProfile::lowest_point).collect();
            let group = place_characters(&config.scene.regions, &config.spawn, &lowest, rng)?;
            for p in group.placements.iter().rev() {
                queue.push((p.position, rng.random_range(0.0..std::f64::consts::TAU)));
            }
        }
        let (pos, yaw) = queue.pop().expect("groups contain at least one placement");
        let lowest = profiles[character as usize].lowest_point();
        plans.push(PlannedMotion {
            motion_id: format!("m{k:05}"),
            category: cats[k % cats.len()].clone(),
            character,
            start: [pos[0], pos[1], pos[2] - lowest],
            yaw,
        });
    }
    Ok(plans)
}

fn write_png(path: &Path, img: &image::RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })
}

fn write_motion(
    root: &Path,
    split: Split,
    plan: &PlannedMotion,
    config: &GenConfig,
    rig: &StereoRig,
    profile: &CharacterProfile,
    motion_seed: u64,
) -> Result<MotionEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(motion_seed);
    let mut clip = generate_motion(&plan.category, config.duration_s, profile, &mut rng)?;
    clip.place_at(plan.start, plan.yaw);
    let rel_dir = format!("{}/{}", split.name(), plan.motion_id);
    let dir = root.join(&rel_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut frames = Vec::new();
    for f in (0..clip.frame_count).step_by(config.frame_stride) {
        let skinned = clip.skin(f, profile)?;
        let frame = render_stereo(&skinned, rig, profile, mix_seed(motion_seed, f as u64));
        let stem = format!("frame_{f}");
        let images = StereoImages {
            left: format!("{rel_dir}/{stem}.left.png"),
            right: format!("{rel_dir}/{stem}.right.png"),
        };
        write_png(&root.join(&images.left), frame.image(View::Left))?;
        write_png(&root.join(&images.right), frame.image(View::Right))?;
        let cam = |v: View| isometry_to_rows(&(skinned.device * rig.camera_to_device(v)));
        let record = FrameRecord {
            frame_id: format!("{}/{stem}", plan.motion_id),
            motion_id: plan.motion_id.clone(),
            images,
            camera_poses: CameraPoses {
                left: Some(cam(View::Left)),
                right: Some(cam(View::Right)),
            },
            joints_world: Some(skinned.world_pose()),
            joints_device: Some(skinned.device_pose()),
            keypoints: Some(frame.keypoints),
            motion_category: plan.category.clone(),
        };
        let meta = format!("{rel_dir}/{stem}.meta");
        record.save(&root.join(&meta))?;
        frames.push(meta);
    }
    Ok(MotionEntry {
        motion_id: plan.motion_id.clone(),
        category: plan.category.clone(),
        character_id: plan.character,
        frame_count: frames.len(),
        frames,
    })
}

/// Generates, renders and writes a dataset with motion-level splits.
pub fn build_dataset(config: &GenConfig, out_dir: &Path) -> Result<DatasetSummary> {
    config.validate()?;
    let rig = config.rig.build()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let profiles: Vec<CharacterProfile> = (0..config.characters)
        .map(|id| CharacterProfile::sample(id, &mut rng))
        .collect();
    let plans = plan_motions(config, &profiles, &mut rng)?;

    let mut order: Vec<usize> = (0..plans.len()).collect();
    order.shuffle(&mut rng);
    let sizes = split_sizes(plans.len(), config.split_ratios);
    let mut assignment = vec![Split::Train; plans.len()];
    let mut cursor = 0;
    for (split, n) in Split::ALL.into_iter().zip(sizes) {
        for &k in &order[cursor..cursor + n] {
            assignment[k] = split;
        }
        cursor += n;
    }

    let mut manifests: Vec<DatasetManifest> = Split::ALL
        .into_iter()
        .map(|split| DatasetManifest {
            split,
            motions: Vec::new(),
        })
        .collect();
    for (k, plan) in plans.iter().enumerate() {
        let split = assignment[k];
        let entry = write_motion(
            out_dir,
            split,
            plan,
            config,
            &rig,
            &profiles[plan.character as usize],
            mix_seed(config.seed, k as u64 + 1),
        )?;
        let slot = Split::ALL.iter().position(|s| *s == split).unwrap();
        manifests[slot].motions.push(entry);
    }
    for m in &manifests {
        m.save(out_dir)?;
    }
    let lock = DatasetLock {
        seed: config.seed,
        config_hash: config_hash(config),
        generator: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
    };
    write_json(&out_dir.join(LOCK_FILE), &lock)?;
    Ok(DatasetSummary {
        root: out_dir.to_path_buf(),
        manifests,
        lock,
    })
}

pub fn read_lock(root: &Path) -> Result<DatasetLock> {
    let path = root.join(LOCK_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_follow_ratios() {
        assert_eq!(split_sizes(100, [0.8, 0.1, 0.1]), [80, 10, 10]);
        assert_eq!(split_sizes(64, [1.0, 0.0, 0.0]), [64, 0, 0]);
        assert_eq!(split_sizes(3, [0.5, 0.5, 0.0]), [2, 1, 0]);
        for n in 0..50 {
            let s = split_sizes(n, [0.7, 0.2, 0.1]);
            assert_eq!(s.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn bad_ratios_rejected() {
        let c = GenConfig {
            split_ratios: [0.5, 0.5, 0.5],
            ..GenConfig::default()
        };
        assert!(c.validate().is_err());
        let c = GenConfig {
            categories: vec!["skydiving".into()],
            ..GenConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
