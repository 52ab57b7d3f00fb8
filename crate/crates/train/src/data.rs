//! Loading dataset splits into normalized image batches with target heatmaps.

use std::path::{Path, PathBuf};

use egopose_core::camera::StereoKeypoints;
use egopose_core::heatmap::render_heatmaps;
use egopose_core::record::{DatasetManifest, FrameRecord, Split};
use egopose_core::{Pose3D, PoseFrame};
use egopose_model::Pose2DConfig;
use egopose_nn::Tensor;
use image::imageops::FilterType;
use image::RgbImage;

use crate::config::Experiment;
use crate::{Result, TrainError};

/// One decoded frame: resized RGB views plus annotations.
#[derive(Debug, Clone)]
pub struct Sample {
    pub frame_id: String,
    pub category: String,
    pub left: RgbImage,
    pub right: Option<RgbImage>,
    /// Size of the images the keypoints were annotated on.
    pub image_size: u32,
    pub keypoints: StereoKeypoints,
    /// Device-frame joints in cm.
    pub pose: Pose3D,
}

#[derive(Debug, Clone)]
struct FrameRef {
    meta: PathBuf,
    category: String,
}

/// A (possibly subsampled) split, decoded on demand or held in memory.
#[derive(Debug)]
pub struct SplitData {
    root: PathBuf,
    split: Split,
    frames: Vec<FrameRef>,
    input_size: u32,
    stereo: bool,
    cache: Option<Vec<Sample>>,
}

impl SplitData {
    /// Opens `split` under `root`. When `limit` is below the split size,
    /// evenly spaced frames are kept so every motion stays represented.
    pub fn open(
        root: &Path,
        split: Split,
        limit: Option<usize>,
        pose2d: &Pose2DConfig,
        cache_frames: usize,
    ) -> Result<Self> {
        let manifest_path = DatasetManifest::path(root, split);
        if !manifest_path.is_file() {
            return Err(TrainError::Data(format!(
                "no {} manifest at {}",
                split.name(),
                manifest_path.display()
            )));
        }
        let manifest = DatasetManifest::load(root, split)?;
        let mut all = Vec::new();
        for m in &manifest.motions {
            for f in &m.frames {
                all.push(FrameRef {
                    meta: root.join(f),
                    category: m.category.clone(),
                });
            }
        }
        let frames = match limit {
            Some(n) if n < all.len() => (0..n).map(|i| all[i * all.len() / n].clone()).collect(),
            _ => all,
        };
        let mut data = Self {
            root: root.to_path_buf(),
            split,
            frames,
            input_size: pose2d.input_size as u32,
            stereo: pose2d.variant.views() == 2,
            cache: None,
        };
        if data.len() <= cache_frames {
            let samples = (0..data.len()).map(|i| data.load(i)).collect::<Result<Vec<_>>>()?;
            data.cache = Some(samples);
        }
        Ok(data)
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    fn load(&self, i: usize) -> Result<Sample> {
        let r = &self.frames[i];
        let record = FrameRecord::load(&r.meta)?;
        let missing = |field: &str| TrainError::Data(format!("{}: missing {field}", r.meta.display()));
        let keypoints = record.keypoints.clone().ok_or_else(|| missing("keypoints"))?;
        let pose = record.joints_device.clone().ok_or_else(|| missing("joints_device"))?;
        if pose.frame != PoseFrame::Device {
            return Err(TrainError::Data(format!("{}: joints_device is not in the device frame", r.meta.display())));
        }
        let (left, image_size) = self.read_image(&record.images.left)?;
        let right = if self.stereo {
            let (img, size) = self.read_image(&record.images.right)?;
            if size != image_size {
                return Err(TrainError::Data(format!("{}: stereo images differ in size", r.meta.display())));
            }
            Some(img)
        } else {
            None
        };
        Ok(Sample {
            frame_id: record.frame_id,
            category: r.category.clone(),
            left,
            right,
            image_size,
            keypoints,
            pose,
        })
    }

    fn read_image(&self, rel: &str) -> Result<(RgbImage, u32)> {
        let path = self.root.join(rel);
        let img = image::open(&path)
            .map_err(|e| egopose_core::Error::Image {
                path: path.clone(),
                source: e,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        if w != h {
            return Err(TrainError::Data(format!("{}: expected a square image, got {w}x{h}", path.display())));
        }
        let img = if w == self.input_size {
            img
        } else {
            image::imageops::resize(&img, self.input_size, self.input_size, FilterType::Triangle)
        };
        Ok((img, w))
    }

    pub fn sample(&self, i: usize) -> Result<Sample> {
        match &self.cache {
            Some(c) => Ok(c[i].clone()),
            None => self.load(i),
        }
    }

    /// Assembles the frames at `indices` into network-ready tensors.
    pub fn batch(&self, indices: &[usize], pose2d: &Pose2DConfig, sigma: f64) -> Result<Batch> {
        let samples = indices.iter().map(|&i| self.sample(i)).collect::<Result<Vec<_>>>()?;
        Ok(Batch::from_samples(samples, pose2d, sigma))
    }
}

/// Network inputs and targets for a group of frames.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[n, 3, s, s]` normalized images.
    pub left: Tensor<f32>,
    pub right: Option<Tensor<f32>>,
    /// `[n, 15, h, h]` ground-truth heatmaps.
    pub heatmaps_left: Tensor<f32>,
    pub heatmaps_right: Option<Tensor<f32>>,
    /// `[n, 48]` device-frame joints in cm.
    pub pose: Tensor<f32>,
    pub samples: Vec<Sample>,
}

impl Batch {
    pub fn from_samples(samples: Vec<Sample>, pose2d: &Pose2DConfig, sigma: f64) -> Self {
        let n = samples.len();
        let s = pose2d.input_size;
        let hm = pose2d.heatmap_size();
        let image = |img: &RgbImage| pose2d.normalize(img.as_raw());
        let heatmaps = |kps, size| render_heatmaps(kps, size, hm, sigma).data;
        let stack = |parts: Vec<Vec<f32>>, shape: Vec<usize>| Tensor::new(shape, parts.concat());

        let left = stack(samples.iter().map(|x| image(&x.left)).collect(), vec![n, 3, s, s]);
        let right = samples[0].right.is_some().then(|| {
            stack(
                samples.iter().map(|x| image(x.right.as_ref().expect("stereo batch"))).collect(),
                vec![n, 3, s, s],
            )
        });
        let hm_shape = vec![n, egopose_core::skeleton::NUM_HEATMAP_JOINTS, hm, hm];
        let heatmaps_left = stack(
            samples.iter().map(|x| heatmaps(&x.keypoints.left, x.image_size)).collect(),
            hm_shape.clone(),
        );
        let heatmaps_right = right.is_some().then(|| {
            stack(
                samples.iter().map(|x| heatmaps(&x.keypoints.right, x.image_size)).collect(),
                hm_shape,
            )
        });
        let pose = Tensor::new(
            vec![n, 48],
            samples.iter().flat_map(|x| x.pose.flat()).map(|v| v as f32).collect(),
        );
        Self {
            left,
            right,
            heatmaps_left,
            heatmaps_right,
            pose,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The splits one run reads.
#[derive(Debug)]
pub struct Datasets {
    pub train: SplitData,
    pub val: Option<SplitData>,
    pub eval: SplitData,
}

impl Datasets {
    pub fn open(root: &Path, exp: &Experiment) -> Result<Self> {
        let t = &exp.train;
        let p = &exp.model.pose2d;
        let train = SplitData::open(root, t.train_split, t.max_train_frames, p, t.cache_frames)?;
        if train.is_empty() {
            return Err(TrainError::Data(format!("{} split under {} is empty", t.train_split.name(), root.display())));
        }
        let val = match t.max_val_frames {
            Some(0) => None,
            limit if DatasetManifest::path(root, Split::Val).is_file() => {
                Some(SplitData::open(root, Split::Val, limit, p, t.cache_frames)?).filter(|v| !v.is_empty())
            }
            _ => None,
        };
        let eval = SplitData::open(root, t.eval_split, t.max_eval_frames, p, t.cache_frames)?;
        if eval.is_empty() {
            return Err(TrainError::Data(format!("{} split under {} is empty", t.eval_split.name(), root.display())));
        }
        Ok(Self { train, val, eval })
    }
}
