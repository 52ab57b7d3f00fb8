//! Pelvis-relative distributions of head and left-foot positions.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{sub, Pose3D};
use crate::record::FrameRecord;
use crate::skeleton::{HEAD, LEFT_FOOT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: [f64; 3],
    /// Population variance per axis.
    pub var: [f64; 3],
}

impl AxisStats {
    pub fn of(points: &[[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("no points"));
        }
        let n = points.len() as f64;
        let mut mean = [0.0; 3];
        for p in points {
            for a in 0..3 {
                mean[a] += p[a] / n;
            }
        }
        let mut var = [0.0; 3];
        for p in points {
            for a in 0..3 {
                var[a] += (p[a] - mean[a]).powi(2) / n;
            }
        }
        Ok(Self { mean, var })
    }

    pub fn total_var(&self) -> f64 {
        self.var.iter().sum()
    }
}

/// Head and left-foot positions relative to the pelvis, in cm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeypointClouds {
    pub head: Vec<[f64; 3]>,
    pub left_foot: Vec<[f64; 3]>,
}

impl KeypointClouds {
    pub fn push(&mut self, pose: &Pose3D) {
        let pelvis = pose.pelvis();
        self.head.push(sub(pose.joint(HEAD), pelvis));
        self.left_foot.push(sub(pose.joint(LEFT_FOOT), pelvis));
    }

    /// Uses the world-frame joints (vertical axis up), falling back to device joints.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a FrameRecord>) -> Self {
        let mut c = Self::default();
        for r in records {
            if let Some(p) = r.joints_world.as_ref().or(r.joints_device.as_ref()) {
                c.push(p);
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub frames: usize,
    pub head: AxisStats,
    pub left_foot: AxisStats,
}

impl DistributionReport {
    pub fn from_clouds(clouds: &KeypointClouds) -> Result<Self> {
        if clouds.is_empty() {
            return Err(Error::Empty("no frames with 3D joints"));
        }
        Ok(Self {
            frames: clouds.len(),
            head: AxisStats::of(&clouds.head)?,
            left_foot: AxisStats::of(&clouds.left_foot)?,
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "frames: {}", self.frames);
        let _ = writeln!(
            out,
            "{:<10} {:>4} {:>10} {:>10}",
            "joint", "axis", "mean_cm", "var_cm2"
        );
        for (name, s) in [("head", &self.head), ("left_foot", &self.left_foot)] {
            for (a, axis) in ["x", "y", "z"].iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:<10} {:>4} {:>10.2} {:>10.2}",
                    name, axis, s.mean[a], s.var[a]
                );
            }
        }
        out
    }
}

const PANEL: u32 = 240;
const MARGIN: u32 = 8;

/// Three scatter panels (x-y, x-z, y-z) sharing one symmetric scale.
pub fn scatter_plot(points: &[[f64; 3]], color: [u8; 3]) -> RgbImage {
    let width = 3 * PANEL + 4 * MARGIN;
    let height = PANEL + 2 * MARGIN;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let extent = points
        .iter()
        .flatten()
        .fold(1.0f64, |m, v| m.max(v.abs()))
        * 1.05;
    let planes = [(0usize, 1usize), (0, 2), (1, 2)];
    for (k, (a, b)) in planes.iter().enumerate() {
        let x0 = MARGIN + k as u32 * (PANEL + MARGIN);
        let y0 = MARGIN;
        for t in 0..PANEL {
            img.put_pixel(x0 + t, y0 + PANEL / 2, Rgb([200, 200, 200]));
            img.put_pixel(x0 + PANEL / 2, y0 + t, Rgb([200, 200, 200]));
            for (px, py) in [(x0 + t, y0), (x0 + t, y0 + PANEL - 1), (x0, y0 + t), (x0 + PANEL - 1, y0 + t)] {
                img.put_pixel(px, py, Rgb([0, 0, 0]));
            }
        }
        let to_px = |v: f64| ((v / extent + 1.0) * 0.5 * (PANEL - 1) as f64).round() as i64;
        for p in points {
            let cx = to_px(p[*a]);
            let cy = PANEL as i64 - 1 - to_px(p[*b]);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (x, y) = (cx + dx, cy + dy);
                    if (0..PANEL as i64).contains(&x) && (0..PANEL as i64).contains(&y) {
                        img.put_pixel(x0 + x as u32, y0 + y as u32, Rgb(color));
                    }
                }
            }
        }
    }
    img
}

/// Writes `head_scatter.png` and `left_foot_scatter.png` into `dir`.
pub fn write_scatter_plots(clouds: &KeypointClouds, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, pts, color) in [
        ("head_scatter.png", &clouds.head, [40, 90, 200]),
        ("left_foot_scatter.png", &clouds.left_foot, [210, 60, 40]),
    ] {
        let path = dir.join(name);
        scatter_plot(pts, color)
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| Error::Image { path, source: e })?;
    }
    Ok(())
}
