//! Ground-truth heatmap rendering and argmax decoding.

use crate::pose::{HeatmapStack, Keypoint, Keypoints2D};

/// Channels whose peak falls below this value decode as invisible.
pub const VISIBILITY_THRESHOLD: f32 = 0.1;

/// Renders one unnormalized Gaussian (peak 1) per visible keypoint.
///
/// Keypoints are given in image pixels and rescaled to the heatmap grid;
/// cell `(i, j)` is evaluated at its center `(j + 0.5, i + 0.5)`.
pub fn render_heatmaps(
    kps: &Keypoints2D,
    image_size: u32,
    heatmap_size: usize,
    sigma: f64,
) -> HeatmapStack {
    let mut stack = HeatmapStack::zeros(heatmap_size);
    let scale = heatmap_size as f64 / f64::from(image_size);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (c, kp) in kps.points.iter().enumerate() {
        if !kp.visible {
            continue;
        }
        let (cu, cv) = (kp.u * scale, kp.v * scale);
        let ch = stack.channel_mut(c);
        for i in 0..heatmap_size {
            let dy = i as f64 + 0.5 - cv;
            let row = &mut ch[i * heatmap_size..(i + 1) * heatmap_size];
            for (j, cell) in row.iter_mut().enumerate() {
                let dx = j as f64 + 0.5 - cu;
                *cell = (-(dx * dx + dy * dy) * inv).exp() as f32;
            }
        }
    }
    stack
}

/// Argmax decoding; ties resolve to the lowest linear index.
pub fn decode_heatmaps(h: &HeatmapStack, image_size: u32) -> Keypoints2D {
    let size = h.size;
    let scale = f64::from(image_size) / size as f64;
    let points = (0..HeatmapStack::CHANNELS)
        .map(|c| {
            let ch = h.channel(c);
            let mut best = 0;
            for (idx, v) in ch.iter().enumerate() {
                if *v > ch[best] {
                    best = idx;
                }
            }
            let (i, j) = (best / size, best % size);
            Keypoint {
                u: (j as f64 + 0.5) * scale,
                v: (i as f64 + 0.5) * scale,
                visible: ch[best] > VISIBILITY_THRESHOLD,
            }
        })
        .collect();
    Keypoints2D { points }
}
