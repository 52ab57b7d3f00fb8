//! Area-weighted placement of character groups over ground rectangles.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total rejection attempts allowed per call to [`sample_positions`].
pub const REJECTION_BUDGET: usize = 10_000;

/// Axis-aligned ground rectangle with a flat ground height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnRegion {
    /// `(x, y, ground z)` in centimeters.
    pub center: [f64; 3],
    pub half_extents: [f64; 2],
}

impl SpawnRegion {
    pub fn new(center: [f64; 3], half_extents: [f64; 2]) -> Result<Self> {
        if !(half_extents[0] > 0.0 && half_extents[1] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "half extents must be positive, got {half_extents:?}"
            )));
        }
        Ok(Self {
            center,
            half_extents,
        })
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extents[0] * self.half_extents[1]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).abs() <= self.half_extents[0]
            && (p[1] - self.center[1]).abs() <= self.half_extents[1]
    }

    pub fn ground(&self) -> f64 {
        self.center[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub regions: Vec<SpawnRegion>,
}

impl Scene {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: Scene = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        for r in &scene.regions {
            SpawnRegion::new(r.center, r.half_extents)?;
        }
        Ok(scene)
    }

    /// A single 20 m × 20 m flat rectangle at the origin.
    pub fn default_floor() -> Self {
        Self {
            regions: vec![SpawnRegion {
                center: [0.0, 0.0, 0.0],
                half_extents: [1000.0, 1000.0],
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpawnConfig {
    pub neighbor_radius: f64,
    pub min_separation: f64,
    pub group_size_mean: f64,
    pub seed: u64,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self {
            neighbor_radius: 1000.0,
            min_separation: 100.0,
            group_size_mean: 5.0,
            seed: 0,
        }
    }
}

impl SpawnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_separation < self.neighbor_radius) {
            return Err(Error::InvalidArgument(
                "min_separation must be smaller than neighbor_radius".into(),
            ));
        }
        if !(self.group_size_mean >= 1.0) {
            return Err(Error::InvalidArgument("group_size_mean must be >= 1".into()));
        }
        Ok(())
    }
}

fn pick_weighted<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let mut x = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if x < w {
            return i;
        }
        x -= w;
        last = i;
    }
    last
}

/// Picks region `i` with probability `S_i / Σ S_k`.
pub fn pick_region<R: Rng + ?Sized>(regions: &[SpawnRegion], rng: &mut R) -> Result<usize> {
    if regions.is_empty() {
        return Err(Error::InvalidArgument("no spawn regions".into()));
    }
    Ok(pick_weighted(regions.iter().map(SpawnRegion::area), rng))
}

/// Indices of all regions whose centers lie within `radius` of region `i`
/// (boundary inclusive, `i` included).
pub fn select_neighbors(regions: &[SpawnRegion], i: usize, radius: f64) -> Vec<usize> {
    let c = regions[i].center;
    regions
        .iter()
        .enumerate()
        .filter(|(t, r)| {
            *t == i || {
                let d = [r.center[0] - c[0], r.center[1] - c[1], r.center[2] - c[2]];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() <= radius
            }
        })
        .map(|(t, _)| t)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPosition {
    pub position: [f64; 3],
    /// Region the position was drawn from; its ground height is used.
    pub region: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub positions: Vec<SampledPosition>,
    /// The rejection budget ran out before `n` positions were found.
    pub saturated: bool,
}

/// Rejection-samples up to `n` positions uniformly over the union of the
/// selected rectangles with pairwise horizontal distance `>= min_sep`.
pub fn sample_positions<R: Rng + ?Sized>(
    regions: &[SpawnRegion],
    selected: &[usize],
    n: usize,
    min_sep: f64,
    rng: &mut R,
) -> Result<SampleOutcome> {
    if selected.is_empty() {
        return Err(Error::InvalidArgument("no selected regions".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let chosen: Vec<&SpawnRegion> = selected.iter().map(|&i| &regions[i]).collect();
    let mut positions: Vec<SampledPosition> = Vec::with_capacity(n);
    let mut attempts = 0;
    while positions.len() < n && attempts < REJECTION_BUDGET {
        attempts += 1;
        let k = pick_weighted(chosen.iter().map(|r| r.area()), rng);
        let r = chosen[k];
        let x = r.center[0] + (rng.random::<f64>() * 2.0 - 1.0) * r.half_extents[0];
        let y = r.center[1] + (rng.random::<f64>() * 2.0 - 1.0) * r.half_extents[1];
        // Thin overlaps so the density is uniform over the union.
        let cover = chosen.iter().filter(|c| c.contains([x, y])).count().max(1);
        if cover > 1 && rng.random::<f64>() * cover as f64 >= 1.0 {
            continue;
        }
        let clear = positions.iter().all(|p| {
            (p.position[0] - x).hypot(p.position[1] - y) >= min_sep
        });
        if clear {
            positions.push(SampledPosition {
                position: [x, y, r.ground()],
                region: selected[k],
            });
        }
    }
    Ok(SampleOutcome {
        saturated: positions.len() < n,
        positions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub position: [f64; 3],
    /// Vertical offset that brings the character's lowest point to the ground.
    pub z_offset: f64,
    pub region: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlacement {
    pub anchor_region: usize,
    pub neighbors: Vec<usize>,
    pub requested: usize,
    pub placements: Vec<Placement>,
    pub warning: Option<String>,
}

/// Poisson(λ) group size, clamped to at least one character.
pub fn draw_group_size<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    let poisson = Poisson::new(mean).expect("group mean is positive");
    (poisson.sample(rng) as usize).max(1)
}

/// Places one group. `lowest_points` gives each character's lowest vertex
/// height in its local frame; it is cycled if shorter than the group.
pub fn place_characters<R: Rng + ?Sized>(
    regions: &[SpawnRegion],
    config: &SpawnConfig,
    lowest_points: &[f64],
    rng: &mut R,
) -> Result<GroupPlacement> {
    config.validate()?;
    if lowest_points.is_empty() {
        return Err(Error::InvalidArgument("no character heights supplied".into()));
    }
    let anchor = pick_region(regions, rng)?;
    let neighbors = select_neighbors(regions, anchor, config.neighbor_radius);
    let requested = draw_group_size(config.group_size_mean, rng);
    let outcome = sample_positions(regions, &neighbors, requested, config.min_separation, rng)?;
    let warning = outcome.saturated.then(|| {
        format!(
            "spawn region saturated: placed {} of {} characters",
            outcome.positions.len(),
            requested
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let placements = outcome
        .positions
        .into_iter()
        .enumerate()
        .map(|(k, p)| Placement {
            z_offset: p.position[2] - lowest_points[k % lowest_points.len()],
            position: p.position,
            region: p.region,
        })
        .collect();
    Ok(GroupPlacement {
        anchor_region: anchor,
        neighbors,
        requested,
        placements,
        warning,
    })
}
