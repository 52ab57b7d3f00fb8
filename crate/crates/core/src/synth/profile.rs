use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::skeleton::NUM_BONES;

/// Nominal left/center bone lengths (cm) in bone order; right bones mirror
/// the left ones.
const NOMINAL_LENGTHS: [f64; 8] = [20.0, 18.0, 29.0, 25.0, 52.0, 44.0, 42.0, 15.0];

/// Capsule radii (cm) per bone, same indexing as `NOMINAL_LENGTHS`.
const NOMINAL_RADII: [f64; 8] = [0.0, 6.0, 5.0, 4.0, 11.0, 7.0, 5.5, 4.0];

/// Base limb colors. Left limbs lean warm, right limbs lean cool.
const LEFT_PALETTE: [[u8; 3]; 8] = [
    [230, 200, 170],
    [200, 60, 60],
    [230, 120, 40],
    [240, 220, 60],
    [150, 40, 150],
    [220, 60, 140],
    [250, 150, 180],
    [255, 255, 255],
];
const RIGHT_PALETTE: [[u8; 3]; 8] = [
    [230, 200, 170],
    [40, 90, 210],
    [40, 190, 200],
    [60, 220, 120],
    [40, 60, 130],
    [90, 140, 250],
    [150, 230, 250],
    [20, 20, 20],
];

pub const MIN_HEIGHT_CM: f64 = 140.0;
pub const MAX_HEIGHT_CM: f64 = 200.0;

/// Distance from the head joint to the crown, used for standing height.
pub const CROWN_CM: f64 = 10.0;

/// Parametric stand-in for a rigged human model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterProfile {
    pub id: u32,
    pub bone_lengths: [f64; NUM_BONES],
    pub bone_radii: [f64; NUM_BONES],
    pub colors: [[u8; 3]; NUM_BONES],
    pub head_radius: f64,
    pub appearance_seed: u64,
}

fn side_index(bone: usize) -> (usize, bool) {
    match bone {
        0 => (0, false),
        1..=7 => (bone, false),
        _ => (bone - 7, true),
    }
}

impl CharacterProfile {
    /// The nominal 174 cm character.
    pub fn nominal(id: u32) -> Self {
        let mut bone_lengths = [0.0; NUM_BONES];
        let mut bone_radii = [0.0; NUM_BONES];
        let mut colors = [[0; 3]; NUM_BONES];
        for b in 0..NUM_BONES {
            let (k, right) = side_index(b);
            bone_lengths[b] = NOMINAL_LENGTHS[k];
            bone_radii[b] = NOMINAL_RADII[k];
            colors[b] = if right { RIGHT_PALETTE[k] } else { LEFT_PALETTE[k] };
        }
        Self {
            id,
            bone_lengths,
            bone_radii,
            colors,
            head_radius: 10.0,
            appearance_seed: u64::from(id),
        }
    }

    /// Samples a profile whose standing height lies in `[140, 200]` cm.
    pub fn sample<R: Rng + ?Sized>(id: u32, rng: &mut R) -> Self {
        loop {
            let mut p = Self::nominal(id);
            let scale = rng.random_range(0.88..1.10);
            let mut side = [0.0; 8];
            for (k, s) in side.iter_mut().enumerate() {
                *s = NOMINAL_LENGTHS[k] * scale * rng.random_range(0.97..1.03);
            }
            let thickness = rng.random_range(0.85..1.2);
            for b in 0..NUM_BONES {
                let (k, _) = side_index(b);
                p.bone_lengths[b] = side[k];
                p.bone_radii[b] = NOMINAL_RADII[k] * thickness * scale;
                for c in 0..3 {
                    let jitter: i16 = rng.random_range(-25..=25);
                    p.colors[b][c] = (i16::from(p.colors[b][c]) + jitter).clamp(0, 255) as u8;
                }
            }
            p.head_radius = 10.0 * scale;
            p.appearance_seed = rng.random();
            let h = super::fk::standing_height(&p);
            if (MIN_HEIGHT_CM..=MAX_HEIGHT_CM).contains(&h) {
                return p;
            }
        }
    }

    pub fn standing_height(&self) -> f64 {
        super::fk::standing_height(self)
    }

    /// Rest-pose height of the lowest joint below the root.
    pub fn lowest_point(&self) -> f64 {
        super::fk::rest_lowest_point(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_profiles_are_plausible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for id in 0..200 {
            let p = CharacterProfile::sample(id, &mut rng);
            assert!(p.bone_lengths.iter().all(|l| *l > 0.0));
            let h = p.standing_height();
            assert!((MIN_HEIGHT_CM..=MAX_HEIGHT_CM).contains(&h), "height {h}");
            assert_eq!(p.bone_lengths[2], p.bone_lengths[9]);
        }
    }

    #[test]
    fn nominal_height() {
        let h = CharacterProfile::nominal(0).standing_height();
        assert!((h - 174.0).abs() < 2.0, "{h}");
    }
}
