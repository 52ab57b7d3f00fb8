//! The 16-joint egocentric skeleton.
//!
//! Joint order: the neck root and head first, then the left side and the
//! right side, each listed proximal to distal (arms before legs). Heatmaps
//! cover every joint except the head.

use std::sync::OnceLock;

use sha2::{Digest, Sha256};

pub const NUM_JOINTS: usize = 16;
pub const NUM_HEATMAP_JOINTS: usize = 15;
pub const NUM_BONES: usize = 15;

pub const NECK: usize = 0;
pub const HEAD: usize = 1;
pub const LEFT_UPPER_ARM: usize = 2;
pub const LEFT_LOWER_ARM: usize = 3;
pub const LEFT_HAND: usize = 4;
pub const LEFT_THIGH: usize = 5;
pub const LEFT_CALF: usize = 6;
pub const LEFT_FOOT: usize = 7;
pub const LEFT_BALL: usize = 8;
pub const RIGHT_UPPER_ARM: usize = 9;
pub const RIGHT_LOWER_ARM: usize = 10;
pub const RIGHT_HAND: usize = 11;
pub const RIGHT_THIGH: usize = 12;
pub const RIGHT_CALF: usize = 13;
pub const RIGHT_FOOT: usize = 14;
pub const RIGHT_BALL: usize = 15;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "neck",
    "head",
    "left_upper_arm",
    "left_lower_arm",
    "left_hand",
    "left_thigh",
    "left_calf",
    "left_foot",
    "left_ball",
    "right_upper_arm",
    "right_lower_arm",
    "right_hand",
    "right_thigh",
    "right_calf",
    "right_foot",
    "right_ball",
];

const PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(NECK),
    Some(NECK),
    Some(LEFT_UPPER_ARM),
    Some(LEFT_LOWER_ARM),
    Some(NECK),
    Some(LEFT_THIGH),
    Some(LEFT_CALF),
    Some(LEFT_FOOT),
    Some(NECK),
    Some(RIGHT_UPPER_ARM),
    Some(RIGHT_LOWER_ARM),
    Some(NECK),
    Some(RIGHT_THIGH),
    Some(RIGHT_CALF),
    Some(RIGHT_FOOT),
];

/// A directed bone from `parent` to `child`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bone {
    pub parent: usize,
    pub child: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    pub joints: Vec<&'static str>,
    pub parent_index: Vec<Option<usize>>,
    pub heatmap_subset: Vec<usize>,
    /// One bone per non-root joint, in joint order.
    pub bones: Vec<Bone>,
}

impl SkeletonTopology {
    pub fn root(&self) -> usize {
        self.parent_index
            .iter()
            .position(Option::is_none)
            .expect("topology has a root")
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order = vec![self.root()];
        let mut cursor = 0;
        while cursor < order.len() {
            let j = order[cursor];
            for (c, p) in self.parent_index.iter().enumerate() {
                if *p == Some(j) {
                    order.push(c);
                }
            }
            cursor += 1;
        }
        order
    }

    /// SHA-256 over the newline-joined joint names.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for name in &self.joints {
            h.update(name.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| *j == name)
    }
}

pub fn build_topology() -> SkeletonTopology {
    let parent_index = PARENTS.to_vec();
    let bones = parent_index
        .iter()
        .enumerate()
        .filter_map(|(child, p)| p.map(|parent| Bone { parent, child }))
        .collect();
    SkeletonTopology {
        joints: JOINT_NAMES.to_vec(),
        parent_index,
        heatmap_subset: (0..NUM_JOINTS).filter(|&j| j != HEAD).collect(),
        bones,
    }
}

/// Shared immutable topology instance.
pub fn topology() -> &'static SkeletonTopology {
    static TOPO: OnceLock<SkeletonTopology> = OnceLock::new();
    TOPO.get_or_init(build_topology)
}

/// Bone list as `(parent, child)` index pairs.
pub fn bone_pairs() -> Vec<(usize, usize)> {
    topology()
        .bones
        .iter()
        .map(|b| (b.parent, b.child))
        .collect()
}
