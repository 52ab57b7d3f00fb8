//! Procedural motion clips built from per-category sinusoid templates.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fk::{self, Skinned};
use super::profile::CharacterProfile;
use crate::error::{Error, Result};
use crate::pose::Pose3D;
use crate::skeleton::NUM_BONES;

pub const FPS: f64 = 25.0;

/// Motion categories in reporting order.
pub const CATEGORIES: [&str; 30] = [
    "jumping",
    "falling down",
    "exercising",
    "pulling",
    "singing",
    "rolling",
    "crawling",
    "laying",
    "sitting on the ground",
    "crouching - normal",
    "crouching - turning",
    "crouching - to standing",
    "crouching - forward",
    "crouching - backward",
    "crouching - sideways",
    "standing - whole body",
    "standing - upper body",
    "standing - turning",
    "standing - to crouching",
    "standing - forward",
    "standing - backward",
    "standing - sideways",
    "dancing",
    "boxing",
    "wrestling",
    "soccer",
    "baseball",
    "basketball",
    "american football",
    "golf",
];

pub fn category_index(name: &str) -> Result<usize> {
    CATEGORIES
        .iter()
        .position(|c| *c == name)
        .ok_or_else(|| Error::UnknownCategory(name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Sinusoid {
    fn at(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * t + self.phase).sin()
    }
}

/// One rotational (radians) or translational (cm) degree of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofTrack {
    pub base: f64,
    /// Added in full by the end of the clip along a smoothstep.
    pub ramp: f64,
    pub components: Vec<Sinusoid>,
    pub min: f64,
    pub max: f64,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl DofTrack {
    fn fixed(min: f64, max: f64) -> Self {
        Self {
            base: 0.0,
            ramp: 0.0,
            components: Vec::new(),
            min,
            max,
        }
    }

    fn unbounded() -> Self {
        Self::fixed(-1e12, 1e12)
    }

    pub fn value(&self, t: f64, duration: f64) -> f64 {
        let s = if duration > 0.0 { smoothstep(t / duration) } else { 0.0 };
        let v = self.base + self.ramp * s + self.components.iter().map(|c| c.at(t)).sum::<f64>();
        v.clamp(self.min, self.max)
    }

    fn freeze(&mut self) {
        self.ramp = 0.0;
        for c in &mut self.components {
            c.amplitude = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub height: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootTrack {
    /// World start position of the root joint (cm).
    pub start: [f64; 3],
    pub start_yaw: f64,
    /// Body-frame velocity: `x` toward the right, `y` forward (cm/s).
    pub velocity: [f64; 2],
    pub yaw_rate: f64,
    /// Yaw offset on top of the integrated heading.
    pub yaw: DofTrack,
    pub pitch: DofTrack,
    pub roll: DofTrack,
    /// Vertical offset of the root (cm).
    pub height: DofTrack,
    pub jump: Option<Jump>,
}

impl RootTrack {
    pub fn heading(&self, t: f64) -> f64 {
        self.start_yaw + self.yaw_rate * t
    }

    pub fn position(&self, t: f64, duration: f64) -> [f64; 3] {
        let (vx, vy) = (self.velocity[0], self.velocity[1]);
        let p0 = self.start_yaw;
        let w = self.yaw_rate;
        // integral of Rz(heading) · v over [0, t]
        let (ic, is) = if w.abs() < 1e-12 {
            (t * p0.cos(), t * p0.sin())
        } else {
            (
                ((p0 + w * t).sin() - p0.sin()) / w,
                (p0.cos() - (p0 + w * t).cos()) / w,
            )
        };
        let dx = vx * ic - vy * is;
        let dy = vx * is + vy * ic;
        let mut z = self.start[2] + self.height.value(t, duration);
        if let Some(j) = self.jump {
            let ph = (t / j.period).fract();
            z += 4.0 * j.height * ph * (1.0 - ph);
        }
        [self.start[0] + dx, self.start[1] + dy, z]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionClip {
    pub category: String,
    pub fps: f64,
    pub duration: f64,
    pub frame_count: usize,
    /// Per-bone `[a, b, c]` angle tracks in left-side semantics.
    pub bones: Vec<[DofTrack; 3]>,
    pub root: RootTrack,
}

impl MotionClip {
    pub fn time(&self, frame_idx: usize) -> f64 {
        frame_idx as f64 / self.fps
    }

    pub fn angles_at(&self, t: f64) -> [[f64; 3]; NUM_BONES] {
        let mut out = [[0.0; 3]; NUM_BONES];
        for (o, tracks) in out.iter_mut().zip(&self.bones) {
            for (v, track) in o.iter_mut().zip(tracks) {
                *v = track.value(t, self.duration);
            }
        }
        out
    }

    /// Removes every time-varying term, leaving the base posture.
    pub fn without_dynamics(&self) -> MotionClip {
        let mut c = self.clone();
        for tracks in &mut c.bones {
            for t in tracks.iter_mut() {
                t.freeze();
            }
        }
        c.root.velocity = [0.0, 0.0];
        c.root.yaw_rate = 0.0;
        c.root.jump = None;
        for t in [&mut c.root.yaw, &mut c.root.pitch, &mut c.root.roll, &mut c.root.height] {
            t.freeze();
        }
        c
    }

    /// Shifts the clip's starting position.
    pub fn place_at(&mut self, start: [f64; 3], yaw: f64) {
        self.root.start = start;
        self.root.start_yaw = yaw;
    }

    pub fn skin(&self, frame_idx: usize, profile: &CharacterProfile) -> Result<Skinned> {
        fk::check_frame(frame_idx, self.frame_count)?;
        let t = self.time(frame_idx);
        let r = &self.root;
        let orientation = fk::root_rotation(
            r.heading(t) + r.yaw.value(t, self.duration),
            r.pitch.value(t, self.duration),
            r.roll.value(t, self.duration),
        );
        Ok(fk::solve(
            profile,
            r.position(t, self.duration),
            orientation,
            &self.angles_at(t),
        ))
    }
}

/// World-frame pose of one frame.
pub fn fk_pose(clip: &MotionClip, frame_idx: usize, profile: &CharacterProfile) -> Result<Pose3D> {
    Ok(clip.skin(frame_idx, profile)?.world_pose())
}

// Joint limits in degrees, left-side semantics, indexed by side bone
// (head, clavicle, humerus, forearm, hip, femur, shin, foot).
const LIMITS: [[[f64; 2]; 3]; 8] = [
    [[-60.0, 35.0], [-35.0, 35.0], [-75.0, 75.0]],
    [[-10.0, 10.0], [-10.0, 10.0], [-15.0, 15.0]],
    [[-90.0, 90.0], [-90.0, 95.0], [-110.0, 50.0]],
    [[0.0, 0.0], [0.0, 0.0], [-150.0, 0.0]],
    [[-10.0, 10.0], [-10.0, 10.0], [-10.0, 10.0]],
    [[-30.0, 125.0], [-25.0, 50.0], [-40.0, 40.0]],
    [[-155.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
    [[-45.0, 35.0], [0.0, 0.0], [0.0, 0.0]],
];

pub fn limits(bone: usize, axis: usize) -> (f64, f64) {
    let k = if bone >= 8 { bone - 7 } else { bone };
    let [lo, hi] = LIMITS[k][axis];
    (lo.to_radians(), hi.to_radians())
}

// Side-bone indices used by the templates.
const HEAD: usize = 0;
const HUMERUS: usize = 2;
const FOREARM: usize = 3;
const FEMUR: usize = 5;
const SHIN: usize = 6;
const FOOT: usize = 7;

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;

#[derive(Debug, Clone, Copy)]
enum Posture {
    Standing,
    Crouching,
    Sitting,
    Laying,
    Crawling,
    Guard,
    Grapple,
    Address,
}

/// Base angles (degrees, per side bone), root drop as a fraction of the
/// standing root height, and root pitch (degrees).
struct PostureSpec {
    angles: [[f64; 3]; 8],
    drop: f64,
    pitch: f64,
}

fn posture(p: Posture) -> PostureSpec {
    let mut angles = [[0.0; 3]; 8];
    angles[HEAD][A] = -15.0;
    angles[HUMERUS] = [0.0, -75.0, -5.0];
    angles[FOREARM][C] = -15.0;
    let (mut drop, mut pitch) = (0.0, 0.0);
    match p {
        Posture::Standing => {}
        Posture::Crouching => {
            angles[HEAD][A] = -25.0;
            angles[HUMERUS] = [0.0, -70.0, -20.0];
            angles[FOREARM][C] = -40.0;
            angles[FEMUR][A] = 95.0;
            angles[SHIN][A] = -120.0;
            angles[FOOT][A] = 25.0;
            drop = 0.3;
            pitch = -20.0;
        }
        Posture::Sitting => {
            angles[HEAD][A] = -20.0;
            angles[HUMERUS] = [0.0, -70.0, -30.0];
            angles[FOREARM][C] = -30.0;
            angles[FEMUR][A] = 85.0;
            angles[SHIN][A] = -20.0;
            drop = 0.62;
            pitch = 5.0;
        }
        Posture::Laying => {
            angles[HEAD][A] = -40.0;
            angles[HUMERUS] = [0.0, -80.0, 0.0];
            drop = 0.92;
            pitch = 85.0;
        }
        Posture::Crawling => {
            angles[HEAD][A] = 0.0;
            angles[HUMERUS] = [0.0, -15.0, -90.0];
            angles[FOREARM][C] = -10.0;
            angles[FEMUR][A] = 75.0;
            angles[SHIN][A] = -90.0;
            drop = 0.58;
            pitch = -75.0;
        }
        Posture::Guard => {
            angles[HEAD][A] = -20.0;
            angles[HUMERUS] = [0.0, -40.0, -60.0];
            angles[FOREARM][C] = -120.0;
            angles[FEMUR][A] = 15.0;
            angles[SHIN][A] = -20.0;
            drop = 0.04;
            pitch = -10.0;
        }
        Posture::Grapple => {
            angles[HEAD][A] = -25.0;
            angles[HUMERUS] = [0.0, -30.0, -80.0];
            angles[FOREARM][C] = -50.0;
            angles[FEMUR][A] = 40.0;
            angles[SHIN][A] = -60.0;
            angles[FOOT][A] = 15.0;
            drop = 0.12;
            pitch = -30.0;
        }
        Posture::Address => {
            angles[HEAD][A] = -35.0;
            angles[HUMERUS] = [0.0, -80.0, -30.0];
            angles[FOREARM][C] = -5.0;
            angles[FEMUR][A] = 20.0;
            angles[SHIN][A] = -20.0;
            drop = 0.05;
            pitch = -25.0;
        }
    }
    PostureSpec {
        angles,
        drop,
        pitch,
    }
}

/// A periodic term on one side bone. `mirror_phase` is added for the right
/// side; `None` restricts the term to the left side.
#[derive(Debug, Clone, Copy)]
struct Wave {
    bone: usize,
    axis: usize,
    amplitude_deg: f64,
    frequency: f64,
    mirror_phase: Option<f64>,
}

const fn wave(bone: usize, axis: usize, amplitude_deg: f64, frequency: f64, mirror_phase: f64) -> Wave {
    Wave {
        bone,
        axis,
        amplitude_deg,
        frequency,
        mirror_phase: Some(mirror_phase),
    }
}

const fn left_only(bone: usize, axis: usize, amplitude_deg: f64, frequency: f64) -> Wave {
    Wave {
        bone,
        axis,
        amplitude_deg,
        frequency,
        mirror_phase: None,
    }
}

#[derive(Debug, Clone)]
struct Template {
    from: Posture,
    to: Option<Posture>,
    waves: Vec<Wave>,
    /// Body-frame speed (cm/s): sideways, forward.
    velocity: [f64; 2],
    /// Total heading change over the clip, degrees (sign randomized).
    turn_deg: Option<(f64, f64)>,
    /// Yaw oscillation amplitude (deg) and frequency.
    yaw_swing: Option<(f64, f64)>,
    /// Full roll rotations over the clip.
    roll_turns: f64,
    bob_cm: Option<(f64, f64)>,
    jump: Option<Jump>,
}

impl Template {
    fn still(p: Posture) -> Self {
        Self {
            from: p,
            to: None,
            waves: Vec::new(),
            velocity: [0.0, 0.0],
            turn_deg: None,
            yaw_swing: None,
            roll_turns: 0.0,
            bob_cm: None,
            jump: None,
        }
    }

    fn with(mut self, waves: &[Wave]) -> Self {
        self.waves.extend_from_slice(waves);
        self
    }

    fn gait(mut self, velocity: [f64; 2], stride_hz: f64, scale: f64) -> Self {
        self.velocity = velocity;
        self.waves.extend_from_slice(&[
            wave(FEMUR, A, 25.0 * scale, stride_hz, PI),
            wave(SHIN, A, 20.0 * scale, stride_hz, PI),
            wave(HUMERUS, C, 20.0 * scale, stride_hz, PI),
        ]);
        self.bob_cm = Some((2.0 * scale, 2.0 * stride_hz));
        self
    }
}

fn template(category: &str) -> Result<Template> {
    use Posture::*;
    let t = match category_index(category)? {
        0 => Template {
            jump: Some(Jump {
                height: 30.0,
                period: 1.0,
            }),
            ..Template::still(Standing)
        }
        .with(&[wave(SHIN, A, 30.0, 1.0, 0.0), wave(HUMERUS, B, 40.0, 1.0, 0.0)]),
        1 => Template {
            to: Some(Laying),
            ..Template::still(Standing)
        }
        .with(&[wave(HUMERUS, B, 30.0, 1.5, 0.5), wave(FEMUR, A, 15.0, 1.2, PI)]),
        2 => Template {
            bob_cm: Some((4.0, 1.6)),
            ..Template::still(Standing)
        }
        .with(&[wave(HUMERUS, B, 60.0, 0.8, 0.0), wave(FEMUR, B, 15.0, 0.8, 0.0)]),
        3 => Template {
            velocity: [0.0, -20.0],
            ..Template::still(Grapple)
        }
        .with(&[wave(FOREARM, C, 40.0, 0.7, 0.0), wave(HUMERUS, C, 15.0, 0.7, 0.0)]),
        4 => Template::still(Standing).with(&[
            wave(HEAD, B, 10.0, 0.3, 0.0),
            wave(HEAD, C, 15.0, 0.2, 0.0),
            left_only(FOREARM, C, 40.0, 0.25),
            wave(HUMERUS, C, 25.0, 0.3, PI / 2.0),
        ]),
        5 => Template {
            roll_turns: 1.0,
            velocity: [50.0, 0.0],
            ..Template::still(Laying)
        }
        .with(&[wave(HUMERUS, B, 20.0, 0.5, 0.0)]),
        6 => Template {
            velocity: [0.0, 40.0],
            ..Template::still(Crawling)
        }
        .with(&[wave(HUMERUS, C, 20.0, 0.8, PI), wave(FEMUR, A, 20.0, 0.8, PI)]),
        7 => Template::still(Laying).with(&[
            wave(HUMERUS, B, 10.0, 0.2, 1.0),
            wave(FEMUR, A, 10.0, 0.15, 2.0),
            wave(HEAD, C, 10.0, 0.1, 0.0),
        ]),
        8 => Template::still(Sitting).with(&[
            wave(HUMERUS, C, 20.0, 0.3, 1.0),
            wave(HEAD, C, 20.0, 0.2, 0.0),
            wave(SHIN, A, 10.0, 0.2, 0.5),
        ]),
        9 => Template::still(Crouching).with(&[
            wave(HUMERUS, C, 15.0, 0.4, 0.5),
            wave(HEAD, C, 15.0, 0.3, 0.0),
        ]),
        10 => Template {
            turn_deg: Some((100.0, 180.0)),
            ..Template::still(Crouching)
        }
        .with(&[wave(FEMUR, A, 10.0, 0.8, PI)]),
        11 => Template {
            to: Some(Standing),
            ..Template::still(Crouching)
        },
        12 => Template::still(Crouching).gait([0.0, 50.0], 0.8, 0.5),
        13 => Template::still(Crouching).gait([0.0, -40.0], 0.8, 0.5),
        14 => Template::still(Crouching).gait([40.0, 0.0], 0.8, 0.5),
        15 => Template {
            bob_cm: Some((5.0, 0.6)),
            yaw_swing: Some((20.0, 0.3)),
            ..Template::still(Standing)
        }
        .with(&[
            wave(HUMERUS, B, 45.0, 0.5, 0.5),
            wave(HUMERUS, C, 30.0, 0.4, PI),
            wave(FEMUR, A, 30.0, 0.5, PI),
            wave(SHIN, A, 35.0, 0.5, PI),
            wave(HEAD, A, 15.0, 0.4, 0.0),
        ]),
        16 => Template::still(Standing).with(&[
            wave(HUMERUS, B, 40.0, 0.5, 1.0),
            wave(HUMERUS, C, 30.0, 0.35, PI),
            wave(FOREARM, C, 40.0, 0.6, 0.5),
            wave(HEAD, C, 25.0, 0.25, 0.0),
        ]),
        17 => Template {
            turn_deg: Some((100.0, 180.0)),
            ..Template::still(Standing)
        }
        .with(&[wave(FEMUR, A, 12.0, 1.0, PI)]),
        18 => Template {
            to: Some(Crouching),
            ..Template::still(Standing)
        },
        19 => Template::still(Standing).gait([0.0, 110.0], 0.9, 1.0),
        20 => Template::still(Standing).gait([0.0, -60.0], 0.8, 0.8),
        21 => Template::still(Standing).gait([70.0, 0.0], 0.8, 0.6),
        22 => Template {
            bob_cm: Some((6.0, 2.0)),
            yaw_swing: Some((35.0, 0.5)),
            ..Template::still(Standing)
        }
        .with(&[
            wave(HUMERUS, B, 70.0, 1.0, PI),
            wave(FOREARM, C, 50.0, 1.0, 0.0),
            wave(FEMUR, A, 30.0, 1.0, PI),
            wave(FEMUR, B, 15.0, 0.5, 0.0),
            wave(SHIN, A, 30.0, 1.0, PI),
            wave(HEAD, B, 15.0, 1.0, 0.0),
        ]),
        23 => Template {
            bob_cm: Some((3.0, 2.0)),
            ..Template::still(Guard)
        }
        .with(&[
            wave(FOREARM, C, 50.0, 2.0, PI),
            wave(HUMERUS, C, 25.0, 2.0, PI),
            wave(HEAD, B, 10.0, 1.0, 0.0),
        ]),
        24 => Template {
            yaw_swing: Some((25.0, 0.4)),
            ..Template::still(Grapple)
        }
        .with(&[
            wave(HUMERUS, C, 25.0, 0.6, 1.0),
            wave(HUMERUS, B, 25.0, 0.5, 0.0),
            wave(FEMUR, A, 15.0, 0.5, PI),
        ]),
        25 => Template::still(Standing)
            .gait([0.0, 80.0], 0.9, 0.8)
            .with(&[left_only(FEMUR, A, 50.0, 0.7)]),
        26 => Template {
            yaw_swing: Some((60.0, 0.5)),
            ..Template::still(Address)
        }
        .with(&[wave(HUMERUS, B, 40.0, 0.5, 0.0), wave(HUMERUS, C, 40.0, 0.5, 0.0)]),
        27 => Template {
            jump: Some(Jump {
                height: 20.0,
                period: 2.0,
            }),
            ..Template::still(Standing)
        }
        .gait([0.0, 60.0], 0.9, 0.7)
        .with(&[left_only(FOREARM, C, 30.0, 2.0)]),
        28 => Template {
            to: Some(Standing),
            ..Template::still(Crouching)
        }
        .gait([0.0, 150.0], 1.2, 1.0),
        29 => Template {
            yaw_swing: Some((70.0, 0.4)),
            ..Template::still(Address)
        }
        .with(&[wave(HUMERUS, B, 50.0, 0.4, 0.0)]),
        _ => unreachable!("category table has 30 entries"),
    };
    Ok(t)
}

/// Generates a clip whose motion follows the category's template, with
/// amplitudes, frequencies and phases randomized by `rng`.
pub fn generate_motion<R: Rng + ?Sized>(
    category: &str,
    duration: f64,
    profile: &CharacterProfile,
    rng: &mut R,
) -> Result<MotionClip> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration}")));
    }
    let tpl = template(category)?;
    let from = posture(tpl.from);
    let to = tpl.to.map(posture);

    let mut bones: Vec<[DofTrack; 3]> = (0..NUM_BONES)
        .map(|b| {
            std::array::from_fn(|axis| {
                let (lo, hi) = limits(b, axis);
                DofTrack::fixed(lo, hi)
            })
        })
        .collect();
    for (b, tracks) in bones.iter_mut().enumerate() {
        let k = if b >= 8 { b - 7 } else { b };
        for (axis, track) in tracks.iter_mut().enumerate() {
            track.base = from.angles[k][axis].to_radians();
            if let Some(to) = &to {
                track.ramp = (to.angles[k][axis] - from.angles[k][axis]).to_radians();
            }
        }
    }

    let base_phase = rng.random_range(0.0..TAU);
    for w in &tpl.waves {
        let amplitude = w.amplitude_deg.to_radians() * rng.random_range(0.7..1.3);
        let frequency = w.frequency * rng.random_range(0.8..1.25);
        let phase = base_phase + rng.random_range(-0.3..0.3);
        let left = Sinusoid {
            amplitude,
            frequency,
            phase,
        };
        bones[w.bone][w.axis].components.push(left);
        if let Some(mp) = w.mirror_phase {
            if w.bone != HEAD {
                bones[w.bone + 7][w.axis].components.push(Sinusoid {
                    phase: phase + mp,
                    ..left
                });
            }
        }
    }

    let root_height = -profile.lowest_point();
    let speed = rng.random_range(0.8..1.2);
    let mut height = DofTrack::unbounded();
    height.base = -from.drop * root_height;
    if let Some(to) = &to {
        height.ramp = -(to.drop - from.drop) * root_height;
    }
    if let Some((amp, f)) = tpl.bob_cm {
        height.components.push(Sinusoid {
            amplitude: amp * rng.random_range(0.7..1.3),
            frequency: f * speed,
            phase: base_phase,
        });
    }
    let mut pitch = DofTrack::fixed(-PI / 2.0, PI / 2.0);
    pitch.base = from.pitch.to_radians();
    if let Some(to) = &to {
        pitch.ramp = (to.pitch - from.pitch).to_radians();
    }
    let mut roll = DofTrack::unbounded();
    roll.ramp = tpl.roll_turns * TAU;
    let mut yaw = DofTrack::unbounded();
    if let Some((amp, f)) = tpl.yaw_swing {
        yaw.components.push(Sinusoid {
            amplitude: amp.to_radians() * rng.random_range(0.7..1.3),
            frequency: f * rng.random_range(0.8..1.25),
            phase: base_phase,
        });
    }
    let yaw_rate = match tpl.turn_deg {
        Some((lo, hi)) => {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * rng.random_range(lo..hi).to_radians() / duration
        }
        None => 0.0,
    };

    Ok(MotionClip {
        category: category.to_string(),
        fps: FPS,
        duration,
        frame_count: (duration * FPS).round() as usize,
        bones,
        root: RootTrack {
            start: [0.0, 0.0, root_height],
            start_yaw: 0.0,
            velocity: [tpl.velocity[0] * speed, tpl.velocity[1] * speed],
            yaw_rate,
            yaw,
            pitch,
            roll,
            height,
            jump: tpl.jump,
        },
    })
}
