//! MPJPE, Procrustes-aligned MPJPE and multi-run aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{norm, sub, Pose3D, PoseFrame};
use crate::skeleton::NUM_JOINTS;
use crate::synth::motion::CATEGORIES;

const CM_TO_MM: f64 = 10.0;
const DEGENERATE_EPS: f64 = 1e-12;

/// Mean per-joint Euclidean distance, in millimeters (inputs in cm).
pub fn mpjpe(gt: &Pose3D, pred: &Pose3D) -> Result<f64> {
    if gt.frame != pred.frame {
        return Err(Error::InvalidArgument(format!(
            "pose frames differ: {:?} vs {:?}",
            gt.frame, pred.frame
        )));
    }
    Ok(mean_distance(&gt.coords, &pred.coords) * CM_TO_MM)
}

fn mean_distance(a: &[[f64; 3]; NUM_JOINTS], b: &[[f64; 3]; NUM_JOINTS]) -> f64 {
    a.iter().zip(b).map(|(p, q)| norm(sub(*p, *q))).sum::<f64>() / NUM_JOINTS as f64
}

/// Similarity transform `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation * Vector3::from(p) * self.scale + self.translation;
        [v.x, v.y, v.z]
    }
}

/// Least-squares similarity transform mapping `source` onto `target`
/// (rotation restricted to det +1).
pub fn similarity_fit(target: &[[f64; 3]], source: &[[f64; 3]]) -> Result<Similarity> {
    if target.len() != source.len() || target.is_empty() {
        return Err(Error::Shape {
            expected: vec![target.len(), 3],
            actual: vec![source.len(), 3],
        });
    }
    let n = target.len() as f64;
    let centroid = |pts: &[[f64; 3]]| pts.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p)) / n;
    let mu_t = centroid(target);
    let mu_s = centroid(source);
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    let mut var_t = 0.0;
    for (t, s) in target.iter().zip(source) {
        let tc = Vector3::from(*t) - mu_t;
        let sc = Vector3::from(*s) - mu_s;
        cov += tc * sc.transpose();
        var_s += sc.norm_squared();
        var_t += tc.norm_squared();
    }
    if var_s < DEGENERATE_EPS {
        return Err(Error::Degenerate("predicted joints coincide"));
    }
    if var_t < DEGENERATE_EPS {
        return Err(Error::Degenerate("ground-truth joints coincide"));
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    // nalgebra does not sort singular values, so the reflection fix goes on the smallest one.
    let sv = svd.singular_values;
    let smallest = (0..3).min_by(|a, b| sv[*a].total_cmp(&sv[*b])).unwrap();
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(smallest, smallest)] = -1.0;
    }
    let rotation = u * d * v_t;
    let trace: f64 = (0..3).map(|i| sv[i] * d[(i, i)]).sum();
    let scale = trace / var_s;
    let translation = mu_t - rotation * mu_s * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

/// Aligns `pred` onto `gt` with the optimal similarity transform.
pub fn procrustes_align(gt: &Pose3D, pred: &Pose3D) -> Result<(Pose3D, Similarity)> {
    let t = similarity_fit(&gt.coords, &pred.coords)?;
    let mut coords = pred.coords;
    for c in coords.iter_mut() {
        *c = t.apply(*c);
    }
    Ok((
        Pose3D {
            frame: gt.frame,
            coords,
        },
        t,
    ))
}

pub fn pa_mpjpe(gt: &Pose3D, pred: &Pose3D) -> Result<f64> {
    let (aligned, _) = procrustes_align(gt, pred)?;
    Ok(mean_distance(&gt.coords, &aligned.coords) * CM_TO_MM)
}

/// Per-frame errors for one evaluated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub category: String,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
}

pub fn score_frame(category: &str, gt: &Pose3D, pred: &Pose3D) -> Result<FrameScore> {
    Ok(FrameScore {
        category: category.to_string(),
        mpjpe: mpjpe(gt, pred)?,
        pa_mpjpe: pa_mpjpe(gt, pred)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub frames: usize,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
}

/// Frame-weighted means for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub overall: CategoryScore,
    pub per_category: BTreeMap<String, CategoryScore>,
}

pub fn run_scores(frames: &[FrameScore]) -> Result<RunScores> {
    if frames.is_empty() {
        return Err(Error::Empty("no evaluated frames"));
    }
    let mut sums: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    for f in frames {
        let e = sums.entry(f.category.clone()).or_default();
        e.0 += 1;
        e.1 += f.mpjpe;
        e.2 += f.pa_mpjpe;
    }
    let per_category = sums
        .into_iter()
        .map(|(k, (n, m, p))| {
            (
                k,
                CategoryScore {
                    frames: n,
                    mpjpe: m / n as f64,
                    pa_mpjpe: p / n as f64,
                },
            )
        })
        .collect();
    let n = frames.len();
    Ok(RunScores {
        overall: CategoryScore {
            frames: n,
            mpjpe: frames.iter().map(|f| f.mpjpe).sum::<f64>() / n as f64,
            pa_mpjpe: frames.iter().map(|f| f.pa_mpjpe).sum::<f64>() / n as f64,
        },
        per_category,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("no values to aggregate"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ({:.2})", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub category: String,
    pub frames: usize,
    pub mpjpe: MeanStd,
    pub pa_mpjpe: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Frame the poses were compared in.
    pub pose_frame: PoseFrame,
    pub runs: Vec<RunScores>,
    pub overall: AggregateRow,
    pub per_category: Vec<AggregateRow>,
}

fn category_rank(name: &str) -> (usize, String) {
    let idx = CATEGORIES.iter().position(|c| *c == name).unwrap_or(CATEGORIES.len());
    (idx, name.to_string())
}

/// Aggregates per-frame scores of several runs into mean and σ across runs.
/// Categories missing from some run are averaged over the runs that have them.
pub fn aggregate(pose_frame: PoseFrame, runs: &[Vec<FrameScore>]) -> Result<EvalReport> {
    if runs.is_empty() {
        return Err(Error::Empty("no runs"));
    }
    let scores: Vec<RunScores> = runs.iter().map(|r| run_scores(r)).collect::<Result<_>>()?;
    let overall = AggregateRow {
        category: "overall".into(),
        frames: scores[0].overall.frames,
        mpjpe: MeanStd::of(&scores.iter().map(|s| s.overall.mpjpe).collect::<Vec<_>>())?,
        pa_mpjpe: MeanStd::of(&scores.iter().map(|s| s.overall.pa_mpjpe).collect::<Vec<_>>())?,
    };
    let mut names: Vec<String> = scores
        .iter()
        .flat_map(|s| s.per_category.keys().cloned())
        .collect();
    names.sort_by_key(|n| category_rank(n));
    names.dedup();
    let mut per_category = Vec::with_capacity(names.len());
    for name in names {
        let present: Vec<&CategoryScore> = scores.iter().filter_map(|s| s.per_category.get(&name)).collect();
        per_category.push(AggregateRow {
            frames: present[0].frames,
            mpjpe: MeanStd::of(&present.iter().map(|c| c.mpjpe).collect::<Vec<_>>())?,
            pa_mpjpe: MeanStd::of(&present.iter().map(|c| c.pa_mpjpe).collect::<Vec<_>>())?,
            category: name,
        });
    }
    Ok(EvalReport {
        pose_frame,
        runs: scores,
        overall,
        per_category,
    })
}

impl EvalReport {
    /// Fixed-width table: category, frames, MPJPE, PA-MPJPE (mm, mean (σ)).
    pub fn to_table(&self, by_category: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>7} {:>16} {:>16}",
            "category", "frames", "MPJPE", "PA-MPJPE"
        );
        let mut row = |r: &AggregateRow| {
            let _ = writeln!(
                out,
                "{:<28} {:>7} {:>16} {:>16}",
                r.category,
                r.frames,
                r.mpjpe.to_string(),
                r.pa_mpjpe.to_string()
            );
        };
        if by_category {
            for r in &self.per_category {
                row(r);
            }
        }
        row(&self.overall);
        out
    }
}
