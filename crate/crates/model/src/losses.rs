//! Training objectives of the 2D and 3D modules, as graph nodes.

use egopose_core::skeleton::bone_pairs;
use egopose_nn::{Float, Graph, Var};

use crate::config::Pose3DConfig;

/// Sum of per-view heatmap MSEs (each averaged over all elements).
pub fn loss_2d<T: Float>(g: &mut Graph<'_, T>, pred: &[Var], target: &[Var]) -> Var {
    assert_eq!(pred.len(), target.len());
    assert!(!pred.is_empty());
    let mut total = g.mse(pred[0], target[0]);
    for (p, t) in pred.iter().zip(target).skip(1) {
        let m = g.mse(*p, *t);
        total = g.add(total, m);
    }
    total
}

/// Mean per-joint Euclidean distance over the batch, in the poses' unit.
pub fn mpjpe_loss<T: Float>(g: &mut Graph<'_, T>, target: Var, pred: Var) -> Var {
    g.joint_distance(pred, target)
}

/// Negative summed bone-direction cosine, averaged over the batch.
pub fn cos_loss<T: Float>(g: &mut Graph<'_, T>, target: Var, pred: Var) -> Var {
    let bones = bone_pairs();
    g.bone_cosine(pred, target, &bones)
}

#[derive(Debug, Clone, Copy)]
pub struct Loss3DTerms {
    pub total: Var,
    pub mpjpe: Var,
    pub cos: Var,
    /// Sum of the per-view reconstruction MSEs.
    pub heatmap: Var,
}

/// `λpose·(mpjpe + λcos·cos) + λhm·Σ_views mse(input heatmaps, reconstruction)`.
pub fn loss_3d<T: Float>(
    g: &mut Graph<'_, T>,
    config: &Pose3DConfig,
    target_pose: Var,
    pred_pose: Var,
    heatmaps: &[Var],
    recon: &[Var],
) -> Loss3DTerms {
    let mpjpe = mpjpe_loss(g, target_pose, pred_pose);
    let cos = cos_loss(g, target_pose, pred_pose);
    let heatmap = loss_2d(g, recon, heatmaps);
    let c = g.scale(cos, config.lambda_cos);
    let pose = g.add(mpjpe, c);
    let pose = g.scale(pose, config.lambda_pose);
    let hm = g.scale(heatmap, config.lambda_hm);
    let total = g.add(pose, hm);
    Loss3DTerms {
        total,
        mpjpe,
        cos,
        heatmap,
    }
}
