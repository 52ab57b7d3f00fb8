//! Separate and end-to-end training loops.

use std::path::{Path, PathBuf};
use std::time::Instant;

use egopose_core::hash::mix_seed;
use egopose_core::metrics::{aggregate, run_scores, EvalReport};
use egopose_core::PoseFrame;
use egopose_model::checkpoint::{load_checkpoint, save_checkpoint};
use egopose_model::losses::{loss_2d, loss_3d};
use egopose_model::{pose2d, pose3d, ModelConfig, Models};
use egopose_nn::optim::apply_buffer_updates;
use egopose_nn::{Adam, Graph, ParamId, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Experiment, Strategy};
use crate::data::{Batch, Datasets, SplitData};
use crate::eval::evaluate;
use crate::report::{write_json, EpochLog, Phase, RunReport};
use crate::schedule::epoch_lr;
use crate::{Result, TrainError};

/// Heatmaps fed to the 3D module, one tensor per view.
pub type Heatmaps = (Tensor<f32>, Option<Tensor<f32>>);

/// Builds the loss of `phase` on `batch`. `lifted` supplies the 3D module's
/// input heatmaps in the [`Phase::Pose3D`] phase.
pub fn batch_loss(
    g: &mut Graph<'_, f32>,
    models: &Models<f32>,
    exp: &Experiment,
    phase: Phase,
    batch: &Batch,
    lifted: Option<&Heatmaps>,
    train: bool,
) -> Result<Var> {
    let hm_targets = |g: &mut Graph<'_, f32>| {
        let mut t = vec![g.input(batch.heatmaps_left.clone())];
        t.extend(batch.heatmaps_right.clone().map(|h| g.input(h)));
        t
    };
    match phase {
        Phase::Pose2D | Phase::EndToEnd => {
            let l = g.input(batch.left.clone());
            let r = batch.right.clone().map(|t| g.input(t));
            let out = models.pose2d.forward(g, l, r, train)?;
            let mut pred = vec![out.left];
            pred.extend(out.right);
            let targets = hm_targets(g);
            let l2d = loss_2d(g, &pred, &targets);
            if phase == Phase::Pose2D {
                return Ok(l2d);
            }
            let p = models.pose3d.forward(g, out.left, out.right)?;
            let mut recon = vec![p.recon_left];
            recon.extend(p.recon_right);
            let target = g.input(batch.pose.clone());
            let terms = loss_3d(g, &models.pose3d.config, target, p.pose, &pred, &recon);
            let weighted = g.scale(terms.total, exp.train.loss3d_weight);
            Ok(g.add(l2d, weighted))
        }
        Phase::Pose3D => {
            let (hl, hr) = lifted.expect("3D phase needs input heatmaps");
            let mut inputs = vec![g.input(hl.clone())];
            inputs.extend(hr.clone().map(|h| g.input(h)));
            let p = models.pose3d.forward(g, inputs[0], inputs.get(1).copied())?;
            let mut recon = vec![p.recon_left];
            recon.extend(p.recon_right);
            let target = g.input(batch.pose.clone());
            Ok(loss_3d(g, &models.pose3d.config, target, p.pose, &inputs, &recon).total)
        }
    }
}

/// One optimizer step on `ids`; returns the batch loss.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    models: &mut Models<f32>,
    opt: &mut Adam<f32>,
    ids: &[ParamId],
    exp: &Experiment,
    phase: Phase,
    batch: &Batch,
    lifted: Option<&Heatmaps>,
    lr: f64,
) -> Result<f64> {
    let (loss, grads, updates) = {
        let mut g = Graph::new(&models.store);
        let loss = batch_loss(&mut g, models, exp, phase, batch, lifted, true)?;
        let grads = g.backward(loss);
        (f64::from(g.value(loss).item()), grads, g.take_buffer_updates())
    };
    if !loss.is_finite() {
        return Err(TrainError::Data(format!("non-finite {phase:?} loss")));
    }
    opt.step(&mut models.store, &grads, ids, lr);
    apply_buffer_updates(&mut models.store, updates);
    Ok(loss)
}

/// The frozen 2D module's heatmaps for `batch`, in inference mode.
pub fn predict_heatmaps(models: &Models<f32>, batch: &Batch) -> Result<Heatmaps> {
    let mut g = Graph::frozen(&models.store);
    let l = g.input(batch.left.clone());
    let r = batch.right.clone().map(|t| g.input(t));
    let out = models.pose2d.forward(&mut g, l, r, false)?;
    Ok((g.value(out.left).clone(), out.right.map(|v| g.value(v).clone())))
}

fn lift_inputs(models: &Models<f32>, exp: &Experiment, batch: &Batch) -> Result<Heatmaps> {
    if exp.train.gt_heatmaps_for_3d {
        Ok((batch.heatmaps_left.clone(), batch.heatmaps_right.clone()))
    } else {
        predict_heatmaps(models, batch)
    }
}

/// Per-frame 3D inputs, computed once when the split is held in memory.
struct LiftCache {
    frames: Vec<(Tensor<f32>, Option<Tensor<f32>>)>,
}

impl LiftCache {
    fn build(models: &Models<f32>, exp: &Experiment, data: &SplitData) -> Result<Self> {
        let mut frames = Vec::with_capacity(data.len());
        let idx: Vec<usize> = (0..data.len()).collect();
        for chunk in idx.chunks(exp.train.batch_size) {
            let batch = data.batch(chunk, &models.pose2d.config, exp.train.heatmap_sigma)?;
            let (l, r) = lift_inputs(models, exp, &batch)?;
            for i in 0..chunk.len() {
                frames.push((item(&l, i), r.as_ref().map(|r| item(r, i))));
            }
        }
        Ok(Self { frames })
    }

    fn gather(&self, indices: &[usize]) -> Heatmaps {
        let l: Vec<_> = indices.iter().map(|&i| self.frames[i].0.clone()).collect();
        let r: Option<Vec<_>> = indices.iter().map(|&i| self.frames[i].1.clone()).collect();
        (Tensor::stack(&l), r.map(|r| Tensor::stack(&r)))
    }
}

fn item(t: &Tensor<f32>, i: usize) -> Tensor<f32> {
    Tensor::new(t.shape()[1..].to_vec(), t.batch_item(i).to_vec())
}

fn epoch_order(n: usize, seed: u64, phase: Phase, epoch: usize) -> Vec<usize> {
    let salt = 1_000 * (phase as u64 + 1) + epoch as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, salt));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn validation_loss(models: &Models<f32>, exp: &Experiment, phase: Phase, val: Option<&SplitData>) -> Result<Option<f64>> {
    let Some(val) = val else { return Ok(None) };
    let idx: Vec<usize> = (0..val.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(exp.train.batch_size) {
        let batch = val.batch(chunk, &models.pose2d.config, exp.train.heatmap_sigma)?;
        let lifted = match phase {
            Phase::Pose3D => Some(lift_inputs(models, exp, &batch)?),
            _ => None,
        };
        let mut g = Graph::frozen(&models.store);
        let loss = batch_loss(&mut g, models, exp, phase, &batch, lifted.as_ref(), false)?;
        total += f64::from(g.value(loss).item()) * chunk.len() as f64;
    }
    Ok(Some(total / val.len() as f64))
}

/// Runs `exp.train.epochs` epochs of `phase`, updating only `ids`.
fn run_phase(
    models: &mut Models<f32>,
    exp: &Experiment,
    data: &Datasets,
    seed: u64,
    phase: Phase,
    ids: &[ParamId],
    log: &mut Vec<EpochLog>,
) -> Result<()> {
    let t = &exp.train;
    let mut opt = Adam::new(t.adam());
    let cache = match phase {
        Phase::Pose3D if data.train.is_cached() => Some(LiftCache::build(models, exp, &data.train)?),
        _ => None,
    };
    for epoch in 0..t.epochs {
        let lr = epoch_lr(epoch, t.epochs, t.base_lr);
        let order = epoch_order(data.train.len(), seed, phase, epoch);
        let mut total = 0.0;
        for chunk in order.chunks(t.batch_size) {
            let batch = data.train.batch(chunk, &models.pose2d.config, t.heatmap_sigma)?;
            let lifted = match (phase, &cache) {
                (Phase::Pose3D, Some(c)) => Some(c.gather(chunk)),
                (Phase::Pose3D, None) => Some(lift_inputs(models, exp, &batch)?),
                _ => None,
            };
            total += train_step(models, &mut opt, ids, exp, phase, &batch, lifted.as_ref(), lr)? * chunk.len() as f64;
        }
        let train_loss = total / data.train.len() as f64;
        let val_loss = validation_loss(models, exp, phase, data.val.as_ref())?;
        log::info!(
            "{phase:?} epoch {}/{} lr {lr:.2e} train {train_loss:.6}{}",
            epoch + 1,
            t.epochs,
            val_loss.map(|v| format!(" val {v:.6}")).unwrap_or_default()
        );
        log.push(EpochLog {
            phase,
            epoch,
            lr,
            train_loss,
            val_loss,
            pose2d_checksum: models.store.checksum(pose2d::PREFIX),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub models: Models<f32>,
    pub report: RunReport,
}

/// Trains the 2D module, then the 3D module on the frozen 2D module's output.
pub fn train_separate(data: &Datasets, exp: &Experiment, seed: u64) -> Result<TrainedRun> {
    let mut exp = exp.clone();
    exp.train.strategy = Strategy::Separate;
    run(data, &exp, seed)
}

/// Trains both modules jointly on `loss_2d + loss3d_weight * loss_3d`.
pub fn train_end2end(data: &Datasets, exp: &Experiment, seed: u64) -> Result<TrainedRun> {
    let mut exp = exp.clone();
    exp.train.strategy = Strategy::End2end;
    run(data, &exp, seed)
}

/// Trains with the strategy named in `exp`.
pub fn train(data: &Datasets, exp: &Experiment, seed: u64) -> Result<TrainedRun> {
    run(data, exp, seed)
}

fn run(data: &Datasets, exp: &Experiment, seed: u64) -> Result<TrainedRun> {
    exp.validate()?;
    let start = Instant::now();
    let mut models = Models::<f32>::new(&exp.model, seed)?;
    let ids2d = models.pose2d.param_ids();
    let ids3d = models.pose3d.param_ids();
    let mut log = Vec::new();
    match exp.train.strategy {
        Strategy::Separate => {
            run_phase(&mut models, exp, data, seed, Phase::Pose2D, &ids2d, &mut log)?;
            run_phase(&mut models, exp, data, seed, Phase::Pose3D, &ids3d, &mut log)?;
        }
        Strategy::End2end => {
            let all: Vec<ParamId> = ids2d.iter().chain(&ids3d).copied().collect();
            run_phase(&mut models, exp, data, seed, Phase::EndToEnd, &all, &mut log)?;
        }
    }
    let eval = evaluate(&models, &data.eval, exp.train.batch_size)?;
    let p = &exp.model.pose2d;
    let report = RunReport {
        seed,
        config_hash: exp.config_hash(),
        strategy: exp.train.strategy,
        variant: p.variant,
        backbone_depth: p.backbone_depth,
        weight_sharing: p.weight_sharing,
        encoder_params: models.pose2d.encoder_param_count(&models.store),
        pose2d_params: models.pose2d.param_count(&models.store),
        pose3d_params: models.pose3d.param_count(&models.store),
        train_frames: data.train.len(),
        eval_split: data.eval.split(),
        epochs: log,
        scores: run_scores(&eval.frames)?,
        keypoints: eval.keypoints,
        frame_scores: eval.frames,
        param_checksum: models.store.checksum(""),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok(TrainedRun { models, report })
}

pub const POSE2D_CHECKPOINT: &str = "pose2d.ckpt";
pub const POSE3D_CHECKPOINT: &str = "pose3d.ckpt";
pub const COMBINED_CHECKPOINT: &str = "model.ckpt";

/// Writes checkpoints: one per module for separate training, one combined
/// file for end-to-end training. Returns the written paths.
pub fn save_run(models: &Models<f32>, config: &ModelConfig, strategy: Strategy, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let files: Vec<(&str, &str)> = match strategy {
        Strategy::Separate => vec![(POSE2D_CHECKPOINT, pose2d::PREFIX), (POSE3D_CHECKPOINT, pose3d::PREFIX)],
        Strategy::End2end => vec![(COMBINED_CHECKPOINT, "")],
    };
    let mut paths = Vec::new();
    for (name, prefix) in files {
        let path = dir.join(name);
        save_checkpoint(&models.store, prefix, config, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Rebuilds models from the checkpoints in `dir`.
pub fn load_run(config: &ModelConfig, dir: &Path) -> Result<Models<f32>> {
    let mut models = Models::<f32>::new(config, 0)?;
    let combined = dir.join(COMBINED_CHECKPOINT);
    if combined.is_file() {
        load_checkpoint(&mut models.store, "", config, &combined)?;
        return Ok(models);
    }
    let (p2, p3) = (dir.join(POSE2D_CHECKPOINT), dir.join(POSE3D_CHECKPOINT));
    if !p2.is_file() || !p3.is_file() {
        return Err(TrainError::Data(format!("no checkpoints found in {}", dir.display())));
    }
    load_checkpoint(&mut models.store, pose2d::PREFIX, config, &p2)?;
    load_checkpoint(&mut models.store, pose3d::PREFIX, config, &p3)?;
    Ok(models)
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| TrainError::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

pub const EXPERIMENT_FILE: &str = "experiment.json";
pub const REPORT_FILE: &str = "report.json";

pub fn run_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Trains every seed of `exp`, writing `<out>/seed_<s>/{report.json, *.ckpt}`,
/// the experiment file and the aggregated `eval.json` / `eval.txt`.
pub fn train_runs(data: &Datasets, exp: &Experiment, out: &Path) -> Result<(Vec<RunReport>, EvalReport)> {
    exp.validate()?;
    create_dir(out)?;
    write_json(&out.join(EXPERIMENT_FILE), exp)?;
    let mut reports = Vec::new();
    for seed in exp.train.run_seeds() {
        let trained = train(data, exp, seed)?;
        let dir = run_dir(out, seed);
        save_run(&trained.models, &exp.model, exp.train.strategy, &dir)?;
        trained.report.save(&dir.join(REPORT_FILE))?;
        reports.push(trained.report);
    }
    let eval = aggregate_reports(&reports)?;
    write_json(&out.join("eval.json"), &eval)?;
    std::fs::write(out.join("eval.txt"), eval.to_table(true)).map_err(|e| TrainError::Io {
        path: out.join("eval.txt").display().to_string(),
        source: e,
    })?;
    Ok((reports, eval))
}

pub fn aggregate_reports(reports: &[RunReport]) -> Result<EvalReport> {
    let runs: Vec<_> = reports.iter().map(|r| r.frame_scores.clone()).collect();
    Ok(aggregate(PoseFrame::Device, &runs)?)
}
