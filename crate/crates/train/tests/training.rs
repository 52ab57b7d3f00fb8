use std::path::Path;
use std::sync::OnceLock;

use egopose_core::synth::{build_dataset, GenConfig};
use egopose_model::losses::{loss_2d, loss_3d};
use egopose_model::{ModelConfig, Models, Pose3DConfig, Variant};
use egopose_nn::{Adam, Graph, ParamId, Tensor};
use egopose_train::report::Phase;
use egopose_train::run::{batch_loss, train_step};
use egopose_train::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset() -> &'static Path {
    static ROOT: OnceLock<std::path::PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("train_dataset");
        let _ = std::fs::remove_dir_all(&root);
        let cfg = GenConfig {
            motions: 10,
            duration_s: 0.4,
            seed: 21,
            ..GenConfig::default()
        };
        build_dataset(&cfg, &root).unwrap();
        root
    })
}

fn tiny() -> Experiment {
    let mut exp = Experiment::default();
    let p = &mut exp.model.pose2d;
    p.base_width = 4;
    p.stages = 2;
    p.input_size = 64;
    exp.model.pose3d = Pose3DConfig {
        heatmap_size: 16,
        encoder_channels: vec![8, 8],
        embedding_dim: 32,
        pose_hidden: 32,
        ..Pose3DConfig::default()
    };
    exp.train.epochs = 2;
    exp.train.batch_size = 4;
    exp.train.runs = 1;
    exp
}

#[test]
fn datasets_subsample_and_resize() {
    let mut exp = tiny();
    exp.train.max_train_frames = Some(5);
    let data = Datasets::open(dataset(), &exp).unwrap();
    assert_eq!(data.train.len(), 5);
    assert!(data.val.is_some());
    let batch = data.train.batch(&[0, 3], &exp.model.pose2d, 2.0).unwrap();
    assert_eq!(batch.left.shape(), &[2, 3, 64, 64]);
    assert_eq!(batch.heatmaps_right.as_ref().unwrap().shape(), &[2, 15, 16, 16]);
    assert_eq!(batch.pose.shape(), &[2, 48]);
    assert_eq!(batch.samples[0].image_size, 256);

    exp.model.pose2d.variant = Variant::Monocular;
    let mono = Datasets::open(dataset(), &exp).unwrap();
    let batch = mono.train.batch(&[0], &exp.model.pose2d, 2.0).unwrap();
    assert!(batch.right.is_none() && batch.heatmaps_right.is_none());
}

#[test]
fn missing_dataset_is_reported_with_its_path() {
    let err = Datasets::open(Path::new("/no/such/root"), &tiny()).unwrap_err();
    assert!(err.is_data_error());
    assert!(err.to_string().contains("/no/such/root"));
}

#[test]
fn config_validation() {
    let mut exp = tiny();
    exp.train.epochs = 3;
    assert!(exp.validate().is_err());
    exp.train.epochs = 4;
    exp.train.runs = 0;
    assert!(exp.validate().is_err());
    exp.train.runs = 2;
    exp.train.seeds = vec![5, 5];
    assert!(exp.validate().is_err());
    exp.train.seeds = vec![5, 9];
    assert_eq!(exp.train.run_seeds(), vec![5, 9]);
    exp.train.seeds.clear();
    exp.train.seed = 7;
    assert_eq!(exp.train.run_seeds(), vec![7, 8]);
    assert!(exp.validate().is_ok());

    let text = serde_json::to_string(&exp).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    std::fs::write(&path, text).unwrap();
    assert_eq!(Experiment::load(&path).unwrap(), exp);
}

#[test]
fn separate_training_freezes_2d_and_is_deterministic() {
    let data = Datasets::open(dataset(), &tiny()).unwrap();
    let a = train_separate(&data, &tiny(), 3).unwrap();
    let b = train_separate(&data, &tiny(), 3).unwrap();
    assert_eq!(a.report.checksum(), b.report.checksum());
    assert_eq!(a.report.losses(Phase::Pose2D), b.report.losses(Phase::Pose2D));
    assert_eq!(a.report.param_checksum, b.report.param_checksum);

    let r = &a.report;
    assert_eq!(r.epochs.len(), 4);
    let phase1: Vec<_> = r.epochs.iter().filter(|e| e.phase == Phase::Pose2D).collect();
    let phase2: Vec<_> = r.epochs.iter().filter(|e| e.phase == Phase::Pose3D).collect();
    assert_ne!(phase1[0].pose2d_checksum, phase1[1].pose2d_checksum);
    for e in &phase2 {
        assert_eq!(e.pose2d_checksum, phase1[1].pose2d_checksum);
    }
    assert!(r.epochs.iter().all(|e| e.train_loss.is_finite() && e.val_loss.is_some()));
    assert_eq!(r.frame_scores.len(), data.eval.len());

    let c = train_separate(&data, &tiny(), 4).unwrap();
    assert_ne!(c.report.param_checksum, r.param_checksum);
}

#[test]
fn end_to_end_training_is_deterministic_and_moves_both_modules() {
    let data = Datasets::open(dataset(), &tiny()).unwrap();
    let a = train_end2end(&data, &tiny(), 3).unwrap();
    let b = train_end2end(&data, &tiny(), 3).unwrap();
    assert_eq!(a.report.checksum(), b.report.checksum());
    assert!(a.report.epochs.iter().all(|e| e.phase == Phase::EndToEnd));
    let fresh = Models::<f32>::new(&tiny().model, 3).unwrap();
    assert_ne!(fresh.store.checksum("pose2d"), a.models.store.checksum("pose2d"));
    assert_ne!(fresh.store.checksum("pose3d"), a.models.store.checksum("pose3d"));
}

#[test]
fn zero_3d_weight_reduces_to_a_2d_step() {
    let mut exp = tiny();
    exp.train.loss3d_weight = 0.0;
    let data = Datasets::open(dataset(), &exp).unwrap();
    let batch = data.train.batch(&[0, 1, 2, 3], &exp.model.pose2d, 2.0).unwrap();
    let base = Models::<f32>::new(&exp.model, 5).unwrap();
    let ids2d = base.pose2d.param_ids();
    let all: Vec<ParamId> = ids2d.iter().chain(&base.pose3d.param_ids()).copied().collect();

    let mut joint = base.clone();
    let mut opt = Adam::new(exp.train.adam());
    train_step(&mut joint, &mut opt, &all, &exp, Phase::EndToEnd, &batch, None, 1e-3).unwrap();
    let mut pure = base.clone();
    let mut opt = Adam::new(exp.train.adam());
    train_step(&mut pure, &mut opt, &ids2d, &exp, Phase::Pose2D, &batch, None, 1e-3).unwrap();

    for id in base.store.ids() {
        let diff = joint.store.get(id).max_abs_diff(pure.store.get(id));
        assert!(diff < 1e-9, "{}: {diff}", base.store.entry(id).name);
    }
}

#[test]
fn first_batch_2d_loss_is_finite_and_positive() {
    let exp = tiny();
    let data = Datasets::open(dataset(), &exp).unwrap();
    let batch = data.train.batch(&[0, 1], &exp.model.pose2d, 2.0).unwrap();
    let models = Models::<f32>::new(&exp.model, 0).unwrap();
    let mut g = Graph::new(&models.store);
    let loss = batch_loss(&mut g, &models, &exp, Phase::Pose2D, &batch, None, true).unwrap();
    let v = g.value(loss).item();
    assert!(v.is_finite() && v > 0.0);
}

#[test]
fn combined_loss_reaches_the_2d_encoder() {
    // Finite-difference probe in f64 on the miniature config: the 3D loss
    // alone has a nonzero derivative w.r.t. a first-layer encoder weight.
    let (mut c2, c3) = ModelConfig::miniature();
    c2.input_size = 4 * c3.heatmap_size;
    let config = ModelConfig { pose2d: c2, pose3d: c3 };
    let mut models = Models::<f64>::new(&config, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = config.pose2d.input_size;
    let mut rand_t = |shape: Vec<usize>, k: f64| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-k..k)).collect())
    };
    let (left, right, target) = (rand_t(vec![2, 3, s, s], 1.0), rand_t(vec![2, 3, s, s], 1.0), rand_t(vec![2, 48], 40.0));
    let hm = config.pose2d.heatmap_size();
    let zeros = Tensor::<f64>::zeros(vec![2, 15, hm, hm]);
    let eval = |m: &Models<f64>, w3d: f64| {
        let mut g = Graph::new(&m.store);
        let l = g.input(left.clone());
        let r = g.input(right.clone());
        let out = m.pose2d.forward(&mut g, l, Some(r), true).unwrap();
        let z = g.input(zeros.clone());
        let l2 = loss_2d(&mut g, &[out.left, out.right.unwrap()], &[z, z]);
        let p = m.pose3d.forward(&mut g, out.left, out.right).unwrap();
        let t = g.input(target.clone());
        let l3 = loss_3d(&mut g, &config.pose3d, t, p.pose, &[out.left, out.right.unwrap()], &[p.recon_left, p.recon_right.unwrap()]);
        let w = g.scale(l3.total, w3d);
        let total = g.add(l2, w);
        (g.value(total).item(), g.backward(total))
    };
    let id = models.store.find("pose2d.encoder.stem.conv.weight").expect("stem conv weight");
    let (_, with3d) = eval(&models, 1.0);
    let (_, without) = eval(&models, 0.0);
    let a = with3d.param(id).unwrap().data()[0];
    let b = without.param(id).unwrap().data()[0];
    assert!((a - b).abs() > 1e-9, "3D loss adds no encoder gradient: {a} vs {b}");

    let h = 1e-6;
    let orig = models.store.get(id).data()[0];
    models.store.get_mut(id).data_mut()[0] = orig + h;
    let (up, _) = eval(&models, 1.0);
    let (up0, _) = eval(&models, 0.0);
    models.store.get_mut(id).data_mut()[0] = orig - h;
    let (down, _) = eval(&models, 1.0);
    let (down0, _) = eval(&models, 0.0);
    let fd_3d = ((up - down) - (up0 - down0)) / (2.0 * h);
    assert!(fd_3d.abs() > 1e-9);
    assert!(((a - b) - fd_3d).abs() <= 1e-4 * fd_3d.abs().max(1e-6), "{} vs {fd_3d}", a - b);
}

#[test]
fn ablation_grid_cells_and_table() {
    let full = AblationGrid::default();
    // stereo-shared: 4 backbones x 2 sharing x 2 strategies; others drop sharing-off.
    assert_eq!(full.cells().len(), 16 + 8 + 8);
    assert!(full
        .cells()
        .iter()
        .all(|c| c.weight_sharing || c.variant == Variant::StereoShared));

    let grid = AblationGrid {
        backbones: vec![18],
        weight_sharing: vec![true, false],
        strategies: vec![Strategy::Separate],
        variants: vec![Variant::StereoShared],
    };
    let mut exp = tiny();
    exp.train.runs = 2;
    exp.train.max_train_frames = Some(4);
    exp.train.max_val_frames = Some(0);
    exp.train.max_eval_frames = Some(4);
    let results = ablation_suite(dataset(), &exp, &grid, None).unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r.error.is_none() && r.reports.len() == 2));
    assert_eq!(
        results[1].encoder_params().unwrap(),
        2 * results[0].encoder_params().unwrap()
    );
    let table = ablation_table(&results);
    let cell = table.lines().nth(1).unwrap();
    let fields: Vec<&str> = cell.split_whitespace().collect();
    // "<mean> (<std>)" with two decimals for both metrics.
    for pair in [&fields[5..7], &fields[7..9]] {
        let mean: Vec<&str> = pair[0].split('.').collect();
        assert_eq!(mean[1].len(), 2, "{cell}");
        assert!(pair[1].starts_with('(') && pair[1].ends_with(')') && pair[1].len() >= 6, "{cell}");
    }

    // A failing cell is isolated.
    let bad = AblationGrid {
        backbones: vec![18, 77],
        ..grid
    };
    let results = ablation_suite(dataset(), &exp, &bad, None).unwrap();
    assert_eq!(results.len(), 4);
    assert_eq!(results.iter().filter(|r| r.error.is_some()).count(), 2);
}
