use egopose_core::skeleton::NUM_HEATMAP_JOINTS;
use egopose_model::losses::{cos_loss, loss_2d, loss_3d, mpjpe_loss};
use egopose_model::{ModelConfig, Models, Pose2DConfig, Pose2DNet, Pose3DConfig, Pose3DNet, Variant};
use egopose_nn::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: Vec<usize>, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn small_2d(variant: Variant, weight_sharing: bool) -> Pose2DConfig {
    Pose2DConfig {
        variant,
        weight_sharing,
        base_width: 4,
        input_size: 64,
        ..Pose2DConfig::default()
    }
}

#[test]
fn full_size_output_shapes() {
    let config = ModelConfig {
        pose2d: Pose2DConfig {
            base_width: 8,
            ..Pose2DConfig::default()
        },
        ..ModelConfig::default()
    };
    let models = Models::<f32>::new(&config, 0).unwrap();
    let mut g = Graph::new(&models.store);
    let l = g.input(random(vec![1, 3, 256, 256], 1));
    let r = g.input(random(vec![1, 3, 256, 256], 2));
    let out = models.pose2d.forward(&mut g, l, Some(r), false).unwrap();
    assert_eq!(g.shape(out.left), &[1, NUM_HEATMAP_JOINTS, 64, 64]);
    assert_eq!(g.shape(out.right.unwrap()), &[1, NUM_HEATMAP_JOINTS, 64, 64]);
    let p = models.pose3d.forward(&mut g, out.left, out.right).unwrap();
    assert_eq!(g.shape(p.pose), &[1, 48]);
    assert_eq!(g.shape(p.recon_left), &[1, NUM_HEATMAP_JOINTS, 64, 64]);
    assert_eq!(g.shape(p.recon_right.unwrap()), &[1, NUM_HEATMAP_JOINTS, 64, 64]);
}

#[test]
fn wrong_input_shape_is_rejected() {
    let mut store = ParamStore::<f32>::new();
    let net = Pose2DNet::new(&mut store, &small_2d(Variant::StereoShared, true), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut g = Graph::new(&store);
    let l = g.input(random(vec![1, 3, 32, 32], 1));
    assert!(net.forward(&mut g, l, Some(l), false).is_err());
    let l = g.input(random(vec![1, 3, 64, 64], 1));
    assert!(net.forward(&mut g, l, None, false).is_err());
}

#[test]
fn identical_views_give_identical_features_with_shared_weights() {
    let mut store = ParamStore::<f32>::new();
    let net = Pose2DNet::new(&mut store, &small_2d(Variant::StereoShared, true), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut g = Graph::new(&store);
    let x = random(vec![2, 3, 64, 64], 4);
    let l = g.input(x.clone());
    let r = g.input(x);
    let out = net.forward(&mut g, l, Some(r), true).unwrap();
    for (a, b) in out.features_left.iter().zip(&out.features_right) {
        assert_eq!(g.value(*a), g.value(*b));
    }
}

#[test]
fn encoder_parameter_counts_by_variant() {
    let count = |v, ws| {
        let mut store = ParamStore::<f32>::new();
        let net = Pose2DNet::new(&mut store, &small_2d(v, ws), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        net.encoder_param_count(&store)
    };
    let shared = count(Variant::StereoShared, true);
    assert_eq!(shared, count(Variant::Monocular, true));
    assert_eq!(2 * shared, count(Variant::StereoDual, true));
    assert_eq!(2 * shared, count(Variant::StereoShared, false));
}

#[test]
fn weight_sharing_flag_only_for_stereo_shared() {
    assert!(small_2d(Variant::Monocular, false).validate().is_err());
    assert!(small_2d(Variant::StereoShared, false).validate().is_ok());
}

#[test]
fn monocular_emits_one_stack_and_lifts_from_it() {
    let config = ModelConfig {
        pose2d: small_2d(Variant::Monocular, true),
        pose3d: Pose3DConfig {
            heatmap_size: 16,
            encoder_channels: vec![8, 8],
            embedding_dim: 32,
            pose_hidden: 32,
            ..Pose3DConfig::default()
        },
    };
    let models = Models::<f32>::new(&config, 3).unwrap();
    let mut g = Graph::new(&models.store);
    let l = g.input(random(vec![2, 3, 64, 64], 1));
    let out = models.pose2d.forward(&mut g, l, None, false).unwrap();
    assert!(out.right.is_none());
    let p = models.pose3d.forward(&mut g, out.left, None).unwrap();
    assert!(p.recon_right.is_none());
    assert_eq!(g.shape(p.recon_left), &[2, NUM_HEATMAP_JOINTS, 16, 16]);
}

#[test]
fn zero_heatmaps_give_finite_outputs() {
    let (_, c3) = ModelConfig::miniature();
    let mut store = ParamStore::<f32>::new();
    let net = Pose3DNet::new(&mut store, &c3, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut g = Graph::new(&store);
    let z = g.input(Tensor::zeros(vec![1, 15, 8, 8]));
    let out = net.forward(&mut g, z, Some(z)).unwrap();
    for v in [out.pose, out.recon_left, out.recon_right.unwrap()] {
        assert!(g.value(v).data().iter().all(|x| x.is_finite()));
    }
}

#[test]
fn same_seed_same_initialization_and_first_loss() {
    let config = ModelConfig {
        pose2d: small_2d(Variant::StereoShared, true),
        pose3d: Pose3DConfig {
            heatmap_size: 16,
            encoder_channels: vec![8],
            embedding_dim: 16,
            pose_hidden: 16,
            ..Pose3DConfig::default()
        },
    };
    let loss = |seed| {
        let m = Models::<f32>::new(&config, seed).unwrap();
        let mut g = Graph::new(&m.store);
        let l = g.input(random(vec![2, 3, 64, 64], 1));
        let r = g.input(random(vec![2, 3, 64, 64], 2));
        let out = m.pose2d.forward(&mut g, l, Some(r), true).unwrap();
        let t = g.input(Tensor::zeros(vec![2, 15, 16, 16]));
        let loss = loss_2d(&mut g, &[out.left, out.right.unwrap()], &[t, t]);
        (m.store.checksum(""), g.value(loss).item())
    };
    let a = loss(5);
    assert_eq!(a, loss(5));
    assert_ne!(a.0, loss(6).0);
    assert!(a.1.is_finite() && a.1 > 0.0);
}

#[test]
fn loss_identities() {
    // Bone-chain toy pose scaled to realistic lengths.
    let pose: Vec<f64> = (0..48).map(|i| ((i * 37) % 17) as f64 * 3.0 - 20.0).collect();
    let store = ParamStore::<f64>::new();
    let mut g = Graph::new(&store);
    let p = g.input(Tensor::new(vec![1, 48], pose.clone()));
    let c = cos_loss(&mut g, p, p);
    assert_eq!(g.value(c).item(), -15.0);
    let doubled = g.input(Tensor::new(vec![1, 48], pose.iter().map(|x| 2.0 * x).collect()));
    let c2 = cos_loss(&mut g, p, doubled);
    assert!((g.value(c2).item() + 15.0).abs() < 1e-12);
    let m = mpjpe_loss(&mut g, p, p);
    assert_eq!(g.value(m).item(), 0.0);

    let h = g.input(Tensor::full(vec![1, 15, 2, 2], 0.25));
    let h1 = g.input(Tensor::full(vec![1, 15, 2, 2], 1.25));
    let cfg = Pose3DConfig::default();
    let terms = loss_3d(&mut g, &cfg, p, p, &[h, h], &[h, h]);
    assert_eq!(g.value(terms.total).item(), -0.015);
    let terms = loss_3d(&mut g, &cfg, p, p, &[h, h], &[h1, h1]);
    assert!((g.value(terms.total).item() + 0.013).abs() < 1e-15);
    let zero_hm = Pose3DConfig {
        lambda_hm: 0.0,
        ..cfg.clone()
    };
    let terms = loss_3d(&mut g, &zero_hm, p, p, &[h, h], &[h1, h1]);
    assert_eq!(g.value(terms.total).item(), -0.015);
}

#[test]
fn pretrained_encoder_weights_are_loaded() {
    let dir = tempfile::tempdir().unwrap();
    let mut donor_store = ParamStore::<f32>::new();
    let donor = Pose2DNet::new(&mut donor_store, &small_2d(Variant::Monocular, true), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    // Re-export the donor encoder with names relative to the encoder.
    let enc = donor.encoders()[0];
    let mut rel = ParamStore::<f32>::new();
    for id in enc.param_range.clone().map(egopose_nn::ParamId) {
        let e = donor_store.entry(id);
        rel.add(e.name.strip_prefix("pose2d.encoder.").unwrap(), e.value.clone(), e.trainable);
    }
    let path = dir.path().join("enc.bin");
    rel.to_bundle("pretrained").save(&path).unwrap();

    let cfg = Pose2DConfig {
        pretrained_encoder: Some(path.display().to_string()),
        ..small_2d(Variant::StereoDual, true)
    };
    let mut store = ParamStore::<f32>::new();
    let net = Pose2DNet::new(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for e in net.encoders() {
        for (a, b) in e.param_range.clone().zip(enc.param_range.clone()) {
            assert_eq!(store.get(egopose_nn::ParamId(a)), donor_store.get(egopose_nn::ParamId(b)));
        }
    }
}
