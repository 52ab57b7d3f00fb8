//! Stereo heatmap network and its single-view baselines.

use egopose_core::skeleton::NUM_HEATMAP_JOINTS;
use egopose_core::tensorio::TensorBundle;
use egopose_nn::layers::{BatchNorm2d, Conv2d};
use egopose_nn::{Float, Graph, ParamId, ParamStore, Var};
use rand::Rng;

use crate::config::{Pose2DConfig, Variant};
use crate::resnet::ResNetEncoder;
use crate::{ModelError, Result};

pub const PREFIX: &str = "pose2d";

/// Heatmap heads start near zero output.
const HEAD_INIT_STD: f64 = 1e-3;

/// Upsampling decoder fed by channel-concatenated skip features.
#[derive(Debug, Clone)]
pub struct Decoder {
    stages: Vec<(Conv2d, BatchNorm2d)>,
    head: Conv2d,
    views: usize,
}

impl Decoder {
    /// `skip_channels[i]` is the per-view channel count at encoder stage `i`.
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        skip_channels: &[usize],
        views: usize,
        rng: &mut R,
    ) -> Self {
        let deepest = skip_channels.len() - 1;
        let mut cin = skip_channels[deepest] * views;
        let mut stages = Vec::new();
        for i in (0..deepest).rev() {
            let cout = skip_channels[i];
            let name = format!("{prefix}.up{i}");
            stages.push((
                Conv2d::new(store, &format!("{name}.conv"), cin + views * skip_channels[i], cout, 3, 1, 1, false, rng),
                BatchNorm2d::new(store, &format!("{name}.bn"), cout),
            ));
            cin = cout;
        }
        let cout = NUM_HEATMAP_JOINTS * views;
        let head = Conv2d {
            weight: store.add_normal(format!("{prefix}.head.weight"), vec![cout, cin, 1, 1], HEAD_INIT_STD, rng),
            bias: Some(store.add_const(format!("{prefix}.head.bias"), vec![cout], 0.0, true)),
            stride: 1,
            pad: 0,
        };
        Self { stages, head, views }
    }

    /// `skips[i]` holds one feature map per view for encoder stage `i`.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, skips: &[Vec<Var>], train: bool) -> Var {
        let deepest = skips.len() - 1;
        assert!(skips.iter().all(|s| s.len() == self.views));
        let mut d = if self.views == 1 {
            skips[deepest][0]
        } else {
            g.concat(&skips[deepest])
        };
        for (k, i) in (0..deepest).rev().enumerate() {
            let up = g.upsample2x(d);
            let mut parts = vec![up];
            parts.extend_from_slice(&skips[i]);
            let cat = g.concat(&parts);
            let (conv, bn) = &self.stages[k];
            let y = conv.forward(g, cat);
            let y = bn.forward(g, y, train);
            d = g.relu(y);
        }
        self.head.forward(g, d)
    }
}

#[derive(Debug, Clone)]
enum Layout {
    Shared { encoder: ResNetEncoder, decoder: Decoder },
    Unshared { left: ResNetEncoder, right: ResNetEncoder, decoder: Decoder },
    Dual { left: (ResNetEncoder, Decoder), right: (ResNetEncoder, Decoder) },
    Mono { encoder: ResNetEncoder, decoder: Decoder },
}

#[derive(Debug, Clone)]
pub struct Pose2DOutput {
    /// `[n, 15, h, w]` heatmaps of the left view.
    pub left: Var,
    /// Right-view heatmaps; `None` for the monocular variant.
    pub right: Option<Var>,
    /// Encoder stage outputs per view (left, right).
    pub features_left: Vec<Var>,
    pub features_right: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct Pose2DNet {
    pub config: Pose2DConfig,
    layout: Layout,
    param_range: std::ops::Range<usize>,
}

impl Pose2DNet {
    pub fn new<T: Float, R: Rng + ?Sized>(store: &mut ParamStore<T>, config: &Pose2DConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let start = store.len();
        let enc = |store: &mut ParamStore<T>, name: &str, rng: &mut R| {
            ResNetEncoder::new(store, name, config.backbone_depth, config.base_width, config.stages, rng)
                .expect("validated encoder config")
        };
        let layout = match (config.variant, config.weight_sharing) {
            (Variant::StereoShared, true) => {
                let encoder = enc(store, &format!("{PREFIX}.encoder"), rng);
                let decoder = Decoder::new(store, &format!("{PREFIX}.decoder"), &encoder.stage_channels, 2, rng);
                Layout::Shared { encoder, decoder }
            }
            (Variant::StereoShared, false) => {
                let left = enc(store, &format!("{PREFIX}.encoder_left"), rng);
                let right = enc(store, &format!("{PREFIX}.encoder_right"), rng);
                let decoder = Decoder::new(store, &format!("{PREFIX}.decoder"), &left.stage_channels, 2, rng);
                Layout::Unshared { left, right, decoder }
            }
            (Variant::StereoDual, _) => {
                let mut module = |side: &str, rng: &mut R| {
                    let e = enc(store, &format!("{PREFIX}.{side}.encoder"), rng);
                    let d = Decoder::new(store, &format!("{PREFIX}.{side}.decoder"), &e.stage_channels, 1, rng);
                    (e, d)
                };
                let left = module("left", rng);
                let right = module("right", rng);
                Layout::Dual { left, right }
            }
            (Variant::Monocular, _) => {
                let encoder = enc(store, &format!("{PREFIX}.encoder"), rng);
                let decoder = Decoder::new(store, &format!("{PREFIX}.decoder"), &encoder.stage_channels, 1, rng);
                Layout::Mono { encoder, decoder }
            }
        };
        let net = Self {
            config: config.clone(),
            layout,
            param_range: start..store.len(),
        };
        if let Some(path) = &config.pretrained_encoder {
            let bundle = TensorBundle::load(std::path::Path::new(path))?;
            net.load_pretrained_encoders(store, &bundle)?;
        }
        Ok(net)
    }

    pub fn encoders(&self) -> Vec<&ResNetEncoder> {
        match &self.layout {
            Layout::Shared { encoder, .. } | Layout::Mono { encoder, .. } => vec![encoder],
            Layout::Unshared { left, right, .. } => vec![left, right],
            Layout::Dual { left, right } => vec![&left.0, &right.0],
        }
    }

    /// Copies encoder weights from a bundle whose names omit the encoder prefix.
    pub fn load_pretrained_encoders<T: Float>(&self, store: &mut ParamStore<T>, bundle: &TensorBundle) -> Result<()> {
        for e in self.encoders() {
            let mut sub = ParamStore::<T>::new();
            let ids: Vec<ParamId> = e.param_range.clone().map(ParamId).collect();
            for id in &ids {
                let entry = store.entry(*id);
                let name = entry.name.strip_prefix(&format!("{}.", e.prefix)).unwrap_or(&entry.name);
                sub.add(name, entry.value.clone(), entry.trainable);
            }
            sub.load_bundle(bundle)?;
            for (k, id) in ids.iter().enumerate() {
                *store.get_mut(*id) = sub.get(ParamId(k)).clone();
            }
        }
        Ok(())
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.param_range.clone().map(ParamId).collect()
    }

    pub fn encoder_param_count<T: Float>(&self, store: &ParamStore<T>) -> usize {
        self.encoders().iter().map(|e| e.trainable_count(store)).sum()
    }

    pub fn param_count<T: Float>(&self, store: &ParamStore<T>) -> usize {
        self.param_ids()
            .into_iter()
            .filter(|id| store.entry(*id).trainable)
            .map(|id| store.get(id).len())
            .sum()
    }

    fn check_input<T: Float>(&self, g: &Graph<'_, T>, x: Var) -> Result<()> {
        let s = g.shape(x);
        let size = self.config.input_size;
        if s.len() != 4 || s[1] != 3 || s[2] != size || s[3] != size {
            return Err(ModelError::Shape {
                expected: vec![0, 3, size, size],
                actual: s.to_vec(),
            });
        }
        Ok(())
    }

    /// Runs the module on normalized `[n, 3, s, s]` image batches. `right`
    /// is required for stereo variants and ignored for the monocular one.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, left: Var, right: Option<Var>, train: bool) -> Result<Pose2DOutput> {
        self.check_input(g, left)?;
        let need_right = self.config.variant != Variant::Monocular;
        let right = match (need_right, right) {
            (true, Some(r)) => {
                self.check_input(g, r)?;
                if g.shape(r)[0] != g.shape(left)[0] {
                    return Err(ModelError::Shape {
                        expected: g.shape(left).to_vec(),
                        actual: g.shape(r).to_vec(),
                    });
                }
                Some(r)
            }
            (true, None) => return Err(ModelError::Config("stereo variant needs a right image".into())),
            (false, _) => None,
        };
        let zip = |a: &[Var], b: &[Var]| a.iter().zip(b).map(|(x, y)| vec![*x, *y]).collect::<Vec<_>>();
        let j = NUM_HEATMAP_JOINTS;
        Ok(match &self.layout {
            Layout::Shared { encoder, decoder } => {
                let fl = encoder.forward(g, left, train);
                let fr = encoder.forward(g, right.unwrap(), train);
                let h = decoder.forward(g, &zip(&fl, &fr), train);
                let hl = g.slice_channels(h, 0, j);
                let hr = g.slice_channels(h, j, j);
                Pose2DOutput {
                    left: hl,
                    right: Some(hr),
                    features_left: fl,
                    features_right: fr,
                }
            }
            Layout::Unshared {
                left: el,
                right: er,
                decoder,
            } => {
                let fl = el.forward(g, left, train);
                let fr = er.forward(g, right.unwrap(), train);
                let h = decoder.forward(g, &zip(&fl, &fr), train);
                let hl = g.slice_channels(h, 0, j);
                let hr = g.slice_channels(h, j, j);
                Pose2DOutput {
                    left: hl,
                    right: Some(hr),
                    features_left: fl,
                    features_right: fr,
                }
            }
            Layout::Dual { left: ml, right: mr } => {
                let fl = ml.0.forward(g, left, train);
                let fr = mr.0.forward(g, right.unwrap(), train);
                let sl: Vec<Vec<Var>> = fl.iter().map(|v| vec![*v]).collect();
                let sr: Vec<Vec<Var>> = fr.iter().map(|v| vec![*v]).collect();
                let hl = ml.1.forward(g, &sl, train);
                let hr = mr.1.forward(g, &sr, train);
                Pose2DOutput {
                    left: hl,
                    right: Some(hr),
                    features_left: fl,
                    features_right: fr,
                }
            }
            Layout::Mono { encoder, decoder } => {
                let fl = encoder.forward(g, left, train);
                let sl: Vec<Vec<Var>> = fl.iter().map(|v| vec![*v]).collect();
                let hl = decoder.forward(g, &sl, train);
                Pose2DOutput {
                    left: hl,
                    right: None,
                    features_left: fl,
                    features_right: Vec::new(),
                }
            }
        })
    }
}
