//! Heatmap-to-pose autoencoder with pose and heatmap-reconstruction branches.

use egopose_core::skeleton::{NUM_HEATMAP_JOINTS, NUM_JOINTS};
use egopose_nn::layers::{Conv2d, ConvTranspose2d, Linear};
use egopose_nn::{Float, Graph, ParamId, ParamStore, Var};
use rand::Rng;

use crate::config::Pose3DConfig;
use crate::{ModelError, Result};

pub const PREFIX: &str = "pose3d";

#[derive(Debug, Clone)]
pub struct Pose3DOutput {
    /// `[n, 48]` joint coordinates in cm.
    pub pose: Var,
    pub recon_left: Var,
    pub recon_right: Option<Var>,
    pub embedding: Var,
}

#[derive(Debug, Clone)]
pub struct Pose3DNet {
    pub config: Pose3DConfig,
    pub views: usize,
    encoder: Vec<Conv2d>,
    embed: Linear,
    pose_hidden: Linear,
    pose_out: Linear,
    hm_fc: Linear,
    deconvs: Vec<ConvTranspose2d>,
    param_range: std::ops::Range<usize>,
}

impl Pose3DNet {
    /// `views` is 2 for stereo inputs and 1 for the monocular baseline.
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        config: &Pose3DConfig,
        views: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if !(1..=2).contains(&views) {
            return Err(ModelError::Config(format!("views must be 1 or 2, got {views}")));
        }
        let start = store.len();
        let cin = NUM_HEATMAP_JOINTS * views;
        let mut c = cin;
        let mut encoder = Vec::new();
        for (i, &cout) in config.encoder_channels.iter().enumerate() {
            encoder.push(Conv2d::new(store, &format!("{PREFIX}.enc{i}"), c, cout, 3, 2, 1, true, rng));
            c = cout;
        }
        let b = config.bottleneck_size();
        let flat = c * b * b;
        let embed = Linear::new(store, &format!("{PREFIX}.embed"), flat, config.embedding_dim, rng);
        let pose_hidden = Linear::new(store, &format!("{PREFIX}.pose_fc1"), config.embedding_dim, config.pose_hidden, rng);
        let pose_out = Linear::new(store, &format!("{PREFIX}.pose_fc2"), config.pose_hidden, NUM_JOINTS * 3, rng);
        let hm_fc = Linear::new(store, &format!("{PREFIX}.hm_fc"), config.embedding_dim, flat, rng);
        let mut deconvs = Vec::new();
        let chans = &config.encoder_channels;
        for i in (0..chans.len()).rev() {
            let cout = if i == 0 { cin } else { chans[i - 1] };
            deconvs.push(ConvTranspose2d::new(store, &format!("{PREFIX}.dec{i}"), chans[i], cout, 4, 2, 1, true, rng));
        }
        Ok(Self {
            config: config.clone(),
            views,
            encoder,
            embed,
            pose_hidden,
            pose_out,
            hm_fc,
            deconvs,
            param_range: start..store.len(),
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.param_range.clone().map(ParamId).collect()
    }

    pub fn param_count<T: Float>(&self, store: &ParamStore<T>) -> usize {
        self.param_ids().into_iter().map(|id| store.get(id).len()).sum()
    }

    /// Encodes channel-concatenated heatmaps and decodes both branches.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, left: Var, right: Option<Var>) -> Result<Pose3DOutput> {
        let size = self.config.heatmap_size;
        let expect = vec![g.shape(left)[0], NUM_HEATMAP_JOINTS, size, size];
        for v in std::iter::once(left).chain(right) {
            if g.shape(v) != expect.as_slice() {
                return Err(ModelError::Shape {
                    expected: expect,
                    actual: g.shape(v).to_vec(),
                });
            }
        }
        let x = match (self.views, right) {
            (2, Some(r)) => g.concat(&[left, r]),
            (1, None) => left,
            _ => return Err(ModelError::Config(format!("3D module built for {} view(s)", self.views))),
        };
        let n = expect[0];
        let mut y = x;
        for conv in &self.encoder {
            let z = conv.forward(g, y);
            y = g.relu(z);
        }
        let flat_len = g.value(y).len() / n;
        let flat = g.reshape(y, vec![n, flat_len]);
        let e = self.embed.forward(g, flat);
        let embedding = g.relu(e);

        let h = self.pose_hidden.forward(g, embedding);
        let h = g.relu(h);
        let p = self.pose_out.forward(g, h);
        let pose = g.scale(p, self.config.pose_scale);

        let r = self.hm_fc.forward(g, embedding);
        let r = g.relu(r);
        let b = self.config.bottleneck_size();
        let top = *self.config.encoder_channels.last().unwrap();
        let mut d = g.reshape(r, vec![n, top, b, b]);
        for (k, deconv) in self.deconvs.iter().enumerate() {
            d = deconv.forward(g, d);
            if k + 1 < self.deconvs.len() {
                d = g.relu(d);
            }
        }
        let (recon_left, recon_right) = if self.views == 2 {
            let l = g.slice_channels(d, 0, NUM_HEATMAP_JOINTS);
            let r = g.slice_channels(d, NUM_HEATMAP_JOINTS, NUM_HEATMAP_JOINTS);
            (l, Some(r))
        } else {
            (d, None)
        };
        Ok(Pose3DOutput {
            pose,
            recon_left,
            recon_right,
            embedding,
        })
    }
}
