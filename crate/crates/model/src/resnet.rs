//! Residual encoders (basic blocks for depths 18/34, bottlenecks for 50/101).

use egopose_nn::layers::{BatchNorm2d, Conv2d};
use egopose_nn::{Float, Graph, ParamStore, Var};
use rand::Rng;

pub const STAGE_BLOCKS_18: [usize; 4] = [2, 2, 2, 2];
pub const STAGE_BLOCKS_34: [usize; 4] = [3, 4, 6, 3];
pub const STAGE_BLOCKS_50: [usize; 4] = [3, 4, 6, 3];
pub const STAGE_BLOCKS_101: [usize; 4] = [3, 4, 23, 3];

/// Block counts and whether bottleneck blocks are used for a depth.
pub fn depth_layout(depth: u32) -> Option<([usize; 4], bool)> {
    match depth {
        18 => Some((STAGE_BLOCKS_18, false)),
        34 => Some((STAGE_BLOCKS_34, false)),
        50 => Some((STAGE_BLOCKS_50, true)),
        101 => Some((STAGE_BLOCKS_101, true)),
        _ => None,
    }
}

#[derive(Debug, Clone)]
struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            conv: Conv2d::new(store, &format!("{name}.conv"), cin, cout, k, stride, k / 2, false, rng),
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), cout),
        }
    }

    fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var, train: bool) -> Var {
        let y = self.conv.forward(g, x);
        self.bn.forward(g, y, train)
    }
}

#[derive(Debug, Clone)]
struct Block {
    /// Main path; ReLU between consecutive entries.
    path: Vec<ConvBn>,
    downsample: Option<ConvBn>,
}

impl Block {
    fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var, train: bool) -> Var {
        let mut y = x;
        for (i, cb) in self.path.iter().enumerate() {
            y = cb.forward(g, y, train);
            if i + 1 < self.path.len() {
                y = g.relu(y);
            }
        }
        let shortcut = match &self.downsample {
            Some(d) => d.forward(g, x, train),
            None => x,
        };
        let sum = g.add(y, shortcut);
        g.relu(sum)
    }
}

/// Stem (7×7 stride-2 conv, max pool) followed by `stages` residual stages;
/// stage `i` runs at 1/(4·2^i) of the input resolution.
#[derive(Debug, Clone)]
pub struct ResNetEncoder {
    stem: ConvBn,
    stages: Vec<Vec<Block>>,
    pub stage_channels: Vec<usize>,
    /// Range of parameter indices owned by this encoder.
    pub param_range: std::ops::Range<usize>,
    pub prefix: String,
}

impl ResNetEncoder {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        depth: u32,
        base_width: usize,
        stages: usize,
        rng: &mut R,
    ) -> Option<Self> {
        let (blocks, bottleneck) = depth_layout(depth)?;
        if !(1..=4).contains(&stages) || base_width == 0 {
            return None;
        }
        let start = store.len();
        let stem = ConvBn::new(store, &format!("{prefix}.stem"), 3, base_width, 7, 2, rng);
        let expansion = if bottleneck { 4 } else { 1 };
        let mut cin = base_width;
        let mut all = Vec::new();
        let mut stage_channels = Vec::new();
        for (s, &count) in blocks.iter().take(stages).enumerate() {
            let planes = base_width << s;
            let cout = planes * expansion;
            let mut stage = Vec::new();
            for b in 0..count {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let name = format!("{prefix}.layer{}.{b}", s + 1);
                let path = if bottleneck {
                    vec![
                        ConvBn::new(store, &format!("{name}.a"), cin, planes, 1, 1, rng),
                        ConvBn::new(store, &format!("{name}.b"), planes, planes, 3, stride, rng),
                        ConvBn::new(store, &format!("{name}.c"), planes, cout, 1, 1, rng),
                    ]
                } else {
                    vec![
                        ConvBn::new(store, &format!("{name}.a"), cin, planes, 3, stride, rng),
                        ConvBn::new(store, &format!("{name}.b"), planes, planes, 3, 1, rng),
                    ]
                };
                let downsample = (stride != 1 || cin != cout)
                    .then(|| ConvBn::new(store, &format!("{name}.down"), cin, cout, 1, stride, rng));
                stage.push(Block { path, downsample });
                cin = cout;
            }
            all.push(stage);
            stage_channels.push(cout);
        }
        Some(Self {
            stem,
            stages: all,
            stage_channels,
            param_range: start..store.len(),
            prefix: prefix.to_string(),
        })
    }

    /// Returns the output of every stage, shallowest first.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var, train: bool) -> Vec<Var> {
        let y = self.stem.forward(g, x, train);
        let y = g.relu(y);
        let mut y = g.max_pool(y, 3, 2, 1);
        let mut feats = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            for block in stage {
                y = block.forward(g, y, train);
            }
            feats.push(y);
        }
        feats
    }

    pub fn trainable_count<T: Float>(&self, store: &ParamStore<T>) -> usize {
        self.param_range
            .clone()
            .map(egopose_nn::ParamId)
            .filter(|id| store.entry(*id).trainable)
            .map(|id| store.get(id).len())
            .sum()
    }
}
