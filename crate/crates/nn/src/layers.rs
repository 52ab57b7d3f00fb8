//! Parameter bundles for common layers.

use rand::Rng;

use crate::float::Float;
use crate::graph::{BatchNormParams, Graph, Var};
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_kaiming(format!("{name}.weight"), vec![cout, cin, k, k], cin * k * k, rng);
        let bias = bias.then(|| store.add_const(format!("{name}.bias"), vec![cout], 0.0, true));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        // Each output pixel receives about cin * (k/stride)^2 contributions.
        let fan_in = (cin * k * k / (stride * stride)).max(1);
        let weight = store.add_kaiming(format!("{name}.weight"), vec![cin, cout, k, k], fan_in, rng);
        let bias = bias.then(|| store.add_const(format!("{name}.bias"), vec![cout], 0.0, true));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.conv_transpose2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNorm2d {
    pub params: BatchNormParams,
}

impl BatchNorm2d {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            params: BatchNormParams {
                gamma: store.add_const(format!("{name}.gamma"), vec![channels], 1.0, true),
                beta: store.add_const(format!("{name}.beta"), vec![channels], 0.0, true),
                running_mean: store.add_const(format!("{name}.running_mean"), vec![channels], 0.0, false),
                running_var: store.add_const(format!("{name}.running_var"), vec![channels], 1.0, false),
            },
        }
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var, train: bool) -> Var {
        g.batch_norm(x, self.params, train)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        fin: usize,
        fout: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: store.add_kaiming(format!("{name}.weight"), vec![fout, fin], fin, rng),
            bias: store.add_const(format!("{name}.bias"), vec![fout], 0.0, true),
        }
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.linear(x, w, Some(b))
    }
}
