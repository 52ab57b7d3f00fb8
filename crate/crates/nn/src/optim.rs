use std::collections::HashMap;

use crate::float::Float;
use crate::graph::Gradients;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; moments are created lazily per parameter.
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: HashMap<ParamId, Vec<T>>,
    v: HashMap<ParamId, Vec<T>>,
}

impl<T: Float> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every parameter in `ids` that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, ids: &[ParamId], lr: f64) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let step_size = T::from_f64(lr / bc1);
        let bc2_sqrt = T::from_f64(bc2.sqrt());
        let eps = T::from_f64(c.eps);
        for id in ids {
            let Some(g) = grads.param(*id) else { continue };
            let value = store.get_mut(*id);
            let m = self.m.entry(*id).or_insert_with(|| vec![T::zero(); g.len()]);
            let v = self.v.entry(*id).or_insert_with(|| vec![T::zero(); g.len()]);
            for (((p, gi), mi), vi) in value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * *gi;
                *vi = b2 * *vi + (T::one() - b2) * *gi * *gi;
                *p -= step_size * *mi / ((*vi).sqrt() / bc2_sqrt + eps);
            }
        }
    }
}

/// Writes batch-norm running statistics collected by a training graph.
pub fn apply_buffer_updates<T: Float>(store: &mut ParamStore<T>, updates: Vec<(ParamId, Tensor<T>)>) {
    for (id, t) in updates {
        *store.get_mut(id) = t;
    }
}
