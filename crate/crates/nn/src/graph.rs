//! Tape-based reverse-mode differentiation.

use std::collections::HashMap;

use crate::float::{matmul, Float};
use crate::kernels::{self, ConvGeom};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
/// Guard for the cosine denominators of [`Graph::bone_cosine`].
pub const COS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct BatchNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

enum Op<T> {
    Input,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    ConvT { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Relu { x: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, s: T },
    Concat { xs: Vec<Var> },
    Slice { x: Var, start: usize },
    MaxPool { x: Var, arg: Vec<u32> },
    Upsample { x: Var },
    Linear { x: Var, w: Var, b: Option<Var> },
    Reshape { x: Var },
    Mse { a: Var, b: Var },
    JointDist { a: Var, b: Var },
    BoneCos { a: Var, b: Var, bones: Vec<(usize, usize)> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    params: HashMap<ParamId, Tensor<T>>,
    inputs: HashMap<Var, Tensor<T>>,
}

impl<T: Float> Gradients<T> {
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id)
    }

    pub fn input(&self, v: Var) -> Option<&Tensor<T>> {
        self.inputs.get(&v)
    }

    pub fn params(&self) -> impl Iterator<Item = (&ParamId, &Tensor<T>)> {
        self.params.iter()
    }
}

/// One forward pass over parameters borrowed from a [`ParamStore`].
///
/// Each parameter maps to a single leaf, so applying the same parameter
/// twice (e.g. a shared encoder on both views) sums its gradients.
pub struct Graph<'s, T: Float> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
    buffer_updates: Vec<(ParamId, Tensor<T>)>,
    params_need_grad: bool,
}

impl<'s, T: Float> Graph<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            buffer_updates: Vec::new(),
            params_need_grad: true,
        }
    }

    /// A graph whose parameters are treated as constants.
    pub fn frozen(store: &'s ParamStore<T>) -> Self {
        Self {
            params_need_grad: false,
            ..Self::new(store)
        }
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A constant input.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    /// An input whose gradient is reported by [`Graph::backward`].
    pub fn input_with_grad(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let trainable = self.store.entry(id).trainable;
        let v = self.push(
            self.store.get(id).clone(),
            Op::Param(id),
            trainable && self.params_need_grad,
        );
        self.param_vars.insert(id, v);
        v
    }

    /// Running-statistic updates gathered from training-mode batch norms.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor<T>)> {
        std::mem::take(&mut self.buffer_updates)
    }

    fn conv_geom(&self, x: Var, w: Var, stride: usize, pad: usize) -> ConvGeom {
        let (n, c, h, wd) = self.value(x).dims4();
        let ws = self.shape(w);
        assert_eq!(ws.len(), 4, "conv weight must be rank 4");
        assert_eq!(ws[1], c, "conv weight expects {} input channels, got {c}", ws[1]);
        assert_eq!(ws[2], ws[3], "square kernels only");
        let k = ws[2];
        ConvGeom {
            n,
            c,
            h,
            w: wd,
            o: ws[0],
            k,
            s: stride,
            p: pad,
            ho: kernels::conv_out(h, k, stride, pad),
            wo: kernels::conv_out(wd, k, stride, pad),
        }
    }

    fn conv_t_geom(&self, x: Var, w: Var, stride: usize, pad: usize) -> ConvGeom {
        let (n, c_in, h, wd) = self.value(x).dims4();
        let ws = self.shape(w);
        assert_eq!(ws.len(), 4, "transposed conv weight must be rank 4");
        assert_eq!(ws[0], c_in, "transposed conv expects {} input channels, got {c_in}", ws[0]);
        let k = ws[2];
        ConvGeom {
            n,
            c: ws[1],
            h: kernels::conv_t_out(h, k, stride, pad),
            w: kernels::conv_t_out(wd, k, stride, pad),
            o: c_in,
            k,
            s: stride,
            p: pad,
            ho: h,
            wo: wd,
        }
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let g = self.conv_geom(x, w, stride, pad);
        let mut y = Tensor::zeros(vec![g.n, g.o, g.ho, g.wo]);
        kernels::conv2d_forward(
            &g,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            y.data_mut(),
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(y, Op::Conv { x, w, b, stride, pad }, ng)
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let g = self.conv_t_geom(x, w, stride, pad);
        let mut y = Tensor::zeros(vec![g.n, g.c, g.h, g.w]);
        kernels::conv_t_forward(
            &g,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            y.data_mut(),
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(y, Op::ConvT { x, w, b, stride, pad }, ng)
    }

    /// Per-channel batch normalization of an NCHW tensor. In training mode
    /// batch statistics are used and running-statistic updates are queued.
    pub fn batch_norm(&mut self, x: Var, bn: BatchNormParams, train: bool) -> Var {
        let gamma = self.param(bn.gamma);
        let beta = self.param(bn.beta);
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let m = n * hw;
        let xv = self.value(x).data();
        let eps = T::from_f64(BN_EPS);
        let (mean, var) = if train {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut s = 0.0f64;
                for i in 0..n {
                    s += xv[(i * c + ch) * hw..(i * c + ch + 1) * hw]
                        .iter()
                        .map(|v| v.as_f64())
                        .sum::<f64>();
                }
                let mu = s / m as f64;
                let mut q = 0.0f64;
                for i in 0..n {
                    q += xv[(i * c + ch) * hw..(i * c + ch + 1) * hw]
                        .iter()
                        .map(|v| (v.as_f64() - mu).powi(2))
                        .sum::<f64>();
                }
                mean[ch] = T::from_f64(mu);
                var[ch] = T::from_f64(q / m as f64);
            }
            (mean, var)
        } else {
            (
                self.store.get(bn.running_mean).data().to_vec(),
                self.store.get(bn.running_var).data().to_vec(),
            )
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut y = vec![T::zero(); xv.len()];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * hw;
                for j in base..base + hw {
                    let xh = (xv[j] - mean[ch]) * inv_std[ch];
                    xhat[j] = xh;
                    y[j] = gv[ch] * xh + bv[ch];
                }
            }
        }
        if train {
            let mom = T::from_f64(BN_MOMENTUM);
            let unbias = T::from_f64(m as f64 / (m.max(2) - 1) as f64);
            let rm = self.store.get(bn.running_mean).data();
            let rv = self.store.get(bn.running_var).data();
            let new_mean = rm.iter().zip(&mean).map(|(r, b)| (T::one() - mom) * *r + mom * *b).collect();
            let new_var = rv
                .iter()
                .zip(&var)
                .map(|(r, b)| (T::one() - mom) * *r + mom * *b * unbias)
                .collect();
            self.buffer_updates.push((bn.running_mean, Tensor::new(vec![c], new_mean)));
            self.buffer_updates.push((bn.running_var, Tensor::new(vec![c], new_var)));
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            Tensor::new(vec![n, c, h, w], y),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            ng,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let y = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a.max(T::zero())).collect());
        let ng = self.ng(x);
        self.push(y, Op::Relu { x }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let y = Tensor::new(
            va.shape().to_vec(),
            va.data().iter().zip(vb.data()).map(|(x, y)| *x + *y).collect(),
        );
        let ng = self.ng(a) || self.ng(b);
        self.push(y, Op::Add { a, b }, ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let s = T::from_f64(s);
        let v = self.value(x);
        let y = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| *a * s).collect());
        let ng = self.ng(x);
        self.push(y, Op::Scale { x, s }, ng)
    }

    /// Concatenates along axis 1.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty());
        let first = self.shape(xs[0]).to_vec();
        let n = first[0];
        let inner: usize = first[2..].iter().product();
        let mut channels = 0;
        for x in xs {
            let s = self.shape(*x);
            assert_eq!(s[0], n, "concat batch mismatch");
            assert_eq!(&s[2..], &first[2..], "concat spatial mismatch");
            channels += s[1];
        }
        let mut data = Vec::with_capacity(n * channels * inner);
        for i in 0..n {
            for x in xs {
                data.extend_from_slice(self.value(*x).batch_item(i));
            }
        }
        let mut shape = first.clone();
        shape[1] = channels;
        let ng = xs.iter().any(|x| self.ng(*x));
        self.push(Tensor::new(shape, data), Op::Concat { xs: xs.to_vec() }, ng)
    }

    /// Channels `start..start + len` of axis 1.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let s = self.shape(x).to_vec();
        assert!(start + len <= s[1], "slice out of range");
        let inner: usize = s[2..].iter().product();
        let v = self.value(x);
        let mut data = Vec::with_capacity(s[0] * len * inner);
        for i in 0..s[0] {
            let item = v.batch_item(i);
            data.extend_from_slice(&item[start * inner..(start + len) * inner]);
        }
        let mut shape = s;
        shape[1] = len;
        let ng = self.ng(x);
        self.push(Tensor::new(shape, data), Op::Slice { x, start }, ng)
    }

    pub fn max_pool(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let ho = kernels::conv_out(h, k, stride, pad);
        let wo = kernels::conv_out(w, k, stride, pad);
        let mut y = Tensor::zeros(vec![n, c, ho, wo]);
        let arg = kernels::maxpool_forward(self.value(x).data(), n * c, h, w, k, stride, pad, y.data_mut());
        let ng = self.ng(x);
        self.push(y, Op::MaxPool { x, arg }, ng)
    }

    /// Bilinear ×2 upsampling with half-pixel sample centers.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let mut y = Tensor::zeros(vec![n, c, 2 * h, 2 * w]);
        kernels::upsample2x_forward(self.value(x).data(), n * c, h, w, y.data_mut());
        let ng = self.ng(x);
        self.push(y, Op::Upsample { x }, ng)
    }

    /// `x [n, in] -> x Wᵀ + b` with `W [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 2, "linear input must be rank 2");
        assert_eq!(xs[1], ws[1], "linear expects {} features, got {}", ws[1], xs[1]);
        let (n, i, o) = (xs[0], xs[1], ws[0]);
        let mut y = vec![T::zero(); n * o];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in y.chunks_mut(o) {
                row.copy_from_slice(bv);
            }
        }
        matmul(n, i, o, self.value(x).data(), false, self.value(w).data(), true, T::one(), &mut y);
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(Tensor::new(vec![n, o], y), Op::Linear { x, w, b }, ng)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let y = self.value(x).clone().reshaped(shape);
        let ng = self.ng(x);
        self.push(y, Op::Reshape { x }, ng)
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mse shape mismatch");
        let s: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
            .sum();
        let y = Tensor::scalar(T::from_f64(s / va.len() as f64));
        let ng = self.ng(a) || self.ng(b);
        self.push(y, Op::Mse { a, b }, ng)
    }

    /// Mean Euclidean distance between rows of `[n, 3j]` point sets.
    pub fn joint_distance(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "joint distance shape mismatch");
        assert_eq!(va.len() % 3, 0);
        let count = va.len() / 3;
        let s: f64 = va
            .data()
            .chunks(3)
            .zip(vb.data().chunks(3))
            .map(|(p, q)| {
                let d: f64 = p.iter().zip(q).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
                d.sqrt()
            })
            .sum();
        let y = Tensor::scalar(T::from_f64(s / count as f64));
        let ng = self.ng(a) || self.ng(b);
        self.push(y, Op::JointDist { a, b }, ng)
    }

    /// `-(1/n) Σ_i Σ_bones cos(a_bone, b_bone)` over `[n, 3j]` poses, with
    /// bones given as (parent, child) joint indices.
    pub fn bone_cosine(&mut self, a: Var, b: Var, bones: &[(usize, usize)]) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "bone cosine shape mismatch");
        let n = va.shape()[0];
        let per = va.len() / n;
        let mut total = 0.0f64;
        for i in 0..n {
            let pa = &va.data()[i * per..(i + 1) * per];
            let pb = &vb.data()[i * per..(i + 1) * per];
            for &(p, c) in bones {
                total += cosine_terms(bone(pa, p, c), bone(pb, p, c)).0;
            }
        }
        let y = Tensor::scalar(T::from_f64(-total / n as f64));
        let ng = self.ng(a) || self.ng(b);
        self.push(
            y,
            Op::BoneCos {
                a,
                b,
                bones: bones.to_vec(),
            },
            ng,
        )
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss).to_vec(), T::one()));
        let mut out = Gradients {
            params: HashMap::new(),
            inputs: HashMap::new(),
        };
        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(idx, node, gy, &mut grads, &mut out);
        }
        out
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn zeros_like(&self, v: Var) -> Tensor<T> {
        Tensor::zeros(self.shape(v).to_vec())
    }

    fn backward_node(
        &self,
        idx: usize,
        node: &Node<T>,
        gy: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        out: &mut Gradients<T>,
    ) {
        match &node.op {
            Op::Input => {
                out.inputs.insert(Var(idx), gy);
            }
            Op::Param(id) => {
                out.params.insert(*id, gy);
            }
            Op::Conv { x, w, b, stride, pad } => {
                let g = self.conv_geom(*x, *w, *stride, *pad);
                let mut dx = self.ng(*x).then(|| self.zeros_like(*x));
                let mut dw = self.ng(*w).then(|| self.zeros_like(*w));
                let mut db = b.filter(|b| self.ng(*b)).map(|b| self.zeros_like(b));
                kernels::conv2d_backward(
                    &g,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gy.data(),
                    dx.as_mut().map(|t| t.data_mut()),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::ConvT { x, w, b, stride, pad } => {
                let g = self.conv_t_geom(*x, *w, *stride, *pad);
                let mut dx = self.ng(*x).then(|| self.zeros_like(*x));
                let mut dw = self.ng(*w).then(|| self.zeros_like(*w));
                let mut db = b.filter(|b| self.ng(*b)).map(|b| self.zeros_like(b));
                kernels::conv_t_backward(
                    &g,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gy.data(),
                    dx.as_mut().map(|t| t.data_mut()),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let hw = h * w;
                let m = T::from_f64((n * hw) as f64);
                let gv = self.value(*gamma).data();
                let dy = gy.data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * hw;
                        for j in base..base + hw {
                            dgamma[ch] += dy[j] * xhat[j];
                            dbeta[ch] += dy[j];
                        }
                    }
                }
                if self.ng(*x) {
                    let mut dx = vec![T::zero(); dy.len()];
                    for i in 0..n {
                        for ch in 0..c {
                            let base = (i * c + ch) * hw;
                            let k = gv[ch] * inv_std[ch];
                            for j in base..base + hw {
                                dx[j] = if *train {
                                    k * (dy[j] - dbeta[ch] / m - xhat[j] * dgamma[ch] / m)
                                } else {
                                    k * dy[j]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(vec![n, c, h, w], dx));
                }
                self.accumulate(grads, *gamma, Tensor::new(vec![c], dgamma));
                self.accumulate(grads, *beta, Tensor::new(vec![c], dbeta));
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                let d = gy
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(g, v)| if *v > T::zero() { *g } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(gy.shape().to_vec(), d));
            }
            Op::Add { a, b } => {
                if self.ng(*b) {
                    self.accumulate(grads, *b, gy.clone());
                }
                self.accumulate(grads, *a, gy);
            }
            Op::Scale { x, s } => {
                let d = gy.data().iter().map(|g| *g * *s).collect();
                self.accumulate(grads, *x, Tensor::new(gy.shape().to_vec(), d));
            }
            Op::Concat { xs } => {
                let n = gy.shape()[0];
                let mut offset = 0;
                let per_out = gy.len() / n;
                let sizes: Vec<usize> = xs.iter().map(|x| self.value(*x).len() / n).collect();
                for (x, size) in xs.iter().zip(&sizes) {
                    if self.ng(*x) {
                        let mut d = Vec::with_capacity(n * size);
                        for i in 0..n {
                            d.extend_from_slice(&gy.data()[i * per_out + offset..i * per_out + offset + size]);
                        }
                        self.accumulate(grads, *x, Tensor::new(self.shape(*x).to_vec(), d));
                    }
                    offset += size;
                }
            }
            Op::Slice { x, start } => {
                let s = self.shape(*x).to_vec();
                let inner: usize = s[2..].iter().product();
                let len = gy.shape()[1];
                let mut d = self.zeros_like(*x);
                let per_in = d.len() / s[0];
                for i in 0..s[0] {
                    let dst = &mut d.data_mut()[i * per_in + start * inner..i * per_in + (start + len) * inner];
                    dst.copy_from_slice(&gy.data()[i * len * inner..(i + 1) * len * inner]);
                }
                self.accumulate(grads, *x, d);
            }
            Op::MaxPool { x, arg } => {
                let mut d = self.zeros_like(*x);
                for (g, i) in gy.data().iter().zip(arg) {
                    d.data_mut()[*i as usize] += *g;
                }
                self.accumulate(grads, *x, d);
            }
            Op::Upsample { x } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let mut d = self.zeros_like(*x);
                kernels::upsample2x_backward(gy.data(), n * c, h, w, d.data_mut());
                self.accumulate(grads, *x, d);
            }
            Op::Linear { x, w, b } => {
                let (n, i) = (self.shape(*x)[0], self.shape(*x)[1]);
                let o = self.shape(*w)[0];
                if self.ng(*x) {
                    let mut dx = vec![T::zero(); n * i];
                    matmul(n, o, i, gy.data(), false, self.value(*w).data(), false, T::zero(), &mut dx);
                    self.accumulate(grads, *x, Tensor::new(vec![n, i], dx));
                }
                if self.ng(*w) {
                    let mut dw = vec![T::zero(); o * i];
                    matmul(o, n, i, gy.data(), true, self.value(*x).data(), false, T::zero(), &mut dw);
                    self.accumulate(grads, *w, Tensor::new(vec![o, i], dw));
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); o];
                    for row in gy.data().chunks(o) {
                        for (acc, g) in db.iter_mut().zip(row) {
                            *acc += *g;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![o], db));
                }
            }
            Op::Reshape { x } => {
                let shape = self.shape(*x).to_vec();
                self.accumulate(grads, *x, gy.reshaped(shape));
            }
            Op::Mse { a, b } => {
                let g = gy.item();
                let (va, vb) = (self.value(*a), self.value(*b));
                let k = T::from_f64(2.0 / va.len() as f64) * g;
                let d: Vec<T> = va.data().iter().zip(vb.data()).map(|(x, y)| (*x - *y) * k).collect();
                if self.ng(*b) {
                    let neg = d.iter().map(|v| -*v).collect();
                    self.accumulate(grads, *b, Tensor::new(vb.shape().to_vec(), neg));
                }
                self.accumulate(grads, *a, Tensor::new(va.shape().to_vec(), d));
            }
            Op::JointDist { a, b } => {
                let g = gy.item();
                let (va, vb) = (self.value(*a), self.value(*b));
                let count = T::from_f64((va.len() / 3) as f64);
                let mut d = vec![T::zero(); va.len()];
                for (k, (p, q)) in va.data().chunks(3).zip(vb.data().chunks(3)).enumerate() {
                    let diff = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                    let dist = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
                    // Subgradient 0 at coincident points.
                    if dist > T::zero() {
                        for a in 0..3 {
                            d[k * 3 + a] = diff[a] / dist / count * g;
                        }
                    }
                }
                if self.ng(*b) {
                    let neg = d.iter().map(|v| -*v).collect();
                    self.accumulate(grads, *b, Tensor::new(vb.shape().to_vec(), neg));
                }
                self.accumulate(grads, *a, Tensor::new(va.shape().to_vec(), d));
            }
            Op::BoneCos { a, b, bones } => {
                let g = gy.item();
                let (va, vb) = (self.value(*a), self.value(*b));
                let n = va.shape()[0];
                let per = va.len() / n;
                let k = -g.as_f64() / n as f64;
                let mut da = vec![T::zero(); va.len()];
                let mut db = vec![T::zero(); vb.len()];
                for i in 0..n {
                    let pa = &va.data()[i * per..(i + 1) * per];
                    let pb = &vb.data()[i * per..(i + 1) * per];
                    for &(p, c) in bones {
                        let (_, ga, gb) = cosine_terms(bone(pa, p, c), bone(pb, p, c));
                        for ax in 0..3 {
                            let (ua, ub) = (T::from_f64(k * ga[ax]), T::from_f64(k * gb[ax]));
                            da[i * per + c * 3 + ax] += ua;
                            da[i * per + p * 3 + ax] -= ua;
                            db[i * per + c * 3 + ax] += ub;
                            db[i * per + p * 3 + ax] -= ub;
                        }
                    }
                }
                if self.ng(*b) {
                    self.accumulate(grads, *b, Tensor::new(vb.shape().to_vec(), db));
                }
                self.accumulate(grads, *a, Tensor::new(va.shape().to_vec(), da));
            }
        }
    }
}

fn bone<T: Float>(pose: &[T], parent: usize, child: usize) -> [f64; 3] {
    [0, 1, 2].map(|a| pose[child * 3 + a].as_f64() - pose[parent * 3 + a].as_f64())
}

/// Cosine of two vectors and its gradients with respect to each. The
/// denominator is `max(sqrt(|a|²|b|²), COS_EPS)`, which equals `|a||b|`
/// exactly for `a == b` and stays finite for zero-length vectors.
fn cosine_terms(a: [f64; 3], b: [f64; 3]) -> (f64, [f64; 3], [f64; 3]) {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
    let nb2 = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
    let denom = (na2 * nb2).sqrt();
    if denom < COS_EPS {
        let ga = b.map(|v| v / COS_EPS);
        let gb = a.map(|v| v / COS_EPS);
        return (dot / COS_EPS, ga, gb);
    }
    let cos = dot / denom;
    let ga = [0, 1, 2].map(|i| b[i] / denom - cos * a[i] / na2);
    let gb = [0, 1, 2].map(|i| a[i] / denom - cos * b[i] / nb2);
    (cos, ga, gb)
}
