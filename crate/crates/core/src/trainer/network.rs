//! Learnable state, forward pass and backpropagation.
//!
//! Activations are stored flat in height-major, channel-last order
//! (`(y * width + x) * channels + c`), so flattening before a dense layer is a
//! no-op. Conv weights are laid out `[filter][ky][kx][c_in]`, dense weights
//! `[unit][fan_in]`. All parameters live in one contiguous buffer.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::TrainError;
use crate::arch::{infer_shapes, validate, ActivationFn, Architecture, LayerSpec, Shape};

/// One weight or bias tensor inside the parameter buffer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug)]
enum Op {
    Conv {
        in_w: usize,
        in_c: usize,
        out_h: usize,
        out_w: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        w: usize,
        b: usize,
    },
    Pool {
        in_w: usize,
        c: usize,
        out_h: usize,
        out_w: usize,
        pool: usize,
    },
    Dense {
        fan_in: usize,
        units: usize,
        w: usize,
        b: usize,
    },
    Act(ActivationFn),
    Dropout(f64),
}

/// Initialized network for one architecture, classifier head included.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    ops: Vec<Op>,
    /// Activation sizes; `sizes[0]` is the input, `sizes[i + 1]` the output of op `i`.
    sizes: Vec<usize>,
    params: Vec<T>,
    tensors: Vec<TensorInfo>,
    num_classes: usize,
}

/// Reusable per-example buffers.
#[derive(Clone, Debug, Default)]
pub struct Workspace<T: Scalar> {
    acts: Vec<Vec<T>>,
    /// Pool argmax indices per op (empty for other ops).
    argmax: Vec<Vec<u32>>,
    /// Dropout multipliers per op (empty for other ops).
    masks: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_next: Vec<T>,
}

fn dims(shape: Shape) -> (usize, usize, usize) {
    match shape {
        Shape::Spatial([h, w, c]) => (h as usize, w as usize, c as usize),
        Shape::Flat([n]) => (1, 1, n as usize),
    }
}

/// Builds and He-uniform initializes the network for `arch`; biases start at zero.
pub fn build_network<T: Scalar>(arch: &Architecture, seed: u64) -> Result<Network<T>, TrainError> {
    validate(arch).map_err(TrainError::InvalidArchitecture)?;
    let shapes = infer_shapes(arch).map_err(TrainError::Shape)?;
    let s = arch.input_shape;
    let mut incoming = Shape::spatial(s.height, s.width, s.channels);
    let mut ops = Vec::with_capacity(arch.layers.len() + 1);
    let mut sizes = vec![incoming.size() as usize];
    let mut tensors = Vec::new();
    let mut offset = 0usize;
    let mut alloc_tensor = |name: String, shape: Vec<usize>| {
        let len = shape.iter().product();
        let info = TensorInfo { name, shape, offset, len };
        offset += len;
        tensors.push(info);
        offset - len
    };

    for (i, (layer, out)) in arch.layers.iter().zip(&shapes).enumerate() {
        let (_, in_w, in_c) = dims(incoming);
        let (out_h, out_w, _) = dims(*out);
        let op = match *layer {
            LayerSpec::Conv2d { filters, kernel, stride } => {
                let (f, k) = (filters as usize, kernel as usize);
                let w = alloc_tensor(format!("layer{i}.conv.weight"), vec![f, k, k, in_c]);
                let b = alloc_tensor(format!("layer{i}.conv.bias"), vec![f]);
                Op::Conv { in_w, in_c, out_h, out_w, filters: f, kernel: k, stride: stride as usize, w, b }
            }
            LayerSpec::MaxPool { pool } => Op::Pool { in_w, c: in_c, out_h, out_w, pool: pool as usize },
            LayerSpec::Dense { units } => {
                let fan_in = incoming.size() as usize;
                let w = alloc_tensor(format!("layer{i}.dense.weight"), vec![units as usize, fan_in]);
                let b = alloc_tensor(format!("layer{i}.dense.bias"), vec![units as usize]);
                Op::Dense { fan_in, units: units as usize, w, b }
            }
            LayerSpec::Activation { function } => Op::Act(function),
            LayerSpec::Dropout { rate } => Op::Dropout(rate),
        };
        ops.push(op);
        sizes.push(out.size() as usize);
        incoming = *out;
    }
    let fan_in = incoming.size() as usize;
    let classes = arch.num_classes as usize;
    let w = alloc_tensor("head.weight".into(), vec![classes, fan_in]);
    let b = alloc_tensor("head.bias".into(), vec![classes]);
    ops.push(Op::Dense { fan_in, units: classes, w, b });
    sizes.push(classes);

    let mut params = vec![T::ZERO; offset];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for op in &ops {
        let (w, len, fan_in) = match *op {
            Op::Conv { in_c, filters, kernel, w, .. } => (w, filters * kernel * kernel * in_c, kernel * kernel * in_c),
            Op::Dense { fan_in, units, w, .. } => (w, units * fan_in, fan_in),
            _ => continue,
        };
        let bound = crate::math::sqrt(6.0 / fan_in as f64);
        for p in &mut params[w..w + len] {
            *p = T::from_f64((rng.gen::<f64>() * 2.0 - 1.0) * bound);
        }
    }
    Ok(Network { ops, sizes, params, tensors, num_classes: classes })
}

impl<T: Scalar> Network<T> {
    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn workspace(&self) -> Workspace<T> {
        Workspace {
            acts: self.sizes.iter().map(|&n| vec![T::ZERO; n]).collect(),
            argmax: self
                .ops
                .iter()
                .zip(&self.sizes[1..])
                .map(|(op, &n)| if matches!(op, Op::Pool { .. }) { vec![0; n] } else { Vec::new() })
                .collect(),
            masks: self
                .ops
                .iter()
                .zip(&self.sizes[1..])
                .map(|(op, &n)| if matches!(op, Op::Dropout(_)) { vec![T::ONE; n] } else { Vec::new() })
                .collect(),
            delta: Vec::new(),
            delta_next: Vec::new(),
        }
    }

    /// Runs one example; dropout is active only when `dropout_rng` is given.
    /// Returns the logits.
    pub fn forward<'w>(
        &self,
        input: &[T],
        ws: &'w mut Workspace<T>,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> &'w [T] {
        ws.acts[0].copy_from_slice(input);
        for (i, op) in self.ops.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(i + 1);
            let x = &before[i];
            let y = &mut after[0];
            match *op {
                Op::Conv { in_w, in_c, out_h, out_w, filters, kernel, stride, w, b } => {
                    let wt = &self.params[w..w + filters * kernel * kernel * in_c];
                    let bias = &self.params[b..b + filters];
                    for oy in 0..out_h {
                        for ox in 0..out_w {
                            let out_base = (oy * out_w + ox) * filters;
                            for f in 0..filters {
                                let mut acc = bias[f];
                                for ky in 0..kernel {
                                    let row = ((oy * stride + ky) * in_w + ox * stride) * in_c;
                                    let wrow = (f * kernel + ky) * kernel * in_c;
                                    let xs = &x[row..row + kernel * in_c];
                                    let ws_ = &wt[wrow..wrow + kernel * in_c];
                                    for (a, bb) in xs.iter().zip(ws_) {
                                        acc += *a * *bb;
                                    }
                                }
                                y[out_base + f] = acc;
                            }
                        }
                    }
                }
                Op::Pool { in_w, c, out_h, out_w, pool } => {
                    let arg = &mut ws.argmax[i];
                    for oy in 0..out_h {
                        for ox in 0..out_w {
                            for ch in 0..c {
                                let mut best = usize::MAX;
                                let mut best_v = T::ZERO;
                                for py in 0..pool {
                                    for px in 0..pool {
                                        let idx = ((oy * pool + py) * in_w + ox * pool + px) * c + ch;
                                        if best == usize::MAX || x[idx] > best_v {
                                            best = idx;
                                            best_v = x[idx];
                                        }
                                    }
                                }
                                let o = (oy * out_w + ox) * c + ch;
                                y[o] = best_v;
                                arg[o] = best as u32;
                            }
                        }
                    }
                }
                Op::Dense { fan_in, units, w, b } => {
                    for u in 0..units {
                        let row = &self.params[w + u * fan_in..w + (u + 1) * fan_in];
                        let mut acc = self.params[b + u];
                        for (a, bb) in x.iter().zip(row) {
                            acc += *a * *bb;
                        }
                        y[u] = acc;
                    }
                }
                Op::Act(f) => {
                    for (o, &v) in y.iter_mut().zip(x.iter()) {
                        *o = activate(f, v);
                    }
                }
                Op::Dropout(rate) => {
                    let mask = &mut ws.masks[i];
                    match dropout_rng.as_deref_mut() {
                        Some(rng) => {
                            let keep = T::from_f64(1.0 / (1.0 - rate));
                            for m in mask.iter_mut() {
                                *m = if rng.gen::<f64>() < rate { T::ZERO } else { keep };
                            }
                            for ((o, &v), &m) in y.iter_mut().zip(x.iter()).zip(mask.iter()) {
                                *o = v * m;
                            }
                        }
                        None => {
                            mask.fill(T::ONE);
                            y.copy_from_slice(x);
                        }
                    }
                }
            }
        }
        ws.acts.last().unwrap()
    }

    /// Backpropagates `dlogits` through the last forward pass in `ws`,
    /// accumulating into `grad` (same layout as the parameter buffer).
    pub fn backward(&self, ws: &mut Workspace<T>, dlogits: &[T], grad: &mut [T]) {
        ws.delta.clear();
        ws.delta.extend_from_slice(dlogits);
        for i in (0..self.ops.len()).rev() {
            let x = &ws.acts[i];
            let y = &ws.acts[i + 1];
            let need_input = i > 0;
            let dy = &ws.delta;
            let dx = &mut ws.delta_next;
            dx.clear();
            dx.resize(self.sizes[i], T::ZERO);
            match self.ops[i] {
                Op::Conv { in_w, in_c, out_h, out_w, filters, kernel, stride, w, b } => {
                    let wlen = filters * kernel * kernel * in_c;
                    let (gw_all, gb_all) = grad.split_at_mut(b);
                    let gw = &mut gw_all[w..w + wlen];
                    let gb = &mut gb_all[..filters];
                    let wt = &self.params[w..w + wlen];
                    for oy in 0..out_h {
                        for ox in 0..out_w {
                            let out_base = (oy * out_w + ox) * filters;
                            for f in 0..filters {
                                let g = dy[out_base + f];
                                if g == T::ZERO {
                                    continue;
                                }
                                gb[f] += g;
                                for ky in 0..kernel {
                                    let row = ((oy * stride + ky) * in_w + ox * stride) * in_c;
                                    let wrow = (f * kernel + ky) * kernel * in_c;
                                    let n = kernel * in_c;
                                    for (gwv, &xv) in gw[wrow..wrow + n].iter_mut().zip(&x[row..row + n]) {
                                        *gwv += g * xv;
                                    }
                                    if need_input {
                                        for (dxv, &wv) in dx[row..row + n].iter_mut().zip(&wt[wrow..wrow + n]) {
                                            *dxv += g * wv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Pool { .. } => {
                    for (o, &src) in ws.argmax[i].iter().enumerate() {
                        dx[src as usize] += dy[o];
                    }
                }
                Op::Dense { fan_in, units, w, b } => {
                    for u in 0..units {
                        let g = dy[u];
                        grad[b + u] += g;
                        if g == T::ZERO {
                            continue;
                        }
                        let grow = &mut grad[w + u * fan_in..w + (u + 1) * fan_in];
                        for (gv, &xv) in grow.iter_mut().zip(x.iter()) {
                            *gv += g * xv;
                        }
                        if need_input {
                            let row = &self.params[w + u * fan_in..w + (u + 1) * fan_in];
                            for (dxv, &wv) in dx.iter_mut().zip(row) {
                                *dxv += g * wv;
                            }
                        }
                    }
                }
                Op::Act(f) => {
                    for ((d, &g), &out) in dx.iter_mut().zip(dy.iter()).zip(y.iter()) {
                        *d = g * activation_slope(f, out);
                    }
                }
                Op::Dropout(_) => {
                    for ((d, &g), &m) in dx.iter_mut().zip(dy.iter()).zip(ws.masks[i].iter()) {
                        *d = g * m;
                    }
                }
            }
            core::mem::swap(&mut ws.delta, &mut ws.delta_next);
        }
    }

    /// Softmax cross-entropy on the logits of the last forward pass.
    /// Writes `scale * (softmax - onehot)` into `dlogits` and returns the loss.
    pub fn softmax_cross_entropy(logits: &[T], label: usize, scale: T, dlogits: &mut Vec<T>) -> T {
        let probs = softmax(logits);
        dlogits.clear();
        dlogits.extend(probs.iter().enumerate().map(|(k, &p)| {
            let target = if k == label { T::ONE } else { T::ZERO };
            (p - target) * scale
        }));
        let mut max = logits[0];
        for &z in logits {
            if z > max {
                max = z;
            }
        }
        let mut sum = T::ZERO;
        for &z in logits {
            sum += (z - max).exp();
        }
        max + sum.ln() - logits[label]
    }

    /// Mean loss over a batch and its gradient (dropout off).
    pub fn loss_and_gradient(&self, images: &[T], labels: &[u32], grad: &mut [T]) -> f64 {
        grad.iter_mut().for_each(|g| *g = T::ZERO);
        let n = labels.len();
        let d = self.input_size();
        let mut ws = self.workspace();
        let mut dlogits = Vec::new();
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let logits = self.forward(&images[i * d..(i + 1) * d], &mut ws, None);
            let logits: Vec<T> = logits.to_vec();
            total += Self::softmax_cross_entropy(&logits, label as usize, T::ONE, &mut dlogits).to_f64();
            self.backward(&mut ws, &dlogits, grad);
        }
        let count = T::from_f64(n as f64);
        grad.iter_mut().for_each(|g| *g = *g / count);
        total / n as f64
    }

    /// Mean loss over a batch (dropout off).
    pub fn loss(&self, images: &[T], labels: &[u32]) -> f64 {
        let d = self.input_size();
        let mut ws = self.workspace();
        let mut dl = Vec::new();
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let logits: Vec<T> = self.forward(&images[i * d..(i + 1) * d], &mut ws, None).to_vec();
            total += Self::softmax_cross_entropy(&logits, label as usize, T::ONE, &mut dl).to_f64();
        }
        total / labels.len() as f64
    }

    /// Hash of the piecewise-linear regime (ReLU signs, pool winners) reached by a batch.
    pub(crate) fn regime_signature(&self, images: &[T], count: usize) -> u64 {
        let d = self.input_size();
        let mut ws = self.workspace();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for i in 0..count {
            self.forward(&images[i * d..(i + 1) * d], &mut ws, None);
            for (k, op) in self.ops.iter().enumerate() {
                match op {
                    Op::Act(ActivationFn::Relu) => {
                        for &v in &ws.acts[k] {
                            mix((v > T::ZERO) as u64);
                        }
                    }
                    Op::Pool { .. } => {
                        for &a in &ws.argmax[k] {
                            mix(a as u64);
                        }
                    }
                    _ => {}
                }
            }
        }
        h
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut max = logits[0];
    for &z in logits {
        if z > max {
            max = z;
        }
    }
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let mut sum = T::ZERO;
    for &e in &exps {
        sum += e;
    }
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[inline]
fn activate<T: Scalar>(f: ActivationFn, v: T) -> T {
    match f {
        ActivationFn::Relu => {
            if v > T::ZERO {
                v
            } else {
                T::ZERO
            }
        }
        ActivationFn::Tanh => v.tanh(),
        ActivationFn::Sigmoid => T::ONE / (T::ONE + (-v).exp()),
    }
}

/// Derivative expressed through the activation output.
#[inline]
fn activation_slope<T: Scalar>(f: ActivationFn, out: T) -> T {
    match f {
        ActivationFn::Relu => {
            if out > T::ZERO {
                T::ONE
            } else {
                T::ZERO
            }
        }
        ActivationFn::Tanh => T::ONE - out * out,
        ActivationFn::Sigmoid => out * (T::ONE - out),
    }
}

/// SGD with classical momentum: `v = momentum * v + g; p -= lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd<T: Scalar> {
    pub learning_rate: T,
    pub momentum: T,
    velocity: Vec<T>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64, len: usize) -> Self {
        Sgd { learning_rate: T::from_f64(learning_rate), momentum: T::from_f64(momentum), velocity: vec![T::ZERO; len] }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        for ((p, v), &g) in params.iter_mut().zip(self.velocity.iter_mut()).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.learning_rate * *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{count_parameters, InputShape};

    fn arch(input: [u32; 3], layers: Vec<LayerSpec>) -> Architecture {
        Architecture::new(input.into(), 10, layers)
    }

    #[test]
    fn head_only_tensors() {
        let a = arch([4, 4, 1], vec![]);
        let net = build_network::<f32>(&a, 0).unwrap();
        let t = net.tensors();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].shape, vec![10, 16]);
        assert_eq!(t[1].shape, vec![10]);
        assert_eq!(net.parameter_count(), 170);
        // biases start at zero, weights are within the He-uniform bound
        assert!(net.params()[160..].iter().all(|&b| b == 0.0));
        let bound = (6.0f32 / 16.0).sqrt();
        assert!(net.params()[..160].iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = arch([8, 8, 1], vec![LayerSpec::conv(4, 3, 1), LayerSpec::relu(), LayerSpec::dense(8)]);
        let x = build_network::<f32>(&a, 9).unwrap();
        let y = build_network::<f32>(&a, 9).unwrap();
        let z = build_network::<f32>(&a, 10).unwrap();
        assert_eq!(x.params(), y.params());
        assert_ne!(x.params(), z.params());
    }

    #[test]
    fn element_total_matches_count() {
        let a = arch(
            [14, 14, 1],
            vec![
                LayerSpec::conv(8, 5, 1),
                LayerSpec::relu(),
                LayerSpec::pool(2),
                LayerSpec::conv(16, 3, 1),
                LayerSpec::dense(32),
                LayerSpec::dropout(0.5),
            ],
        );
        let net = build_network::<f32>(&a, 1).unwrap();
        let sum: usize = net.tensors().iter().map(|t| t.len).sum();
        assert_eq!(sum as u64, count_parameters(&a).unwrap());
        assert_eq!(net.parameter_count(), sum);
    }

    #[test]
    fn invalid_architecture_cannot_be_built() {
        let a = arch([8, 8, 1], vec![LayerSpec::dense(8), LayerSpec::pool(2)]);
        assert!(matches!(build_network::<f32>(&a, 0), Err(TrainError::InvalidArchitecture(_))));
    }

    #[test]
    fn conv_forward_matches_hand_computation() {
        let a = Architecture::new(InputShape::new(3, 3, 1), 2, vec![LayerSpec::conv(1, 2, 1)]);
        let mut net = build_network::<f64>(&a, 0).unwrap();
        // conv weight [1,2,2,1] = 1,2,3,4 ; bias 0.5
        net.params_mut()[..5].copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 0.5]);
        let mut ws = net.workspace();
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        net.forward(&x, &mut ws, None);
        // top-left window 1,2,4,5 -> 1+4+12+20+0.5
        assert_eq!(ws.acts[1], vec![37.5, 47.5, 67.5, 77.5]);
    }

    #[test]
    fn pool_routes_gradient_to_winner() {
        let a = Architecture::new(InputShape::new(2, 2, 1), 1, vec![LayerSpec::pool(2)]);
        let mut net = build_network::<f64>(&a, 0).unwrap();
        net.params_mut()[0] = 2.0;
        let mut ws = net.workspace();
        net.forward(&[0.1, 0.9, 0.3, 0.2], &mut ws, None);
        let mut grad = vec![0.0; net.parameter_count()];
        net.backward(&mut ws, &[1.0], &mut grad);
        assert_eq!(grad, vec![0.9, 1.0]);
    }
}
