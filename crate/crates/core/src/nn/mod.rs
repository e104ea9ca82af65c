//! Minimal CNN machinery for the classifier: f64 feature maps, 3×3
//! convolutions, 2×2 max pooling, global average pooling and a dense head,
//! each with an explicit backward pass, plus Adam and a binary weight format.
//!
//! Everything here is scalar CPU code with deterministic iteration order, so
//! a fixed seed reproduces training bit-for-bit.

pub mod weights;

use rand::Rng;

/// Channel-major feature map: `data[c * h * w + y * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, h: usize, w: usize) -> Self {
        Self {
            channels,
            h,
            w,
            data: vec![0.0; channels * h * w],
        }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }
}

/// 3×3 convolution, stride 1, zero padding 1; spatial dims are preserved.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `weight[((o * in_ch) + i) * 9 + dy * 3 + dx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn init(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        let fan_in = (in_ch * 9) as f64;
        let std = (2.0 / fan_in).sqrt();
        let weight = (0..out_ch * in_ch * 9).map(|_| randn(rng) * std).collect();
        Self {
            in_ch,
            out_ch,
            weight,
            bias: vec![0.0; out_ch],
        }
    }

    pub fn forward(&self, input: &FeatureMap) -> FeatureMap {
        debug_assert_eq!(input.channels, self.in_ch);
        let (h, w) = (input.h, input.w);
        let mut out = FeatureMap::zeros(self.out_ch, h, w);
        for o in 0..self.out_ch {
            let out_base = o * h * w;
            for i in 0..self.in_ch {
                let wbase = (o * self.in_ch + i) * 9;
                let in_base = i * h * w;
                for dy in 0..3usize {
                    for dx in 0..3usize {
                        let k = self.weight[wbase + dy * 3 + dx];
                        if k == 0.0 {
                            continue;
                        }
                        let oy = dy as isize - 1;
                        let ox = dx as isize - 1;
                        let y0 = (-oy).max(0) as usize;
                        let y1 = (h as isize - oy).min(h as isize) as usize;
                        for y in y0..y1 {
                            let yy = (y as isize + oy) as usize;
                            let x0 = (-ox).max(0) as usize;
                            let x1 = (w as isize - ox).min(w as isize) as usize;
                            let src = &input.data[in_base + yy * w..in_base + yy * w + w];
                            let dst = &mut out.data[out_base + y * w..out_base + y * w + w];
                            for x in x0..x1 {
                                dst[x] += k * src[(x as isize + ox) as usize];
                            }
                        }
                    }
                }
            }
            let dst = &mut out.data[out_base..out_base + h * w];
            let b = self.bias[o];
            for v in dst {
                *v += b;
            }
        }
        out
    }

    /// Accumulate weight/bias gradients and return the input gradient.
    pub fn backward(
        &self,
        input: &FeatureMap,
        grad_out: &FeatureMap,
        grad_weight: &mut [f64],
        grad_bias: &mut [f64],
    ) -> FeatureMap {
        let (h, w) = (input.h, input.w);
        let mut grad_in = FeatureMap::zeros(self.in_ch, h, w);
        for o in 0..self.out_ch {
            let go = grad_out.channel(o);
            grad_bias[o] += go.iter().sum::<f64>();
            for i in 0..self.in_ch {
                let wbase = (o * self.in_ch + i) * 9;
                let in_base = i * h * w;
                for dy in 0..3usize {
                    for dx in 0..3usize {
                        let oy = dy as isize - 1;
                        let ox = dx as isize - 1;
                        let k = self.weight[wbase + dy * 3 + dx];
                        let mut dw = 0.0;
                        let y0 = (-oy).max(0) as usize;
                        let y1 = (h as isize - oy).min(h as isize) as usize;
                        for y in y0..y1 {
                            let yy = (y as isize + oy) as usize;
                            let x0 = (-ox).max(0) as usize;
                            let x1 = (w as isize - ox).min(w as isize) as usize;
                            let src = &input.data[in_base + yy * w..in_base + yy * w + w];
                            let gin = &mut grad_in.data[in_base + yy * w..in_base + yy * w + w];
                            let grow = &go[y * w..y * w + w];
                            for x in x0..x1 {
                                let xx = (x as isize + ox) as usize;
                                dw += grow[x] * src[xx];
                                gin[xx] += grow[x] * k;
                            }
                        }
                        grad_weight[wbase + dy * 3 + dx] += dw;
                    }
                }
            }
        }
        grad_in
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

pub fn relu(map: &FeatureMap) -> FeatureMap {
    FeatureMap {
        channels: map.channels,
        h: map.h,
        w: map.w,
        data: map.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

pub fn relu_backward(pre: &FeatureMap, grad_out: &FeatureMap) -> FeatureMap {
    FeatureMap {
        channels: pre.channels,
        h: pre.h,
        w: pre.w,
        data: pre
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// 2×2 max pool, stride 2. Returns the pooled map and the flat argmax index
/// (into the input map) per pooled cell.
pub fn max_pool2(input: &FeatureMap) -> (FeatureMap, Vec<usize>) {
    let (oh, ow) = (input.h / 2, input.w / 2);
    let mut out = FeatureMap::zeros(input.channels, oh, ow);
    let mut argmax = vec![0usize; input.channels * oh * ow];
    for c in 0..input.channels {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (c * input.h + y * 2 + dy) * input.w + x * 2 + dx;
                        if input.data[idx] > best {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                let oidx = (c * oh + y) * ow + x;
                out.data[oidx] = best;
                argmax[oidx] = best_idx;
            }
        }
    }
    (out, argmax)
}

pub fn max_pool2_backward(
    input_shape: (usize, usize, usize),
    argmax: &[usize],
    grad_out: &FeatureMap,
) -> FeatureMap {
    let (c, h, w) = input_shape;
    let mut grad_in = FeatureMap::zeros(c, h, w);
    for (g, &idx) in grad_out.data.iter().zip(argmax) {
        grad_in.data[idx] += g;
    }
    grad_in
}

pub fn global_avg_pool(input: &FeatureMap) -> Vec<f64> {
    let area = (input.h * input.w) as f64;
    (0..input.channels)
        .map(|c| input.channel(c).iter().sum::<f64>() / area)
        .collect()
}

pub fn global_avg_pool_backward(input_shape: (usize, usize, usize), grad_out: &[f64]) -> FeatureMap {
    let (c, h, w) = input_shape;
    let area = (h * w) as f64;
    let mut grad_in = FeatureMap::zeros(c, h, w);
    for ch in 0..c {
        let g = grad_out[ch] / area;
        for v in &mut grad_in.data[ch * h * w..(ch + 1) * h * w] {
            *v = g;
        }
    }
    grad_in
}

/// Fully connected layer: `out[k] = bias[k] + Σ_c weight[k * in + c] * x[c]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / in_dim as f64).sqrt();
        Self {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim).map(|_| randn(rng) * std).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        (0..self.out_dim)
            .map(|k| {
                self.bias[k]
                    + self.weight[k * self.in_dim..(k + 1) * self.in_dim]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn backward(
        &self,
        x: &[f64],
        grad_out: &[f64],
        grad_weight: &mut [f64],
        grad_bias: &mut [f64],
    ) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for k in 0..self.out_dim {
            let g = grad_out[k];
            grad_bias[k] += g;
            let row = &self.weight[k * self.in_dim..(k + 1) * self.in_dim];
            let grow = &mut grad_weight[k * self.in_dim..(k + 1) * self.in_dim];
            for c in 0..self.in_dim {
                grow[c] += g * x[c];
                grad_in[c] += g * row[c];
            }
        }
        grad_in
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Standard normal via Box–Muller.
pub fn randn(rng: &mut impl Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > 1e-300 {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Adam with bias correction and decoupled weight decay; one state slot per
/// parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay factor applied directly to the parameters each step.
    pub weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, param_sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            t: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (slot, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                param[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * param[i]);
            }
        }
    }
}
