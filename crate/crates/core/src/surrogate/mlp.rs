//! MLP internals: parameter tensors, training/inference forward passes,
//! batch-norm backprop, and the Adam update.
//!
//! Hidden layers are affine → batch norm → rectified linear; the output
//! layer is affine. Loss is mean squared error plus λ·Σ(weights²) — biases
//! and batch-norm parameters are not penalized.

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;

pub const BN_EPS: f64 = 1.0e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Uniform [0,1) from the top 53 bits of a ChaCha word pair; version-stable.
pub fn u01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box–Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - u01(rng);
    let u2 = u01(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Learnable parameters. `w[l]` is row-major (out × in); hidden layers
/// (all but the last) carry batch-norm scale/shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub sizes: Vec<usize>,
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

/// Batch-norm running statistics (not gradient-trained).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

impl Tensors {
    pub fn init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = sizes.len() - 1;
        let mut w = Vec::with_capacity(layers);
        let mut b = Vec::with_capacity(layers);
        let mut gamma = Vec::new();
        let mut beta = Vec::new();
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let std = (2.0 / fan_in as f64).sqrt();
            w.push((0..fan_in * fan_out).map(|_| std * normal(rng)).collect());
            b.push(vec![0.0; fan_out]);
            if l + 1 < layers {
                gamma.push(vec![1.0; fan_out]);
                beta.push(vec![0.0; fan_out]);
            }
        }
        Self {
            sizes: sizes.to_vec(),
            w,
            b,
            gamma,
            beta,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            w: self.w.iter().map(|v| vec![0.0; v.len()]).collect(),
            b: self.b.iter().map(|v| vec![0.0; v.len()]).collect(),
            gamma: self.gamma.iter().map(|v| vec![0.0; v.len()]).collect(),
            beta: self.beta.iter().map(|v| vec![0.0; v.len()]).collect(),
        }
    }

    fn groups(&self) -> [&Vec<Vec<f64>>; 4] {
        [&self.w, &self.b, &self.gamma, &self.beta]
    }

    fn groups_mut(&mut self) -> [&mut Vec<Vec<f64>>; 4] {
        [&mut self.w, &mut self.b, &mut self.gamma, &mut self.beta]
    }

    pub fn param_count(&self) -> usize {
        self.groups().iter().map(|g| g.iter().map(Vec::len).sum::<usize>()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for g in self.groups() {
            for v in g {
                out.extend_from_slice(v);
            }
        }
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for g in self.groups_mut() {
            for v in g.iter_mut() {
                let len = v.len();
                v.copy_from_slice(&flat[i..i + len]);
                i += len;
            }
        }
        assert_eq!(i, flat.len());
    }
}

impl RunningStats {
    pub fn init(sizes: &[usize]) -> Self {
        let hidden: Vec<usize> = sizes[1..sizes.len() - 1].to_vec();
        Self {
            mean: hidden.iter().map(|&h| vec![0.0; h]).collect(),
            var: hidden.iter().map(|&h| vec![1.0; h]).collect(),
        }
    }
}

/// Per-layer activations cached by the training forward pass.
pub struct Caches {
    pub m: usize,
    /// Input to each affine layer (x, a1, a2, ...).
    pub inputs: Vec<Vec<f64>>,
    /// Batch statistics per hidden layer.
    pub mu: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    /// Post-BN pre-activation (γ·x̂+β), for the ReLU mask.
    pub h: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

fn affine(x: &[f64], m: usize, w: &[f64], b: &[f64], n_in: usize, n_out: usize) -> Vec<f64> {
    let mut z = vec![0.0; m * n_out];
    for i in 0..m {
        let xi = &x[i * n_in..(i + 1) * n_in];
        let zi = &mut z[i * n_out..(i + 1) * n_out];
        for (j, zj) in zi.iter_mut().enumerate() {
            let wr = &w[j * n_in..(j + 1) * n_in];
            let mut acc = b[j];
            for k in 0..n_in {
                acc += wr[k] * xi[k];
            }
            *zj = acc;
        }
    }
    z
}

/// Training-mode forward over a batch (row-major m × n_in). Pure: running
/// statistics are not touched; the caller applies them from the caches.
pub fn forward_train(p: &Tensors, x: &[f64], m: usize) -> Caches {
    let layers = p.w.len();
    let mut inputs = vec![x.to_vec()];
    let mut mus = Vec::new();
    let mut vars = Vec::new();
    let mut xhats = Vec::new();
    let mut hs = Vec::new();

    let mut cur = x.to_vec();
    for l in 0..layers - 1 {
        let (n_in, n_out) = (p.sizes[l], p.sizes[l + 1]);
        let z = affine(&cur, m, &p.w[l], &p.b[l], n_in, n_out);
        let mut mu = vec![0.0; n_out];
        let mut var = vec![0.0; n_out];
        for i in 0..m {
            for j in 0..n_out {
                mu[j] += z[i * n_out + j];
            }
        }
        for v in mu.iter_mut() {
            *v /= m as f64;
        }
        for i in 0..m {
            for j in 0..n_out {
                let d = z[i * n_out + j] - mu[j];
                var[j] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= m as f64;
        }
        let mut xhat = vec![0.0; m * n_out];
        let mut h = vec![0.0; m * n_out];
        let mut a = vec![0.0; m * n_out];
        for j in 0..n_out {
            let inv = 1.0 / (var[j] + BN_EPS).sqrt();
            for i in 0..m {
                let xh = (z[i * n_out + j] - mu[j]) * inv;
                xhat[i * n_out + j] = xh;
                let hv = p.gamma[l][j] * xh + p.beta[l][j];
                h[i * n_out + j] = hv;
                a[i * n_out + j] = hv.max(0.0);
            }
        }
        mus.push(mu);
        vars.push(var);
        xhats.push(xhat);
        hs.push(h);
        inputs.push(a.clone());
        cur = a;
    }
    let last = layers - 1;
    let y = affine(&cur, m, &p.w[last], &p.b[last], p.sizes[last], p.sizes[last + 1]);
    Caches {
        m,
        inputs,
        mu: mus,
        var: vars,
        xhat: xhats,
        h: hs,
        y,
    }
}

/// Inference-mode forward using frozen running statistics.
pub fn forward_infer(p: &Tensors, run: &RunningStats, x: &[f64], m: usize) -> Vec<f64> {
    let layers = p.w.len();
    let mut cur = x.to_vec();
    for l in 0..layers - 1 {
        let (n_in, n_out) = (p.sizes[l], p.sizes[l + 1]);
        let z = affine(&cur, m, &p.w[l], &p.b[l], n_in, n_out);
        let mut a = vec![0.0; m * n_out];
        for j in 0..n_out {
            let inv = 1.0 / (run.var[l][j] + BN_EPS).sqrt();
            for i in 0..m {
                let xh = (z[i * n_out + j] - run.mean[l][j]) * inv;
                a[i * n_out + j] = (p.gamma[l][j] * xh + p.beta[l][j]).max(0.0);
            }
        }
        cur = a;
    }
    let last = layers - 1;
    affine(&cur, m, &p.w[last], &p.b[last], p.sizes[last], p.sizes[last + 1])
}

/// Mean-squared error plus the L2 weight penalty.
pub fn loss_from_outputs(y: &[f64], t: &[f64], p: &Tensors, lambda: f64) -> f64 {
    let m = t.len() as f64;
    let mse: f64 = y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m;
    let l2: f64 = p.w.iter().flat_map(|w| w.iter()).map(|v| v * v).sum();
    mse + lambda * l2
}

/// Full backward pass; returns gradients of (MSE + λ·Σw²).
pub fn backward(p: &Tensors, c: &Caches, t: &[f64], lambda: f64) -> Tensors {
    let layers = p.w.len();
    let m = c.m;
    let mf = m as f64;
    let mut g = p.zeros_like();

    // Output layer.
    let last = layers - 1;
    let n_in = p.sizes[last];
    let dy: Vec<f64> = c.y.iter().zip(t).map(|(y, t)| 2.0 * (y - t) / mf).collect();
    let a_prev = &c.inputs[last];
    for j in 0..p.sizes[last + 1] {
        let mut db = 0.0;
        for i in 0..m {
            db += dy[i];
            for k in 0..n_in {
                g.w[last][j * n_in + k] += dy[i] * a_prev[i * n_in + k];
            }
        }
        g.b[last][j] = db;
    }
    // Gradient flowing into the last hidden activation.
    let mut dcur = vec![0.0; m * n_in];
    for i in 0..m {
        for k in 0..n_in {
            dcur[i * n_in + k] = dy[i] * p.w[last][k];
        }
    }

    for l in (0..layers - 1).rev() {
        let (n_in, n_out) = (p.sizes[l], p.sizes[l + 1]);
        // Through ReLU.
        let mut dh = dcur;
        for i in 0..m {
            for j in 0..n_out {
                if c.h[l][i * n_out + j] <= 0.0 {
                    dh[i * n_out + j] = 0.0;
                }
            }
        }
        // Through batch norm (batch-statistics form).
        let mut dxhat_sum = vec![0.0; n_out];
        let mut dxhat_dot = vec![0.0; n_out];
        for i in 0..m {
            for j in 0..n_out {
                let dxh = dh[i * n_out + j] * p.gamma[l][j];
                dxhat_sum[j] += dxh;
                dxhat_dot[j] += dxh * c.xhat[l][i * n_out + j];
                g.gamma[l][j] += dh[i * n_out + j] * c.xhat[l][i * n_out + j];
                g.beta[l][j] += dh[i * n_out + j];
            }
        }
        let mut dz = vec![0.0; m * n_out];
        for j in 0..n_out {
            let inv = 1.0 / (c.var[l][j] + BN_EPS).sqrt();
            for i in 0..m {
                let dxh = dh[i * n_out + j] * p.gamma[l][j];
                dz[i * n_out + j] = inv / mf
                    * (mf * dxh - dxhat_sum[j] - c.xhat[l][i * n_out + j] * dxhat_dot[j]);
            }
        }
        // Through the affine layer.
        let x_in = &c.inputs[l];
        for j in 0..n_out {
            let mut db = 0.0;
            for i in 0..m {
                let d = dz[i * n_out + j];
                db += d;
                for k in 0..n_in {
                    g.w[l][j * n_in + k] += d * x_in[i * n_in + k];
                }
            }
            g.b[l][j] = db;
        }
        let mut dprev = vec![0.0; m * n_in];
        for i in 0..m {
            for j in 0..n_out {
                let d = dz[i * n_out + j];
                if d != 0.0 {
                    for k in 0..n_in {
                        dprev[i * n_in + k] += d * p.w[l][j * n_in + k];
                    }
                }
            }
        }
        dcur = dprev;
    }

    // L2 penalty on weights only.
    for l in 0..layers {
        for (gw, w) in g.w[l].iter_mut().zip(&p.w[l]) {
            *gw += 2.0 * lambda * w;
        }
    }
    g
}

/// Fold a batch's statistics into the running estimates.
pub fn update_running(run: &mut RunningStats, c: &Caches) {
    for l in 0..run.mean.len() {
        for j in 0..run.mean[l].len() {
            run.mean[l][j] = BN_MOMENTUM * run.mean[l][j] + (1.0 - BN_MOMENTUM) * c.mu[l][j];
            run.var[l][j] = BN_MOMENTUM * run.var[l][j] + (1.0 - BN_MOMENTUM) * c.var[l][j];
        }
    }
}

/// Adam optimizer state (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
pub struct Adam {
    m: Tensors,
    v: Tensors,
    t: u64,
    pub lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1.0e-8;

    pub fn new(p: &Tensors, lr: f64) -> Self {
        Self {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
            lr,
        }
    }

    pub fn step(&mut self, p: &mut Tensors, g: &Tensors) {
        self.t += 1;
        let b1t = 1.0 - Self::BETA1.powi(self.t as i32);
        let b2t = 1.0 - Self::BETA2.powi(self.t as i32);
        let lr = self.lr;
        let apply = |pv: &mut Vec<Vec<f64>>,
                     gv: &Vec<Vec<f64>>,
                     mv: &mut Vec<Vec<f64>>,
                     vv: &mut Vec<Vec<f64>>| {
            for ((pw, gw), (mw, vw)) in pv
                .iter_mut()
                .zip(gv.iter())
                .zip(mv.iter_mut().zip(vv.iter_mut()))
            {
                for k in 0..pw.len() {
                    mw[k] = Self::BETA1 * mw[k] + (1.0 - Self::BETA1) * gw[k];
                    vw[k] = Self::BETA2 * vw[k] + (1.0 - Self::BETA2) * gw[k] * gw[k];
                    let mhat = mw[k] / b1t;
                    let vhat = vw[k] / b2t;
                    pw[k] -= lr * mhat / (vhat.sqrt() + Self::EPS);
                }
            }
        };
        apply(&mut p.w, &g.w, &mut self.m.w, &mut self.v.w);
        apply(&mut p.b, &g.b, &mut self.m.b, &mut self.v.b);
        apply(&mut p.gamma, &g.gamma, &mut self.m.gamma, &mut self.v.gamma);
        apply(&mut p.beta, &g.beta, &mut self.m.beta, &mut self.v.beta);
    }
}
