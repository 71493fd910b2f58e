//! Minimal clipped-surrogate policy gradient: one tanh hidden layer,
//! softmax policy, Monte-Carlo advantages, Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-hot when the concatenated encoding stays small, scaled scalars
/// otherwise.
const ONE_HOT_LIMIT: u32 = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    extents: Vec<u32>,
    one_hot: bool,
}

impl FeatureEncoder {
    pub fn new(extents: Vec<u32>) -> Self {
        let one_hot = extents.iter().sum::<u32>() <= ONE_HOT_LIMIT;
        FeatureEncoder { extents, one_hot }
    }

    pub fn dim(&self) -> usize {
        if self.one_hot {
            self.extents.iter().sum::<u32>() as usize
        } else {
            self.extents.len()
        }
    }

    pub fn encode(&self, obs: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if self.one_hot {
            let mut offset = 0;
            for (&o, &e) in obs.iter().zip(&self.extents) {
                out[offset + o as usize] = 1.0;
                offset += e as usize;
            }
        } else {
            for (slot, (&o, &e)) in out.iter_mut().zip(obs.iter().zip(&self.extents)) {
                *slot = o as f64 / (e.max(2) - 1) as f64;
            }
        }
        out
    }
}

/// Two-layer perceptron with parameters in one flat vector:
/// `w1 [hidden × input] | b1 [hidden] | w2 [actions × hidden] | b2 [actions]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, actions: usize, rng: &mut R) -> Self {
        let n = hidden * input + hidden + actions * hidden + actions;
        let mut params = vec![0.0; n];
        let bound1 = (6.0 / (input + hidden) as f64).sqrt();
        for p in &mut params[..hidden * input] {
            *p = rng.gen_range(-bound1..bound1);
        }
        let w2 = hidden * input + hidden;
        let bound2 = 0.01 * (6.0 / (hidden + actions) as f64).sqrt();
        for p in &mut params[w2..w2 + actions * hidden] {
            *p = rng.gen_range(-bound2..bound2);
        }
        Mlp {
            input,
            hidden,
            actions,
            params,
        }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.actions * self.hidden;
        (b1, w2, b2)
    }

    /// Hidden activations and log-probabilities.
    pub fn forward_with(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (b1, w2, b2) = self.offsets();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &params[j * self.input..(j + 1) * self.input];
                let pre: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + params[b1 + j];
                pre.tanh()
            })
            .collect();
        let logits: Vec<f64> = (0..self.actions)
            .map(|k| {
                let row = &params[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + params[b2 + k]
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        (hidden, logits.iter().map(|l| l - lse).collect())
    }

    pub fn log_probs(&self, x: &[f64]) -> Vec<f64> {
        self.forward_with(&self.params, x).1
    }

    /// Adds `coef * ∇ log π(action | x)` into `grad`.
    fn accumulate_log_prob_grad(
        &self,
        params: &[f64],
        x: &[f64],
        action: usize,
        coef: f64,
        grad: &mut [f64],
    ) {
        let (b1, w2, b2) = self.offsets();
        let (hidden, logp) = self.forward_with(params, x);
        let dlogits: Vec<f64> = logp
            .iter()
            .enumerate()
            .map(|(k, lp)| coef * ((k == action) as u8 as f64 - lp.exp()))
            .collect();
        let mut dhidden = vec![0.0; self.hidden];
        for k in 0..self.actions {
            grad[b2 + k] += dlogits[k];
            for j in 0..self.hidden {
                grad[w2 + k * self.hidden + j] += dlogits[k] * hidden[j];
                dhidden[j] += dlogits[k] * params[w2 + k * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let dpre = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
            grad[b1 + j] += dpre;
            for i in 0..self.input {
                grad[j * self.input + i] += dpre * x[i];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
}

/// `mean(min(ρA, clip(ρ, 1−ε, 1+ε)A))` with `ρ = π(a|s) / π_old(a|s)`.
pub fn surrogate_objective(net: &Mlp, params: &[f64], batch: &[Sample], clip: f64) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .map(|s| {
            let lp = net.forward_with(params, &s.features).1[s.action];
            let ratio = (lp - s.old_log_prob).exp();
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
            (ratio * s.advantage).min(clipped * s.advantage)
        })
        .sum();
    total / batch.len() as f64
}

/// Analytic gradient of [`surrogate_objective`]. The clipped branch is
/// constant, so a sample contributes only while its ratio is unclipped in
/// the direction its advantage pushes.
pub fn surrogate_gradient(net: &Mlp, params: &[f64], batch: &[Sample], clip: f64) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    if batch.is_empty() {
        return grad;
    }
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        if s.advantage == 0.0 {
            continue;
        }
        let lp = net.forward_with(params, &s.features).1[s.action];
        let ratio = (lp - s.old_log_prob).exp();
        let active = if s.advantage > 0.0 {
            ratio <= 1.0 + clip
        } else {
            ratio >= 1.0 - clip
        };
        if active {
            net.accumulate_log_prob_grad(params, &s.features, s.action, scale * s.advantage * ratio, &mut grad);
        }
    }
    grad
}

/// Largest parameter-wise relative error between the analytic surrogate
/// gradient and central differences with step `epsilon`. Relative error is
/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps near-zero components
/// from dividing rounding noise by nothing.
pub fn finite_difference_gradient_check(
    net: &Mlp,
    batch: &[Sample],
    clip: f64,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 1e-8 && epsilon < 1e-2) {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} outside (1e-8, 1e-2)")));
    }
    let analytic = surrogate_gradient(net, &net.params, batch, clip);
    let mut params = net.params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + epsilon;
        let up = surrogate_objective(net, &params, batch, clip);
        params[i] = orig - epsilon;
        let down = surrogate_objective(net, &params, batch, clip);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    /// Gradient ascent step.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] += self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// One policy network with its rollout buffer.
#[derive(Clone, Debug)]
pub struct PgHead {
    pub net: Mlp,
    adam: Adam,
    buffer: Vec<(Vec<f64>, usize, f64, f64, bool)>,
}

impl PgHead {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, actions: usize, lr: f64, rng: &mut R) -> Self {
        let net = Mlp::new(input, hidden, actions, rng);
        let adam = Adam::new(net.params.len(), lr);
        PgHead {
            net,
            adam,
            buffer: Vec::new(),
        }
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> (usize, f64) {
        let logp = self.net.log_probs(features);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                return (a, *lp);
            }
        }
        let last = logp.len() - 1;
        (last, logp[last])
    }

    pub fn record(&mut self, features: Vec<f64>, action: usize, log_prob: f64, reward: f64, done: bool) {
        self.buffer.push((features, action, log_prob, reward, done));
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Discounted returns-to-go per episode segment, standardized into
    /// advantages, then `epochs` Adam steps on the clipped surrogate.
    pub fn update(&mut self, gamma: f64, clip: f64, epochs: usize) {
        if self.buffer.is_empty() {
            return;
        }
        let mut returns = vec![0.0; self.buffer.len()];
        let mut running = 0.0;
        for i in (0..self.buffer.len()).rev() {
            let (_, _, _, reward, done) = &self.buffer[i];
            if *done {
                running = 0.0;
            }
            running = reward + gamma * running;
            returns[i] = running;
        }
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let batch: Vec<Sample> = self
            .buffer
            .drain(..)
            .zip(returns)
            .map(|((features, action, old_log_prob, _, _), g)| Sample {
                features,
                action,
                old_log_prob,
                advantage: if std > 1e-8 { (g - mean) / std } else { 0.0 },
            })
            .collect();
        for _ in 0..epochs {
            let grad = surrogate_gradient(&self.net, &self.net.params, &batch, clip);
            let mut params = std::mem::take(&mut self.net.params);
            self.adam.ascend(&mut params, &grad);
            self.net.params = params;
        }
    }
}
