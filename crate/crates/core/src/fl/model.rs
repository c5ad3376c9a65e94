//! Softmax regression and a one-hidden-layer tanh network over flat parameter vectors.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::dataset::Dataset;
use crate::rng::StreamRng;
use crate::{Error, Result};

/// A differentiable training objective over a flat parameter vector.
///
/// Losses are means over the listed samples.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Mean loss over `samples`; the gradient is written into `grad`.
    fn loss_and_grad(&self, w: &[f64], data: &Dataset, samples: &[usize], grad: &mut [f64]) -> f64;

    fn loss(&self, w: &[f64], data: &Dataset, samples: &[usize]) -> f64 {
        let mut scratch = vec![0.0; self.dim()];
        self.loss_and_grad(w, data, samples, &mut scratch)
    }

    /// Predicted class of sample `i`.
    fn predict(&self, w: &[f64], data: &Dataset, i: usize) -> usize;

    fn init(&self, rng: &mut StreamRng) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum ModelKind {
    LogisticRegression,
    MlpOneHidden { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub classes: usize,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, classes: usize) -> Self {
        Self { kind: ModelKind::LogisticRegression, input_dim, classes }
    }

    pub fn mlp(input_dim: usize, hidden: usize, classes: usize) -> Self {
        Self { kind: ModelKind::MlpOneHidden { hidden }, input_dim, classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes < 2 {
            return Err(Error::invalid("model", "need input_dim >= 1 and classes >= 2"));
        }
        if let ModelKind::MlpOneHidden { hidden: 0 } = self.kind {
            return Err(Error::invalid("hidden", "must be at least 1"));
        }
        Ok(())
    }

    /// Parameter count `D`.
    pub fn param_count(&self) -> usize {
        let (d, c) = (self.input_dim, self.classes);
        match self.kind {
            ModelKind::LogisticRegression => c * (d + 1),
            ModelKind::MlpOneHidden { hidden: h } => h * (d + 1) + c * (h + 1),
        }
    }
}

/// Dense layer `out = A·x + b` stored as rows `[a_0 .. a_{in-1}, b]`.
fn affine(params: &[f64], input: &[f64], out: &mut [f64]) {
    let stride = input.len() + 1;
    for (o, row) in out.iter_mut().zip(params.chunks_exact(stride)) {
        let (a, b) = row.split_at(input.len());
        *o = a.iter().zip(input).map(|(p, x)| p * x).sum::<f64>() + b[0];
    }
}

/// Accumulates `scale · delta ⊗ [input, 1]` into the layer gradient.
fn affine_grad(grad: &mut [f64], input: &[f64], delta: &[f64], scale: f64) {
    let stride = input.len() + 1;
    for (row, &d) in grad.chunks_exact_mut(stride).zip(delta) {
        let (a, b) = row.split_at_mut(input.len());
        let s = d * scale;
        for (g, x) in a.iter_mut().zip(input) {
            *g += s * x;
        }
        b[0] += s;
    }
}

/// Turns logits into probabilities in place; returns `−log p[label]`.
fn softmax_xent(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z_label = logits[label];
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = libm::exp(*z - max);
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
    libm::log(sum) + max - z_label
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Objective for ModelSpec {
    fn dim(&self) -> usize {
        self.param_count()
    }

    fn loss_and_grad(&self, w: &[f64], data: &Dataset, samples: &[usize], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if samples.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / samples.len() as f64;
        let c = self.classes;
        let mut logits = vec![0.0; c];
        let mut loss = 0.0;
        match self.kind {
            ModelKind::LogisticRegression => {
                for &i in samples {
                    let x = data.x(i);
                    let y = data.y(i);
                    affine(w, x, &mut logits);
                    loss += softmax_xent(&mut logits, y);
                    logits[y] -= 1.0;
                    affine_grad(grad, x, &logits, scale);
                }
            }
            ModelKind::MlpOneHidden { hidden } => {
                let split = hidden * (self.input_dim + 1);
                let (w1, w2) = w.split_at(split);
                let mut h = vec![0.0; hidden];
                let mut dh = vec![0.0; hidden];
                for &i in samples {
                    let x = data.x(i);
                    let y = data.y(i);
                    affine(w1, x, &mut h);
                    h.iter_mut().for_each(|v| *v = libm::tanh(*v));
                    affine(w2, &h, &mut logits);
                    loss += softmax_xent(&mut logits, y);
                    logits[y] -= 1.0;
                    let (g1, g2) = grad.split_at_mut(split);
                    affine_grad(g2, &h, &logits, scale);
                    for (j, d) in dh.iter_mut().enumerate() {
                        let back: f64 = (0..c).map(|k| w2[k * (hidden + 1) + j] * logits[k]).sum();
                        *d = back * (1.0 - h[j] * h[j]);
                    }
                    affine_grad(g1, x, &dh, scale);
                }
            }
        }
        loss * scale
    }

    fn predict(&self, w: &[f64], data: &Dataset, i: usize) -> usize {
        let mut logits = vec![0.0; self.classes];
        match self.kind {
            ModelKind::LogisticRegression => affine(w, data.x(i), &mut logits),
            ModelKind::MlpOneHidden { hidden } => {
                let (w1, w2) = w.split_at(hidden * (self.input_dim + 1));
                let mut h = vec![0.0; hidden];
                affine(w1, data.x(i), &mut h);
                h.iter_mut().for_each(|v| *v = libm::tanh(*v));
                affine(w2, &h, &mut logits);
            }
        }
        argmax(&logits)
    }

    fn init(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self.kind {
            ModelKind::LogisticRegression => {
                (0..self.param_count()).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            ModelKind::MlpOneHidden { hidden } => {
                let (d, c) = (self.input_dim, self.classes);
                let mut w = Vec::with_capacity(self.param_count());
                let layer = |w: &mut Vec<f64>, rng: &mut StreamRng, fan_in: usize, fan_out: usize| {
                    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                    for _ in 0..fan_out {
                        w.extend((0..fan_in).map(|_| rng.random_range(-limit..limit)));
                        w.push(0.0);
                    }
                };
                layer(&mut w, rng, d, hidden);
                layer(&mut w, rng, hidden, c);
                w
            }
        }
    }
}

/// Fraction of `samples` classified correctly.
pub fn accuracy<O: Objective + ?Sized>(obj: &O, w: &[f64], data: &Dataset, samples: &[usize]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples.iter().filter(|&&i| obj.predict(w, data, i) == data.y(i)).count();
    hits as f64 / samples.len() as f64
}

/// `½‖w − center‖²`, independent of the data. Used to check optimizer plumbing.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub center: Vec<f64>,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn loss_and_grad(&self, w: &[f64], _data: &Dataset, _samples: &[usize], grad: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for ((g, &wi), &ci) in grad.iter_mut().zip(w).zip(&self.center) {
            *g = wi - ci;
            loss += 0.5 * (wi - ci) * (wi - ci);
        }
        loss
    }

    fn predict(&self, _w: &[f64], _data: &Dataset, _i: usize) -> usize {
        0
    }

    fn init(&self, _rng: &mut StreamRng) -> Vec<f64> {
        vec![0.0; self.center.len()]
    }
}
