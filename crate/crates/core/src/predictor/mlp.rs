//! Windowed multilayer perceptron: each frame sees its `2R + 1` neighbours,
//! hidden layers use ReLU, the single output unit a sigmoid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::linalg;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub context_radius: usize,
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
}

impl ModelSpec {
    pub fn new(feature_dim: usize) -> Self {
        Self { context_radius: 7, feature_dim, hidden: vec![256, 128] }
    }

    pub fn input_dim(&self) -> usize {
        (2 * self.context_radius + 1) * self.feature_dim
    }

    /// Widths from input to output, output width 1.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(&self.hidden);
        w.push(1);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!("degenerate model spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub context_radius: usize,
    pub feature_dim: usize,
    pub layers: Vec<Dense>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<Mlp> {
    spec.validate()?;
    let mut r = rng::rng(rng::derive_seed(seed, tag::MODEL_INIT, 0));
    let widths = spec.widths();
    let layers = widths
        .windows(2)
        .map(|w| {
            let (i, o) = (w[0], w[1]);
            let bound = libm::sqrt(6.0 / (i + o) as f64);
            Dense {
                in_dim: i,
                out_dim: o,
                weights: (0..i * o).map(|_| r.random_range(-bound..=bound)).collect(),
                bias: vec![0.0; o],
            }
        })
        .collect();
    Ok(Mlp { context_radius: spec.context_radius, feature_dim: spec.feature_dim, layers })
}

/// Training-time noise: contiguous input-frame masking and hidden dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainNoise {
    pub seed: u64,
    pub mask_fraction: f64,
    pub mask_span: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    Train(TrainNoise),
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub n: usize,
    /// Layer inputs; `inputs[0]` is the windowed feature matrix.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    /// Dropout multipliers of hidden layers (train mode only).
    drop: Vec<Option<Vec<f64>>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Frames zeroed at the input: random spans of `mask_span` frames until
/// `round(fraction * n)` distinct frames are covered.
pub fn mask_frames(n: usize, fraction: f64, span: usize, r: &mut impl Rng) -> Vec<bool> {
    let mut masked = vec![false; n];
    let target = libm::round(fraction * n as f64) as usize;
    if target == 0 || n == 0 {
        return masked;
    }
    let span = span.clamp(1, n);
    let mut count = 0;
    while count < target {
        let start = r.random_range(0..=n - span);
        for m in &mut masked[start..start + span] {
            if !*m {
                *m = true;
                count += 1;
                if count == target {
                    break;
                }
            }
        }
    }
    masked
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        (2 * self.context_radius + 1) * self.feature_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn windowed_input(&self, utts: &[&FeatureMatrix], mode: Mode) -> Result<(Vec<f64>, usize)> {
        let d = self.feature_dim;
        let r = self.context_radius;
        let n: usize = utts.iter().map(|u| u.n_frames).sum();
        let width = self.input_dim();
        let mut x = vec![0.0; n * width];
        let mut row = 0;
        for (u_idx, u) in utts.iter().enumerate() {
            if u.dim != d {
                return Err(Error::Shape(format!("`{}` has dim {}, model expects {d}", u.utt_id, u.dim)));
            }
            let masked = match mode {
                Mode::Train(noise) if noise.mask_fraction > 0.0 => {
                    let mut g = rng::rng(rng::derive_seed(noise.seed, tag::NOISE, 2 * u_idx as u64));
                    mask_frames(u.n_frames, noise.mask_fraction, noise.mask_span, &mut g)
                }
                _ => vec![false; u.n_frames],
            };
            for i in 0..u.n_frames {
                let dst = &mut x[(row + i) * width..(row + i + 1) * width];
                for o in 0..=2 * r {
                    let j = i as isize + o as isize - r as isize;
                    if j < 0 || j as usize >= u.n_frames || masked[j as usize] {
                        continue;
                    }
                    for (t, s) in dst[o * d..(o + 1) * d].iter_mut().zip(u.row(j as usize)) {
                        *t = *s as f64;
                    }
                }
            }
            row += u.n_frames;
        }
        Ok((x, n))
    }

    /// Forward pass over the concatenated frames of `utts`.
    pub fn forward_batch(&self, utts: &[&FeatureMatrix], mode: Mode) -> Result<ForwardCache> {
        let (x, n) = self.windowed_input(utts, mode)?;
        let last = self.layers.len() - 1;
        let mut inputs = vec![x];
        let mut pre = Vec::with_capacity(last);
        let mut drop = Vec::with_capacity(last);
        let mut drop_rng = match mode {
            Mode::Train(noise) => Some((rng::rng(rng::derive_seed(noise.seed, tag::NOISE, 1)), noise.dropout)),
            Mode::Eval => None,
        };
        let mut logits = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; n * layer.out_dim];
            linalg::affine(&inputs[l], &layer.weights, &layer.bias, n, layer.in_dim, layer.out_dim, &mut z);
            if l == last {
                logits = z;
                break;
            }
            let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            let mask = match &mut drop_rng {
                Some((g, p)) if *p > 0.0 => {
                    let keep = 1.0 / (1.0 - *p);
                    let m: Vec<f64> = (0..a.len()).map(|_| if g.random::<f64>() < *p { 0.0 } else { keep }).collect();
                    for (v, k) in a.iter_mut().zip(&m) {
                        *v *= k;
                    }
                    Some(m)
                }
                _ => None,
            };
            pre.push(z);
            drop.push(mask);
            inputs.push(a);
        }
        let probs = logits.iter().map(|&z| sigmoid(z)).collect();
        Ok(ForwardCache { n, inputs, pre, drop, logits, probs })
    }

    /// Boundary probabilities of one utterance, without training noise.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&[features], Mode::Eval)?.probs)
    }

    /// Back-propagates `dlogits` (loss gradient w.r.t. each output logit).
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64]) -> Gradients {
        assert_eq!(dlogits.len(), cache.n);
        let n = cache.n;
        let mut grads = Gradients::zeros_like(self);
        let mut dz = dlogits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            linalg::accumulate_weight_grad(&dz, &cache.inputs[l], n, layer.in_dim, layer.out_dim, &mut g.weights);
            for row in dz.chunks_exact(layer.out_dim) {
                for (b, v) in g.bias.iter_mut().zip(row) {
                    *b += v;
                }
            }
            if l == 0 {
                break;
            }
            let mut da = vec![0.0; n * layer.in_dim];
            linalg::input_grad(&dz, &layer.weights, n, layer.in_dim, layer.out_dim, &mut da);
            let pre = &cache.pre[l - 1];
            match &cache.drop[l - 1] {
                Some(m) => {
                    for ((v, p), k) in da.iter_mut().zip(pre).zip(m) {
                        *v = if *p > 0.0 { *v * k } else { 0.0 };
                    }
                }
                None => {
                    for (v, p) in da.iter_mut().zip(pre) {
                        if *p <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
            dz = da;
        }
        grads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients shaped like an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}
