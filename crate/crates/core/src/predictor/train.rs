//! Training loop: batches of utterances, fresh augmentation per epoch,
//! masked inputs, hard-frame loss selection, Adam with warmup + cosine decay,
//! and snapshot selection on development loss.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{bce_topk_loss, logit_grads, TopKLoss};
use super::mlp::{init_model, Gradients, Mlp, ModelSpec, Mode, TrainNoise};
use super::schedule::LrSchedule;
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{augment, extract_features, AugmentRanges, FeatureConfig, FeatureMatrix};
use crate::labeling::boundaries_to_frame_labels;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_utterances: usize,
    pub max_utterance_s: f64,
    pub max_updates: u64,
    pub peak_lr: f64,
    pub warmup_updates: u64,
    pub cosine_period: u64,
    pub dropout: f64,
    pub mask_fraction: f64,
    /// Length in frames of each masked span.
    pub mask_span: usize,
    pub keep_fraction: f64,
    pub adam: AdamConfig,
    pub eval_every: u64,
    /// Re-augment raw audio every epoch when it is available.
    pub augment: bool,
    /// Chance that a given item is augmented in a given epoch.
    pub augment_probability: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_utterances: 12,
            max_utterance_s: 20.0,
            max_updates: 2000,
            peak_lr: 1e-4,
            warmup_updates: 200,
            cosine_period: 1000,
            dropout: 0.10,
            mask_fraction: 0.15,
            mask_span: 5,
            keep_fraction: 0.50,
            adam: AdamConfig::default(),
            eval_every: 50,
            augment: true,
            augment_probability: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_utterances >= 1
            && self.max_utterance_s > 0.0
            && self.peak_lr >= 0.0
            && self.keep_fraction > 0.0
            && self.keep_fraction <= 1.0
            && (0.0..1.0).contains(&self.dropout)
            && (0.0..1.0).contains(&self.mask_fraction)
            && (0.0..=1.0).contains(&self.augment_probability)
            && self.eval_every >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("train config out of range: {self:?}")))
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            peak_lr: self.peak_lr,
            warmup_updates: self.warmup_updates,
            cosine_period: self.cosine_period,
        }
    }
}

/// Raw audio behind a training item, used to re-augment each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSource {
    pub clip: AudioClip,
    /// Label-producing boundaries, seconds from the clip start.
    pub boundaries: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub features: FeatureMatrix,
    pub labels: Vec<u8>,
    pub audio: Option<AudioSource>,
}

/// What augmentation needs to rebuild features and labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentContext {
    pub ranges: AugmentRanges,
    pub features: FeatureConfig,
    pub dilation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    /// Mean training loss over the updates since the previous point.
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Snapshot with the lowest development loss.
    pub model: Mlp,
    pub curve: Vec<CurvePoint>,
    pub best_step: u64,
    pub best_dev_loss: f64,
}

/// Mean kept-frame loss and its gradients over a batch of utterances.
pub fn loss_and_grads(
    model: &Mlp,
    batch: &[(&FeatureMatrix, &[u8])],
    keep_fraction: f64,
    mode: Mode,
) -> Result<(TopKLoss, Gradients)> {
    let feats: Vec<&FeatureMatrix> = batch.iter().map(|(f, _)| *f).collect();
    let mut labels = Vec::new();
    for (f, l) in batch {
        if f.n_frames != l.len() {
            return Err(Error::Shape(format!("`{}`: {} frames vs {} labels", f.utt_id, f.n_frames, l.len())));
        }
        labels.extend_from_slice(l);
    }
    let cache = model.forward_batch(&feats, mode)?;
    let loss = bce_topk_loss(&cache.probs, &labels, keep_fraction)?;
    let dl = logit_grads(&cache.probs, &labels, &loss);
    Ok((loss, model.backward(&cache, &dl)))
}

/// Development loss: no noise, same hard-frame selection, pooled over all items.
pub fn dev_loss(model: &Mlp, dev: &[TrainItem], keep_fraction: f64) -> Result<f64> {
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    for item in dev {
        probs.extend(model.predict(&item.features)?);
        labels.extend_from_slice(&item.labels);
    }
    Ok(bce_topk_loss(&probs, &labels, keep_fraction)?.loss)
}

/// Splits items longer than `max_frames` into consecutive chunks. Audio is
/// carried along only when `ctx` says how frames map to samples.
fn split_long(items: &[TrainItem], max_frames: usize, ctx: Option<&AugmentContext>) -> Vec<TrainItem> {
    let mut out = Vec::new();
    for item in items {
        let n = item.features.n_frames;
        if n <= max_frames {
            out.push(item.clone());
            continue;
        }
        let mut start = 0;
        while start < n {
            let end = (start + max_frames).min(n);
            let audio = match (ctx, &item.audio) {
                (Some(c), Some(src)) => {
                    let hop = c.features.hop_samples();
                    let win = c.features.window_samples();
                    let a = start * hop;
                    let b = ((end - 1) * hop + win).min(src.clip.samples.len());
                    let sr = src.clip.sample_rate as f64;
                    let (t0, t1) = (a as f64 / sr, b as f64 / sr);
                    Some(AudioSource {
                        clip: AudioClip {
                            utt_id: src.clip.utt_id.clone(),
                            sample_rate: src.clip.sample_rate,
                            samples: src.clip.samples[a..b].to_vec(),
                        },
                        boundaries: src.boundaries.iter().filter(|&&t| t >= t0 && t <= t1).map(|t| t - t0).collect(),
                    })
                }
                _ => None,
            };
            out.push(TrainItem {
                features: item.features.slice_frames(start, end),
                labels: item.labels[start..end].to_vec(),
                audio,
            });
            start = end;
        }
    }
    out
}

/// Freshly augmented features and labels for one item, or `None` when the
/// augmented clip is too short to analyse.
fn augmented(item: &TrainItem, ctx: &AugmentContext, probability: f64, seed: u64) -> Result<Option<(FeatureMatrix, Vec<u8>)>> {
    let Some(src) = &item.audio else { return Ok(None) };
    if probability < 1.0 && !rng::rng(rng::derive_seed(seed, tag::AUGMENT, 3)).random_bool(probability) {
        return Ok(None);
    }
    let params = ctx.ranges.sample(seed);
    let duration = src.clip.duration_s();
    let (clip, mut remapped) = augment(&src.clip, &src.boundaries, &params)?;
    let has_start = src.boundaries.first().is_some_and(|&t| t <= 1e-9);
    let has_end = src.boundaries.last().is_some_and(|&t| (t - duration).abs() <= 1e-3);
    if !has_end {
        remapped.pop();
    }
    if !has_start && !remapped.is_empty() {
        remapped.remove(0);
    }
    let features = match extract_features(&clip, &ctx.features) {
        Ok(f) => f,
        Err(Error::ClipTooShort { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let labels =
        boundaries_to_frame_labels(&clip.utt_id, &remapped, features.n_frames, features.hop_s, ctx.dilation).labels;
    Ok(Some((features, labels)))
}

/// Trains a freshly initialized model and returns the snapshot with the
/// lowest development loss (the initial model included).
pub fn train(
    train: &[TrainItem],
    dev: &[TrainItem],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    augment_ctx: Option<&AugmentContext>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if dev.is_empty() {
        return Err(Error::Empty("development set"));
    }
    let mut model = init_model(spec, cfg.seed)?;
    if cfg.max_updates == 0 {
        return Ok(TrainOutcome { model, curve: Vec::new(), best_step: 0, best_dev_loss: f64::NAN });
    }
    let hop_s = train[0].features.hop_s;
    let max_frames = (libm::floor(cfg.max_utterance_s / hop_s) as usize).max(1);
    let ctx = augment_ctx.filter(|_| cfg.augment);
    let items = split_long(train, max_frames, ctx);
    let schedule = cfg.schedule();

    let mut state = AdamState::new(&model);
    let mut best_model = model.clone();
    let mut best_dev = dev_loss(&model, dev, cfg.keep_fraction)?;
    let mut best_step = 0;
    let mut curve = Vec::new();
    let (mut window_loss, mut window_n) = (0.0, 0u64);
    let mut step = 0u64;
    let mut epoch = 0u64;
    let mut order: Vec<usize> = (0..items.len()).collect();
    while step < cfg.max_updates {
        order.sort_unstable();
        order.shuffle(&mut rng::rng(rng::derive_seed(cfg.seed, tag::EPOCH_ORDER, epoch)));
        for chunk in order.chunks(cfg.batch_utterances) {
            if step >= cfg.max_updates {
                break;
            }
            let mut owned: Vec<(FeatureMatrix, Vec<u8>)> = Vec::new();
            let mut borrowed: Vec<usize> = Vec::new();
            for &i in chunk {
                let fresh = match ctx {
                    Some(c) => {
                        let seed = rng::derive_seed(cfg.seed, tag::AUGMENT, epoch * items.len() as u64 + i as u64);
                        augmented(&items[i], c, cfg.augment_probability, seed)?
                    }
                    None => None,
                };
                match fresh {
                    Some(pair) => owned.push(pair),
                    None => borrowed.push(i),
                }
            }
            let batch: Vec<(&FeatureMatrix, &[u8])> = owned
                .iter()
                .map(|(f, l)| (f, l.as_slice()))
                .chain(borrowed.iter().map(|&i| (&items[i].features, items[i].labels.as_slice())))
                .collect();
            let noise = TrainNoise {
                seed: rng::derive_seed(cfg.seed, tag::NOISE, step),
                mask_fraction: cfg.mask_fraction,
                mask_span: cfg.mask_span,
                dropout: cfg.dropout,
            };
            let (loss, grads) = loss_and_grads(&model, &batch, cfg.keep_fraction, Mode::Train(noise))?;
            adam_step(&mut model, &grads, &mut state, schedule.lr_at(step), &cfg.adam)?;
            step += 1;
            window_loss += loss.loss;
            window_n += 1;
            if step % cfg.eval_every == 0 || step == cfg.max_updates {
                let d = dev_loss(&model, dev, cfg.keep_fraction)?;
                curve.push(CurvePoint { step, train_loss: window_loss / window_n as f64, dev_loss: d });
                (window_loss, window_n) = (0.0, 0);
                if d < best_dev {
                    best_dev = d;
                    best_model = model.clone();
                    best_step = step;
                }
            }
        }
        epoch += 1;
    }
    Ok(TrainOutcome { model: best_model, curve, best_step, best_dev_loss: best_dev })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn item(n: usize, every: usize) -> TrainItem {
        let labels: Vec<u8> = (0..n).map(|i| (i % every == 0) as u8).collect();
        let data = labels.iter().flat_map(|&l| [if l == 1 { 1.0 } else { -1.0 }, 0.3]).collect();
        TrainItem { features: FeatureMatrix::new("u", n, 2, 0.02, data).unwrap(), labels, audio: None }
    }

    fn small_spec() -> ModelSpec {
        ModelSpec { context_radius: 1, feature_dim: 2, hidden: vec![8] }
    }

    #[test]
    fn zero_updates_returns_init() {
        let cfg = TrainConfig { max_updates: 0, ..TrainConfig::default() };
        let out = train(&[item(20, 5)], &[item(20, 5)], &small_spec(), &cfg, None).unwrap();
        assert_eq!(out.model, init_model(&small_spec(), cfg.seed).unwrap());
        assert!(out.curve.is_empty());
    }

    #[test]
    fn empty_dev_is_an_error() {
        let r = train(&[item(20, 5)], &[], &small_spec(), &TrainConfig::default(), None);
        assert_eq!(r.unwrap_err(), Error::Empty("development set"));
    }

    #[test]
    fn long_items_are_split() {
        let parts = split_long(&[item(25, 5)], 10, None);
        assert_eq!(parts.iter().map(|p| p.features.n_frames).collect::<Vec<_>>(), vec![10, 10, 5]);
        assert_eq!(parts[1].labels, item(25, 5).labels[10..20].to_vec());
    }
}
