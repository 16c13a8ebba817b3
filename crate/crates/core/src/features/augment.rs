//! Waveform augmentation with boundary remapping.
//!
//! Applied in order: resampling time-stretch, pitch shift, reverb, time-drop,
//! then peak normalization to 0.95. Only the stretch moves boundaries
//! (`t -> t / rate`).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::segmentation::quantize_ms;

pub const PEAK_LEVEL: f32 = 0.95;
/// Decay time of the synthetic impulse response at room scale 100.
pub const MAX_DECAY_S: f64 = 0.3;
const REVERB_TAPS: usize = 64;

/// One concrete draw of augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub reverb_room_scale: f64,
    pub pitch_cents: f64,
    pub stretch_rate: f64,
    pub timedrop_fraction: f64,
    pub seed: u64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { reverb_room_scale: 0.0, pitch_cents: 0.0, stretch_rate: 1.0, timedrop_fraction: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=100.0).contains(&self.reverb_room_scale)
            && self.pitch_cents.is_finite()
            && self.stretch_rate > 0.0
            && self.stretch_rate.is_finite()
            && (0.0..1.0).contains(&self.timedrop_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!("augmentation parameters out of range: {self:?}")))
        }
    }
}

/// Uniform sampling ranges for [`AugmentParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRanges {
    pub room_scale: (f64, f64),
    pub pitch_cents: (f64, f64),
    pub stretch_rate: (f64, f64),
    pub timedrop_fraction: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            room_scale: (0.0, 100.0),
            pitch_cents: (-300.0, 300.0),
            stretch_rate: (0.8, 1.0),
            timedrop_fraction: 0.05,
        }
    }
}

impl AugmentRanges {
    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.room_scale;
        let (s0, s1) = self.stretch_rate;
        let ok = 0.0 <= r0
            && r0 <= r1
            && r1 <= 100.0
            && self.pitch_cents.0 <= self.pitch_cents.1
            && 0.0 < s0
            && s0 <= s1
            && (0.0..1.0).contains(&self.timedrop_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!("augmentation ranges out of bounds: {self:?}")))
        }
    }

    pub fn sample(&self, seed: u64) -> AugmentParams {
        let mut r = rng::rng(rng::derive_seed(seed, tag::AUGMENT, 0));
        let mut uni = |(a, b): (f64, f64)| if a == b { a } else { r.random_range(a..=b) };
        AugmentParams {
            reverb_room_scale: uni(self.room_scale),
            pitch_cents: uni(self.pitch_cents),
            stretch_rate: uni(self.stretch_rate),
            timedrop_fraction: self.timedrop_fraction,
            seed,
        }
    }
}

/// Augments `clip` and remaps `boundaries` (seconds from the clip start,
/// edges included). The returned boundaries start at 0, end at the new
/// duration, and are strictly increasing on the millisecond grid.
pub fn augment(clip: &AudioClip, boundaries: &[f64], params: &AugmentParams) -> Result<(AudioClip, Vec<f64>)> {
    params.validate()?;
    let sr = clip.sample_rate;
    let mut x = resample(&clip.samples, params.stretch_rate);
    if x.is_empty() {
        x.push(0.0);
    }
    if params.pitch_cents != 0.0 {
        x = pitch_shift(&x, params.pitch_cents, sr);
    }
    if params.reverb_room_scale > 0.0 {
        x = reverb(&x, params.reverb_room_scale, sr, params.seed);
    }
    if params.timedrop_fraction > 0.0 {
        time_drop(&mut x, params.timedrop_fraction, sr, params.seed);
    }
    peak_normalize(&mut x, PEAK_LEVEL);

    let end = quantize_ms(x.len() as f64 / sr as f64);
    let old_end = quantize_ms(clip.duration_s());
    let mut out = vec![0.0];
    out.extend(
        boundaries
            .iter()
            .filter(|&&t| t > 0.0 && quantize_ms(t) < old_end)
            .map(|t| quantize_ms(t / params.stretch_rate))
            .filter(|&t| t > 0.0 && t < end),
    );
    out.push(end);
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok((AudioClip::new(clip.utt_id.clone(), sr, x)?, out))
}

/// Resampling stretch: output sample `j` reads input position `j * rate`
/// (linear interpolation), so durations scale by `1 / rate`.
pub fn resample(x: &[f32], rate: f64) -> Vec<f32> {
    if rate == 1.0 {
        return x.to_vec();
    }
    let m = libm::round(x.len() as f64 / rate) as usize;
    (0..m)
        .map(|j| {
            let pos = j as f64 * rate;
            let i = pos as usize;
            let frac = pos - i as f64;
            let a = x.get(i).copied().unwrap_or(0.0) as f64;
            let b = x.get(i + 1).copied().unwrap_or(0.0) as f64;
            (a + (b - a) * frac) as f32
        })
        .collect()
}

/// Pitch-preserving overlap-add stretch to `round(len * factor)` samples.
fn ola_stretch(x: &[f32], factor: f64, sr: u32) -> Vec<f32> {
    let frame = ((0.032 * sr as f64) as usize).next_power_of_two().max(16);
    let syn_hop = frame / 4;
    let ana_hop = syn_hop as f64 / factor;
    let out_len = libm::round(x.len() as f64 * factor) as usize;
    let window: Vec<f64> = (0..frame)
        .map(|n| 0.5 - 0.5 * libm::cos(2.0 * core::f64::consts::PI * n as f64 / frame as f64))
        .collect();
    let mut out = vec![0.0f64; out_len + frame];
    let mut norm = vec![0.0f64; out_len + frame];
    let n_frames = out_len / syn_hop + 1;
    for k in 0..n_frames {
        let a = libm::round(k as f64 * ana_hop) as usize;
        let s = k * syn_hop;
        for (i, w) in window.iter().enumerate() {
            let v = x.get(a + i).copied().unwrap_or(0.0) as f64;
            out[s + i] += w * v;
            norm[s + i] += w * w;
        }
    }
    out.truncate(out_len);
    out.iter().zip(&norm).map(|(v, n)| if *n > 1e-6 { (v / n) as f32 } else { 0.0 }).collect()
}

/// Pitch shift by `cents` keeping the length: pitch-preserving stretch by
/// `2^(cents/1200)` followed by resampling back to the original length.
pub fn pitch_shift(x: &[f32], cents: f64, sr: u32) -> Vec<f32> {
    let factor = libm::pow(2.0, cents / 1200.0);
    let stretched = ola_stretch(x, factor, sr);
    let mut y = resample(&stretched, factor);
    y.resize(x.len(), 0.0);
    y
}

/// Convolution with a sparse synthetic impulse response: a unit direct path
/// plus random taps under an exponential envelope reaching -60 dB at the
/// decay time, which grows linearly with the room scale.
pub fn reverb(x: &[f32], room_scale: f64, sr: u32, seed: u64) -> Vec<f32> {
    let decay_samples = MAX_DECAY_S * room_scale / 100.0 * sr as f64;
    if decay_samples < 1.0 {
        return x.to_vec();
    }
    let mut r = rng::rng(rng::derive_seed(seed, tag::AUGMENT, 1));
    let taps: Vec<(usize, f64)> = (0..REVERB_TAPS)
        .map(|_| {
            let delay = r.random_range(1.0..=decay_samples);
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            let amp = sign * r.random_range(0.5..1.0) * libm::exp(-6.9078 * delay / decay_samples);
            (delay as usize, amp * 0.25)
        })
        .collect();
    let mut y: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    for (delay, amp) in taps {
        for n in delay..x.len() {
            y[n] += amp * x[n - delay] as f64;
        }
    }
    y.into_iter().map(|v| v as f32).collect()
}

/// Zeroes random 10–40 ms spans until at least `fraction` of the samples are silent.
pub fn time_drop(x: &mut [f32], fraction: f64, sr: u32, seed: u64) {
    let target = libm::ceil(fraction * x.len() as f64) as usize;
    if target == 0 {
        return;
    }
    let mut r = rng::rng(rng::derive_seed(seed, tag::AUGMENT, 2));
    let min_span = ((0.010 * sr as f64) as usize).max(1);
    let max_span = ((0.040 * sr as f64) as usize).max(min_span);
    let mut dropped = vec![false; x.len()];
    let mut count = 0;
    while count < target {
        let span = r.random_range(min_span..=max_span).min(x.len());
        let start = r.random_range(0..=x.len() - span);
        for i in start..start + span {
            if !dropped[i] {
                dropped[i] = true;
                count += 1;
            }
        }
    }
    for (v, d) in x.iter_mut().zip(dropped) {
        if d {
            *v = 0.0;
        }
    }
}

pub fn peak_normalize(x: &mut [f32], level: f32) {
    let peak = x.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = level / peak;
        for v in x {
            *v *= g;
        }
    }
}
