//! Frame-level log-mel features and label-preserving waveform augmentation.

pub mod augment;
pub mod fft;
pub mod mel;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub use augment::{augment, AugmentParams, AugmentRanges};

const LOG_FLOOR: f64 = 1e-10;

/// Row-major `n_frames × dim` matrix of per-frame values.
///
/// Also carries per-frame probability tracks (`dim == 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub utt_id: String,
    pub n_frames: usize,
    pub dim: usize,
    pub hop_s: f64,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(utt_id: impl Into<String>, n_frames: usize, dim: usize, hop_s: f64, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_frames * dim {
            return Err(Error::Shape(format!(
                "{n_frames}x{dim} matrix needs {} values, got {}",
                n_frames * dim,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { utt_id: utt_id.into(), n_frames, dim, hop_s, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Frames `[start, end)` as a new matrix.
    pub fn slice_frames(&self, start: usize, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            utt_id: self.utt_id.clone(),
            n_frames: end - start,
            dim: self.dim,
            hop_s: self.hop_s,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }

    /// Wraps a probability track as a one-column matrix.
    pub fn from_track(utt_id: impl Into<String>, hop_s: f64, probs: &[f64]) -> Self {
        Self {
            utt_id: utt_id.into(),
            n_frames: probs.len(),
            dim: 1,
            hop_s,
            data: probs.iter().map(|&p| p as f32).collect(),
        }
    }

    /// Reads a one-column matrix as a probability track, checking the range
    /// and, when given, the expected frame count.
    pub fn to_track(&self, expected_frames: Option<usize>) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::Shape(format!("probability track `{}` has dim {}", self.utt_id, self.dim)));
        }
        if let Some(n) = expected_frames.filter(|&n| n != self.n_frames) {
            return Err(Error::Shape(format!(
                "probability track `{}` has {} frames, features have {n}",
                self.utt_id, self.n_frames
            )));
        }
        self.data
            .iter()
            .enumerate()
            .map(|(frame, &v)| {
                let value = v as f64;
                if (0.0..=1.0).contains(&value) {
                    Ok(value)
                } else {
                    Err(Error::ProbabilityRange { frame, value })
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { sample_rate: 16000, win_ms: 25.0, hop_ms: 20.0, n_mels: 40 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.n_mels == 0 || self.window_samples() < 2 || self.hop_samples() < 1 {
            return Err(Error::InvalidConfig(format!("unusable feature config {self:?}")));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        libm::round(self.sample_rate as f64 * self.win_ms / 1000.0) as usize
    }

    pub fn hop_samples(&self) -> usize {
        libm::round(self.sample_rate as f64 * self.hop_ms / 1000.0) as usize
    }

    pub fn hop_s(&self) -> f64 {
        self.hop_samples() as f64 / self.sample_rate as f64
    }

    pub fn n_fft(&self) -> usize {
        self.window_samples().next_power_of_two()
    }

    /// `floor((n - win) / hop) + 1`, or `None` when the clip is shorter than a window.
    pub fn frame_count(&self, n_samples: usize) -> Option<usize> {
        let win = self.window_samples();
        (n_samples >= win).then(|| (n_samples - win) / self.hop_samples() + 1)
    }
}

/// Reusable analysis state (window, filterbank, scratch buffers).
#[derive(Debug, Clone)]
pub struct LogMel {
    cfg: FeatureConfig,
    window: Vec<f64>,
    bank: mel::MelBank,
}

impl LogMel {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.window_samples();
        let window = (0..win).map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / win as f64)).collect();
        let bank = mel::MelBank::new(cfg.n_mels, cfg.n_fft(), cfg.sample_rate);
        Ok(Self { cfg, window, bank })
    }

    /// Natural-log mel energies, `log(x + 1e-10)`, without normalization.
    pub fn compute(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        let cfg = &self.cfg;
        if clip.sample_rate != cfg.sample_rate {
            return Err(Error::Invalid(format!(
                "`{}` is sampled at {} Hz, features expect {} Hz",
                clip.utt_id, clip.sample_rate, cfg.sample_rate
            )));
        }
        let win = cfg.window_samples();
        let n_frames = cfg
            .frame_count(clip.samples.len())
            .ok_or(Error::ClipTooShort { samples: clip.samples.len(), window: win })?;
        let hop = cfg.hop_samples();
        let n_fft = cfg.n_fft();
        let mut re = vec![0.0; n_fft];
        let mut im = vec![0.0; n_fft];
        let mut power = vec![0.0; n_fft / 2 + 1];
        let mut mel = vec![0.0; cfg.n_mels];
        let mut data = Vec::with_capacity(n_frames * cfg.n_mels);
        for f in 0..n_frames {
            let frame = &clip.samples[f * hop..f * hop + win];
            re.fill(0.0);
            im.fill(0.0);
            for ((r, &s), w) in re.iter_mut().zip(frame).zip(&self.window) {
                *r = s as f64 * w;
            }
            fft::fft_in_place(&mut re, &mut im);
            for (k, p) in power.iter_mut().enumerate() {
                *p = re[k] * re[k] + im[k] * im[k];
            }
            self.bank.apply(&power, &mut mel);
            data.extend(mel.iter().map(|&e| libm::log(e + LOG_FLOOR) as f32));
        }
        FeatureMatrix::new(clip.utt_id.clone(), n_frames, cfg.n_mels, cfg.hop_s(), data)
    }
}

/// Per-dimension mean/variance normalization in place. Dimensions with
/// (numerically) zero variance become all zeros.
pub fn normalize(m: &mut FeatureMatrix) {
    if m.n_frames == 0 {
        return;
    }
    let n = m.n_frames as f64;
    for d in 0..m.dim {
        let col = |i: usize| m.data[i * m.dim + d] as f64;
        let mean = (0..m.n_frames).map(col).sum::<f64>() / n;
        let var = (0..m.n_frames).map(|i| (col(i) - mean) * (col(i) - mean)).sum::<f64>() / n;
        let scale = if var > 1e-12 * (1.0 + mean * mean) { 1.0 / libm::sqrt(var) } else { 0.0 };
        for i in 0..m.n_frames {
            let v = &mut m.data[i * m.dim + d];
            *v = ((*v as f64 - mean) * scale) as f32;
        }
    }
}

/// Normalized log-mel features of a clip.
pub fn extract_features(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let mut m = LogMel::new(*cfg)?.compute(clip)?;
    normalize(&mut m);
    Ok(m)
}
