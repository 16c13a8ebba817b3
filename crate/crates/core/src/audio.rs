use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub utt_id: String,
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl AudioClip {
    /// Builds a clip, clamping samples into [-1, 1]. Rejects empty or non-finite input.
    pub fn new(utt_id: impl Into<String>, sample_rate: u32, mut samples: Vec<f32>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample_rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Empty("audio samples"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Invalid(alloc::format!("non-finite sample at index {i}")));
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self { utt_id: utt_id.into(), sample_rate, samples })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sub-clip covering `[start_s, end_s)`, rounded to whole samples.
    pub fn slice_seconds(&self, start_s: f64, end_s: f64) -> Result<AudioClip> {
        let sr = self.sample_rate as f64;
        let a = libm::round(start_s * sr).max(0.0) as usize;
        let b = (libm::round(end_s * sr) as usize).min(self.samples.len());
        if a >= b {
            return Err(Error::Invalid(alloc::format!(
                "span [{start_s}, {end_s}) is empty within `{}`",
                self.utt_id
            )));
        }
        Ok(AudioClip {
            utt_id: self.utt_id.clone(),
            sample_rate: self.sample_rate,
            samples: self.samples[a..b].to_vec(),
        })
    }
}
