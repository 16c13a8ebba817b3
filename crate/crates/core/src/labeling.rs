//! Frame-level boundary targets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::segmentation::{Segmentation, VadSet};

/// Binary per-frame targets; 1 marks a (dilated) boundary frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    pub utt_id: String,
    pub hop_s: f64,
    pub labels: Vec<u8>,
}

impl FrameLabels {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Half-up rounding of a time to its frame index, clamped into the track.
pub fn time_to_frame(t: f64, hop_s: f64, n_frames: usize) -> usize {
    let i = libm::floor(t / hop_s + 0.5);
    if i <= 0.0 {
        0
    } else {
        (i as usize).min(n_frames - 1)
    }
}

/// Marks the frame nearest to each boundary plus `dilation` neighbours on each side.
///
/// `boundaries` are relative to frame 0. `n_frames` must be at least 1.
pub fn boundaries_to_frame_labels(
    utt_id: &str,
    boundaries: &[f64],
    n_frames: usize,
    hop_s: f64,
    dilation: usize,
) -> FrameLabels {
    assert!(n_frames >= 1, "a label track needs at least one frame");
    let mut labels = vec![0u8; n_frames];
    for &t in boundaries {
        let i = time_to_frame(t, hop_s, n_frames);
        let lo = i.saturating_sub(dilation);
        let hi = (i + dilation).min(n_frames - 1);
        labels[lo..=hi].fill(1);
    }
    FrameLabels { utt_id: utt_id.into(), hop_s, labels }
}

/// Labels for one utterance of a segmentation whose frame 0 sits at the VAD start.
pub fn labels_for_utterance(
    seg: &Segmentation,
    vads: &VadSet,
    utt_id: &str,
    n_frames: usize,
    hop_s: f64,
    dilation: usize,
) -> Result<FrameLabels> {
    let start = vads.require(utt_id)?.start_s;
    let rel: Vec<f64> = seg.require(utt_id)?.iter().map(|t| t - start).collect();
    Ok(boundaries_to_frame_labels(utt_id, &rel, n_frames, hop_s, dilation))
}

pub fn frames_to_times(indices: &[usize], hop_s: f64) -> Vec<f64> {
    indices.iter().map(|&i| i as f64 * hop_s).collect()
}
