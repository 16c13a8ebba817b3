//! Self-training toolkit for unsupervised word segmentation of speech.
//!
//! Boundaries from an existing segmenter become per-frame pseudo-labels, a
//! frame-level boundary predictor is trained on them, new boundaries are
//! extracted by peak picking, and the loop repeats with a freshly
//! initialized predictor. Everything here is pure computation over in-memory
//! data; file formats, the CLI and run directories live in the `boundloop`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod audio;
pub mod error;
pub mod eval;
pub mod features;
pub mod labeling;
pub mod peaks;
pub mod predictor;
pub mod rng;
pub mod segmentation;
pub mod selftrain;
pub mod synth;

pub use audio::AudioClip;
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use labeling::FrameLabels;
pub use peaks::PeakParams;
pub use segmentation::{AlignedWord, GoldAlignment, Segmentation, VadSegment, VadSet};
