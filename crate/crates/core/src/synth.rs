//! Synthetic corpora with known word boundaries, and a corrupter that turns
//! gold boundaries into an imperfect initial segmentation.
//!
//! Each word type is a fixed chord of three sinusoids. Tokens are packed
//! back to back inside the VAD with 10 ms raised-cosine fades, and a short
//! noise-only margin surrounds the VAD.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::segmentation::{quantize_ms, AlignedWord, GoldAlignment, Segmentation, VadSegment, VadSet};

/// Shortest token the generator emits.
pub const MIN_WORD_S: f64 = 0.05;
const FADE_S: f64 = 0.010;
const PARTIALS: usize = 3;
const FREQ_RANGE_HZ: (f64, f64) = (150.0, 3500.0);
const MARGIN_RANGE_S: (f64, f64) = (0.1, 0.3);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_utterances: usize,
    pub lexicon_size: usize,
    pub word_duration_mean_s: f64,
    pub word_duration_std_s: f64,
    /// Inclusive range of words per utterance.
    pub words_per_utterance: (usize, usize),
    pub sample_rate: u32,
    /// Standard deviation of additive Gaussian noise.
    pub noise_level: f64,
    pub seed: u64,
    /// Seed of the word signatures. `None` uses `seed`; two corpora sharing
    /// it speak the same language with different utterances.
    pub lexicon_seed: Option<u64>,
    /// Prefix of the generated utterance ids.
    pub id_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_utterances: 200,
            lexicon_size: 20,
            word_duration_mean_s: 0.3,
            word_duration_std_s: 0.1,
            words_per_utterance: (3, 8),
            sample_rate: 16000,
            noise_level: 0.01,
            seed: 0,
            lexicon_seed: None,
            id_prefix: "utt".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.words_per_utterance;
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth: {m}")));
        if self.n_utterances == 0 {
            return bad("n_utterances must be at least 1");
        }
        if self.lexicon_size < 2 {
            return bad("lexicon_size must be at least 2");
        }
        if !(self.word_duration_mean_s > 0.0 && self.word_duration_mean_s.is_finite()) {
            return bad("word_duration_mean_s must be positive");
        }
        if !(self.word_duration_std_s >= 0.0 && self.word_duration_std_s.is_finite()) {
            return bad("word_duration_std_s must be non-negative");
        }
        if lo == 0 || lo > hi {
            return bad("words_per_utterance must be a non-empty range starting at 1 or more");
        }
        if self.sample_rate < 8000 {
            return bad("sample_rate must be at least 8000");
        }
        if !(0.0..0.5).contains(&self.noise_level) {
            return bad("noise_level must be in [0, 0.5)");
        }
        Ok(())
    }
}

/// Spectral signature of one word type.
#[derive(Debug, Clone, PartialEq)]
pub struct WordType {
    pub label: String,
    pub freqs_hz: [f64; PARTIALS],
    pub amps: [f64; PARTIALS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub lexicon: Vec<WordType>,
    /// Full recordings, VAD plus silent margins.
    pub clips: Vec<AudioClip>,
    pub vads: VadSet,
    pub gold: GoldAlignment,
}

fn lexicon(spec: &SynthSpec) -> Vec<WordType> {
    let mut r = rng::rng(rng::derive_seed(spec.lexicon_seed.unwrap_or(spec.seed), tag::SYNTH_LEXICON, 0));
    let (lo, hi) = (libm::log(FREQ_RANGE_HZ.0), libm::log(FREQ_RANGE_HZ.1));
    let nyquist_guard = spec.sample_rate as f64 * 0.45;
    (0..spec.lexicon_size)
        .map(|k| {
            let mut freqs_hz = [0.0; PARTIALS];
            let mut amps = [0.0; PARTIALS];
            for p in 0..PARTIALS {
                freqs_hz[p] = libm::exp(r.random_range(lo..hi)).min(nyquist_guard);
                amps[p] = r.random_range(0.15..0.3);
            }
            WordType { label: format!("w{k:02}"), freqs_hz, amps }
        })
        .collect()
}

fn secs_to_samples(t: f64, sr: u32) -> usize {
    libm::round(t * sr as f64) as usize
}

/// Writes one token into `out[a..b]` with raised-cosine fades at both ends.
fn render_word(out: &mut [f32], word: &WordType, phases: &[f64; PARTIALS], sr: u32) {
    let n = out.len();
    let fade = secs_to_samples(FADE_S, sr).min(n / 2).max(1);
    for (i, y) in out.iter_mut().enumerate() {
        let t = i as f64 / sr as f64;
        let mut v = 0.0;
        for p in 0..PARTIALS {
            v += word.amps[p] * libm::sin(2.0 * PI * word.freqs_hz[p] * t + phases[p]);
        }
        let edge = i.min(n - 1 - i);
        let g = if edge < fade { 0.5 - 0.5 * libm::cos(PI * edge as f64 / fade as f64) } else { 1.0 };
        *y = (v * g) as f32;
    }
}

/// Generates a corpus. Every utterance draws from its own RNG stream, so the
/// output does not depend on generation order.
pub fn synth_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let lexicon = lexicon(spec);
    let sr = spec.sample_rate;
    let width = (spec.n_utterances.max(2) - 1).ilog10() as usize + 1;
    let mut clips = Vec::with_capacity(spec.n_utterances);
    let mut vads = Vec::with_capacity(spec.n_utterances);
    let mut gold = GoldAlignment::new();
    for u in 0..spec.n_utterances {
        let utt_id = format!("{}{:0width$}", spec.id_prefix, u, width = width.max(4));
        let mut r = rng::rng(rng::derive_seed(spec.seed, tag::SYNTH_UTTERANCE, u as u64));
        let n_words = r.random_range(spec.words_per_utterance.0..=spec.words_per_utterance.1);
        let lead = quantize_ms(r.random_range(MARGIN_RANGE_S.0..MARGIN_RANGE_S.1));
        let trail = quantize_ms(r.random_range(MARGIN_RANGE_S.0..MARGIN_RANGE_S.1));
        let mut words = Vec::with_capacity(n_words);
        let mut t = lead;
        for _ in 0..n_words {
            let z: f64 = r.sample(StandardNormal);
            let d = quantize_ms((spec.word_duration_mean_s + spec.word_duration_std_s * z).max(MIN_WORD_S));
            let k = r.random_range(0..spec.lexicon_size);
            let phases = [(); PARTIALS].map(|_| r.random_range(0.0..2.0 * PI));
            words.push((k, t, quantize_ms(t + d), phases));
            t = quantize_ms(t + d);
        }
        let vad_end = t;
        let total = secs_to_samples(quantize_ms(vad_end + trail), sr);
        let mut samples = vec![0.0f32; total];
        for &(k, a, b, phases) in &words {
            let (i, j) = (secs_to_samples(a, sr), secs_to_samples(b, sr));
            render_word(&mut samples[i..j], &lexicon[k], &phases, sr);
        }
        if spec.noise_level > 0.0 {
            for s in &mut samples {
                let z: f64 = r.sample(StandardNormal);
                *s += (spec.noise_level * z) as f32;
            }
        }
        clips.push(AudioClip::new(utt_id.clone(), sr, samples)?);
        vads.push(VadSegment::new(utt_id.clone(), lead, vad_end)?);
        gold.insert(
            utt_id,
            words.iter().map(|&(k, a, b, _)| AlignedWord::new(lexicon[k].label.clone(), a, b)).collect(),
        )?;
    }
    Ok(SynthCorpus { lexicon, clips, vads: VadSet::from_segments(vads)?, gold })
}

/// Perturbs the internal boundaries of `seg`: each is deleted with
/// probability `p_delete`, otherwise shifted by Gaussian jitter and kept
/// strictly inside its VAD. Each internal boundary also triggers, with
/// probability `p_insert`, one spurious boundary drawn uniformly over the VAD.
pub fn corrupt_segmentation(
    seg: &Segmentation,
    jitter_std_s: f64,
    p_delete: f64,
    p_insert: f64,
    seed: u64,
) -> Result<Segmentation> {
    let prob = |p: f64| (0.0..=1.0).contains(&p);
    if !(prob(p_delete) && prob(p_insert) && jitter_std_s >= 0.0 && jitter_std_s.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "corrupt: jitter {jitter_std_s}, p_delete {p_delete}, p_insert {p_insert}"
        )));
    }
    let mut out = Segmentation::new();
    for (idx, (utt, times)) in seg.iter().enumerate() {
        let (start, end) = (times[0], times[times.len() - 1]);
        let vad = VadSegment::new(utt, start, end)?;
        let mut r = rng::rng(rng::derive_seed(seed, tag::CORRUPT, idx as u64));
        let (lo, hi) = (start + 0.001, end - 0.001);
        let mut kept = Vec::new();
        for &b in &times[1..times.len() - 1] {
            let delete = r.random_bool(p_delete);
            let z: f64 = r.sample(StandardNormal);
            let insert = r.random_bool(p_insert);
            let u: f64 = r.random();
            if lo < hi {
                if !delete {
                    kept.push((b + jitter_std_s * z).clamp(lo, hi));
                }
                if insert {
                    kept.push(lo + u * (hi - lo));
                }
            }
        }
        out.insert(&vad, kept);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec { n_utterances: 10, lexicon_size: 2, words_per_utterance: (5, 5), seed, ..SynthSpec::default() }
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_corpus(&small(7)).unwrap(), synth_corpus(&small(7)).unwrap());
        assert_ne!(synth_corpus(&small(7)).unwrap().clips, synth_corpus(&small(8)).unwrap().clips);
    }

    #[test]
    fn counts_tokens_and_types() {
        let c = synth_corpus(&small(1)).unwrap();
        assert_eq!(c.gold.token_count(), 50);
        let mut labels: Vec<&str> = c.gold.iter().flat_map(|(_, w)| w.iter().map(|w| w.label.as_str())).collect();
        labels.sort_unstable();
        labels.dedup();
        assert!(labels.len() <= 2);
    }

    #[test]
    fn gold_spans_the_vad() {
        let c = synth_corpus(&small(3)).unwrap();
        c.gold.validate(&c.vads).unwrap();
        for (utt, words) in c.gold.iter() {
            let v = c.vads.get(utt).unwrap();
            assert_eq!(words[0].start_s, v.start_s);
            assert_eq!(words[words.len() - 1].end_s, v.end_s);
            assert!(words.windows(2).all(|p| p[0].end_s == p[1].start_s));
            assert!(words.iter().all(|w| w.duration_s() >= MIN_WORD_S - 1e-9));
        }
    }

    #[test]
    fn zero_noise_is_clean_and_silent_outside_words() {
        let spec = SynthSpec { noise_level: 0.0, ..small(4) };
        let c = synth_corpus(&spec).unwrap();
        let clip = &c.clips[0];
        let v = c.vads.get(&clip.utt_id).unwrap();
        let lead = secs_to_samples(v.start_s, clip.sample_rate);
        assert!(clip.samples[..lead].iter().all(|&s| s == 0.0));
        assert!(clip.samples[lead + 400] != 0.0);
        let noisy = synth_corpus(&SynthSpec { noise_level: 0.01, ..small(4) }).unwrap();
        assert_eq!(noisy.gold, c.gold);
    }

    #[test]
    fn shared_lexicon_seed_shares_signatures() {
        let a = synth_corpus(&SynthSpec { lexicon_seed: Some(5), ..small(1) }).unwrap();
        let b = synth_corpus(&SynthSpec { lexicon_seed: Some(5), ..small(2) }).unwrap();
        assert_eq!(a.lexicon, b.lexicon);
        assert_ne!(a.gold, b.gold);
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(synth_corpus(&SynthSpec { lexicon_size: 1, ..small(0) }).is_err());
        assert!(synth_corpus(&SynthSpec { noise_level: 0.5, ..small(0) }).is_err());
        assert!(synth_corpus(&SynthSpec { word_duration_mean_s: 0.0, ..small(0) }).is_err());
    }

    #[test]
    fn corrupt_identity_and_full_delete() {
        let c = synth_corpus(&small(2)).unwrap();
        let gold = c.gold.to_segmentation(&c.vads).unwrap();
        assert_eq!(corrupt_segmentation(&gold, 0.0, 0.0, 0.0, 9).unwrap(), gold);
        let edges = corrupt_segmentation(&gold, 0.0, 1.0, 0.0, 9).unwrap();
        assert_eq!(edges, Segmentation::edges_only(&c.vads));
    }

    #[test]
    fn corrupt_respects_invariants() {
        let c = synth_corpus(&SynthSpec { n_utterances: 40, ..SynthSpec::default() }).unwrap();
        let gold = c.gold.to_segmentation(&c.vads).unwrap();
        let a = corrupt_segmentation(&gold, 0.2, 0.3, 0.8, 1).unwrap();
        a.validate(&c.vads).unwrap();
        assert_eq!(a, corrupt_segmentation(&gold, 0.2, 0.3, 0.8, 1).unwrap());
        assert_ne!(a, gold);
    }
}
