//! Boundary containers exchanged between segmenters, the trainer and the evaluator.
//!
//! All times live on a millisecond grid: every constructor quantizes, so the
//! in-memory value is exactly what the text formats serialize.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Rounds a time in seconds to the nearest millisecond.
pub fn quantize_ms(t: f64) -> f64 {
    libm::round(t * 1000.0) / 1000.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadSegment {
    pub utt_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl VadSegment {
    pub fn new(utt_id: impl Into<String>, start_s: f64, end_s: f64) -> Result<Self> {
        let utt_id = utt_id.into();
        let (start_s, end_s) = (quantize_ms(start_s), quantize_ms(end_s));
        if !(start_s.is_finite() && end_s.is_finite()) || start_s < 0.0 || start_s >= end_s {
            return Err(Error::Invalid(format!(
                "VAD span [{start_s}, {end_s}] of `{utt_id}` must satisfy 0 <= start < end"
            )));
        }
        Ok(Self { utt_id, start_s, end_s })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// One VAD span per utterance, keyed by utterance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VadSet {
    spans: BTreeMap<String, VadSegment>,
}

impl VadSet {
    /// Rejects recordings carrying more than one span: the pipeline segments
    /// one VAD per utterance id, so multi-span recordings must be split first.
    pub fn from_segments(segments: impl IntoIterator<Item = VadSegment>) -> Result<Self> {
        let mut spans = BTreeMap::new();
        for seg in segments {
            if spans.contains_key(&seg.utt_id) {
                return Err(Error::Invalid(format!(
                    "utterance `{}` has several VAD spans; split it into one id per span",
                    seg.utt_id
                )));
            }
            spans.insert(seg.utt_id.clone(), seg);
        }
        Ok(Self { spans })
    }

    pub fn get(&self, utt_id: &str) -> Option<&VadSegment> {
        self.spans.get(utt_id)
    }

    pub fn require(&self, utt_id: &str) -> Result<&VadSegment> {
        self.get(utt_id).ok_or_else(|| Error::UnknownUtterance(utt_id.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &VadSegment> {
        self.spans.values()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.spans.values().map(VadSegment::duration_s).sum()
    }

    pub fn insert(&mut self, seg: VadSegment) {
        self.spans.insert(seg.utt_id.clone(), seg);
    }
}

/// Per-utterance sorted boundary times, VAD edges included.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segmentation {
    utts: BTreeMap<String, Vec<f64>>,
}

impl Segmentation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the boundaries of one utterance. Times are quantized, clamped
    /// into the VAD span, merged with the VAD edges and deduplicated. Returns
    /// how many times had to be clamped.
    pub fn insert(&mut self, vad: &VadSegment, times: impl IntoIterator<Item = f64>) -> usize {
        let mut clamped = 0;
        let mut out = Vec::new();
        out.push(vad.start_s);
        for t in times {
            let mut t = quantize_ms(t);
            if !t.is_finite() {
                clamped += 1;
                continue;
            }
            if t < vad.start_s || t > vad.end_s {
                clamped += 1;
                t = t.clamp(vad.start_s, vad.end_s);
            }
            out.push(t);
        }
        out.push(vad.end_s);
        out.sort_by(f64::total_cmp);
        out.dedup();
        self.utts.insert(vad.utt_id.clone(), out);
        clamped
    }

    /// Only VAD edges for every utterance.
    pub fn edges_only(vads: &VadSet) -> Self {
        let mut seg = Self::new();
        for v in vads.iter() {
            seg.insert(v, []);
        }
        seg
    }

    pub fn get(&self, utt_id: &str) -> Option<&[f64]> {
        self.utts.get(utt_id).map(Vec::as_slice)
    }

    pub fn require(&self, utt_id: &str) -> Result<&[f64]> {
        self.get(utt_id).ok_or_else(|| Error::UnknownUtterance(utt_id.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.utts.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn utt_ids(&self) -> impl Iterator<Item = &str> {
        self.utts.keys().map(String::as_str)
    }

    pub fn contains(&self, utt_id: &str) -> bool {
        self.utts.contains_key(utt_id)
    }

    pub fn len(&self) -> usize {
        self.utts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utts.is_empty()
    }

    /// Boundaries strictly inside the VAD span.
    pub fn internal(&self, utt_id: &str) -> Option<&[f64]> {
        self.get(utt_id).map(|b| &b[1..b.len() - 1])
    }

    /// Consecutive boundary pairs.
    pub fn tokens(&self, utt_id: &str) -> Option<Vec<(f64, f64)>> {
        self.get(utt_id).map(|b| b.windows(2).map(|w| (w[0], w[1])).collect())
    }

    pub fn token_count(&self) -> usize {
        self.utts.values().map(|b| b.len() - 1).sum()
    }

    /// Keeps only the listed utterances (unknown ids are ignored).
    pub fn restrict<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Segmentation {
        let mut utts = BTreeMap::new();
        for id in ids {
            if let Some(b) = self.utts.get(id) {
                utts.insert(String::from(id), b.clone());
            }
        }
        Segmentation { utts }
    }

    /// Adds every utterance of `other`, replacing duplicates.
    pub fn extend(&mut self, other: Segmentation) {
        self.utts.extend(other.utts);
    }

    /// Checks the type invariants against the VAD table.
    pub fn validate(&self, vads: &VadSet) -> Result<()> {
        for (id, b) in &self.utts {
            let vad = vads.require(id)?;
            if b.len() < 2 || b[0] != vad.start_s || b[b.len() - 1] != vad.end_s {
                return Err(Error::Invalid(format!("`{id}` boundaries do not start/end on its VAD edges")));
            }
            if b.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Invalid(format!("`{id}` boundaries are not strictly increasing")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWord {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl AlignedWord {
    pub fn new(label: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self { label: label.into(), start_s: quantize_ms(start_s), end_s: quantize_ms(end_s) }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Time-aligned reference transcription.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldAlignment {
    utts: BTreeMap<String, Vec<AlignedWord>>,
}

impl GoldAlignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts the words of `utt_id` and checks they are non-overlapping with positive length.
    pub fn insert(&mut self, utt_id: impl Into<String>, mut words: Vec<AlignedWord>) -> Result<()> {
        let utt_id = utt_id.into();
        words.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for w in &words {
            if !(w.start_s >= 0.0 && w.start_s < w.end_s) {
                return Err(Error::Invalid(format!(
                    "word `{}` of `{utt_id}` has span [{}, {}]",
                    w.label, w.start_s, w.end_s
                )));
            }
        }
        if let Some(pair) = words.windows(2).find(|p| p[1].start_s < p[0].end_s) {
            return Err(Error::Invalid(format!(
                "words `{}` and `{}` of `{utt_id}` overlap",
                pair[0].label, pair[1].label
            )));
        }
        self.utts.insert(utt_id, words);
        Ok(())
    }

    pub fn get(&self, utt_id: &str) -> Option<&[AlignedWord]> {
        self.utts.get(utt_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[AlignedWord])> {
        self.utts.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn utt_ids(&self) -> impl Iterator<Item = &str> {
        self.utts.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.utts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utts.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.utts.values().map(Vec::len).sum()
    }

    pub fn restrict<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> GoldAlignment {
        let mut utts = BTreeMap::new();
        for id in ids {
            if let Some(w) = self.utts.get(id) {
                utts.insert(String::from(id), w.clone());
            }
        }
        GoldAlignment { utts }
    }

    pub fn extend(&mut self, other: GoldAlignment) {
        self.utts.extend(other.utts);
    }

    /// Checks every word lies inside its utterance's VAD span.
    pub fn validate(&self, vads: &VadSet) -> Result<()> {
        for (id, words) in &self.utts {
            let vad = vads.require(id)?;
            for w in words {
                if w.start_s < vad.start_s || w.end_s > vad.end_s {
                    return Err(Error::Invalid(format!(
                        "word `{}` of `{id}` lies outside its VAD span",
                        w.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Gold boundaries: word edges plus VAD edges.
    pub fn to_segmentation(&self, vads: &VadSet) -> Result<Segmentation> {
        let mut seg = Segmentation::new();
        for (id, words) in &self.utts {
            let vad = vads.require(id)?;
            seg.insert(vad, words.iter().flat_map(|w| [w.start_s, w.end_s]));
        }
        Ok(seg)
    }

    /// Mean and population standard deviation of word durations.
    pub fn duration_stats(&self) -> Option<(f64, f64)> {
        let durs: Vec<f64> = self.utts.values().flatten().map(AlignedWord::duration_s).collect();
        if durs.is_empty() {
            return None;
        }
        let n = durs.len() as f64;
        let mean = durs.iter().sum::<f64>() / n;
        let var = durs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        Some((mean, libm::sqrt(var)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn vad(id: &str, a: f64, b: f64) -> VadSegment {
        VadSegment::new(id, a, b).unwrap()
    }

    #[test]
    fn edges_are_inserted() {
        let mut s = Segmentation::new();
        assert_eq!(s.insert(&vad("u", 0.0, 1.0), [0.5]), 0);
        assert_eq!(s.get("u").unwrap(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn out_of_span_boundary_is_clamped_and_counted() {
        let mut s = Segmentation::new();
        assert_eq!(s.insert(&vad("u", 0.0, 1.0), [1.7]), 1);
        assert_eq!(s.get("u").unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn reversed_vad_rejected() {
        assert!(VadSegment::new("u", 1.0, 0.5).is_err());
        assert!(VadSegment::new("u", -0.1, 0.5).is_err());
    }

    #[test]
    fn duplicate_vad_rejected() {
        let r = VadSet::from_segments([vad("u", 0.0, 1.0), vad("u", 2.0, 3.0)]);
        assert!(r.is_err());
    }

    #[test]
    fn alignment_overlap_rejected() {
        let mut g = GoldAlignment::new();
        let r = g.insert("u", vec![AlignedWord::new("a", 0.0, 0.6), AlignedWord::new("b", 0.5, 1.0)]);
        assert!(r.is_err());
    }

    #[test]
    fn gold_segmentation_includes_vad_edges() {
        let vads = VadSet::from_segments([vad("u", 0.0, 1.2)]).unwrap();
        let mut g = GoldAlignment::new();
        g.insert("u", vec![AlignedWord::new("a", 0.1, 0.5), AlignedWord::new("b", 0.5, 1.0)]).unwrap();
        let seg = g.to_segmentation(&vads).unwrap();
        assert_eq!(seg.get("u").unwrap(), &[0.0, 0.1, 0.5, 1.0, 1.2]);
        seg.validate(&vads).unwrap();
    }

    #[test]
    fn duration_stats_population() {
        let mut g = GoldAlignment::new();
        g.insert("u", vec![AlignedWord::new("a", 0.0, 0.2), AlignedWord::new("b", 0.2, 0.6)]).unwrap();
        let (m, s) = g.duration_stats().unwrap();
        assert!((m - 0.3).abs() < 1e-12);
        assert!((s - 0.1).abs() < 1e-12);
    }
}
