//! Boundary extraction from probability tracks by constrained local-maxima picking.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval;
use crate::segmentation::{quantize_ms, Segmentation, VadSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakParams {
    pub min_height: f64,
    pub min_distance: usize,
}

impl PeakParams {
    pub fn new(min_height: f64, min_distance: usize) -> Result<Self> {
        if !(min_height > 0.0 && min_height < 1.0) || min_distance < 1 {
            return Err(Error::InvalidConfig(alloc::format!(
                "peak params need 0 < min_height < 1 and min_distance >= 1, got ({min_height}, {min_distance})"
            )));
        }
        Ok(Self { min_height, min_distance })
    }
}

/// Interior local maxima. A plateau counts once, at its center (the left
/// one for even widths). Endpoints are never peaks.
pub fn local_maxima(probs: &[f64]) -> Vec<usize> {
    let n = probs.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if probs[i] > probs[i - 1] {
            let mut r = i;
            while r + 1 < n && probs[r + 1] == probs[i] {
                r += 1;
            }
            if r + 1 < n && probs[r + 1] < probs[i] {
                out.push((i + r) / 2);
            }
            i = r + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Local maxima at least `min_height` tall, suppressed greedily by height
/// (ties to the lower index) so that accepted peaks are at least
/// `min_distance` frames apart. Returned in increasing order.
pub fn detect_peaks(probs: &[f64], params: PeakParams) -> Vec<usize> {
    let mut cands: Vec<usize> =
        local_maxima(probs).into_iter().filter(|&i| probs[i] >= params.min_height).collect();
    cands.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let d = params.min_distance;
    let mut blocked = vec![false; probs.len()];
    let mut kept = Vec::new();
    for i in cands {
        if blocked[i] {
            continue;
        }
        kept.push(i);
        let lo = (i + 1).saturating_sub(d);
        let hi = (i + d).min(probs.len());
        blocked[lo..hi].fill(true);
    }
    kept.sort_unstable();
    kept
}

/// Converts peak frames of one utterance (frame 0 at the VAD start) into its
/// boundary list. Times falling on or beyond the VAD edges are dropped.
pub fn peaks_to_times(indices: &[usize], hop_s: f64, vad_start: f64, vad_end: f64) -> Vec<f64> {
    indices
        .iter()
        .map(|&i| quantize_ms(vad_start + i as f64 * hop_s))
        .filter(|&t| t > vad_start && t < vad_end)
        .collect()
}

/// Builds a segmentation from per-utterance peak indices.
pub fn peaks_to_segmentation<'a>(
    peaks: impl IntoIterator<Item = (&'a str, &'a [usize])>,
    hop_s: f64,
    vads: &VadSet,
) -> Result<Segmentation> {
    let mut seg = Segmentation::new();
    for (utt, idx) in peaks {
        let vad = vads.require(utt)?;
        seg.insert(vad, peaks_to_times(idx, hop_s, vad.start_s, vad.end_s));
    }
    Ok(seg)
}

/// Objective maximized by [`fit_peak_params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitObjective {
    #[default]
    BoundaryF1,
    TokenF1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakGrid {
    pub heights: Vec<f64>,
    pub distances: Vec<usize>,
}

impl Default for PeakGrid {
    fn default() -> Self {
        Self {
            heights: (1..=19).map(|k| k as f64 / 20.0).collect(),
            distances: (1..=10).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFit {
    pub params: PeakParams,
    pub score: f64,
}

/// Exhaustive grid search for the detection parameters that best reproduce
/// `reference` on the given tracks. Ties prefer the smaller distance, then
/// the larger height.
pub fn fit_peak_params(
    tracks: &[(&str, &[f64])],
    reference: &Segmentation,
    vads: &VadSet,
    grid: &PeakGrid,
    hop_s: f64,
    tolerance_s: f64,
    objective: FitObjective,
) -> Result<PeakFit> {
    if grid.heights.is_empty() || grid.distances.is_empty() {
        return Err(Error::Empty("peak grid"));
    }
    let reference = reference.restrict(tracks.iter().map(|(u, _)| *u));
    if reference.len() != tracks.len() {
        let missing = tracks.iter().find(|(u, _)| !reference.contains(u)).map(|(u, _)| *u);
        return Err(Error::UnknownUtterance(missing.unwrap_or_default().into()));
    }
    let mut distances = grid.distances.clone();
    distances.sort_unstable();
    distances.dedup();
    let mut heights = grid.heights.clone();
    heights.sort_by(|a, b| b.total_cmp(a));
    heights.dedup();

    let maxima: Vec<Vec<usize>> = tracks.iter().map(|(_, p)| local_maxima(p)).collect();
    let mut best: Option<PeakFit> = None;
    for &d in &distances {
        for &h in &heights {
            let params = PeakParams::new(h, d)?;
            let mut hyp = Segmentation::new();
            for ((utt, probs), _) in tracks.iter().zip(&maxima) {
                let vad = vads.require(utt)?;
                let idx = detect_peaks(probs, params);
                hyp.insert(vad, peaks_to_times(&idx, hop_s, vad.start_s, vad.end_s));
            }
            let score = match objective {
                FitObjective::BoundaryF1 => eval::boundary_f1(&hyp, &reference, tolerance_s)?.f1,
                FitObjective::TokenF1 => eval::token_f1_segmentation(&hyp, &reference, tolerance_s)?.f1,
            };
            if best.is_none_or(|b| score > b.score) {
                best = Some(PeakFit { params, score });
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::VadSegment;
    use proptest::prelude::*;

    fn p(h: f64, d: usize) -> PeakParams {
        PeakParams::new(h, d).unwrap()
    }

    #[test]
    fn distance_two_keeps_both() {
        assert_eq!(detect_peaks(&[0.1, 0.9, 0.2, 0.8, 0.1], p(0.5, 2)), vec![1, 3]);
    }

    #[test]
    fn distance_three_keeps_taller() {
        assert_eq!(detect_peaks(&[0.1, 0.9, 0.2, 0.8, 0.1], p(0.5, 3)), vec![1]);
    }

    #[test]
    fn monotone_has_no_peaks() {
        let up: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert!(detect_peaks(&up, p(0.05, 1)).is_empty());
        assert!(detect_peaks(&[0.7], p(0.05, 1)).is_empty());
    }

    #[test]
    fn plateau_center() {
        assert_eq!(local_maxima(&[0.0, 0.5, 0.5, 0.5, 0.0]), vec![2]);
        assert_eq!(local_maxima(&[0.0, 0.5, 0.5, 0.0]), vec![1]);
        // shoulder, not a maximum
        assert!(local_maxima(&[0.0, 0.5, 0.5, 0.9]).is_empty());
    }

    #[test]
    fn equal_heights_prefer_lower_index() {
        assert_eq!(detect_peaks(&[0.0, 0.8, 0.0, 0.8, 0.0], p(0.5, 3)), vec![1]);
    }

    #[test]
    fn peak_times_offset_and_clamp() {
        assert_eq!(peaks_to_times(&[5], 0.02, 1.0, 2.0), vec![1.1]);
        assert!(peaks_to_times(&[50, 60, 0], 0.02, 1.0, 2.0).is_empty());
        let vads = VadSet::from_segments([VadSegment::new("u", 1.0, 2.0).unwrap()]).unwrap();
        let seg = peaks_to_segmentation([("u", &[][..])], 0.02, &vads).unwrap();
        assert_eq!(seg.get("u").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn invalid_params() {
        assert!(PeakParams::new(0.0, 1).is_err());
        assert!(PeakParams::new(0.5, 0).is_err());
    }

    #[test]
    fn single_cell_grid_and_empty_grid() {
        let vads = VadSet::from_segments([VadSegment::new("u", 0.0, 1.0).unwrap()]).unwrap();
        let reference = Segmentation::edges_only(&vads);
        let probs = [0.1, 0.6, 0.1, 0.1];
        let grid = PeakGrid { heights: vec![0.3], distances: vec![4] };
        let fit = fit_peak_params(&[("u", &probs)], &reference, &vads, &grid, 0.02, 0.03, FitObjective::BoundaryF1)
            .unwrap();
        assert_eq!(fit.params, p(0.3, 4));
        let empty = PeakGrid { heights: vec![], distances: vec![1] };
        assert!(fit_peak_params(&[("u", &probs)], &reference, &vads, &empty, 0.02, 0.03, FitObjective::BoundaryF1)
            .is_err());
    }

    #[test]
    fn flat_tracks_tie_break() {
        let vads = VadSet::from_segments([VadSegment::new("u", 0.0, 1.0).unwrap()]).unwrap();
        let mut reference = Segmentation::new();
        reference.insert(vads.get("u").unwrap(), [0.5]);
        let flat = [0.5; 50];
        let fit = fit_peak_params(
            &[("u", &flat)],
            &reference,
            &vads,
            &PeakGrid::default(),
            0.02,
            0.03,
            FitObjective::BoundaryF1,
        )
        .unwrap();
        // edges only: P = 1, R = 2/3
        assert!((fit.score - 0.8).abs() < 1e-12);
        assert_eq!(fit.params.min_distance, 1);
        assert!((fit.params.min_height - 0.95).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn raising_height_never_adds(track in proptest::collection::vec(0.0f64..1.0, 1..80), d in 1usize..6) {
            let lo = detect_peaks(&track, p(0.3, d));
            let hi = detect_peaks(&track, p(0.6, d));
            prop_assert!(hi.iter().all(|i| lo.contains(i)));
            prop_assert!(hi.iter().all(|&i| track[i] >= 0.6));
            prop_assert!(hi.windows(2).all(|w| w[1] - w[0] >= d));
        }
    }
}
