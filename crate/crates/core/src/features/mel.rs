//! Triangular mel filterbank on the HTK mel scale.

use alloc::vec::Vec;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// `n_mels + 2` edge frequencies evenly spaced in mel over `[0, sample_rate / 2]`.
pub fn band_edges_hz(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect()
}

/// Filter weights, `n_mels` rows over the `n_fft / 2 + 1` spectrum bins.
#[derive(Debug, Clone)]
pub struct MelBank {
    pub n_mels: usize,
    pub n_bins: usize,
    weights: Vec<f64>,
}

impl MelBank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Self {
        let n_bins = n_fft / 2 + 1;
        let edges = band_edges_hz(n_mels, sample_rate);
        let mut weights = alloc::vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * sample_rate as f64 / n_fft as f64;
                let w = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                weights[m * n_bins + k] = w;
            }
        }
        Self { n_mels, n_bins, weights }
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate().take(self.n_mels) {
            let row = &self.weights[m * self.n_bins..(m + 1) * self.n_bins];
            *o = row.iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_round_trip() {
        for hz in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.9855).abs() < 1e-3);
    }

    #[test]
    fn edges_cover_nyquist() {
        let e = band_edges_hz(40, 16000);
        assert_eq!(e.len(), 42);
        assert_eq!(e[0], 0.0);
        assert!((e[41] - 8000.0).abs() < 1e-6);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
    }
}
