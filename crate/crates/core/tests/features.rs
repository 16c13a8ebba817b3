use std::f64::consts::PI;

use boundloop_core::features::{extract_features, FeatureConfig, LogMel};
use boundloop_core::AudioClip;
use proptest::prelude::*;

const SR: u32 = 16000;

fn tone(hz: f64, amp: f64, n: usize) -> AudioClip {
    let s = (0..n).map(|i| (amp * (2.0 * PI * hz * i as f64 / SR as f64).sin()) as f32).collect();
    AudioClip::new("tone", SR, s).unwrap()
}

fn mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

/// Log-mel energies of one frame by direct DFT and a filterbank written from scratch.
fn oracle_frame(samples: &[f32], cfg: &FeatureConfig) -> Vec<f64> {
    let win = cfg.window_samples();
    let n_fft = win.next_power_of_two();
    let bins = n_fft / 2 + 1;
    let power: Vec<f64> = (0..bins)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in samples[..win].iter().enumerate() {
                let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos();
                let a = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                re += x as f64 * w * a.cos();
                im += x as f64 * w * a.sin();
            }
            re * re + im * im
        })
        .collect();
    let top = mel(SR as f64 / 2.0);
    let edge = |i: usize| inv_mel(top * i as f64 / (cfg.n_mels + 1) as f64);
    (0..cfg.n_mels)
        .map(|m| {
            let (lo, c, hi) = (edge(m), edge(m + 1), edge(m + 2));
            let e: f64 = (0..bins)
                .map(|k| {
                    let f = k as f64 * SR as f64 / n_fft as f64;
                    let w = if f > lo && f <= c {
                        (f - lo) / (c - lo)
                    } else if f > c && f < hi {
                        (hi - f) / (hi - c)
                    } else {
                        0.0
                    };
                    w * power[k]
                })
                .sum();
            (e + 1e-10).ln()
        })
        .collect()
}

#[test]
fn tone_matches_direct_dft_oracle() {
    let cfg = FeatureConfig::default();
    let clip = tone(1000.0, 0.5, 4000);
    let m = LogMel::new(cfg).unwrap().compute(&clip).unwrap();
    let hop = cfg.hop_samples();
    for f in [0, 3, m.n_frames - 1] {
        let want = oracle_frame(&clip.samples[f * hop..], &cfg);
        for (d, (&got, w)) in m.row(f).iter().zip(&want).enumerate() {
            assert!((got as f64 - w).abs() < 1e-4 * (1.0 + w.abs()), "frame {f} band {d}: {got} vs {w}");
        }
    }
}

#[test]
fn tone_energy_lands_in_its_band() {
    let cfg = FeatureConfig::default();
    let m = LogMel::new(cfg).unwrap().compute(&tone(1000.0, 0.5, 4000)).unwrap();
    let row = m.row(1);
    let best = (0..cfg.n_mels).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    // the band whose triangle peaks closest to 1 kHz
    let top = mel(8000.0);
    let centers: Vec<f64> = (1..=cfg.n_mels).map(|i| inv_mel(top * i as f64 / 41.0)).collect();
    let nearest = (0..cfg.n_mels)
        .min_by(|&a, &b| (centers[a] - 1000.0).abs().total_cmp(&(centers[b] - 1000.0).abs()))
        .unwrap();
    assert_eq!(best, nearest);
    // 1 kHz sits exactly on bin 32 of a 512-point transform; a Hann window
    // of 400 samples sums to 200, so the bin carries (0.5 * 200 / 2)^2
    let bin_power = 2500.0_f64;
    assert!(row[best] as f64 <= (bin_power * 1.05).ln() + 1.0);
    assert!(row[best] as f64 > (bin_power * 0.1).ln());
}

#[test]
fn extraction_is_deterministic() {
    let clip = tone(620.0, 0.3, 9000);
    let cfg = FeatureConfig::default();
    assert_eq!(extract_features(&clip, &cfg).unwrap(), extract_features(&clip, &cfg).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_count_formula(n in 400usize..6000, hop_ms in prop::sample::select(vec![10.0, 20.0, 25.0])) {
        let cfg = FeatureConfig { hop_ms, ..FeatureConfig::default() };
        let clip = AudioClip::new("u", SR, vec![0.1; n]).unwrap();
        let m = extract_features(&clip, &cfg).unwrap();
        prop_assert_eq!(m.n_frames, (n - 400) / cfg.hop_samples() + 1);
        prop_assert!(m.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn normalized_moments(seed in any::<u64>(), n in 2000usize..8000) {
        let mut x = seed | 1;
        let s: Vec<f32> = (0..n)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                ((x >> 11) as f64 / (1u64 << 53) as f64 - 0.5) as f32
            })
            .collect();
        let m = extract_features(&AudioClip::new("n", SR, s).unwrap(), &FeatureConfig::default()).unwrap();
        for d in 0..m.dim {
            let col: Vec<f64> = (0..m.n_frames).map(|i| m.row(i)[d] as f64).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!(var == 0.0 || (var - 1.0).abs() < 1e-4);
        }
    }
}
