//! Mel filterbank, log-mel spectrogram and MFCC extraction.

use super::fft::Fft;
use super::{FMAX, HOP, LOG_FLOOR, NFFT, N_FRAMES, N_MELS, PRE_EMPHASIS, SAMPLE_RATE, WIN};
use crate::tensor::Tensor2;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// The `n_mels + 2` band-edge frequencies in Hz, evenly spaced on the mel
/// scale between 0 and `fmax`. Filter `i` spans `points[i]..points[i+2]`
/// and peaks at `points[i+1]`.
pub fn mel_hz_points(n_mels: usize, fmax: f64) -> Vec<f64> {
    let m_max = hz_to_mel(fmax);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(m_max * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular mel filterbank as an `(n_mels, nfft/2 + 1)` matrix, peak 1.
pub fn mel_filterbank(n_mels: usize, nfft: usize, sample_rate: u32, fmax: f64) -> Tensor2 {
    let points = mel_hz_points(n_mels, fmax);
    let n_bins = nfft / 2 + 1;
    let mut fb = Tensor2::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / nfft as f64;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            *fb.at_mut(m, k) = w;
        }
    }
    fb
}

pub(super) fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// 601×96 natural-log mel energies of a standardized 48 000-sample buffer.
/// Frame `i` covers samples `[i·80, i·80 + 200)`; windows running past the
/// end are zero-padded.
pub(super) fn log_mel(samples: &[f64]) -> Tensor2 {
    debug_assert_eq!(samples.len(), super::TARGET_SAMPLES);
    let mut emphasized = Vec::with_capacity(samples.len());
    emphasized.push(samples[0]);
    for t in 1..samples.len() {
        emphasized.push(samples[t] - PRE_EMPHASIS * samples[t - 1]);
    }

    let fb = mel_filterbank(N_MELS, NFFT, SAMPLE_RATE, FMAX);
    let window = hamming(WIN);
    let fft = Fft::new(NFFT);
    let mut out = Tensor2::zeros(N_FRAMES, N_MELS);
    let mut frame = vec![0.0; WIN];
    for i in 0..N_FRAMES {
        let start = i * HOP;
        for (t, f) in frame.iter_mut().enumerate() {
            let idx = start + t;
            *f = if idx < emphasized.len() {
                emphasized[idx] * window[t]
            } else {
                0.0
            };
        }
        let power = fft.power_spectrum(&frame);
        let row = out.row_mut(i);
        for m in 0..N_MELS {
            let e: f64 = fb
                .row(m)
                .iter()
                .zip(&power)
                .map(|(w, p)| w * p)
                .sum();
            row[m] = e.max(LOG_FLOOR).ln();
        }
    }
    out
}

/// Orthonormal DCT-II of `x`, first `n_out` coefficients.
pub fn dct_orthonormal(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        let sum: f64 = x
            .iter()
            .enumerate()
            .map(|(t, &v)| v * (std::f64::consts::PI * (2.0 * t as f64 + 1.0) * k as f64 / (2.0 * n as f64)).cos())
            .sum();
        out.push(scale * sum);
    }
    out
}

/// Inverse of [`dct_orthonormal`] at full order.
pub fn idct_orthonormal(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|t| {
            c.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let scale = if k == 0 {
                        (1.0 / n as f64).sqrt()
                    } else {
                        (2.0 / n as f64).sqrt()
                    };
                    scale
                        * v
                        * (std::f64::consts::PI * (2.0 * t as f64 + 1.0) * k as f64
                            / (2.0 * n as f64))
                            .cos()
                })
                .sum()
        })
        .collect()
}

pub(super) fn mfcc_from_log_mel(log_mel: &Tensor2, n_mfcc: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(log_mel.rows, n_mfcc);
    for i in 0..log_mel.rows {
        let c = dct_orthonormal(log_mel.row(i), n_mfcc);
        out.row_mut(i).copy_from_slice(&c);
    }
    out
}
