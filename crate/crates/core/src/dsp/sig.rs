//! Averaged signal features for the regression baseline.
//!
//! Per frame: 13 MFCC, their delta and acceleration, log-energy, F0,
//! voicing probability and loudness (log RMS) — 43 dimensions — averaged
//! over all frames. F0 comes from a normalized-autocorrelation peak search
//! in 50–400 Hz with parabolic refinement; voicing probability is the
//! clamped peak value.

use super::{AudioBuffer, HOP, LOG_FLOOR, N_FRAMES, N_MFCC, SAMPLE_RATE, WIN};
use crate::error::Result;

pub const SIG_DIMS: usize = 43;

const F0_MIN: f64 = 50.0;
const F0_MAX: f64 = 400.0;
const F0_WIN: usize = 320; // 40 ms, long enough for the 160-sample lag

/// 43-dim averaged signal feature vector of a standardized buffer.
pub fn sig_features(a: &AudioBuffer) -> Result<Vec<f64>> {
    let mfcc = super::mfcc(a)?; // validates standardization
    let samples = &a.samples;

    let delta = deltas(&mfcc);
    let accel = deltas(&delta);

    let mut acc = vec![0.0f64; SIG_DIMS];
    for i in 0..N_FRAMES {
        let start = i * HOP;
        let frame = frame_slice(samples, start, WIN);
        let energy: f64 = frame.iter().map(|s| s * s).sum();
        let log_energy = (energy + LOG_FLOOR).ln();
        let rms = (energy / WIN as f64).sqrt();
        let loudness = (rms + LOG_FLOOR).ln();
        let (f0, voicing) = f0_autocorr(samples, start);

        for d in 0..N_MFCC {
            acc[d] += mfcc.at(i, d);
            acc[N_MFCC + d] += delta.at(i, d);
            acc[2 * N_MFCC + d] += accel.at(i, d);
        }
        acc[39] += log_energy;
        acc[40] += f0;
        acc[41] += voicing;
        acc[42] += loudness;
    }
    for v in acc.iter_mut() {
        *v /= N_FRAMES as f64;
    }
    Ok(acc)
}

fn frame_slice(samples: &[f64], start: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| samples.get(start + t).copied().unwrap_or(0.0))
        .collect()
}

/// ±2-frame regression deltas with edge replication.
fn deltas(x: &crate::tensor::Tensor2) -> crate::tensor::Tensor2 {
    let mut out = crate::tensor::Tensor2::zeros(x.rows, x.cols);
    let denom = 10.0; // 2 * (1² + 2²)
    for i in 0..x.rows {
        let grab = |o: isize| {
            let j = (i as isize + o).clamp(0, x.rows as isize - 1) as usize;
            x.row(j)
        };
        let (m2, m1, p1, p2) = (grab(-2), grab(-1), grab(1), grab(2));
        let row = out.row_mut(i);
        for c in 0..x.cols {
            row[c] = (p1[c] - m1[c] + 2.0 * (p2[c] - m2[c])) / denom;
        }
    }
    out
}

/// Normalized autocorrelation over a 40 ms window at `start`; returns
/// (F0 in Hz, voicing probability). Silent windows give (0, 0).
fn f0_autocorr(samples: &[f64], start: usize) -> (f64, f64) {
    let frame = frame_slice(samples, start, F0_WIN);
    let energy: f64 = frame.iter().map(|s| s * s).sum();
    if energy < 1e-8 {
        return (0.0, 0.0);
    }
    let sr = SAMPLE_RATE as f64;
    let lag_min = (sr / F0_MAX).floor() as usize; // 20
    let lag_max = ((sr / F0_MIN).ceil() as usize).min(F0_WIN - 1); // 160
    let mut r_max = f64::NEG_INFINITY;
    let mut corr = vec![0.0f64; lag_max + 2];
    for lag in lag_min..=lag_max {
        let m = F0_WIN - lag;
        let (mut num, mut e0, mut e1) = (0.0, 0.0, 0.0);
        for t in 0..m {
            num += frame[t] * frame[t + lag];
            e0 += frame[t] * frame[t];
            e1 += frame[t + lag] * frame[t + lag];
        }
        let denom = (e0 * e1).sqrt();
        let r = if denom > 0.0 { num / denom } else { 0.0 };
        corr[lag] = r;
        if r > r_max {
            r_max = r;
        }
    }
    if r_max <= 0.0 {
        return (0.0, 0.0);
    }
    // A periodic signal peaks at every multiple of its period; take the
    // shortest local maximum near the global peak value.
    let mut lag = 0usize;
    let mut peak = 0.0;
    for l in lag_min..=lag_max {
        let left = if l == lag_min { f64::NEG_INFINITY } else { corr[l - 1] };
        let right = if l == lag_max { f64::NEG_INFINITY } else { corr[l + 1] };
        if corr[l] >= left && corr[l] >= right && corr[l] >= 0.9 * r_max {
            lag = l;
            peak = corr[l];
            break;
        }
    }
    if lag == 0 {
        return (0.0, 0.0);
    }
    // parabolic refinement around the peak
    let mut refined = lag as f64;
    if lag > lag_min && lag < lag_max {
        let (ym, y0, yp) = (corr[lag - 1], corr[lag], corr[lag + 1]);
        let d = ym - 2.0 * y0 + yp;
        if d.abs() > 1e-12 {
            refined += 0.5 * (ym - yp) / d;
        }
    }
    (sr / refined, peak.clamp(0.0, 1.0))
}
