//! Audio front-end.
//!
//! All encoders operate on a *standardized* buffer: mono, 8 kHz, exactly
//! 48 000 samples (six seconds), amplitude-normalized to [−1, 1]. Short
//! recordings are zero-padded, long ones truncated to the first six
//! seconds. From that buffer the module produces the three signal
//! encodings — raw waveform (48000×1), log-mel spectrogram (601×96),
//! MFCC (601×13) — plus the 43-dim averaged signal feature vector used by
//! the regression baseline.
//!
//! Analysis parameters (not specified by upstream tooling, standard
//! defaults): 25 ms Hamming window, 10 ms hop, pre-emphasis 0.97, FFT 512,
//! 96 triangular mel bands over 0–4000 Hz on the 2595·log10(1+f/700)
//! scale, natural-log energies floored at 1e-10.

mod cache;
mod fft;
mod mel;
mod sig;

pub use cache::{read_cached, write_cached};
pub use mel::{dct_orthonormal, idct_orthonormal, mel_filterbank, mel_hz_points};
pub use sig::sig_features;

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub const SAMPLE_RATE: u32 = 8_000;
pub const TARGET_SAMPLES: usize = 48_000;
pub const HOP: usize = 80; // 10 ms
pub const WIN: usize = 200; // 25 ms
pub const NFFT: usize = 512;
pub const N_MELS: usize = 96;
pub const N_MFCC: usize = 13;
pub const FMAX: f64 = 4_000.0;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const LOG_FLOOR: f64 = 1e-10;
/// floor(48000 / 80) + 1; trailing partial windows are zero-padded.
pub const N_FRAMES: usize = 601;

/// Mono audio samples in [−1, 1] at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn is_standardized(&self) -> bool {
        self.sample_rate == SAMPLE_RATE && self.samples.len() == TARGET_SAMPLES
    }

    fn require_standardized(&self) -> Result<()> {
        if self.is_standardized() {
            Ok(())
        } else {
            Err(Error::Audio(format!(
                "buffer not standardized: {} samples at {} Hz (need {} at {})",
                self.samples.len(),
                self.sample_rate,
                TARGET_SAMPLES,
                SAMPLE_RATE
            )))
        }
    }
}

/// Read a 16-bit PCM WAV, downmix to mono, resample to 8 kHz, pad or
/// truncate to exactly six seconds and peak-normalize.
pub fn load_and_standardize(path: &Path) -> Result<AudioBuffer> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Audio(format!(
            "{}: unsupported encoding (need 16-bit PCM)",
            path.display()
        )));
    }
    let channels = spec.channels as usize;
    let raw: Vec<i16> = reader
        .samples::<i16>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    if raw.is_empty() {
        return Err(Error::Audio(format!("{}: zero-length audio", path.display())));
    }
    let n_frames = raw.len() / channels;
    let mut mono = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0;
        for c in 0..channels {
            acc += f64::from(raw[f * channels + c]);
        }
        mono.push(acc / channels as f64 / 32768.0);
    }
    Ok(standardize(AudioBuffer {
        samples: mono,
        sample_rate: spec.sample_rate,
    }))
}

/// Standardization step on an in-memory buffer (exposed for tests and the
/// synthetic pipeline).
pub fn standardize(buf: AudioBuffer) -> AudioBuffer {
    let mut samples = if buf.sample_rate == SAMPLE_RATE {
        buf.samples
    } else {
        resample(&buf.samples, buf.sample_rate, SAMPLE_RATE)
    };
    samples.resize(TARGET_SAMPLES, 0.0);
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = 1.0 / peak;
        for s in samples.iter_mut() {
            *s *= scale;
        }
    }
    AudioBuffer {
        samples,
        sample_rate: SAMPLE_RATE,
    }
}

/// Windowed-sinc resampler (Hann window, 16 zero crossings at the lower
/// Nyquist). Linear interpolation would alias energy into the mel bands.
pub fn resample(input: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }
    let from = from_rate as f64;
    let to = to_rate as f64;
    let n_out = (input.len() as f64 * to / from).round() as usize;
    let scale = (to / from).min(1.0); // cutoff relative to input Nyquist
    const ZERO_CROSSINGS: f64 = 16.0;
    let half_width = ZERO_CROSSINGS / scale;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let t = n as f64 * from / to;
        let k0 = ((t - half_width).ceil() as isize).max(0) as usize;
        let k1 = ((t + half_width).floor() as isize).min(input.len() as isize - 1) as usize;
        let mut acc = 0.0;
        for k in k0..=k1 {
            let u = t - k as f64;
            acc += input[k] * sinc_kernel(u, scale, half_width);
        }
        out.push(acc);
    }
    out
}

fn sinc_kernel(u: f64, scale: f64, half_width: f64) -> f64 {
    let x = std::f64::consts::PI * scale * u;
    let sinc = if x.abs() < 1e-12 { 1.0 } else { x.sin() / x };
    // Hann window over [-half_width, half_width]
    let w = 0.5 * (1.0 + (std::f64::consts::PI * u / half_width).cos());
    scale * sinc * w
}

/// Log-mel spectrogram of a standardized buffer: exactly 601×96.
pub fn mel_spectrogram(a: &AudioBuffer) -> Result<Tensor2> {
    a.require_standardized()?;
    Ok(mel::log_mel(&a.samples))
}

/// MFCCs of a standardized buffer: exactly 601×13 (orthonormal DCT-II of
/// the 96 log-mel energies, coefficients 0..12).
pub fn mfcc(a: &AudioBuffer) -> Result<Tensor2> {
    a.require_standardized()?;
    let lm = mel::log_mel(&a.samples);
    Ok(mel::mfcc_from_log_mel(&lm, N_MFCC))
}

/// Raw-waveform encoding: the standardized samples as a 48000×1 tensor.
pub fn raw_tensor(a: &AudioBuffer) -> Result<Tensor2> {
    a.require_standardized()?;
    Ok(Tensor2 {
        rows: TARGET_SAMPLES,
        cols: 1,
        data: a.samples.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn tone(freq: f64, seconds: f64, rate: u32) -> AudioBuffer {
        let n = (seconds * rate as f64).round() as usize;
        let samples = (0..n)
            .map(|t| 0.5 * (2.0 * std::f64::consts::PI * freq * t as f64 / rate as f64).sin())
            .collect();
        AudioBuffer {
            samples,
            sample_rate: rate,
        }
    }

    fn write_wav(path: &std::path::Path, buf: &AudioBuffer) {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: buf.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for s in &buf.samples {
            w.write_sample((s * 32767.0) as i16).unwrap();
        }
        w.finalize().unwrap();
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("werpred-dsp-{}-{name}.wav", std::process::id()));
        p
    }

    #[test]
    fn six_seconds_at_8k_passes_through() {
        let p = tmp("exact");
        write_wav(&p, &tone(440.0, 6.0, 8000));
        let b = load_and_standardize(&p).unwrap();
        assert_eq!(b.samples.len(), TARGET_SAMPLES);
        assert_eq!(b.sample_rate, SAMPLE_RATE);
        let _ = std::fs::remove_file(&p);
    }

    #[test]
    fn short_audio_is_zero_padded() {
        let p = tmp("short");
        write_wav(&p, &tone(440.0, 3.0, 8000));
        let b = load_and_standardize(&p).unwrap();
        assert_eq!(b.samples.len(), TARGET_SAMPLES);
        assert!(b.samples[24_000..].iter().all(|&s| s == 0.0));
        assert!(b.samples[..24_000].iter().any(|&s| s != 0.0));
        let _ = std::fs::remove_file(&p);
    }

    #[test]
    fn long_audio_is_truncated_to_first_six_seconds() {
        let p = tmp("long");
        write_wav(&p, &tone(440.0, 10.0, 8000));
        let b = load_and_standardize(&p).unwrap();
        assert_eq!(b.samples.len(), TARGET_SAMPLES);
        // truncation keeps signal everywhere, no padding tail
        assert!(b.samples[47_000..].iter().any(|&s| s.abs() > 0.01));
        let _ = std::fs::remove_file(&p);
    }

    #[test]
    fn resample_preserves_tone_frequency() {
        let b16 = tone(440.0, 2.0, 16_000);
        let down = resample(&b16.samples, 16_000, 8_000);
        assert_eq!(down.len(), 16_000);
        // Goertzel-style power at 440 Hz vs total power
        let n = down.len();
        let w = 2.0 * std::f64::consts::PI * 440.0 / 8000.0;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &s) in down.iter().enumerate() {
            re += s * (w * t as f64).cos();
            im += s * (w * t as f64).sin();
        }
        let tone_power = (re * re + im * im) / (n as f64 * n as f64) * 2.0;
        let total_power = down.iter().map(|s| s * s).sum::<f64>() / n as f64;
        assert!(
            tone_power / total_power > 0.9,
            "tone fraction {}",
            tone_power / total_power
        );
    }

    #[test]
    fn zero_length_audio_errors() {
        let p = tmp("empty");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        hound::WavWriter::create(&p, spec).unwrap().finalize().unwrap();
        assert!(load_and_standardize(&p).is_err());
        let _ = std::fs::remove_file(&p);
    }

    #[test]
    fn standardize_is_deterministic() {
        let b = tone(333.0, 2.5, 16_000);
        let s1 = standardize(b.clone());
        let s2 = standardize(b);
        assert_eq!(s1, s2);
    }

    #[test]
    fn peak_normalization_hits_unit_peak() {
        let mut b = tone(200.0, 1.0, 8000);
        for s in b.samples.iter_mut() {
            *s *= 0.1;
        }
        let s = standardize(b);
        let peak = s.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert_abs_diff_eq!(peak, 1.0, epsilon = 1e-12);
    }
}
