//! Synthetic corpus generator.
//!
//! Makes every experiment runnable without real speech data. References
//! are sampled from a "clean" vocabulary; hypotheses are produced by
//! applying substitutions, deletions and insertions drawn from a disjoint
//! "error" vocabulary until the realized WER matches a sampled target
//! within one edit. Audio is a token-keyed tone sequence with additive
//! white noise whose SNR is mapped from the target WER, so the signal
//! carries WER information even after amplitude normalization.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Style, Utterance};
use crate::error::{Error, Result};
use crate::scoring::{align_words, wer};

/// Mixture over per-utterance target WER: a spike at 0 %, a uniform
/// mid-range component, and a spike at 100 %.
#[derive(Debug, Clone)]
pub struct ErrorProfile {
    pub w_zero: f64,
    pub w_mid: f64,
    pub w_full: f64,
    pub mid_range: (f64, f64),
}

impl Default for ErrorProfile {
    fn default() -> Self {
        ErrorProfile {
            w_zero: 0.3,
            w_mid: 0.4,
            w_full: 0.3,
            mid_range: (20.0, 80.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_utterances: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub error_profile: ErrorProfile,
    pub sample_rate: u32,
    /// Piecewise-linear map from target WER (percent) to additive-noise
    /// SNR (dB), sorted by WER.
    pub noise_snr_map: Vec<(f64, f64)>,
    pub seed: u64,
    pub write_audio: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_utterances: 100,
            vocab_size: 60,
            max_len: 12,
            error_profile: ErrorProfile::default(),
            sample_rate: 8_000,
            noise_snr_map: vec![(0.0, 30.0), (50.0, 8.0), (100.0, -6.0)],
            seed: 0,
            write_audio: true,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let p = &self.error_profile;
        let sum = p.w_zero + p.w_mid + p.w_full;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "error_profile weights must sum to 1, got {sum}"
            )));
        }
        if p.w_zero < 0.0 || p.w_mid < 0.0 || p.w_full < 0.0 {
            return Err(Error::InvalidConfig("error_profile weights must be ≥ 0".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidConfig("vocab_size must be ≥ 2".into()));
        }
        if self.max_len < 4 {
            return Err(Error::InvalidConfig("max_len must be ≥ 4".into()));
        }
        if self.n_utterances == 0 {
            return Err(Error::InvalidConfig("n_utterances must be ≥ 1".into()));
        }
        if self.noise_snr_map.is_empty() {
            return Err(Error::InvalidConfig("noise_snr_map must be non-empty".into()));
        }
        Ok(())
    }
}

const TONE_S: f64 = 0.16;
const GAP_S: f64 = 0.04;
const LEAD_S: f64 = 0.04;
const TONE_AMP: f64 = 0.25;
const TAGSET: [&str; 6] = ["DET", "N", "V", "ADJ", "ADV", "PRO"];

pub(crate) fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub(crate) fn derived_tag(token: &str) -> &'static str {
    TAGSET[(fnv1a(token) % TAGSET.len() as u64) as usize]
}

fn token_freq(token: &str) -> f64 {
    320.0 + (fnv1a(token) % 100) as f64 * 30.0
}

fn interp_snr(map: &[(f64, f64)], wer_target: f64) -> f64 {
    if wer_target <= map[0].0 {
        return map[0].1;
    }
    for w in map.windows(2) {
        let ((w0, s0), (w1, s1)) = (w[0], w[1]);
        if wer_target <= w1 {
            let t = (wer_target - w0) / (w1 - w0);
            return s0 + t * (s1 - s0);
        }
    }
    map.last().unwrap().1
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; deterministic for a fixed rng stream.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Generate a synthetic dataset; WAV files go to `audio_dir` when
/// `cfg.write_audio` is set.
pub fn synth_corpus(cfg: &SynthConfig, audio_dir: &Path) -> Result<Dataset> {
    cfg.validate()?;
    if cfg.write_audio {
        std::fs::create_dir_all(audio_dir)
            .map_err(|e| Error::io(audio_dir.display().to_string(), e))?;
    }
    let clean: Vec<String> = (0..cfg.vocab_size).map(|i| format!("w{i:03}")).collect();
    let n_err = (cfg.vocab_size / 2).max(2);
    let errs: Vec<String> = (0..n_err).map(|i| format!("x{i:03}")).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut utterances = Vec::with_capacity(cfg.n_utterances);
    for i in 0..cfg.n_utterances {
        let id = format!("u{i:05}");
        let len = rng.gen_range(4..=cfg.max_len);
        let ref_tokens: Vec<String> = (0..len)
            .map(|_| clean[rng.gen_range(0..clean.len())].clone())
            .collect();
        let target = sample_target(&cfg.error_profile, &mut rng);
        let (hyp, realized) = corrupt(&ref_tokens, target, &errs, &mut rng);

        let style = if rng.gen_bool(0.5) { Style::S } else { Style::NS };
        let show = format!("show{}", rng.gen_range(0..4u8));
        let duration = LEAD_S + len as f64 * (TONE_S + GAP_S);

        let audio_path = if cfg.write_audio {
            let path = audio_dir.join(format!("{id}.wav"));
            write_tone_wav(&path, &ref_tokens, target, cfg, &mut rng)?;
            Some(path)
        } else {
            None
        };

        utterances.push(Utterance {
            id,
            audio_path,
            hyp,
            ref_tokens: Some(ref_tokens),
            show,
            style,
            duration_s: Some(duration),
            wer_realized: Some(realized),
        });
    }
    Ok(Dataset {
        name: "synth".into(),
        utterances,
    })
}

fn sample_target(p: &ErrorProfile, rng: &mut ChaCha8Rng) -> f64 {
    let r: f64 = rng.gen();
    if r < p.w_zero {
        0.0
    } else if r < p.w_zero + p.w_mid {
        rng.gen_range(p.mid_range.0..p.mid_range.1)
    } else {
        100.0
    }
}

/// Apply `round(target·L/100)` edits. Each utterance mixes substitutions
/// with either deletions or insertions, never both: inserted error tokens
/// next to deleted positions can collapse into one substitution against a
/// repeated reference token, which would shrink the realized edit count.
/// With one removal direction per utterance the alignment reproduces the
/// intended count exactly, so the realized WER is within one edit of the
/// target (quantization only). The retry loop is a safety net.
fn corrupt(
    ref_tokens: &[String],
    target: f64,
    errs: &[String],
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, f64) {
    let l = ref_tokens.len();
    let e = ((target / 100.0) * l as f64).round() as usize;
    if e == 0 {
        return (ref_tokens.to_vec(), 0.0);
    }
    let mut best: Option<(Vec<String>, f64)> = None;
    for _ in 0..8 {
        let hyp = corrupt_once(ref_tokens, e, errs, rng);
        let a = align_words(ref_tokens, &hyp).expect("non-empty ref");
        let realized = wer(&a).unwrap();
        if a.n_errors() == e {
            return (hyp, realized);
        }
        let dist = (realized - target).abs();
        if best.as_ref().map_or(true, |(_, r)| (r - target).abs() > dist) {
            best = Some((hyp, realized));
        }
    }
    best.unwrap()
}

/// Fraction of corrupted utterances whose edits mix deletions (rather
/// than insertions) with substitutions. Deletions leave no trace in the
/// hypothesis tokens, so they are the part of the WER the transcript
/// alone cannot explain — the audio's noise level can.
const DELETION_MODE_P: f64 = 0.6;
const DELETION_WITHIN_P: f64 = 0.75;
const SUB_WITHIN_INS_MODE_P: f64 = 0.6;

fn corrupt_once(
    ref_tokens: &[String],
    e: usize,
    errs: &[String],
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let l = ref_tokens.len();
    let use_deletions = rng.gen_bool(DELETION_MODE_P);
    let (mut n_sub, mut n_del, mut n_ins) = (0usize, 0usize, 0usize);
    for _ in 0..e {
        let sub_ok = n_sub + n_del < l;
        let r: f64 = rng.gen();
        if use_deletions {
            // at least one hypothesis token must survive
            let del_ok = n_sub + n_del < l && n_del < l - 1;
            if del_ok && r < DELETION_WITHIN_P {
                n_del += 1;
            } else if sub_ok {
                n_sub += 1;
            } else {
                n_ins += 1;
            }
        } else if sub_ok && r < SUB_WITHIN_INS_MODE_P {
            n_sub += 1;
        } else {
            n_ins += 1;
        }
    }
    // distinct positions for substitutions then deletions
    let mut pos: Vec<usize> = (0..l).collect();
    for k in 0..(n_sub + n_del).min(l) {
        let j = rng.gen_range(k..l);
        pos.swap(k, j);
    }
    let sub_pos = &pos[..n_sub];
    let del_pos = &pos[n_sub..n_sub + n_del];
    let mut hyp: Vec<String> = Vec::with_capacity(l + n_ins);
    for (idx, tok) in ref_tokens.iter().enumerate() {
        if del_pos.contains(&idx) {
            continue;
        }
        if sub_pos.contains(&idx) {
            hyp.push(errs[rng.gen_range(0..errs.len())].clone());
        } else {
            hyp.push(tok.clone());
        }
    }
    for _ in 0..n_ins {
        let slot = rng.gen_range(0..=hyp.len());
        hyp.insert(slot, errs[rng.gen_range(0..errs.len())].clone());
    }
    hyp
}

fn write_tone_wav(
    path: &Path,
    ref_tokens: &[String],
    target_wer: f64,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let sr = cfg.sample_rate as f64;
    let n_samples =
        ((LEAD_S + ref_tokens.len() as f64 * (TONE_S + GAP_S)) * sr).round() as usize;
    let mut samples = vec![0.0f64; n_samples];
    let ramp = (0.004 * sr) as usize;
    for (k, tok) in ref_tokens.iter().enumerate() {
        let f = token_freq(tok);
        let start = ((LEAD_S + k as f64 * (TONE_S + GAP_S)) * sr).round() as usize;
        let len = (TONE_S * sr).round() as usize;
        for t in 0..len {
            let idx = start + t;
            if idx >= n_samples {
                break;
            }
            let env = if t < ramp {
                t as f64 / ramp as f64
            } else if t + ramp > len {
                (len - t) as f64 / ramp as f64
            } else {
                1.0
            };
            samples[idx] += TONE_AMP * env * (2.0 * PI * f * t as f64 / sr).sin();
        }
    }
    let snr_db = interp_snr(&cfg.noise_snr_map, target_wer);
    let sigma = (TONE_AMP * TONE_AMP / 2.0 * 10f64.powf(-snr_db / 10.0)).sqrt();
    for s in samples.iter_mut() {
        *s += sigma * gaussian(rng);
    }

    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: cfg.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    for s in &samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer
            .write_sample(v)
            .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    }
    writer
        .finalize()
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    Ok(())
}

const PHONE_INVENTORY: [(&str, &str); 21] = [
    ("a", "vowel"),
    ("e", "vowel"),
    ("i", "vowel"),
    ("o", "vowel"),
    ("u", "vowel"),
    ("m", "nasal"),
    ("n", "nasal"),
    ("p", "plosive"),
    ("t", "plosive"),
    ("k", "plosive"),
    ("b", "plosive"),
    ("d", "plosive"),
    ("g", "plosive"),
    ("f", "fricative"),
    ("s", "fricative"),
    ("v", "fricative"),
    ("z", "fricative"),
    ("l", "liquid"),
    ("r", "liquid"),
    ("j", "glide"),
    ("w", "glide"),
];

/// Write a pseudo-lexicon (`word<TAB>phoneme phoneme …`) covering `words`.
/// Pronunciations are a deterministic function of (seed, word).
pub fn write_synth_lexicon(words: &[String], path: &Path, seed: u64) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    for w in words {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(w));
        let n = rng.gen_range(2..=5);
        let phones: Vec<&str> = (0..n)
            .map(|_| PHONE_INVENTORY[rng.gen_range(0..PHONE_INVENTORY.len())].0)
            .collect();
        writeln!(f, "{w}\t{}", phones.join(" "))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Write the phoneme → category JSON map for the synthetic inventory.
pub fn write_phone_categories(path: &Path) -> Result<()> {
    let map: std::collections::BTreeMap<&str, &str> = PHONE_INVENTORY.iter().copied().collect();
    let json = serde_json::to_string_pretty(&map)
        .map_err(|e| Error::Other(format!("serialize categories: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write a POS sidecar (`id<TAB>tag tag …`) with one deterministic
/// hash-derived tag per hypothesis token.
pub fn write_pos_sidecar(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    for u in &dataset.utterances {
        let tags: Vec<&str> = u.hyp.iter().map(|t| derived_tag(t)).collect();
        writeln!(f, "{}\t{}", u.id, tags.join(" "))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Full vocabulary (clean + error words) a config generates from.
pub fn synth_vocabulary(cfg: &SynthConfig) -> Vec<String> {
    let mut v: Vec<String> = (0..cfg.vocab_size).map(|i| format!("w{i:03}")).collect();
    let n_err = (cfg.vocab_size / 2).max(2);
    v.extend((0..n_err).map(|i| format!("x{i:03}")));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text_cfg(n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_utterances: n,
            write_audio: false,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_target_copies_reference() {
        let cfg = SynthConfig {
            error_profile: ErrorProfile {
                w_zero: 1.0,
                w_mid: 0.0,
                w_full: 0.0,
                mid_range: (20.0, 80.0),
            },
            ..text_cfg(20, 3)
        };
        let d = synth_corpus(&cfg, Path::new("/nonexistent")).unwrap();
        for u in &d.utterances {
            assert_eq!(&u.hyp, u.ref_tokens.as_ref().unwrap());
            assert_eq!(u.wer_realized, Some(0.0));
        }
    }

    #[test]
    fn full_target_reaches_100_with_nonempty_hyp() {
        let cfg = SynthConfig {
            error_profile: ErrorProfile {
                w_zero: 0.0,
                w_mid: 0.0,
                w_full: 1.0,
                mid_range: (20.0, 80.0),
            },
            ..text_cfg(30, 4)
        };
        let d = synth_corpus(&cfg, Path::new("/nonexistent")).unwrap();
        for u in &d.utterances {
            assert!(!u.hyp.is_empty());
            let a = align_words(u.ref_tokens.as_ref().unwrap(), &u.hyp).unwrap();
            assert_eq!(wer(&a).unwrap(), 100.0, "utterance {}", u.id);
        }
    }

    #[test]
    fn realized_wer_matches_alignment_for_every_pair() {
        let d = synth_corpus(&text_cfg(120, 11), Path::new("/nonexistent")).unwrap();
        for u in &d.utterances {
            let a = align_words(u.ref_tokens.as_ref().unwrap(), &u.hyp).unwrap();
            assert_eq!(wer(&a).unwrap(), u.wer_realized.unwrap(), "utterance {}", u.id);
        }
    }

    #[test]
    fn fixed_seed_gives_byte_identical_manifest() {
        let d1 = synth_corpus(&text_cfg(40, 9), Path::new("/nonexistent")).unwrap();
        let d2 = synth_corpus(&text_cfg(40, 9), Path::new("/nonexistent")).unwrap();
        let mut p1 = std::env::temp_dir();
        p1.push(format!("werpred-synth-a-{}.jsonl", std::process::id()));
        let mut p2 = std::env::temp_dir();
        p2.push(format!("werpred-synth-b-{}.jsonl", std::process::id()));
        d1.save_manifest(&p1).unwrap();
        d2.save_manifest(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let _ = std::fs::remove_file(&p1);
        let _ = std::fs::remove_file(&p2);
    }

    #[test]
    fn unwritable_audio_dir_errors() {
        let file = std::env::temp_dir().join(format!("werpred-blocker-{}", std::process::id()));
        std::fs::write(&file, b"x").unwrap();
        // a path under a regular file can never become a directory
        let cfg = SynthConfig {
            write_audio: true,
            ..text_cfg(3, 0)
        };
        assert!(synth_corpus(&cfg, &file.join("audio")).is_err());
        let _ = std::fs::remove_file(&file);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let cfg = SynthConfig {
            error_profile: ErrorProfile {
                w_zero: 0.5,
                w_mid: 0.2,
                w_full: 0.2,
                mid_range: (20.0, 80.0),
            },
            ..text_cfg(5, 0)
        };
        assert!(synth_corpus(&cfg, Path::new("/nonexistent")).is_err());
    }

    #[test]
    fn spike_masses_match_profile_within_noise() {
        let cfg = SynthConfig {
            error_profile: ErrorProfile {
                w_zero: 0.4,
                w_mid: 0.2,
                w_full: 0.4,
                mid_range: (30.0, 70.0),
            },
            ..text_cfg(500, 21)
        };
        let d = synth_corpus(&cfg, Path::new("/nonexistent")).unwrap();
        let wers: Vec<f64> = d.utterances.iter().map(|u| u.wer_realized.unwrap()).collect();
        let h = crate::scoring::histogram(&wers, 25.0, 150.0).unwrap();
        let n = wers.len() as f64;
        let lo = h[0].1 as f64 / n; // [0,25): the 0-spike
        let hi = h[4].1 as f64 / n; // [100,125): the 100-spike
        assert!((lo - 0.4).abs() < 0.08, "zero-spike mass {lo}");
        assert!((hi - 0.4).abs() < 0.08, "full-spike mass {hi}");
    }
}
