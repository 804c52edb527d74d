//! Dataset model, manifest ingestion and train/dev splitting.
//!
//! Manifests are UTF-8 JSON-lines, one record per utterance:
//! `{"id", "audio"?, "hyp", "ref"?, "show", "style", "duration_s"?}` where
//! `hyp`/`ref` are space-separated token strings and `style` is `"NS"` or
//! `"S"`. Records with an empty hypothesis are dropped at ingestion (they
//! carry nothing to predict from); the drop count is reported.

mod synth;

pub use synth::{
    synth_corpus, synth_vocabulary, write_phone_categories, write_pos_sidecar,
    write_synth_lexicon, ErrorProfile, SynthConfig,
};

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speaking style of a speech turn: non-spontaneous (prepared, e.g. news)
/// or spontaneous (e.g. debates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Style {
    NS,
    S,
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Style::NS => write!(f, "NS"),
            Style::S => write!(f, "S"),
        }
    }
}

/// One speech turn: ASR hypothesis, optional reference, optional audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio_path: Option<PathBuf>,
    pub hyp: Vec<String>,
    pub ref_tokens: Option<Vec<String>>,
    pub show: String,
    pub style: Style,
    pub duration_s: Option<f64>,
    /// WER realized by the synthetic generator, kept so scoring can verify
    /// the generated pair. Absent for real data.
    pub wer_realized: Option<f64>,
}

impl Utterance {
    /// Reference WER in percent, when a non-empty reference exists.
    /// Empty-reference utterances stay predictable but score as `None`
    /// (their WER is undefined).
    pub fn reference_wer(&self) -> Option<f64> {
        match &self.ref_tokens {
            Some(r) if !r.is_empty() => {
                let a = crate::scoring::align_words(r, &self.hyp).ok()?;
                crate::scoring::wer(&a).ok()
            }
            _ => None,
        }
    }
}

/// An ordered collection of utterances. Iteration order is manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Utterance> {
        self.utterances.iter()
    }

    /// Serialize to a JSON-lines manifest. Field order is fixed, so a
    /// dataset always serializes to identical bytes.
    pub fn save_manifest(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for u in &self.utterances {
            let rec = ManifestRecord::from_utterance(u);
            let line = serde_json::to_string(&rec)
                .map_err(|e| Error::Other(format!("serialize {}: {e}", u.id)))?;
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    audio: Option<String>,
    hyp: String,
    #[serde(rename = "ref", skip_serializing_if = "Option::is_none")]
    reference: Option<String>,
    show: String,
    style: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wer_realized: Option<f64>,
}

impl ManifestRecord {
    fn from_utterance(u: &Utterance) -> Self {
        ManifestRecord {
            id: u.id.clone(),
            audio: u.audio_path.as_ref().map(|p| p.display().to_string()),
            hyp: u.hyp.join(" "),
            reference: u.ref_tokens.as_ref().map(|t| t.join(" ")),
            show: u.show.clone(),
            style: u.style.to_string(),
            duration_s: u.duration_s,
            wer_realized: u.wer_realized,
        }
    }
}

fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Result of loading a manifest: the dataset plus the number of records
/// dropped for having an empty hypothesis.
#[derive(Debug)]
pub struct LoadedManifest {
    pub dataset: Dataset,
    pub dropped_empty_hyp: usize,
}

/// Load a JSON-lines manifest. Malformed lines and duplicate ids are
/// errors naming the offending line; empty-hypothesis records are dropped
/// and counted. Record order is preserved.
pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    let mut utterances = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut dropped = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
            Error::ManifestParse {
                line: lineno,
                msg: e.to_string(),
            }
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId {
                id: rec.id,
                line: lineno,
            });
        }
        let style = match rec.style.as_str() {
            "NS" => Style::NS,
            "S" => Style::S,
            other => {
                return Err(Error::ManifestParse {
                    line: lineno,
                    msg: format!("style must be \"NS\" or \"S\", got {other:?}"),
                })
            }
        };
        if rec.audio.is_some() {
            match rec.duration_s {
                Some(d) if d > 0.0 => {}
                _ => {
                    return Err(Error::ManifestParse {
                        line: lineno,
                        msg: "duration_s must be present and > 0 when audio is present".into(),
                    })
                }
            }
        }
        let hyp = tokenize(&rec.hyp);
        if hyp.is_empty() {
            dropped += 1;
            continue;
        }
        // Relative audio paths resolve against the manifest's directory.
        let audio_path = rec.audio.map(|a| {
            let p = PathBuf::from(a);
            if p.is_relative() {
                path.parent().map(|d| d.join(&p)).unwrap_or(p)
            } else {
                p
            }
        });
        utterances.push(Utterance {
            id: rec.id,
            audio_path,
            hyp,
            ref_tokens: rec.reference.map(|r| tokenize(&r)),
            show: rec.show,
            style,
            duration_s: rec.duration_s,
            wer_realized: rec.wer_realized,
        });
    }
    Ok(LoadedManifest {
        dataset: Dataset { name, utterances },
        dropped_empty_hyp: dropped,
    })
}

/// Deterministic random partition into (train, dev) with
/// `dev size = round(dev_fraction · N)`. Relative manifest order is kept
/// within each part.
pub fn split_train_dev(d: &Dataset, dev_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "dev_fraction must be in (0, 1), got {dev_fraction}"
        )));
    }
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 utterances to split, got {n}"
        )));
    }
    let dev_size = (dev_fraction * n as f64).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut dev_idx: Vec<usize> = indices[..dev_size].to_vec();
    let mut train_idx: Vec<usize> = indices[dev_size..].to_vec();
    dev_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize], suffix: &str| Dataset {
        name: format!("{}-{suffix}", d.name),
        utterances: idx.iter().map(|&i| d.utterances[i].clone()).collect(),
    };
    Ok((pick(&train_idx, "train"), pick(&dev_idx, "dev")))
}

/// Rewrite every audio path relative to `base` (used before saving a
/// manifest next to its audio directory, keeping the file relocatable).
pub fn relativize_audio(dataset: &mut Dataset, base: &Path) {
    for u in &mut dataset.utterances {
        if let Some(p) = &u.audio_path {
            if let Ok(rel) = p.strip_prefix(base) {
                u.audio_path = Some(rel.to_path_buf());
            }
        }
    }
}
