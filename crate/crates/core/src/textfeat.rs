//! Word-embedding tables and utterance-to-matrix encoding for the text CNN.
//!
//! Tables load from word2vec text layout: a `V D` header line, then `V`
//! lines of `word v1 … vD`. Out-of-vocabulary tokens map to the zero
//! vector, the same value as padding, so "no information" is a single
//! symbol.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

/// Encoding geometry: utterances are padded/truncated to `max_len` rows of
/// `dim` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EmbedConfig {
    pub max_len: usize,
    pub dim: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            max_len: 296,
            dim: 100,
        }
    }
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    /// Deterministic random table over `words`, uniform in [−0.5, 0.5].
    /// Used for synthetic corpora and tests in place of trained vectors.
    pub fn random(words: &[String], dim: usize, seed: u64) -> Self {
        let mut entries = HashMap::with_capacity(words.len());
        for w in words {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ crate::textfeat::word_hash(w));
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            entries.insert(w.clone(), v);
        }
        EmbeddingTable { dim, entries }
    }

    /// Serialize in the same word2vec text layout `load_embeddings` reads.
    /// Words are written in sorted order so output bytes are stable.
    pub fn save(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut words: Vec<&String> = self.entries.keys().collect();
        words.sort();
        let mut f = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        writeln!(f, "{} {}", words.len(), self.dim)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        for w in words {
            let vals: Vec<String> = self.entries[w].iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "{w} {}", vals.join(" "))
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

pub(crate) fn word_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Result of loading a table: duplicate words are resolved last-wins and
/// reported so callers can warn.
#[derive(Debug)]
pub struct EmbeddingLoad {
    pub table: EmbeddingTable,
    pub duplicate_words: Vec<String>,
}

/// Load a word2vec-text embedding file.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingLoad> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Other(format!("{}: empty embedding file", path.display())))?
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut parts = header.split_whitespace();
    let (v, d) = match (parts.next(), parts.next()) {
        (Some(v), Some(d)) => (
            v.parse::<usize>()
                .map_err(|_| Error::Other(format!("bad header: {header:?}")))?,
            d.parse::<usize>()
                .map_err(|_| Error::Other(format!("bad header: {header:?}")))?,
        ),
        _ => return Err(Error::Other(format!("bad header: {header:?}"))),
    };
    let mut entries: HashMap<String, Vec<f64>> = HashMap::with_capacity(v);
    let mut duplicates = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2; // 1-based, after the header
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts
            .next()
            .ok_or(Error::EmbeddingDim {
                line: lineno,
                expected: d,
            })?
            .to_string();
        let vals: Vec<f64> = parts
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::EmbeddingDim {
                line: lineno,
                expected: d,
            })?;
        if vals.len() != d {
            return Err(Error::EmbeddingDim {
                line: lineno,
                expected: d,
            });
        }
        if entries.insert(word.clone(), vals).is_some() {
            duplicates.push(word);
        }
    }
    if entries.len() != v {
        return Err(Error::Other(format!(
            "header declares {v} words, file has {}",
            entries.len()
        )));
    }
    Ok(EmbeddingLoad {
        table: EmbeddingTable { dim: d, entries },
        duplicate_words: duplicates,
    })
}

/// Encode tokens as an `(max_len, dim)` matrix: row i is token i's vector,
/// zero rows pad the tail, tokens past `max_len` are truncated. Returns
/// the truncated-token count alongside the tensor.
pub fn embed_utterance(
    tokens: &[String],
    table: &EmbeddingTable,
    cfg: &EmbedConfig,
) -> Result<(Tensor2, usize)> {
    if table.dim != cfg.dim {
        return Err(Error::InvalidConfig(format!(
            "table dim {} != config dim {}",
            table.dim, cfg.dim
        )));
    }
    let mut out = Tensor2::zeros(cfg.max_len, cfg.dim);
    let kept = tokens.len().min(cfg.max_len);
    for (i, tok) in tokens.iter().take(kept).enumerate() {
        if let Some(v) = table.lookup(tok) {
            out.row_mut(i).copy_from_slice(v);
        }
    }
    Ok((out, tokens.len() - kept))
}
