//! Interpolated Witten–Bell n-gram language model and LM features.
//!
//! Events are the trained word types plus the sentence-end symbol and an
//! unknown-word symbol; the base distribution is uniform over that event
//! space, so every conditional sums to 1 and unseen words keep positive
//! probability. Sentence starts pad the context; sentence ends are trained
//! as events but feature scoring covers the words only.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BOS: u32 = 0;
const EOS: u32 = 1;
const UNK: u32 = 2;
const FIRST_WORD: u32 = 3;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ContextStats {
    total: u64,
    conts: HashMap<u32, u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NGramLM {
    order: usize,
    vocab: HashMap<String, u32>,
    /// counts[k]: context of length k (most recent last) → stats
    counts: Vec<HashMap<Vec<u32>, ContextStats>>,
}

/// Train an interpolated Witten–Bell model of the given order.
pub fn train_ngram_lm<S: AsRef<str>>(corpus: &[Vec<S>], order: usize) -> Result<NGramLM> {
    if order == 0 {
        return Err(Error::InvalidConfig("order must be ≥ 1".into()));
    }
    if corpus.is_empty() || corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::InvalidConfig("empty corpus".into()));
    }
    let mut vocab: HashMap<String, u32> = HashMap::new();
    let mut counts: Vec<HashMap<Vec<u32>, ContextStats>> = vec![HashMap::new(); order];
    for sentence in corpus {
        if sentence.is_empty() {
            continue;
        }
        let ids: Vec<u32> = sentence
            .iter()
            .map(|w| {
                let next = FIRST_WORD + vocab.len() as u32;
                *vocab.entry(w.as_ref().to_string()).or_insert(next)
            })
            .collect();
        for i in 0..=ids.len() {
            let word = if i < ids.len() { ids[i] } else { EOS };
            for k in 0..order {
                let ctx = context_at(&ids, i, k);
                let stats = counts[k].entry(ctx).or_default();
                stats.total += 1;
                *stats.conts.entry(word).or_insert(0) += 1;
            }
        }
    }
    Ok(NGramLM {
        order,
        vocab,
        counts,
    })
}

/// The k most recent ids before position i, BOS-padded on the left.
fn context_at(ids: &[u32], i: usize, k: usize) -> Vec<u32> {
    let mut ctx = Vec::with_capacity(k);
    for j in 0..k {
        let back = k - j; // oldest first
        if back > i {
            ctx.push(BOS);
        } else {
            ctx.push(ids[i - back]);
        }
    }
    ctx
}

impl NGramLM {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Size of the event space: word types + EOS + UNK.
    pub fn event_space(&self) -> usize {
        self.vocab.len() + 2
    }

    fn base_prob(&self) -> f64 {
        1.0 / self.event_space() as f64
    }

    fn word_id(&self, w: &str) -> u32 {
        self.vocab.get(w).copied().unwrap_or(UNK)
    }

    /// Witten–Bell conditional P(word | context), context most recent
    /// last, at most order−1 long.
    fn p_cond(&self, w: u32, ctx: &[u32]) -> f64 {
        if ctx.is_empty() {
            let stats = self.counts[0]
                .get(&Vec::new())
                .expect("non-empty corpus has unigram stats");
            let t = stats.conts.len() as f64;
            let c = *stats.conts.get(&w).unwrap_or(&0) as f64;
            return (c + t * self.base_prob()) / (stats.total as f64 + t);
        }
        match self.counts[ctx.len()].get(ctx) {
            None => self.p_cond(w, &ctx[1..]),
            Some(stats) => {
                let t = stats.conts.len() as f64;
                let c = *stats.conts.get(&w).unwrap_or(&0) as f64;
                let lower = self.p_cond(w, &ctx[1..]);
                (c + t * lower) / (stats.total as f64 + t)
            }
        }
    }

    /// P(word | preceding words), words as strings, OOV mapped to UNK.
    pub fn prob<S: AsRef<str>>(&self, word: &str, history: &[S]) -> f64 {
        let k = self.order - 1;
        let mut ctx = Vec::with_capacity(k);
        let h = history.len();
        for j in 0..k {
            let back = k - j;
            if back > h {
                ctx.push(BOS);
            } else {
                ctx.push(self.word_id(history[h - back].as_ref()));
            }
        }
        self.p_cond(self.word_id(word), &ctx)
    }

    /// All event probabilities for a context; used by the sum-to-one
    /// invariant. Events are the trained words plus EOS and UNK.
    pub fn conditional_distribution<S: AsRef<str>>(&self, history: &[S]) -> Vec<f64> {
        let k = self.order - 1;
        let mut ctx = Vec::with_capacity(k);
        let h = history.len();
        for j in 0..k {
            let back = k - j;
            if back > h {
                ctx.push(BOS);
            } else {
                ctx.push(self.word_id(history[h - back].as_ref()));
            }
        }
        let mut ids: Vec<u32> = self.vocab.values().copied().collect();
        ids.push(EOS);
        ids.push(UNK);
        ids.iter().map(|&w| self.p_cond(w, &ctx)).collect()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocab.contains_key(word)
    }
}

pub const LM_DIMS: usize = 4;
pub const LM_DIM_NAMES: [&str; LM_DIMS] = ["lm_total_log10", "lm_mean_log10", "lm_ppl", "lm_oov"];

/// LM feature vector of a token sequence:
/// [total log10 prob, mean per-word log10 prob, perplexity, OOV rate].
/// Empty input gives the zero vector.
pub fn lm_features<S: AsRef<str>>(tokens: &[S], lm: &NGramLM) -> Vec<f64> {
    if tokens.is_empty() {
        return vec![0.0; LM_DIMS];
    }
    let mut total = 0.0f64;
    let mut oov = 0usize;
    for i in 0..tokens.len() {
        if !lm.contains(tokens[i].as_ref()) {
            oov += 1;
        }
        let p = lm.prob(tokens[i].as_ref(), &tokens[..i]);
        total += p.log10();
    }
    let mean = total / tokens.len() as f64;
    let ppl = 10f64.powf(-mean);
    vec![total, mean, ppl, oov as f64 / tokens.len() as f64]
}
