//! Pronunciation lexicon and phoneme-category features.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhoneCategory {
    Vowel,
    Nasal,
    Plosive,
    Fricative,
    Liquid,
    Glide,
    Other,
}

pub const N_CATEGORIES: usize = 7;
pub const CATEGORY_NAMES: [&str; N_CATEGORIES] = [
    "vowel",
    "nasal",
    "plosive",
    "fricative",
    "liquid",
    "glide",
    "other",
];

impl PhoneCategory {
    pub fn index(&self) -> usize {
        match self {
            PhoneCategory::Vowel => 0,
            PhoneCategory::Nasal => 1,
            PhoneCategory::Plosive => 2,
            PhoneCategory::Fricative => 3,
            PhoneCategory::Liquid => 4,
            PhoneCategory::Glide => 5,
            PhoneCategory::Other => 6,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vowel" => Some(PhoneCategory::Vowel),
            "nasal" => Some(PhoneCategory::Nasal),
            "plosive" => Some(PhoneCategory::Plosive),
            "fricative" => Some(PhoneCategory::Fricative),
            "liquid" => Some(PhoneCategory::Liquid),
            "glide" => Some(PhoneCategory::Glide),
            "other" => Some(PhoneCategory::Other),
            _ => None,
        }
    }
}

/// Word → first pronunciation, with the phoneme → category map. Every
/// phoneme of every pronunciation must carry a category (validated at
/// load).
#[derive(Debug, Clone)]
pub struct Lexicon {
    prons: HashMap<String, Vec<String>>,
    categories: HashMap<String, PhoneCategory>,
}

impl Lexicon {
    pub fn len(&self) -> usize {
        self.prons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prons.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.prons.contains_key(word)
    }

    pub fn pronunciation(&self, word: &str) -> Option<&[String]> {
        self.prons.get(word).map(Vec::as_slice)
    }

    pub fn from_parts(
        prons: Vec<(String, Vec<String>)>,
        categories: HashMap<String, PhoneCategory>,
    ) -> Result<Self> {
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        for (word, phones) in prons {
            for p in &phones {
                if !categories.contains_key(p) {
                    return Err(Error::UnknownPhoneme {
                        phoneme: p.clone(),
                        word,
                    });
                }
            }
            // first pronunciation wins
            map.entry(word).or_insert(phones);
        }
        Ok(Lexicon {
            prons: map,
            categories,
        })
    }
}

/// Load `word<TAB>phoneme phoneme …` plus a JSON `{phoneme: category}`
/// map. Repeated words keep their first pronunciation.
pub fn load_lexicon(lexicon_path: &Path, categories_path: &Path) -> Result<Lexicon> {
    let cat_json = std::fs::read_to_string(categories_path)
        .map_err(|e| Error::io(categories_path.display().to_string(), e))?;
    let raw: HashMap<String, String> = serde_json::from_str(&cat_json)
        .map_err(|e| Error::Other(format!("{}: {e}", categories_path.display())))?;
    let mut categories = HashMap::with_capacity(raw.len());
    for (ph, cat) in raw {
        let parsed = PhoneCategory::parse(&cat).ok_or_else(|| {
            Error::Other(format!("unknown phoneme category {cat:?} for {ph}"))
        })?;
        categories.insert(ph, parsed);
    }

    let f = std::fs::File::open(lexicon_path)
        .map_err(|e| Error::io(lexicon_path.display().to_string(), e))?;
    let mut prons = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(lexicon_path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (word, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::Other(format!("lexicon line lacks a tab: {line:?}")))?;
        let phones: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        prons.push((word.to_string(), phones));
    }
    Lexicon::from_parts(prons, categories)
}

pub const LEX_DIMS: usize = N_CATEGORIES + 1;

/// LEX feature vector: mean over in-lexicon token occurrences of their
/// 7-dim phoneme-category frequency vectors (first pronunciation), plus
/// the lexicon-OOV rate as the final dimension.
pub fn lex_features<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> Vec<f64> {
    let mut out = vec![0.0; LEX_DIMS];
    if tokens.is_empty() {
        return out;
    }
    let mut in_lex = 0usize;
    for tok in tokens {
        match lexicon.pronunciation(tok.as_ref()) {
            Some(phones) if !phones.is_empty() => {
                in_lex += 1;
                let mut counts = [0.0; N_CATEGORIES];
                for p in phones {
                    let cat = lexicon.categories[p];
                    counts[cat.index()] += 1.0;
                }
                for (o, c) in out.iter_mut().zip(counts) {
                    *o += c / phones.len() as f64;
                }
            }
            Some(_) => in_lex += 1, // empty pronunciation contributes zeros
            None => {}
        }
    }
    if in_lex > 0 {
        for o in out.iter_mut().take(N_CATEGORIES) {
            *o /= in_lex as f64;
        }
    }
    out[N_CATEGORIES] = 1.0 - in_lex as f64 / tokens.len() as f64;
    out
}
