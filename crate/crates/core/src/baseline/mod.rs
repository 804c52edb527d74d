//! Engineered-feature regression baseline: POS, LM, LEX and SIG feature
//! families feeding an extra-trees or ridge regressor, for head-to-head
//! comparison with the CNN predictors.

mod lexicon;
mod ngram;
mod pos;
mod regressor;

pub use lexicon::{
    lex_features, load_lexicon, Lexicon, PhoneCategory, CATEGORY_NAMES, LEX_DIMS, N_CATEGORIES,
};
pub use ngram::{lm_features, train_ngram_lm, NGramLM, LM_DIMS, LM_DIM_NAMES};
pub use pos::{derive_tagset, load_pos_sidecar, pos_features, train_tag_lm};
pub use regressor::{
    fit_extra_trees, fit_ridge, ExtraTreesConfig, ExtraTreesModel, Node, RegressorKind,
    RidgeConfig, RidgeModel,
};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::dsp;
use crate::error::{Error, Result};
use crate::parallel::try_par_map;

/// One feature family of the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Pos,
    Lex,
    Lm,
    Sig,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Pos => "POS",
            Family::Lex => "LEX",
            Family::Lm => "LM",
            Family::Sig => "SIG",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pos" => Some(Family::Pos),
            "lex" => Some(Family::Lex),
            "lm" => Some(Family::Lm),
            "sig" => Some(Family::Sig),
            _ => None,
        }
    }
}

/// Per-utterance feature vectors, one optional block per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub pos: Option<Vec<f64>>,
    pub lex: Option<Vec<f64>>,
    pub lm: Option<Vec<f64>>,
    pub sig: Option<Vec<f64>>,
}

impl FeatureRow {
    pub fn family(&self, f: Family) -> Option<&[f64]> {
        match f {
            Family::Pos => self.pos.as_deref(),
            Family::Lex => self.lex.as_deref(),
            Family::Lm => self.lm.as_deref(),
            Family::Sig => self.sig.as_deref(),
        }
    }

    /// Concatenate the selected families, erroring on a missing one.
    pub fn concat(&self, families: &[Family]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for &f in families {
            let block = self.family(f).ok_or_else(|| Error::MissingFamily {
                family: f.name().to_string(),
            })?;
            out.extend_from_slice(block);
        }
        Ok(out)
    }
}

/// Extraction context: which families to compute and the resources they
/// need. POS tags come from a sidecar (external taggers are out of
/// scope); the LM is trained by the caller (typically on training-side
/// references).
pub struct Extractor {
    pub families: Vec<Family>,
    pub lm: Option<NGramLM>,
    pub lexicon: Option<Lexicon>,
    pub tagset: Vec<String>,
    pub tag_lm: Option<NGramLM>,
    pub tags: HashMap<String, Vec<String>>,
}

impl Extractor {
    pub fn extract(&self, dataset: &Dataset) -> Result<Vec<FeatureRow>> {
        for f in &self.families {
            match f {
                Family::Lm if self.lm.is_none() => {
                    return Err(Error::InvalidConfig("LM features need a trained LM".into()))
                }
                Family::Lex if self.lexicon.is_none() => {
                    return Err(Error::InvalidConfig("LEX features need a lexicon".into()))
                }
                Family::Pos if self.tag_lm.is_none() => {
                    return Err(Error::InvalidConfig(
                        "POS features need a tag LM and tagset".into(),
                    ))
                }
                _ => {}
            }
        }
        try_par_map(&dataset.utterances, |u| {
            let mut row = FeatureRow {
                id: u.id.clone(),
                pos: None,
                lex: None,
                lm: None,
                sig: None,
            };
            for &f in &self.families {
                match f {
                    Family::Pos => {
                        let tags = self.tags.get(&u.id).cloned().unwrap_or_default();
                        row.pos = Some(pos_features(
                            &tags,
                            &self.tagset,
                            self.tag_lm.as_ref().unwrap(),
                        )?);
                    }
                    Family::Lex => {
                        row.lex = Some(lex_features(&u.hyp, self.lexicon.as_ref().unwrap()));
                    }
                    Family::Lm => {
                        row.lm = Some(lm_features(&u.hyp, self.lm.as_ref().unwrap()));
                    }
                    Family::Sig => {
                        let path = u.audio_path.as_ref().ok_or_else(|| Error::AudioRequired {
                            id: u.id.clone(),
                        })?;
                        let buf = dsp::load_and_standardize(path)?;
                        row.sig = Some(dsp::sig_features(&buf)?);
                    }
                }
            }
            Ok(row)
        })
    }
}

/// A fitted regressor plus the families it was trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Regressor {
    pub families: Vec<Family>,
    pub model: RegressorModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RegressorModel {
    ExtraTrees(ExtraTreesModel),
    Ridge(RidgeModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub kind: RegressorKind,
    pub extra_trees: ExtraTreesConfig,
    pub ridge: RidgeConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            kind: RegressorKind::ExtraTrees,
            extra_trees: ExtraTreesConfig::default(),
            ridge: RidgeConfig::default(),
        }
    }
}

/// Fit a regressor on the selected families of the given rows.
pub fn fit_regressor(
    rows: &[FeatureRow],
    targets: &[f64],
    families: &[Family],
    cfg: &FitConfig,
) -> Result<Regressor> {
    if rows.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            a: rows.len(),
            b: targets.len(),
        });
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.concat(families))
        .collect::<Result<_>>()?;
    let model = match cfg.kind {
        RegressorKind::ExtraTrees => {
            RegressorModel::ExtraTrees(fit_extra_trees(&x, targets, &cfg.extra_trees)?)
        }
        RegressorKind::Ridge => RegressorModel::Ridge(fit_ridge(&x, targets, &cfg.ridge)?),
    };
    Ok(Regressor {
        families: families.to_vec(),
        model,
    })
}

/// Predict one row's WER; raw model output clipped below at 0.
pub fn predict_regressor(reg: &Regressor, row: &FeatureRow) -> Result<f64> {
    let x = row.concat(&reg.families)?;
    let raw = match &reg.model {
        RegressorModel::ExtraTrees(m) => m.predict(&x),
        RegressorModel::Ridge(m) => m.predict(&x),
    };
    Ok(raw.max(0.0))
}

pub fn save_regressor(reg: &Regressor, path: &Path) -> Result<()> {
    let json = serde_json::to_string(reg).map_err(|e| Error::Other(format!("serialize: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_regressor(path: &Path) -> Result<Regressor> {
    let json =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&json).map_err(|e| Error::Other(format!("parse regressor: {e}")))
}

/// Column names for a family subset, in concat order.
pub fn feature_names(families: &[Family], tagset: &[String]) -> Vec<String> {
    let mut names = Vec::new();
    for f in families {
        match f {
            Family::Pos => {
                names.extend(tagset.iter().map(|t| format!("pos_{t}")));
                names.push("pos_bigram_log10".into());
            }
            Family::Lex => {
                names.extend(CATEGORY_NAMES.iter().map(|c| format!("lex_{c}")));
                names.push("lex_oov".into());
            }
            Family::Lm => names.extend(LM_DIM_NAMES.iter().map(|s| s.to_string())),
            Family::Sig => {
                for i in 0..13 {
                    names.push(format!("sig_mfcc{i}"));
                }
                for i in 0..13 {
                    names.push(format!("sig_delta{i}"));
                }
                for i in 0..13 {
                    names.push(format!("sig_accel{i}"));
                }
                names.push("sig_log_energy".into());
                names.push("sig_f0".into());
                names.push("sig_voicing".into());
                names.push("sig_loudness".into());
            }
        }
    }
    names
}

/// Write rows as CSV with a named header: `id`, one column per feature
/// dimension, and `wer_ref` when targets are given.
pub fn write_features_csv(
    rows: &[FeatureRow],
    targets: Option<&[f64]>,
    families: &[Family],
    tagset: &[String],
    path: &Path,
) -> Result<()> {
    use std::io::Write;
    let names = feature_names(families, tagset);
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut header = String::from("id");
    for n in &names {
        header.push(',');
        header.push_str(n);
    }
    if targets.is_some() {
        header.push_str(",wer_ref");
    }
    writeln!(f, "{header}").map_err(|e| Error::io(path.display().to_string(), e))?;
    for (i, row) in rows.iter().enumerate() {
        let vals = row.concat(families)?;
        let mut line = row.id.clone();
        for v in vals {
            line.push(',');
            line.push_str(&format!("{v}"));
        }
        if let Some(t) = targets {
            line.push(',');
            line.push_str(&format!("{}", t[i]));
        }
        writeln!(f, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Read a feature CSV written by [`write_features_csv`]. Families are
/// reconstructed from the header names; returns rows plus targets when a
/// `wer_ref` column is present.
pub fn read_features_csv(path: &Path) -> Result<(Vec<FeatureRow>, Option<Vec<f64>>)> {
    let content =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Other(format!("{}: empty csv", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"id") {
        return Err(Error::Other("feature csv must start with an id column".into()));
    }
    let has_target = cols.last() == Some(&"wer_ref");
    let feature_cols = &cols[1..cols.len() - usize::from(has_target)];
    // family spans by prefix
    let spans: Vec<(Family, usize)> = {
        let mut spans: Vec<(Family, usize)> = Vec::new();
        for c in feature_cols {
            let fam = if c.starts_with("pos_") {
                Family::Pos
            } else if c.starts_with("lex_") {
                Family::Lex
            } else if c.starts_with("lm_") {
                Family::Lm
            } else if c.starts_with("sig_") {
                Family::Sig
            } else {
                return Err(Error::Other(format!("unknown feature column {c}")));
            };
            match spans.last_mut() {
                Some((f, n)) if *f == fam => *n += 1,
                _ => spans.push((fam, 1)),
            }
        }
        spans
    };
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts
            .next()
            .ok_or_else(|| Error::Other(format!("line {}: missing id", lineno + 2)))?
            .to_string();
        let mut vals: Vec<f64> = Vec::with_capacity(feature_cols.len());
        for p in parts.by_ref().take(feature_cols.len()) {
            vals.push(p.parse().map_err(|_| {
                Error::Other(format!("line {}: bad number {p:?}", lineno + 2))
            })?);
        }
        if vals.len() != feature_cols.len() {
            return Err(Error::Other(format!(
                "line {}: expected {} values",
                lineno + 2,
                feature_cols.len()
            )));
        }
        if has_target {
            let t = parts.next().ok_or_else(|| {
                Error::Other(format!("line {}: missing wer_ref", lineno + 2))
            })?;
            targets.push(t.parse().map_err(|_| {
                Error::Other(format!("line {}: bad wer_ref {t:?}", lineno + 2))
            })?);
        }
        let mut row = FeatureRow {
            id,
            pos: None,
            lex: None,
            lm: None,
            sig: None,
        };
        let mut off = 0;
        for &(fam, n) in &spans {
            let block = vals[off..off + n].to_vec();
            off += n;
            match fam {
                Family::Pos => row.pos = Some(block),
                Family::Lex => row.lex = Some(block),
                Family::Lm => row.lm = Some(block),
                Family::Sig => row.sig = Some(block),
            }
        }
        rows.push(row);
    }
    Ok((rows, has_target.then_some(targets)))
}
