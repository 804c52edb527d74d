//! POS features: normalized tag histogram plus a tag-bigram fluency score.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::ngram::{lm_features, train_ngram_lm, NGramLM};
use crate::error::{Error, Result};

/// Train the order-2 tag model backing the bigram term, from the
/// training-side tag sequences.
pub fn train_tag_lm<S: AsRef<str>>(tag_sequences: &[Vec<S>]) -> Result<NGramLM> {
    train_ngram_lm(tag_sequences, 2)
}

/// POS feature vector: normalized histogram over the declared tagset plus
/// the mean tag-bigram log10 probability — `|tagset| + 1` dimensions.
/// Empty tag sequences give the zero vector; tags outside the tagset are
/// an error naming the tag.
pub fn pos_features<S: AsRef<str>>(
    tags: &[S],
    tagset: &[String],
    tag_lm: &NGramLM,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; tagset.len() + 1];
    if tags.is_empty() {
        return Ok(out);
    }
    let index: HashMap<&str, usize> = tagset
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    for t in tags {
        let i = *index
            .get(t.as_ref())
            .ok_or_else(|| Error::UnknownTag(t.as_ref().to_string()))?;
        out[i] += 1.0;
    }
    for v in out.iter_mut().take(tagset.len()) {
        *v /= tags.len() as f64;
    }
    // mean log10 bigram probability of the tag sequence
    let lm_f = lm_features(tags, tag_lm);
    out[tagset.len()] = lm_f[1];
    Ok(out)
}

/// Parse a POS sidecar file: `id<TAB>tag tag …` per line.
pub fn load_pos_sidecar(path: &Path) -> Result<HashMap<String, Vec<String>>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut map = HashMap::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::Other(format!("POS sidecar line lacks a tab: {line:?}")))?;
        map.insert(
            id.to_string(),
            rest.split_whitespace().map(str::to_string).collect(),
        );
    }
    Ok(map)
}

/// Sorted unique tags over all sidecar sequences (the default tagset).
pub fn derive_tagset(tags: &HashMap<String, Vec<String>>) -> Vec<String> {
    let mut set: Vec<String> = tags
        .values()
        .flatten()
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    set.sort();
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tagset() -> Vec<String> {
        vec!["N".into(), "V".into()]
    }

    fn lm() -> NGramLM {
        train_tag_lm(&[
            vec!["N", "V", "N"],
            vec!["N", "V"],
            vec!["V", "N"],
        ])
        .unwrap()
    }

    #[test]
    fn histogram_counts_tags() {
        let f = pos_features(&["N", "V", "N"], &tagset(), &lm()).unwrap();
        assert_eq!(f.len(), 3);
        assert_abs_diff_eq!(f[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 1.0 / 3.0, epsilon = 1e-15);
        assert!(f[2] < 0.0, "bigram log-prob term present");
    }

    #[test]
    fn empty_tags_give_zero_vector() {
        let f = pos_features(&[] as &[&str], &tagset(), &lm()).unwrap();
        assert_eq!(f, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_single_tag_histogram_is_one() {
        let single = vec!["N".to_string()];
        let lm = train_tag_lm(&[vec!["N", "N"]]).unwrap();
        let f = pos_features(&["N", "N", "N"], &single, &lm).unwrap();
        assert_abs_diff_eq!(f[0], 1.0);
    }

    #[test]
    fn unknown_tag_is_an_error() {
        let e = pos_features(&["N", "XX"], &tagset(), &lm()).unwrap_err();
        assert_eq!(e.to_string(), "unknown tag XX");
    }
}
