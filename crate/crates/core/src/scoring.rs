//! Reference WER computation and evaluation metrics.
//!
//! Word-level edit alignment with fixed tie-breaking, WER, mean absolute
//! error, tie-corrected Kendall τ-b, the Wilcoxon signed-rank test,
//! per-group aggregation and WER histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::pairwise_sum;

/// Word-level edit alignment counts against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub n_sub: usize,
    pub n_del: usize,
    pub n_ins: usize,
    pub n_ref: usize,
}

impl Alignment {
    pub fn n_errors(&self) -> usize {
        self.n_sub + self.n_del + self.n_ins
    }
}

/// One utterance's predicted (and, when known, reference) WER plus the
/// group labels used for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub wer_ref: Option<f64>,
    pub wer_pred: f64,
    #[serde(default)]
    pub group: BTreeMap<String, String>,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, wer_ref: Option<f64>, wer_pred: f64) -> Self {
        PredictionRecord {
            id: id.into(),
            wer_ref,
            wer_pred,
            group: BTreeMap::new(),
        }
    }
}

/// Minimum-edit-distance alignment of `hyp` against `ref_tokens`.
///
/// Tokens compare case-sensitively. Ties are broken by preferring a
/// diagonal step (match/substitution) over deletion, and deletion over
/// insertion, so counts are reproducible.
pub fn align_words<S: AsRef<str>, T: AsRef<str>>(ref_tokens: &[S], hyp: &[T]) -> Result<Alignment> {
    if ref_tokens.is_empty() {
        return Err(Error::EmptyReference);
    }
    let n = ref_tokens.len();
    let m = hyp.len();
    // dp[i][j]: edit distance between ref[..i] and hyp[..j]
    let mut dp = vec![0u32; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dp[idx(i, 0)] = i as u32;
    }
    for j in 0..=m {
        dp[idx(0, j)] = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = u32::from(ref_tokens[i - 1].as_ref() != hyp[j - 1].as_ref());
            let diag = dp[idx(i - 1, j - 1)] + cost;
            let del = dp[idx(i - 1, j)] + 1;
            let ins = dp[idx(i, j - 1)] + 1;
            dp[idx(i, j)] = diag.min(del).min(ins);
        }
    }
    // Backtrace with the documented preference order.
    let (mut i, mut j) = (n, m);
    let (mut n_sub, mut n_del, mut n_ins) = (0usize, 0usize, 0usize);
    while i > 0 || j > 0 {
        let here = dp[idx(i, j)];
        if i > 0 && j > 0 {
            let cost = u32::from(ref_tokens[i - 1].as_ref() != hyp[j - 1].as_ref());
            if dp[idx(i - 1, j - 1)] + cost == here {
                if cost == 1 {
                    n_sub += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[idx(i - 1, j)] + 1 == here {
            n_del += 1;
            i -= 1;
            continue;
        }
        n_ins += 1;
        j -= 1;
    }
    Ok(Alignment {
        n_sub,
        n_del,
        n_ins,
        n_ref: n,
    })
}

/// WER in percent: `(S + D + I) / N_ref * 100`. Can exceed 100 when the
/// hypothesis carries many insertions.
pub fn wer(a: &Alignment) -> Result<f64> {
    if a.n_ref == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(a.n_errors() as f64 / a.n_ref as f64 * 100.0)
}

/// Mean absolute error between reference and predicted WER, in percentage
/// points.
pub fn mae(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut diffs = Vec::with_capacity(records.len());
    for r in records {
        let wr = r.wer_ref.ok_or_else(|| Error::MissingReference {
            id: r.id.clone(),
        })?;
        diffs.push((wr - r.wer_pred).abs());
    }
    Ok(pairwise_sum(&diffs) / diffs.len() as f64)
}

/// Tie-corrected Kendall rank correlation (τ-b) between reference and
/// predicted WER over all record pairs.
///
/// τ-b = (P − Q) / √((n₀ − n₁)(n₀ − n₂)) with n₀ = n(n−1)/2 and n₁, n₂ the
/// tied-pair counts on each side. Computed in O(n log n) via merge-sort
/// swap counting; the O(n²) pair-counting definition is kept as a test
/// oracle.
pub fn kendall_tau(records: &[PredictionRecord]) -> Result<f64> {
    let mut xs = Vec::with_capacity(records.len());
    let mut ys = Vec::with_capacity(records.len());
    for r in records {
        let wr = r.wer_ref.ok_or_else(|| Error::MissingReference {
            id: r.id.clone(),
        })?;
        xs.push(wr);
        ys.push(r.wer_pred);
    }
    kendall_tau_values(&xs, &ys)
}

/// τ-b over two paired value slices.
pub fn kendall_tau_values(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            a: xs.len(),
            b: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::EmptyRecords);
    }
    let x_const = xs.windows(2).all(|w| w[0] == w[1]);
    let y_const = ys.windows(2).all(|w| w[0] == w[1]);
    if x_const && y_const {
        return Err(Error::TauUndefined);
    }

    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });

    // Tied pairs in x, and jointly in (x, y).
    let mut tied_x = 0u64;
    let mut tied_xy = 0u64;
    {
        let mut run_x = 1u64;
        let mut run_xy = 1u64;
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                run_x += 1;
                if w[0].1 == w[1].1 {
                    run_xy += 1;
                } else {
                    tied_xy += run_xy * (run_xy - 1) / 2;
                    run_xy = 1;
                }
            } else {
                tied_x += run_x * (run_x - 1) / 2;
                run_x = 1;
                tied_xy += run_xy * (run_xy - 1) / 2;
                run_xy = 1;
            }
        }
        tied_x += run_x * (run_x - 1) / 2;
        tied_xy += run_xy * (run_xy - 1) / 2;
    }

    // Count swaps needed to sort the y side: each swap is a discordant pair.
    let mut ys_sorted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys_sorted);

    // Tied pairs in y.
    let mut tied_y = 0u64;
    {
        let mut run = 1u64;
        for w in ys_sorted.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                tied_y += run * (run - 1) / 2;
                run = 1;
            }
        }
        tied_y += run * (run - 1) / 2;
    }

    let n0 = (n as u64 * (n as u64 - 1) / 2) as f64;
    let (n1, n2, nxy) = (tied_x as f64, tied_y as f64, tied_xy as f64);
    // concordant − discordant = n0 − n1 − n2 + nxy − 2·swaps
    let c_minus_d = n0 - n1 - n2 + nxy - 2.0 * swaps as f64;
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    if denom == 0.0 {
        return Err(Error::TauUndefined);
    }
    Ok((c_minus_d / denom).clamp(-1.0, 1.0))
}

/// Merge sort that returns the number of inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mut buf = v.to_vec();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid || j < hi {
                if i < mid && (j >= hi || v[i] <= v[j]) {
                    buf[k] = v[i];
                    i += 1;
                } else {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                }
                k += 1;
            }
            lo = hi;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    swaps
}

/// Two-sided Wilcoxon signed-rank test on paired error lists.
///
/// Zero differences are dropped before ranking. Uses the exact null
/// distribution (subset-sum over doubled average ranks) for n ≤ 25 and a
/// normal approximation with tie correction above; no continuity
/// correction.
pub fn wilcoxon_signed_rank(errors_a: &[f64], errors_b: &[f64]) -> Result<f64> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::LengthMismatch {
            a: errors_a.len(),
            b: errors_b.len(),
        });
    }
    let diffs: Vec<f64> = errors_a
        .iter()
        .zip(errors_b.iter())
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.len() < 3 {
        return Err(Error::InsufficientPairs);
    }
    let n = diffs.len();

    // Rank |d| with average ranks for ties; keep ranks doubled so ties of
    // the form k.5 stay integral.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut rank2 = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // positions i..=j share the average rank (i+1 + .. + j+1)/(j-i+1)
        let doubled = (i + 1 + j + 1) as u64; // 2 * average rank
        for &k in &order[i..=j] {
            rank2[k] = doubled;
        }
        tie_sizes.push((j - i + 1) as u64);
        i = j + 1;
    }

    let w_plus2: u64 = (0..n).filter(|&k| diffs[k] > 0.0).map(|k| rank2[k]).sum();

    if n <= 25 {
        Ok(exact_p_two_sided(&rank2, w_plus2))
    } else {
        let nf = n as f64;
        let mean2 = nf * (nf + 1.0) / 2.0; // doubled mean
        let tie_term: f64 = tie_sizes
            .iter()
            .map(|&t| (t * t * t - t) as f64)
            .sum::<f64>()
            / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let z = (w_plus2 as f64 - mean2) / (2.0 * var.sqrt());
        Ok(erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
    }
}

/// Exact two-sided p-value: distribution of W⁺ (doubled ranks) under
/// independent random signs, via subset-sum counting.
fn exact_p_two_sided(rank2: &[u64], w_obs2: u64) -> f64 {
    let total: u64 = rank2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut max = 0usize;
    for &r in rank2 {
        let r = r as usize;
        max += r;
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let denom = 2f64.powi(rank2.len() as i32);
    let p_le: f64 = counts[..=w_obs2 as usize].iter().sum::<f64>() / denom;
    let p_ge: f64 = counts[w_obs2 as usize..].iter().sum::<f64>() / denom;
    (2.0 * p_le.min(p_ge)).min(1.0)
}

/// Complementary error function (Numerical Recipes rational approximation,
/// fractional error < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z
        - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
    .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// One row of a per-group aggregation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub mean_wer_ref: Option<f64>,
    pub mean_wer_pred: f64,
    pub n_utterances: usize,
}

/// Unweighted per-group means of reference and predicted WER, plus an
/// `ALL` row over every record. Rows are sorted by group value.
pub fn aggregate(records: &[PredictionRecord], group_key: &str) -> Result<Vec<GroupRow>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut groups: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        let v = r
            .group
            .get(group_key)
            .ok_or_else(|| Error::UnknownGroupKey(group_key.to_string()))?;
        groups.entry(v).or_default().push(r);
    }
    let mut rows: Vec<GroupRow> = groups
        .into_iter()
        .map(|(g, rs)| group_row(g, &rs))
        .collect();
    let all: Vec<&PredictionRecord> = records.iter().collect();
    rows.push(group_row("ALL", &all));
    Ok(rows)
}

fn group_row(name: &str, rs: &[&PredictionRecord]) -> GroupRow {
    let refs: Vec<f64> = rs.iter().filter_map(|r| r.wer_ref).collect();
    let preds: Vec<f64> = rs.iter().map(|r| r.wer_pred).collect();
    GroupRow {
        group: name.to_string(),
        mean_wer_ref: if refs.len() == rs.len() {
            Some(pairwise_sum(&refs) / refs.len() as f64)
        } else {
            None
        },
        mean_wer_pred: pairwise_sum(&preds) / preds.len() as f64,
        n_utterances: rs.len(),
    }
}

/// WER histogram: left-closed right-open bins of `bin_width` from 0 up to
/// `cap`, plus a final open-ended bin starting at `cap`.
pub fn histogram(values: &[f64], bin_width: f64, cap: f64) -> Result<Vec<(f64, usize)>> {
    if bin_width <= 0.0 {
        return Err(Error::InvalidConfig("bin_width must be > 0".into()));
    }
    let n_regular = (cap / bin_width).ceil() as usize;
    let mut bins = vec![0usize; n_regular + 1];
    for &v in values {
        if v < 0.0 {
            return Err(Error::NegativeValue(v));
        }
        let b = if v >= cap {
            n_regular
        } else {
            ((v / bin_width).floor() as usize).min(n_regular - 1)
        };
        bins[b] += 1;
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let start = if i == n_regular { cap } else { i as f64 * bin_width };
            (start, c)
        })
        .collect())
}

/// Default open-ended cap for WER histograms.
pub const HISTOGRAM_CAP: f64 = 150.0;
