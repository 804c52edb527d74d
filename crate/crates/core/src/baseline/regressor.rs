//! Regression backends: extremely randomized trees and ridge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::par_map_range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressorKind {
    ExtraTrees,
    Ridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ExtraTreesConfig {
    fn default() -> Self {
        ExtraTreesConfig {
            n_trees: 100,
            min_leaf: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig { lambda: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf(v) => *v,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] < *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtraTreesModel {
    pub trees: Vec<Node>,
    pub n_features: usize,
}

impl ExtraTreesModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn tree_predictions(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }
}

fn mean(y: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

fn sum_sq_dev(y: &[f64], idx: &[usize]) -> f64 {
    let m = mean(y, idx);
    idx.iter().map(|&i| (y[i] - m) * (y[i] - m)).sum()
}

fn build_tree(
    x: &[Vec<f64>],
    y: &[f64],
    idx: Vec<usize>,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    if idx.len() < 2 * min_leaf {
        return Node::Leaf(mean(y, &idx));
    }
    let parent_dev = sum_sq_dev(y, &idx);
    if parent_dev <= 0.0 {
        return Node::Leaf(mean(y, &idx));
    }
    let n_features = x[0].len();
    // one uniform random threshold per feature, keep the best variance
    // reduction among splits that respect the leaf minimum
    let mut best: Option<(f64, usize, f64)> = None; // (score, feature, thr)
    for f in 0..n_features {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &idx {
            lo = lo.min(x[i][f]);
            hi = hi.max(x[i][f]);
        }
        if !(hi > lo) {
            continue;
        }
        let thr = rng.gen_range(lo..hi);
        let left: Vec<usize> = idx.iter().copied().filter(|&i| x[i][f] < thr).collect();
        let n_left = left.len();
        let n_right = idx.len() - n_left;
        if n_left < min_leaf || n_right < min_leaf {
            continue;
        }
        let right: Vec<usize> = idx.iter().copied().filter(|&i| x[i][f] >= thr).collect();
        let score = parent_dev - sum_sq_dev(y, &left) - sum_sq_dev(y, &right);
        if best.map_or(true, |(s, _, _)| score > s) {
            best = Some((score, f, thr));
        }
    }
    match best {
        None => Node::Leaf(mean(y, &idx)),
        Some((_, feature, threshold)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| x[i][feature] < threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(build_tree(x, y, left_idx, min_leaf, rng)),
                right: Box::new(build_tree(x, y, right_idx, min_leaf, rng)),
            }
        }
    }
}

pub fn fit_extra_trees(
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &ExtraTreesConfig,
) -> Result<ExtraTreesModel> {
    validate_xy(x, y)?;
    let n_features = x[0].len();
    let trees: Vec<Node> = par_map_range(cfg.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
        build_tree(x, y, (0..x.len()).collect(), cfg.min_leaf.max(1), &mut rng)
    });
    Ok(ExtraTreesModel { trees, n_features })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeModel {
    /// coefficients on standardized features
    pub coefs: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for j in 0..self.coefs.len() {
            acc += self.coefs[j] * (x[j] - self.means[j]) / self.stds[j];
        }
        acc
    }

    /// Coefficients mapped back to the original feature scale.
    pub fn original_scale_coefficients(&self) -> Vec<f64> {
        self.coefs
            .iter()
            .zip(&self.stds)
            .map(|(c, s)| c / s)
            .collect()
    }
}

/// Closed-form ridge on features standardized by train statistics; the
/// intercept is the target mean and stays unpenalized.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], cfg: &RidgeConfig) -> Result<RidgeModel> {
    validate_xy(x, y)?;
    let n = x.len();
    let d = x[0].len();
    let mut means = vec![0.0; d];
    for row in x {
        for j in 0..d {
            means[j] += row[j];
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    let mut stds = vec![0.0; d];
    for row in x {
        for j in 0..d {
            let dev = row[j] - means[j];
            stds[j] += dev * dev;
        }
    }
    for s in stds.iter_mut() {
        *s = (*s / n as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0; // constant column contributes nothing after centering
        }
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;

    // normal equations on standardized, centered data
    let mut ata = vec![vec![0.0; d]; d];
    let mut atb = vec![0.0; d];
    for (row, &target) in x.iter().zip(y) {
        let z: Vec<f64> = (0..d).map(|j| (row[j] - means[j]) / stds[j]).collect();
        let yc = target - y_mean;
        for j in 0..d {
            atb[j] += z[j] * yc;
            for k in j..d {
                ata[j][k] += z[j] * z[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            ata[j][k] = ata[k][j];
        }
        ata[j][j] += cfg.lambda;
    }
    let coefs = solve(ata, atb)?;
    Ok(RidgeModel {
        coefs,
        intercept: y_mean,
        means,
        stds,
        lambda: cfg.lambda,
    })
}

fn validate_xy(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            a: x.len(),
            b: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidConfig("need at least 2 rows".into()));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidConfig("ragged or empty feature rows".into()));
    }
    Ok(())
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::Other("singular system in ridge solve".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_x(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn constant_target_predicts_the_constant() {
        let x = random_x(30, 4, 1);
        let y = vec![50.0; 30];
        let trees = fit_extra_trees(&x, &y, &ExtraTreesConfig::default()).unwrap();
        let ridge = fit_ridge(&x, &y, &RidgeConfig::default()).unwrap();
        for row in &x {
            assert_abs_diff_eq!(trees.predict(row), 50.0, epsilon = 1e-9);
            assert_abs_diff_eq!(ridge.predict(row), 50.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn ridge_recovers_linear_coefficients_as_lambda_vanishes() {
        let x = random_x(60, 3, 2);
        let truth = [2.5, -1.0, 0.25];
        let intercept = 7.0;
        let y: Vec<f64> = x
            .iter()
            .map(|r| intercept + r.iter().zip(truth).map(|(v, c)| v * c).sum::<f64>())
            .collect();
        let model = fit_ridge(&x, &y, &RidgeConfig { lambda: 1e-9 }).unwrap();
        let coefs = model.original_scale_coefficients();
        for (got, want) in coefs.iter().zip(truth) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-6);
        }
        for row in &x {
            let want = intercept + row.iter().zip(truth).map(|(v, c)| v * c).sum::<f64>();
            assert_abs_diff_eq!(model.predict(row), want, epsilon = 1e-6);
        }
    }

    #[test]
    fn extra_trees_beat_the_mean_predictor_on_training_data() {
        let x = random_x(80, 3, 3);
        let y: Vec<f64> = x.iter().map(|r| 10.0 * r[0] + r[1] * r[1]).collect();
        let trees = fit_extra_trees(&x, &y, &ExtraTreesConfig::default()).unwrap();
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let mae_trees: f64 = x
            .iter()
            .zip(&y)
            .map(|(r, t)| (trees.predict(r) - t).abs())
            .sum::<f64>()
            / y.len() as f64;
        let mae_mean: f64 = y.iter().map(|t| (t - y_mean).abs()).sum::<f64>() / y.len() as f64;
        assert!(
            mae_trees <= mae_mean,
            "trees {mae_trees} vs mean {mae_mean}"
        );
    }

    #[test]
    fn ensemble_prediction_is_the_mean_of_tree_predictions() {
        let x = random_x(40, 2, 4);
        let y: Vec<f64> = x.iter().map(|r| r[0] - r[1]).collect();
        let model = fit_extra_trees(
            &x,
            &y,
            &ExtraTreesConfig {
                n_trees: 7,
                ..ExtraTreesConfig::default()
            },
        )
        .unwrap();
        let probe = &x[5];
        let per_tree = model.tree_predictions(probe);
        assert_eq!(per_tree.len(), 7);
        let avg = per_tree.iter().sum::<f64>() / 7.0;
        assert_abs_diff_eq!(model.predict(probe), avg, epsilon = 1e-12);
    }

    #[test]
    fn fits_are_deterministic_for_a_seed() {
        let x = random_x(30, 3, 5);
        let y: Vec<f64> = x.iter().map(|r| r[2] * 3.0).collect();
        let a = fit_extra_trees(&x, &y, &ExtraTreesConfig::default()).unwrap();
        let b = fit_extra_trees(&x, &y, &ExtraTreesConfig::default()).unwrap();
        for row in &x {
            assert_eq!(a.predict(row), b.predict(row));
        }
    }

    #[test]
    fn zero_rows_error() {
        assert!(fit_ridge(&[], &[], &RidgeConfig::default()).is_err());
        assert!(fit_extra_trees(&[], &[], &ExtraTreesConfig::default()).is_err());
    }
}
