//! The local-learning-machine classifier: expected-margin computation under a
//! weighted Manhattan metric, the l1-regularized logistic objective in its
//! squared reparameterization, gradient training with backtracking line
//! search, and margin-based prediction.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{zscore_apply, zscore_fit, Dataset, DatasetError, NormalizationStats};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("vector dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("training needs both classes; class {0:+} is missing")]
    MissingClass(i8),
    #[error("class {class:+} has {count} samples, need at least 2")]
    ClassTooSmall { class: i8, count: usize },
    #[error("training needs at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("hyperparameters must be positive: lambda={lambda}, sigma={sigma}")]
    BadHyperparams { lambda: f64, sigma: f64 },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("model io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("model serialization failure: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Nonnegative per-feature weights; nonnegativity is structural because the
/// trainer only ever forms w = v (.) v.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Self {
        assert!(w.iter().all(|&x| x >= 0.0), "weights must be nonnegative");
        Self { w }
    }

    pub fn zeros(j: usize) -> Self {
        Self { w: vec![0.0; j] }
    }

    pub fn from_v(v: &[f64]) -> Self {
        Self { w: v.iter().map(|x| x * x).collect() }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

/// Regularization strength and kernel width, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlmHyperparams {
    pub lambda: f64,
    pub sigma: f64,
}

impl LlmHyperparams {
    pub fn new(lambda: f64, sigma: f64) -> Result<Self, LlmError> {
        if lambda > 0.0 && sigma > 0.0 && lambda.is_finite() && sigma.is_finite() {
            Ok(Self { lambda, sigma })
        } else {
            Err(LlmError::BadHyperparams { lambda, sigma })
        }
    }
}

/// Expected-margin rows: row n holds the probability-weighted miss-minus-hit
/// absolute difference vector for sample n.
#[derive(Debug, Clone)]
pub struct MarginTerms {
    zbar: Vec<f64>,
    n: usize,
    j: usize,
}

impl MarginTerms {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let j = rows.first().map_or(0, Vec::len);
        let mut zbar = Vec::with_capacity(n * j);
        for r in rows {
            assert_eq!(r.len(), j);
            zbar.extend(r);
        }
        Self { zbar, n, j }
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.j
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.zbar[i * self.j..(i + 1) * self.j]
    }
}

/// Controls for the alternating trainer. Defaults: infinity-norm outer
/// tolerance 1e-4 over 30 outer rounds, inner gradient descent capped at 200
/// steps with 1e-8 relative objective decrease, z-score fitting on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    /// Fit z-score stats on the input and train on the normalized copy; turn
    /// off for data that was already normalized upstream (the stored stats
    /// are then the identity).
    pub fit_normalization: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-4,
            max_outer_iters: 30,
            inner_tol: 1e-8,
            max_inner_iters: 200,
            fit_normalization: true,
        }
    }
}

/// Everything needed to predict: final weights, hyperparameters, the
/// normalized training snapshot and the statistics that normalize raw input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmModel {
    pub weights: WeightVector,
    pub hyper: LlmHyperparams,
    pub train_snapshot: Dataset,
    pub norm_stats: NormalizationStats,
}

/// Weighted Manhattan distance sum_j w_j |x1_j - x2_j|.
pub fn weighted_manhattan(x1: &[f64], x2: &[f64], w: &WeightVector) -> Result<f64, LlmError> {
    if x1.len() != x2.len() || x1.len() != w.dim() {
        return Err(LlmError::DimensionMismatch { left: x1.len(), right: x2.len().max(w.dim()) });
    }
    Ok(x1
        .iter()
        .zip(x2)
        .zip(w.as_slice())
        .map(|((a, b), wj)| wj * (a - b).abs())
        .sum())
}

/// Kernel-normalized probabilities over an index set: p_i proportional to
/// exp(-d_i / sigma). Shifted by the minimum distance so large distances
/// cannot underflow the whole set.
fn kernel_probabilities(distances: &[f64], sigma: f64) -> Vec<f64> {
    let dmin = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let mut probs: Vec<f64> =
        distances.iter().map(|&d| (-(d - dmin) / sigma).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Nearest-miss and nearest-hit probability distributions for sample `n`.
/// Returns (miss set with probabilities, hit set with probabilities).
#[allow(clippy::type_complexity)]
pub fn neighbor_probabilities(
    n: usize,
    data: &Dataset,
    w: &WeightVector,
    sigma: f64,
) -> Result<(Vec<(usize, f64)>, Vec<(usize, f64)>), LlmError> {
    let y = data.label(n);
    let misses: Vec<usize> = (0..data.n_samples()).filter(|&i| data.label(i) != y).collect();
    let hits: Vec<usize> =
        (0..data.n_samples()).filter(|&i| i != n && data.label(i) == y).collect();
    if misses.is_empty() {
        return Err(LlmError::MissingClass(-y));
    }
    if hits.is_empty() {
        return Err(LlmError::ClassTooSmall { class: y, count: 1 });
    }
    let xn = data.row(n);
    let dist = |set: &[usize]| -> Result<Vec<f64>, LlmError> {
        set.iter().map(|&i| weighted_manhattan(xn, data.row(i), w)).collect()
    };
    let miss_probs = kernel_probabilities(&dist(&misses)?, sigma);
    let hit_probs = kernel_probabilities(&dist(&hits)?, sigma);
    Ok((
        misses.into_iter().zip(miss_probs).collect(),
        hits.into_iter().zip(hit_probs).collect(),
    ))
}

/// Expected-margin row for a query point against explicit hit/miss index
/// sets: sum_miss p |x - x_i| - sum_hit p |x - x_i| elementwise.
fn margin_row(
    query: &[f64],
    data: &Dataset,
    misses: &[usize],
    hits: &[usize],
    w: &WeightVector,
    sigma: f64,
) -> Result<Vec<f64>, LlmError> {
    let j = data.n_features();
    let mut dist_m = Vec::with_capacity(misses.len());
    for &i in misses {
        dist_m.push(weighted_manhattan(query, data.row(i), w)?);
    }
    let mut dist_h = Vec::with_capacity(hits.len());
    for &i in hits {
        dist_h.push(weighted_manhattan(query, data.row(i), w)?);
    }
    let pm = kernel_probabilities(&dist_m, sigma);
    let ph = kernel_probabilities(&dist_h, sigma);
    let mut row = vec![0.0; j];
    for (&i, &p) in misses.iter().zip(&pm) {
        let xi = data.row(i);
        for (r, (a, b)) in row.iter_mut().zip(query.iter().zip(xi)) {
            *r += p * (a - b).abs();
        }
    }
    for (&i, &p) in hits.iter().zip(&ph) {
        let xi = data.row(i);
        for (r, (a, b)) in row.iter_mut().zip(query.iter().zip(xi)) {
            *r -= p * (a - b).abs();
        }
    }
    Ok(row)
}

/// Expected-margin terms for every training sample under the current weights.
pub fn expected_margin_terms(
    data: &Dataset,
    w: &WeightVector,
    sigma: f64,
) -> Result<MarginTerms, LlmError> {
    let n = data.n_samples();
    let j = data.n_features();
    let mut zbar = Vec::with_capacity(n * j);
    let pos: Vec<usize> = (0..n).filter(|&i| data.label(i) == 1).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| data.label(i) == -1).collect();
    if pos.is_empty() {
        return Err(LlmError::MissingClass(1));
    }
    if neg.is_empty() {
        return Err(LlmError::MissingClass(-1));
    }
    let mut hits = Vec::new();
    for i in 0..n {
        let (miss_set, same): (&[usize], &[usize]) =
            if data.label(i) == 1 { (&neg, &pos) } else { (&pos, &neg) };
        hits.clear();
        hits.extend(same.iter().copied().filter(|&k| k != i));
        if hits.is_empty() {
            return Err(LlmError::ClassTooSmall { class: data.label(i), count: 1 });
        }
        let row = margin_row(data.row(i), data, miss_set, &hits, w, sigma)?;
        zbar.extend(row);
    }
    Ok(MarginTerms { zbar, n, j })
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic of -s, evaluated so neither branch can overflow.
fn logistic_neg(s: f64) -> f64 {
    if s >= 0.0 {
        let e = (-s).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + s.exp())
    }
}

fn scores(v: &[f64], terms: &MarginTerms) -> Vec<f64> {
    (0..terms.n)
        .map(|n| {
            terms
                .row(n)
                .iter()
                .zip(v)
                .map(|(z, vj)| vj * vj * z)
                .sum()
        })
        .collect()
}

/// The unconstrained reparameterized loss:
/// sum_n log(1 + exp(-sum_j v_j^2 zbar_n(j))) + lambda ||v||^2.
pub fn objective(v: &[f64], terms: &MarginTerms, lambda: f64) -> f64 {
    let data_term: f64 = scores(v, terms).iter().map(|&s| softplus(-s)).sum();
    let reg: f64 = v.iter().map(|x| x * x).sum::<f64>() * lambda;
    data_term + reg
}

/// Analytic gradient of [`objective`] with respect to v:
/// 2 v_j (lambda - sum_n logistic(-s_n) zbar_n(j)).
pub fn objective_gradient(v: &[f64], terms: &MarginTerms, lambda: f64) -> Vec<f64> {
    bracket(v, terms, lambda)
        .iter()
        .zip(v)
        .map(|(b, vj)| 2.0 * vj * b)
        .collect()
}

/// The bracketed factor lambda - sum_n logistic(-s_n) zbar_n; the descent
/// direction is its negation times v elementwise.
fn bracket(v: &[f64], terms: &MarginTerms, lambda: f64) -> Vec<f64> {
    let s = scores(v, terms);
    let mut acc = vec![lambda; terms.j];
    for (n, &sn) in s.iter().enumerate() {
        let g = logistic_neg(sn);
        for (a, z) in acc.iter_mut().zip(terms.row(n)) {
            *a -= g * z;
        }
    }
    acc
}

/// Result of the inner gradient descent.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub v: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimize the reparameterized loss for fixed margin terms by gradient
/// descent along -(bracket (.) v), with backtracking line search (halving
/// from 1, Armijo constant 1e-4). Non-convergence returns the best iterate
/// with the flag cleared.
pub fn solve_inner(
    terms: &MarginTerms,
    lambda: f64,
    v0: &[f64],
    opts: &TrainOptions,
) -> InnerSolution {
    assert_eq!(v0.len(), terms.j, "v0 dimension must match margin terms");
    const ARMIJO: f64 = 1e-4;
    const MAX_HALVINGS: u32 = 60;
    let mut v = v0.to_vec();
    let mut f = objective(&v, terms, lambda);
    for iter in 0..opts.max_inner_iters {
        let b = bracket(&v, terms, lambda);
        let dir: Vec<f64> = b.iter().zip(&v).map(|(bj, vj)| -bj * vj).collect();
        // slope = <grad, dir> = -2 sum (v_j b_j)^2
        let slope: f64 = -2.0 * dir.iter().map(|d| d * d).sum::<f64>();
        if slope == 0.0 {
            return InnerSolution { v, objective: f, converged: true, iterations: iter };
        }
        let mut eta = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = v.iter().zip(&dir).map(|(vj, d)| vj + eta * d).collect();
            let fc = objective(&cand, terms, lambda);
            if fc <= f + ARMIJO * eta * slope {
                accepted = Some((cand, fc));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // could not find a decreasing step; best iterate so far is v
            return InnerSolution { v, objective: f, converged: false, iterations: iter };
        };
        let decrease = f - fc;
        v = cand;
        f = fc;
        if decrease <= opts.inner_tol * f.abs().max(1.0) {
            return InnerSolution { v, objective: f, converged: true, iterations: iter + 1 };
        }
    }
    InnerSolution { v, objective: f, converged: false, iterations: opts.max_inner_iters }
}

fn check_trainable(data: &Dataset) -> Result<(), LlmError> {
    if data.n_samples() < 4 {
        return Err(LlmError::TooFewSamples(data.n_samples()));
    }
    let (pos, neg) = data.class_counts();
    if pos == 0 {
        return Err(LlmError::MissingClass(1));
    }
    if neg == 0 {
        return Err(LlmError::MissingClass(-1));
    }
    if pos < 2 {
        return Err(LlmError::ClassTooSmall { class: 1, count: pos });
    }
    if neg < 2 {
        return Err(LlmError::ClassTooSmall { class: -1, count: neg });
    }
    Ok(())
}

/// Alternate expected-margin recomputation with the inner solve until the
/// weights settle in the infinity norm. Deterministic: v starts at all ones.
pub fn train(
    data: &Dataset,
    hyper: LlmHyperparams,
    opts: &TrainOptions,
) -> Result<LlmModel, LlmError> {
    check_trainable(data)?;
    let (snapshot, stats) = if opts.fit_normalization {
        let stats = zscore_fit(data)?;
        (zscore_apply(data, &stats)?, stats)
    } else {
        (data.clone(), NormalizationStats::identity(data.n_features()))
    };
    let j = snapshot.n_features();
    let mut v = vec![1.0; j];
    let mut w = WeightVector::from_v(&v);
    for _ in 0..opts.max_outer_iters {
        let terms = expected_margin_terms(&snapshot, &w, hyper.sigma)?;
        let sol = solve_inner(&terms, hyper.lambda, &v, opts);
        v = sol.v;
        let w_new = WeightVector::from_v(&v);
        let delta = w_new
            .as_slice()
            .iter()
            .zip(w.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if delta < opts.outer_tol {
            break;
        }
    }
    Ok(LlmModel { weights: w, hyper, train_snapshot: snapshot, norm_stats: stats })
}

impl LlmModel {
    /// Expected margin of a normalized query under the hypothesis that it
    /// belongs to class +1 (hits are +1 training samples, misses are -1).
    pub fn margin_normalized(&self, x: &[f64]) -> Result<f64, LlmError> {
        if x.len() != self.train_snapshot.n_features() {
            return Err(LlmError::DimensionMismatch {
                left: x.len(),
                right: self.train_snapshot.n_features(),
            });
        }
        let data = &self.train_snapshot;
        let hits: Vec<usize> = (0..data.n_samples()).filter(|&i| data.label(i) == 1).collect();
        let misses: Vec<usize> = (0..data.n_samples()).filter(|&i| data.label(i) == -1).collect();
        let row = margin_row(x, data, &misses, &hits, &self.weights, self.hyper.sigma)?;
        Ok(row.iter().zip(self.weights.as_slice()).map(|(z, w)| w * z).sum())
    }

    /// Classify a normalized query; margin 0 maps to -1.
    pub fn predict_normalized(&self, x: &[f64]) -> Result<i8, LlmError> {
        Ok(if self.margin_normalized(x)? > 0.0 { 1 } else { -1 })
    }

    /// Classify a raw query: normalize with the stored statistics, then take
    /// the sign of the expected margin under hypothesis +1. A margin of
    /// exactly 0 predicts -1.
    pub fn predict(&self, x_raw: &[f64]) -> Result<i8, LlmError> {
        if x_raw.len() != self.norm_stats.dim() {
            return Err(LlmError::DimensionMismatch { left: x_raw.len(), right: self.norm_stats.dim() });
        }
        let mut x = x_raw.to_vec();
        self.norm_stats.apply_row(&mut x);
        self.predict_normalized(&x)
    }

    /// (feature name, weight) pairs sorted by descending weight; ties keep
    /// the original feature order.
    pub fn feature_weights(&self) -> Vec<(String, f64)> {
        let mut pairs: Vec<(String, f64)> = self
            .train_snapshot
            .feature_names()
            .iter()
            .cloned()
            .zip(self.weights.as_slice().iter().copied())
            .collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        pairs
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<(), LlmError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load_json<P: AsRef<Path>>(path: P) -> Result<Self, LlmError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}
