//! The tuning pipeline shared by the `tune` and `robustness` commands:
//! stratified split, z-score normalization fit on the training side, a fixed
//! stratified k-fold assignment, optimizer search over the (lambda, sigma)
//! box, parsimony refinement among exact cross-validation ties, final
//! training and held-out evaluation.

use serde::{Deserialize, Serialize};

use tsa_core::bcc::{
    fitness_cv, optimize, random_search, FitnessCache, OptimizerConfig, OptimizerTrace,
};
use tsa_core::chaos::SearchBox;
use tsa_core::dataset::{
    inject_irrelevant_features, kfold_split, stratified_split, zscore_apply, zscore_fit, Dataset,
};
use tsa_core::llm::{train, LlmHyperparams, LlmModel, TrainOptions};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Ibcc,
    Bcc,
    Random,
}

impl std::str::FromStr for OptimizerKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "ibcc" => Ok(Self::Ibcc),
            "bcc" => Ok(Self::Bcc),
            "random" => Ok(Self::Random),
            other => Err(CliError::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Experiment knobs with the published schedule as defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub split_fraction: f64,
    pub folds: usize,
    pub population: usize,
    pub max_generations: usize,
    pub chaos_max_steps: usize,
    pub fitness_stop: f64,
    pub lambda_max: f64,
    pub sigma_max: f64,
    pub irrelevant_counts: Vec<usize>,
    pub noise_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            split_fraction: 0.75,
            folds: 5,
            population: 20,
            max_generations: 200,
            chaos_max_steps: 200,
            fitness_stop: 99.5,
            lambda_max: 500.0,
            sigma_max: 1000.0,
            irrelevant_counts: vec![0, 50, 100, 150, 200],
            noise_seed: 12345,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(CliError::Config("split_fraction must lie in (0,1)".into()));
        }
        if self.folds < 2 {
            return Err(CliError::Config("folds must be at least 2".into()));
        }
        if self.lambda_max <= 1e-6 || self.sigma_max <= 1e-6 {
            return Err(CliError::Config("lambda_max and sigma_max must exceed 1e-6".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_stable: usize,
    pub false_stable: usize,
    pub true_unstable: usize,
    pub false_unstable: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_stable + self.false_stable + self.true_unstable + self.false_unstable
    }

    pub fn accuracy_percent(&self) -> f64 {
        100.0 * (self.true_stable + self.true_unstable) as f64 / self.total() as f64
    }
}

/// Count prediction outcomes of `model` on the given rows of `data`.
pub fn evaluate_confusion(
    model: &LlmModel,
    data: &Dataset,
    rows: &[usize],
) -> Result<Confusion, CliError> {
    let mut c = Confusion { true_stable: 0, false_stable: 0, true_unstable: 0, false_unstable: 0 };
    for &i in rows {
        let pred = model
            .predict(data.row(i))
            .map_err(|e| CliError::Numeric(format!("prediction failed: {e}")))?;
        match (pred, data.label(i)) {
            (1, 1) => c.true_stable += 1,
            (1, -1) => c.false_stable += 1,
            (-1, -1) => c.true_unstable += 1,
            (-1, 1) => c.false_unstable += 1,
            _ => unreachable!("labels are validated to +-1"),
        }
    }
    Ok(c)
}

#[derive(Debug)]
pub struct TuneOutcome {
    pub lambda: f64,
    pub sigma: f64,
    pub cv_accuracy: f64,
    pub test_accuracy: f64,
    pub confusion: Confusion,
    pub model: LlmModel,
    pub trace: OptimizerTrace,
    /// Distinct fitness evaluations and cache hits during the search.
    pub evaluations: usize,
    pub cache_hits: usize,
}

/// Among hyperparameters whose cross-validation accuracy exactly ties the
/// optimum, prefer the most parsimonious model: snap onto a power-of-two
/// lattice, then walk lambda up (stronger sparsification) and sigma down
/// (more local) while the tie holds. Never trades accuracy away.
fn refine_among_ties<F: Fn(&[f64]) -> f64>(
    eval: &F,
    mut best_fit: f64,
    start: (f64, f64),
    lambda_bounds: (f64, f64),
    sigma_bounds: (f64, f64),
) -> (f64, f64, f64) {
    let (mut lambda, mut sigma) = start;
    let snap = |v: f64| 2.0f64.powi(v.log2().floor() as i32);
    let try_point = |l: f64, s: f64, best: &mut f64| -> bool {
        let f = eval(&[l, s]);
        if f >= *best {
            *best = f;
            true
        } else {
            false
        }
    };
    let ls = snap(lambda).clamp(lambda_bounds.0, lambda_bounds.1);
    if ls != lambda && try_point(ls, sigma, &mut best_fit) {
        lambda = ls;
    }
    let ss = snap(sigma).clamp(sigma_bounds.0, sigma_bounds.1);
    if ss != sigma && try_point(lambda, ss, &mut best_fit) {
        sigma = ss;
    }
    for _ in 0..2 {
        loop {
            let cand = (lambda * 2.0).min(lambda_bounds.1);
            if cand <= lambda || !try_point(cand, sigma, &mut best_fit) {
                break;
            }
            lambda = cand;
        }
        loop {
            let cand = (sigma / 2.0).max(sigma_bounds.0);
            if cand >= sigma || !try_point(lambda, cand, &mut best_fit) {
                break;
            }
            sigma = cand;
        }
    }
    (lambda, sigma, best_fit)
}

/// Full tuning run on a raw dataset. Deterministic for a given seed.
pub fn tune(
    data: &Dataset,
    kind: OptimizerKind,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<TuneOutcome, CliError> {
    cfg.validate()?;
    let (pos, neg) = data.class_counts();
    if pos == 0 || neg == 0 {
        return Err(CliError::Data(format!(
            "dataset needs both classes, got {pos} stable / {neg} unstable"
        )));
    }
    let (train_idx, test_idx) =
        stratified_split(data, cfg.split_fraction, seed).map_err(|e| CliError::Data(e.to_string()))?;
    if test_idx.is_empty() {
        return Err(CliError::Data("test split is empty; lower split_fraction".into()));
    }
    let train_raw = data.subset(&train_idx).map_err(|e| CliError::Data(e.to_string()))?;
    let stats = zscore_fit(&train_raw).map_err(|e| CliError::Data(e.to_string()))?;
    let train_norm =
        zscore_apply(&train_raw, &stats).map_err(|e| CliError::Data(e.to_string()))?;
    let folds = kfold_split(&train_norm, cfg.folds, seed)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let cache = FitnessCache::new(|x: &[f64]| fitness_cv(&train_norm, x[0], x[1], &folds));
    let eval = |x: &[f64]| cache.eval(x);
    let bounds = SearchBox::new(vec![1e-6, 1e-6], vec![cfg.lambda_max, cfg.sigma_max])
        .map_err(|e| CliError::Config(e.to_string()))?;
    let opt_config = OptimizerConfig {
        population: cfg.population,
        max_generations: cfg.max_generations,
        chaos_max_steps: cfg.chaos_max_steps,
        fitness_stop: cfg.fitness_stop,
        chaos_enabled: kind == OptimizerKind::Ibcc,
        seed,
        ..OptimizerConfig::for_box(bounds, seed)
    };
    let (best_pos, best_fit, trace) = match kind {
        OptimizerKind::Ibcc | OptimizerKind::Bcc => {
            optimize(&eval, &opt_config).map_err(|e| CliError::Config(e.to_string()))?
        }
        OptimizerKind::Random => {
            random_search(&eval, &opt_config).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    let (lambda, sigma, cv_accuracy) = refine_among_ties(
        &eval,
        best_fit,
        (best_pos[0], best_pos[1]),
        (1e-6, cfg.lambda_max),
        (1e-6, cfg.sigma_max),
    );

    let hyper = LlmHyperparams::new(lambda, sigma)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let model = train(&train_raw, hyper, &TrainOptions::default())
        .map_err(|e| CliError::Numeric(format!("final training failed: {e}")))?;
    let confusion = evaluate_confusion(&model, data, &test_idx)?;
    let (cache_hits, evaluations) = cache.stats();
    Ok(TuneOutcome {
        lambda,
        sigma,
        cv_accuracy,
        test_accuracy: confusion.accuracy_percent(),
        confusion,
        model,
        trace,
        evaluations,
        cache_hits,
    })
}

/// One robustness row: inject `count` standard-normal noise columns into
/// the full dataset (train and test see the same columns), then re-run the
/// tune pipeline with the same seed.
pub fn robustness_row(
    data: &Dataset,
    count: usize,
    kind: OptimizerKind,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<TuneOutcome, CliError> {
    let injected = inject_irrelevant_features(data, count, cfg.noise_seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    tune(&injected, kind, cfg, seed)
}
