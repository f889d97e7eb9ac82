//! Bacterial colony chemotaxis optimizer: run-and-tumble chemotaxis with a
//! decaying precision schedule, move-toward-best-neighbor colony interaction
//! with a variance-adapted sensing range, premature-convergence detection and
//! chaotic escape on the incumbent, plus the cross-validation fitness adapter
//! and a uniform-sampling baseline.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaos::{decode, encode, improved_tent_step, SearchBox};
use crate::dataset::{Dataset, FoldAssignment};
use crate::llm::{train, LlmHyperparams, TrainOptions};

#[derive(Debug, Error)]
pub enum BccError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("trace io failure: {0}")]
    Io(#[from] std::io::Error),
}

/// One member of the colony. Position is always inside the search box.
#[derive(Debug, Clone)]
pub struct Bacterium {
    pub position: Vec<f64>,
    pub fitness: f64,
    pub last_direction: Vec<f64>,
    pub prev_improved: bool,
}

/// All knobs of the optimizer. Defaults follow the published schedule:
/// population 20, 200 generations, precision decaying from 2 to 1e-5 by
/// factor 1.25 per generation, sensing range in [1, box diagonal], chaotic
/// search capped at 200 steps, early stop above 99.5 fitness, variance-ratio
/// window (0.99, 1.01).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub population: usize,
    pub max_generations: usize,
    pub precision_start: f64,
    pub precision_end: f64,
    pub precision_update: f64,
    pub bounds: SearchBox,
    pub s_min: f64,
    pub s_max: f64,
    pub chaos_max_steps: usize,
    pub fitness_stop: f64,
    pub variance_m: f64,
    pub variance_n: f64,
    /// Chaotic escape on premature convergence; turning this off yields the
    /// plain variant, identical until the first detection event.
    pub chaos_enabled: bool,
    pub seed: u64,
}

impl OptimizerConfig {
    /// Paper-schedule defaults over the given box.
    pub fn for_box(bounds: SearchBox, seed: u64) -> Self {
        let s_max = bounds.diagonal();
        Self {
            population: 20,
            max_generations: 200,
            precision_start: 2.0,
            precision_end: 1e-5,
            precision_update: 1.25,
            bounds,
            s_min: 1.0,
            s_max,
            chaos_max_steps: 200,
            fitness_stop: 99.5,
            variance_m: 0.99,
            variance_n: 1.01,
            chaos_enabled: true,
            seed,
        }
    }

    /// The hyperparameter box of the tuning problem: lambda in [1e-6, 500],
    /// sigma in [1e-6, 1000] (tiny floors keep both strictly positive).
    pub fn hyperparameter_box() -> SearchBox {
        SearchBox::new(vec![1e-6, 1e-6], vec![500.0, 1000.0]).expect("static box")
    }

    pub fn validate(&self) -> Result<(), BccError> {
        if self.population == 0 || self.max_generations == 0 {
            return Err(BccError::InvalidConfig("population and generations must be positive".into()));
        }
        if !(self.precision_start > self.precision_end && self.precision_end > 0.0) {
            return Err(BccError::InvalidConfig("need precision_start > precision_end > 0".into()));
        }
        if !(self.precision_update > 1.0) {
            return Err(BccError::InvalidConfig("precision_update must exceed 1".into()));
        }
        if !(self.s_min < self.s_max) {
            return Err(BccError::InvalidConfig("need s_min < s_max".into()));
        }
        if !(self.variance_m > 0.0 && self.variance_m < 1.0 && self.variance_n > 1.0) {
            return Err(BccError::InvalidConfig("need 0 < m < 1 < n".into()));
        }
        Ok(())
    }
}

/// Per-generation bookkeeping, enough to redraw the training curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub variance: f64,
    pub sensing_range: f64,
    pub precision: f64,
    pub chaos_triggered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub generations: Vec<GenerationRecord>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
}

impl OptimizerTrace {
    /// CSV with one row per generation, plot-ready.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), BccError> {
        w.write_all(
            b"generation,best_fitness,mean_fitness,variance,sensing_range,precision,chaos_triggered\n",
        )?;
        for r in &self.generations {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.generation,
                r.best_fitness,
                r.mean_fitness,
                r.variance,
                r.sensing_range,
                r.precision,
                r.chaos_triggered as u8
            )?;
        }
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<(), BccError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

/// Five-fold (or k-fold) cross-validation accuracy of the classifier at
/// (lambda, sigma), in percent of all samples. The data must already be
/// normalized; a fold whose training union cannot be trained (e.g. a class
/// went missing) counts as fully misclassified.
pub fn fitness_cv(data: &Dataset, lambda: f64, sigma: f64, folds: &FoldAssignment) -> f64 {
    let hyper = match LlmHyperparams::new(lambda, sigma) {
        Ok(h) => h,
        Err(_) => {
            log::warn!("non-positive hyperparameters ({lambda}, {sigma}); scoring 0");
            return 0.0;
        }
    };
    let opts = TrainOptions { fit_normalization: false, ..TrainOptions::default() };
    let per_fold: Vec<usize> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let train_idx = folds.complement(f);
            let test_idx = folds.fold(f);
            if test_idx.is_empty() {
                return 0;
            }
            let trained = data
                .subset(&train_idx)
                .map_err(|e| e.to_string())
                .and_then(|sub| train(&sub, hyper, &opts).map_err(|e| e.to_string()));
            match trained {
                Ok(model) => test_idx
                    .iter()
                    .filter(|&&i| {
                        model
                            .predict_normalized(data.row(i))
                            .is_ok_and(|pred| pred == data.label(i))
                    })
                    .count(),
                Err(reason) => {
                    log::warn!("fold {f} not trainable ({reason}); counting it misclassified");
                    0
                }
            }
        })
        .collect();
    100.0 * per_fold.iter().sum::<usize>() as f64 / data.n_samples() as f64
}

/// Population fitness variance sum_i ((f_i - f_avg)/f_best)^2 with f_best
/// the maximum fitness; defined as 0 when f_best is 0.
pub fn fitness_variance(fitnesses: &[f64]) -> f64 {
    assert!(!fitnesses.is_empty(), "variance of an empty population");
    let best = fitnesses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == 0.0 {
        return 0.0;
    }
    let avg = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
    fitnesses.iter().map(|f| ((f - avg) / best).powi(2)).sum()
}

/// Variance-adapted sensing range S = S_min + (S_max - S_min) * var/N_p,
/// clamped into [S_min, S_max] because the variance is unbounded.
pub fn adaptive_sensing_range(variance: f64, config: &OptimizerConfig) -> f64 {
    let raw = config.s_min
        + (config.s_max - config.s_min) * variance / config.population as f64;
    raw.clamp(config.s_min, config.s_max)
}

/// Premature-convergence test on consecutive variances: the ratio lies in
/// (m, n). A fully stagnant 0/0 counts as premature; 0 followed by movement
/// does not.
pub fn detect_premature(var_k: f64, var_k1: f64, m: f64, n: f64) -> bool {
    if var_k == 0.0 {
        return var_k1 == 0.0;
    }
    let ratio = var_k1 / var_k;
    ratio > m && ratio < n
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// One run-and-tumble move: keep the previous direction while it keeps
/// paying off, otherwise tumble to a fresh uniform direction; the move of
/// length `step_len` is accepted unless it decreases fitness.
pub fn chemotaxis_step<F, R>(
    b: &Bacterium,
    step_len: f64,
    bounds: &SearchBox,
    fitness_fn: &F,
    rng: &mut R,
) -> Bacterium
where
    F: Fn(&[f64]) -> f64 + ?Sized,
    R: Rng + ?Sized,
{
    let dir = if b.prev_improved && b.last_direction.iter().any(|&d| d != 0.0) {
        b.last_direction.clone()
    } else {
        random_unit(rng, bounds.dim())
    };
    let mut candidate: Vec<f64> =
        b.position.iter().zip(&dir).map(|(p, d)| p + step_len * d).collect();
    bounds.clamp(&mut candidate);
    let f = fitness_fn(&candidate);
    if f >= b.fitness {
        Bacterium {
            prev_improved: f > b.fitness,
            position: candidate,
            fitness: f,
            last_direction: dir,
        }
    } else {
        Bacterium {
            position: b.position.clone(),
            fitness: b.fitness,
            last_direction: dir,
            prev_improved: false,
        }
    }
}

/// Colony information exchange: every bacterium that sees a strictly better
/// neighbor within the sensing range moves a random fraction of the way
/// toward the best such neighbor (computed from the pre-move snapshot), then
/// all moved positions are re-evaluated.
pub fn colony_interaction<F>(
    pop: &[Bacterium],
    sensing_range: f64,
    fitness_fn: &F,
    seed: u64,
    generation: usize,
) -> Vec<Bacterium>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let targets: Vec<Option<usize>> = pop
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut best: Option<usize> = None;
            for (j, other) in pop.iter().enumerate() {
                if j == i || other.fitness <= b.fitness {
                    continue;
                }
                let dist = b
                    .position
                    .iter()
                    .zip(&other.position)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                if dist < sensing_range && best.is_none_or(|k| other.fitness > pop[k].fitness) {
                    best = Some(j);
                }
            }
            best
        })
        .collect();
    pop.par_iter()
        .enumerate()
        .map(|(i, b)| match targets[i] {
            None => b.clone(),
            Some(j) => {
                let mut rng = split_rng(seed, generation, i as u64, PHASE_INTERACT);
                let u = loop {
                    let u: f64 = rng.gen_range(0.0..1.0);
                    if u > 0.0 {
                        break u;
                    }
                };
                let position: Vec<f64> = b
                    .position
                    .iter()
                    .zip(&pop[j].position)
                    .map(|(a, c)| a + u * (c - a))
                    .collect();
                let fitness = fitness_fn(&position);
                Bacterium { position, fitness, last_direction: b.last_direction.clone(), prev_improved: false }
            }
        })
        .collect()
}

/// Chaotic escape: carrier-map the incumbent into the unit cube, iterate the
/// perturbed Tent map, and return the first strictly better decoded
/// candidate, or the incumbent if the step budget runs out.
pub fn chaotic_search<F, R>(
    best: &Bacterium,
    bounds: &SearchBox,
    max_steps: usize,
    fitness_fn: &F,
    rng: &mut R,
) -> Bacterium
where
    F: Fn(&[f64]) -> f64 + ?Sized,
    R: Rng + ?Sized,
{
    let mut clamped = best.position.clone();
    bounds.clamp(&mut clamped);
    let mut u = encode(&clamped, bounds).expect("clamped position is inside the box");
    for _ in 0..max_steps {
        for c in u.0.iter_mut() {
            *c = improved_tent_step(*c, rng).expect("tent iterates stay in [0,1]");
        }
        let candidate = decode(&u, bounds).expect("unit point decodes into the box");
        let f = fitness_fn(&candidate);
        if f > best.fitness {
            return Bacterium {
                position: candidate,
                fitness: f,
                last_direction: vec![0.0; bounds.dim()],
                prev_improved: false,
            };
        }
    }
    best.clone()
}

/// Chaotic escape state kept across triggers. Repeating the orbit from the
/// same incumbent would re-evaluate the identical deterministic prefix, so
/// the orbit continues where it left off while the incumbent is unchanged.
/// Each trigger spends a short fine phase in a shrinking neighborhood of the
/// incumbent (polishing the current basin) before the box-wide coarse hunt.
struct EscapeState {
    anchor: Vec<f64>,
    orbit: Vec<f64>,
}

/// Steps of each trigger devoted to the shrinking-neighborhood fine phase.
const FINE_STEPS: usize = 40;
/// Fine-phase radius schedule: fraction of each dimension's range, decaying
/// geometrically from FINE_RADIUS down to FINE_RADIUS * FINE_SHRINK. The
/// log-spread covers everything from neighbor-basin hops to final polish.
const FINE_RADIUS: f64 = 0.2;
const FINE_SHRINK: f64 = 5e-4;

impl EscapeState {
    fn new(dim: usize) -> Self {
        Self { anchor: Vec::new(), orbit: vec![0.0; dim] }
    }

    fn run<F, R>(
        &mut self,
        best: &Bacterium,
        bounds: &SearchBox,
        max_steps: usize,
        fitness_fn: &F,
        rng: &mut R,
    ) -> Option<Bacterium>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
        R: Rng + ?Sized,
    {
        if self.anchor != best.position {
            self.anchor = best.position.clone();
            let mut clamped = best.position.clone();
            bounds.clamp(&mut clamped);
            self.orbit = encode(&clamped, bounds).expect("clamped position is in the box").0;
        }
        let fine = FINE_STEPS.min(max_steps / 2);
        for step in 0..max_steps {
            for c in self.orbit.iter_mut() {
                *c = improved_tent_step(*c, rng).expect("tent iterates stay in [0,1]");
            }
            let candidate = if step < fine {
                let radius =
                    FINE_RADIUS * FINE_SHRINK.powf(step as f64 / fine.max(1) as f64);
                let mut p: Vec<f64> = self
                    .anchor
                    .iter()
                    .zip(self.orbit.iter())
                    .zip(bounds.lower.iter().zip(&bounds.upper))
                    .map(|((a, u), (lo, hi))| a + (u - 0.5) * 2.0 * radius * (hi - lo))
                    .collect();
                bounds.clamp(&mut p);
                p
            } else {
                decode(&crate::chaos::UnitPoint(self.orbit.clone()), bounds)
                    .expect("unit point decodes into the box")
            };
            let f = fitness_fn(&candidate);
            if f > best.fitness {
                return Some(Bacterium {
                    position: candidate,
                    fitness: f,
                    last_direction: vec![0.0; bounds.dim()],
                    prev_improved: false,
                });
            }
        }
        None
    }
}

const PHASE_CHEMO: u64 = 1;
const PHASE_INTERACT: u64 = 2;
const PHASE_CHAOS: u64 = 3;

/// Deterministic per-(generation, bacterium, phase) RNG stream so that
/// parallel evaluation cannot perturb reproducibility.
fn split_rng(seed: u64, generation: usize, idx: u64, phase: u64) -> ChaCha8Rng {
    let mut z = seed
        ^ (generation as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ idx.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ phase.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Full optimization loop. Per generation: chemotaxis for every bacterium at
/// the current precision, variance bookkeeping, colony interaction at the
/// adapted sensing range, premature detection triggering chaotic escape on
/// the incumbent (which on success also replaces the worst bacterium), then
/// geometric precision decay. Stops at the generation budget or once the
/// best fitness exceeds the stop threshold.
pub fn optimize<F>(
    fitness_fn: &F,
    config: &OptimizerConfig,
) -> Result<(Vec<f64>, f64, OptimizerTrace), BccError>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    config.validate()?;
    let bounds = &config.bounds;
    let dim = bounds.dim();
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let positions: Vec<Vec<f64>> = (0..config.population)
        .map(|_| {
            (0..dim)
                .map(|d| master.gen_range(bounds.lower[d]..bounds.upper[d]))
                .collect()
        })
        .collect();
    let fitnesses: Vec<f64> = positions.par_iter().map(|p| fitness_fn(p)).collect();
    let mut pop: Vec<Bacterium> = positions
        .into_iter()
        .zip(fitnesses)
        .map(|(position, fitness)| Bacterium {
            position,
            fitness,
            last_direction: vec![0.0; dim],
            prev_improved: false,
        })
        .collect();

    let mut best = incumbent(&pop);
    let mut precision = config.precision_start;
    // variance of the freshly initialized population seeds the S_0 range
    let mut var_prev = fitness_variance(&pop.iter().map(|b| b.fitness).collect::<Vec<_>>());
    let mut escape = EscapeState::new(dim);
    let mut records = Vec::with_capacity(config.max_generations);

    for generation in 0..config.max_generations {
        // run-and-tumble, one new evaluation per bacterium
        let step_len = precision / config.precision_start * 0.1 * bounds.diagonal();
        pop = pop
            .par_iter()
            .enumerate()
            .map(|(i, b)| {
                let mut rng = split_rng(config.seed, generation, i as u64, PHASE_CHEMO);
                chemotaxis_step(b, step_len, bounds, fitness_fn, &mut rng)
            })
            .collect();
        refresh_best(&pop, &mut best);

        let sensing_range = adaptive_sensing_range(var_prev, config);
        pop = colony_interaction(&pop, sensing_range, fitness_fn, config.seed, generation);
        refresh_best(&pop, &mut best);

        let fits: Vec<f64> = pop.iter().map(|b| b.fitness).collect();
        let variance = fitness_variance(&fits);
        let mean_fitness = fits.iter().sum::<f64>() / fits.len() as f64;

        let mut chaos_triggered = false;
        if config.chaos_enabled
            && generation > 0
            && detect_premature(var_prev, variance, config.variance_m, config.variance_n)
        {
            chaos_triggered = true;
            let mut rng = split_rng(config.seed, generation, 0, PHASE_CHAOS);
            let trapped = Bacterium {
                position: best.0.clone(),
                fitness: best.1,
                last_direction: vec![0.0; dim],
                prev_improved: false,
            };
            if let Some(escaped) =
                escape.run(&trapped, bounds, config.chaos_max_steps, fitness_fn, &mut rng)
            {
                let moved: f64 = escaped
                    .position
                    .iter()
                    .zip(&best.0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                best = (escaped.position.clone(), escaped.fitness);
                let worst = pop
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.fitness.total_cmp(&b.1.fitness))
                    .map(|(i, _)| i)
                    .expect("population is nonempty");
                pop[worst] = escaped;
                // a long jump means the escape left the stagnant basin:
                // resume the chemotaxis schedule so the colony re-converges
                // on the new region instead of crawling at the precision
                // floor. Short in-basin polish keeps the schedule (and the
                // stagnation detector) as they are.
                if moved > 0.05 * bounds.diagonal() {
                    precision = config.precision_start;
                }
            }
        }
        var_prev = variance;
        precision = (precision / config.precision_update).max(config.precision_end);

        records.push(GenerationRecord {
            generation,
            best_fitness: best.1,
            mean_fitness,
            variance,
            sensing_range,
            precision,
            chaos_triggered,
        });
        if best.1 > config.fitness_stop {
            break;
        }
    }

    let trace = OptimizerTrace {
        generations: records,
        best_position: best.0.clone(),
        best_fitness: best.1,
    };
    Ok((best.0, best.1, trace))
}

fn incumbent(pop: &[Bacterium]) -> (Vec<f64>, f64) {
    let b = pop
        .iter()
        .max_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .expect("population is nonempty");
    (b.position.clone(), b.fitness)
}

fn refresh_best(pop: &[Bacterium], best: &mut (Vec<f64>, f64)) {
    let (pos, fit) = incumbent(pop);
    if fit > best.1 {
        *best = (pos, fit);
    }
}

/// Uniform-sampling baseline with the same evaluation budget
/// (population x generations), reported in the same trace format.
pub fn random_search<F>(
    fitness_fn: &F,
    config: &OptimizerConfig,
) -> Result<(Vec<f64>, f64, OptimizerTrace), BccError>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    config.validate()?;
    let bounds = &config.bounds;
    let dim = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut records = Vec::new();
    'outer: for generation in 0..config.max_generations {
        let batch: Vec<Vec<f64>> = (0..config.population)
            .map(|_| {
                (0..dim)
                    .map(|d| rng.gen_range(bounds.lower[d]..bounds.upper[d]))
                    .collect()
            })
            .collect();
        let fits: Vec<f64> = batch.par_iter().map(|p| fitness_fn(p)).collect();
        for (p, &f) in batch.iter().zip(&fits) {
            if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                best = Some((p.clone(), f));
            }
        }
        let best_f = best.as_ref().map(|(_, f)| *f).unwrap();
        records.push(GenerationRecord {
            generation,
            best_fitness: best_f,
            mean_fitness: fits.iter().sum::<f64>() / fits.len() as f64,
            variance: fitness_variance(&fits),
            sensing_range: 0.0,
            precision: 0.0,
            chaos_triggered: false,
        });
        if best_f > config.fitness_stop {
            break 'outer;
        }
    }
    let (pos, fit) = best.expect("at least one batch");
    let trace =
        OptimizerTrace { generations: records, best_position: pos.clone(), best_fitness: fit };
    Ok((pos, fit, trace))
}

/// Memoizing wrapper for expensive fitness functions, keyed on the
/// coordinates quantized to 12 significant digits.
pub struct FitnessCache<F> {
    inner: F,
    map: Mutex<HashMap<String, f64>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FitnessCache<F> {
    pub fn new(inner: F) -> Self {
        Self { inner, map: Mutex::new(HashMap::new()), hits: AtomicUsize::new(0), misses: AtomicUsize::new(0) }
    }

    fn key(x: &[f64]) -> String {
        let mut key = String::with_capacity(x.len() * 20);
        for v in x {
            key.push_str(&format!("{v:.11e},"));
        }
        key
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let key = Self::key(x);
        if let Some(&v) = self.map.lock().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return v;
        }
        let v = (self.inner)(x);
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.map.lock().unwrap().insert(key, v);
        v
    }

    /// (cache hits, distinct evaluations)
    pub fn stats(&self) -> (usize, usize) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::kfold_split;
    use approx::assert_abs_diff_eq;

    fn sphere(x: &[f64]) -> f64 {
        -((x[0] - 3.0).powi(2) + (x[1] - 5.0).powi(2))
    }

    fn test_config(seed: u64) -> OptimizerConfig {
        let bounds = SearchBox::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        OptimizerConfig {
            fitness_stop: f64::INFINITY,
            ..OptimizerConfig::for_box(bounds, seed)
        }
    }

    #[test]
    fn variance_hand_computed() {
        assert_abs_diff_eq!(fitness_variance(&[1.0, 2.0, 3.0]), 2.0 / 9.0, epsilon = 1e-15);
        assert_eq!(fitness_variance(&[4.2, 4.2, 4.2]), 0.0);
        assert_eq!(fitness_variance(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn sensing_range_formula_and_clamp() {
        let mut cfg = test_config(0);
        cfg.s_min = 1.0;
        cfg.s_max = 10.0;
        cfg.population = 20;
        assert_eq!(adaptive_sensing_range(0.0, &cfg), 1.0);
        assert_eq!(adaptive_sensing_range(20.0, &cfg), 10.0);
        assert_abs_diff_eq!(adaptive_sensing_range(5.0, &cfg), 3.25);
        assert_eq!(adaptive_sensing_range(1e12, &cfg), 10.0);
    }

    #[test]
    fn premature_detection_rules() {
        assert!(detect_premature(1.0, 1.0, 0.99, 1.01));
        assert!(!detect_premature(1.0, 0.5, 0.99, 1.01));
        assert!(detect_premature(0.0, 0.0, 0.99, 1.01));
        assert!(!detect_premature(0.0, 0.3, 0.99, 1.01));
        assert!(!detect_premature(1.0, 1.02, 0.99, 1.01));
    }

    #[test]
    fn chemotaxis_step_scales_with_precision() {
        let bounds = SearchBox::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        let b = Bacterium {
            position: vec![5.0, 5.0],
            fitness: f64::NEG_INFINITY, // any move is accepted
            last_direction: vec![0.0, 0.0],
            prev_improved: false,
        };
        for step in [1.0, 1e-3, 1e-9] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let moved = chemotaxis_step(&b, step, &bounds, &|_: &[f64]| 0.0, &mut rng);
            let disp: f64 = moved
                .position
                .iter()
                .zip(&b.position)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt();
            assert!(disp <= step + 1e-15);
            assert!(disp > 0.45 * step); // unit direction, at most halved by clamping
            assert!(bounds.contains(&moved.position));
        }
    }

    #[test]
    fn chemotaxis_improves_sphere_over_seeds() {
        let bounds = SearchBox::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        let mut improved_runs = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b = Bacterium {
                position: vec![8.0, 8.0],
                fitness: sphere(&[8.0, 8.0]),
                last_direction: vec![0.0, 0.0],
                prev_improved: false,
            };
            let start = b.fitness;
            for _ in 0..100 {
                b = chemotaxis_step(&b, 0.5, &bounds, &sphere, &mut rng);
                assert!(bounds.contains(&b.position));
            }
            if b.fitness > start {
                improved_runs += 1;
            }
        }
        assert!(improved_runs >= 99, "only {improved_runs}/100 improved");
    }

    #[test]
    fn interaction_zero_range_is_identity() {
        let pop = vec![
            Bacterium { position: vec![1.0, 1.0], fitness: 0.0, last_direction: vec![0.0, 0.0], prev_improved: false },
            Bacterium { position: vec![2.0, 2.0], fitness: 5.0, last_direction: vec![0.0, 0.0], prev_improved: false },
        ];
        let out = colony_interaction(&pop, 0.0, &sphere, 1, 0);
        for (a, b) in out.iter().zip(&pop) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.fitness, b.fitness);
        }
    }

    #[test]
    fn interaction_moves_strictly_toward_better() {
        let pop = vec![
            Bacterium { position: vec![1.0, 1.0], fitness: 0.0, last_direction: vec![0.0, 0.0], prev_improved: false },
            Bacterium { position: vec![4.0, 5.0], fitness: 5.0, last_direction: vec![0.0, 0.0], prev_improved: false },
        ];
        let sep0: f64 = 18.0f64.sqrt(); // |(1,1)-(4,5)| = 5
        let _ = sep0;
        for gen in 0..50 {
            let out = colony_interaction(&pop, 100.0, &sphere, 7, gen);
            let d_new: f64 = out[0]
                .position
                .iter()
                .zip(&pop[1].position)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt();
            assert!(d_new < 5.0, "distance did not strictly decrease: {d_new}");
            // the best bacterium never moves
            assert_eq!(out[1].position, pop[1].position);
        }
    }

    #[test]
    fn chaotic_search_never_worsens_and_escapes() {
        let bounds = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        // two basins: local peak of 1 at 0.15; global basin 2 - |x-0.75| on [0.55, 1]
        let two_basin = |x: &[f64]| -> f64 {
            if x[0] >= 0.55 {
                2.0 - (x[0] - 0.75).abs()
            } else {
                1.0 - (x[0] - 0.15).abs()
            }
        };
        let trapped = Bacterium {
            position: vec![0.15],
            fitness: 1.0,
            last_direction: vec![0.0],
            prev_improved: false,
        };
        let mut escapes = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = chaotic_search(&trapped, &bounds, 200, &two_basin, &mut rng);
            assert!(out.fitness >= trapped.fitness);
            if out.fitness > trapped.fitness {
                escapes += 1;
            }
        }
        assert!(escapes >= 95, "escaped only {escapes}/100");

        // already at the global maximum: nothing better exists, input returned
        let peak = Bacterium {
            position: vec![0.75],
            fitness: 2.0,
            last_direction: vec![0.0],
            prev_improved: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = chaotic_search(&peak, &bounds, 200, &two_basin, &mut rng);
        assert_eq!(out.position, peak.position);
        assert_eq!(out.fitness, 2.0);
    }

    #[test]
    fn optimize_is_deterministic_and_monotone() {
        let mut cfg = test_config(123);
        cfg.population = 10;
        cfg.max_generations = 30;
        let (p1, f1, t1) = optimize(&sphere, &cfg).unwrap();
        let (p2, f2, t2) = optimize(&sphere, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(f1, f2);
        assert_eq!(t1, t2);
        for w in t1.generations.windows(2) {
            assert!(w[1].best_fitness >= w[0].best_fitness);
        }
        assert!(cfg.bounds.contains(&p1));
        for r in &t1.generations {
            assert!(r.sensing_range >= cfg.s_min && r.sensing_range <= cfg.s_max);
        }
    }

    #[test]
    fn optimize_finds_sphere_optimum() {
        let mut hits = 0;
        for seed in 0..10u64 {
            let mut cfg = test_config(seed);
            cfg.max_generations = 100;
            let (p, _, _) = optimize(&sphere, &cfg).unwrap();
            if (p[0] - 3.0).abs() < 0.05 && (p[1] - 5.0).abs() < 0.05 {
                hits += 1;
            }
        }
        assert!(hits >= 9, "sphere optimum found in only {hits}/10 runs");
    }

    #[test]
    fn plain_bcc_matches_ibcc_until_first_chaos_event() {
        let rastrigin = |x: &[f64]| -> f64 {
            -(20.0
                + x.iter()
                    .map(|&v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                    .sum::<f64>())
        };
        let bounds = SearchBox::new(vec![-5.12, -5.12], vec![5.12, 5.12]).unwrap();
        let mut ibcc_cfg = OptimizerConfig::for_box(bounds, 77);
        ibcc_cfg.population = 12;
        ibcc_cfg.max_generations = 200;
        ibcc_cfg.fitness_stop = f64::INFINITY;
        let bcc_cfg = OptimizerConfig { chaos_enabled: false, ..ibcc_cfg.clone() };
        let (_, _, ti) = optimize(&rastrigin, &ibcc_cfg).unwrap();
        let (_, _, tb) = optimize(&rastrigin, &bcc_cfg).unwrap();
        let first_chaos = ti
            .generations
            .iter()
            .position(|r| r.chaos_triggered)
            .expect("rastrigin run should stagnate at least once");
        for g in 0..first_chaos {
            assert_eq!(ti.generations[g], tb.generations[g], "diverged before chaos at {g}");
        }
    }

    #[test]
    fn constant_fitness_triggers_exactly_one_chaos_in_two_generations() {
        let mut cfg = test_config(5);
        cfg.population = 5;
        cfg.max_generations = 2;
        let flat = |_: &[f64]| 1.0;
        let (_, _, trace) = optimize(&flat, &cfg).unwrap();
        let flags: Vec<bool> = trace.generations.iter().map(|r| r.chaos_triggered).collect();
        assert_eq!(flags, vec![false, true]);
    }

    #[test]
    fn random_search_respects_budget_and_box() {
        let mut cfg = test_config(9);
        cfg.population = 8;
        cfg.max_generations = 5;
        let (p, f, t) = random_search(&sphere, &cfg).unwrap();
        assert_eq!(t.generations.len(), 5);
        assert!(cfg.bounds.contains(&p));
        assert!(f <= 0.0);
        let (p2, _, _) = random_search(&sphere, &cfg).unwrap();
        assert_eq!(p, p2);
    }

    fn separable_dataset(n_per: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let y: i8 = if i < n_per { 1 } else { -1 };
            features.push(y as f64 * 3.0 + rng.gen_range(-0.5..0.5));
            features.push(rng.gen_range(-1.0..1.0));
            labels.push(y);
        }
        Dataset::new(features, labels, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn cv_fitness_is_perfect_on_separable_data() {
        let data = separable_dataset(10, 50);
        let folds = kfold_split(&data, 5, 1).unwrap();
        let acc = fitness_cv(&data, 1.0, 1.0, &folds);
        assert_eq!(acc, 100.0);
    }

    #[test]
    fn cv_fitness_near_chance_on_shuffled_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let n = 60;
        let features: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let data = Dataset::new(features, labels, vec!["a".into(), "b".into()]).unwrap();
        let folds = kfold_split(&data, 5, 2).unwrap();
        let acc = fitness_cv(&data, 1.0, 1.0, &folds);
        assert!((40.0..=60.0).contains(&acc), "accuracy {acc}");
    }

    #[test]
    fn cv_fitness_stays_bounded() {
        let data = separable_dataset(4, 52);
        let folds = kfold_split(&data, 4, 3).unwrap();
        for (l, s) in [(1e-6, 1e-6), (500.0, 1000.0), (0.1, 900.0)] {
            let acc = fitness_cv(&data, l, s, &folds);
            assert!((0.0..=100.0).contains(&acc));
        }
    }

    #[test]
    fn fitness_cache_deduplicates() {
        let calls = AtomicUsize::new(0);
        let cache = FitnessCache::new(|x: &[f64]| {
            calls.fetch_add(1, Ordering::SeqCst);
            x[0] * 2.0
        });
        assert_eq!(cache.eval(&[1.5]), 3.0);
        assert_eq!(cache.eval(&[1.5]), 3.0);
        assert_eq!(cache.eval(&[2.5]), 5.0);
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(cache.stats(), (1, 2));
    }
}
