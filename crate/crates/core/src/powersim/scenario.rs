//! Scenario-grid dataset generation: load levels x random dispatches x
//! fault locations, each simulated, labeled and reduced to the 33 features.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

use super::case::PowerCase;
use super::features::{extract_features, feature_names};
use super::simulate::{stability_label, DynamicModel};
use super::PowersimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Load scaling factors, e.g. [0.85, 0.95, 1.05, 1.15].
    pub load_levels: Vec<f64>,
    /// Random generation dispatches drawn per load level.
    pub dispatches_per_level: usize,
    /// Bus ids to subject to a three-phase fault.
    pub fault_buses: Vec<usize>,
    /// Fault clearing time, s.
    pub t_clear: f64,
    /// Simulation horizon, s.
    pub horizon: f64,
    /// Integration step, s.
    pub dt: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// The shipped 9-bus grid: the four load levels, five dispatches each,
    /// a fault at every bus, 0.1 s clearing.
    pub fn default_for(case: &PowerCase) -> Self {
        Self {
            load_levels: vec![0.85, 0.95, 1.05, 1.15],
            dispatches_per_level: 5,
            fault_buses: case.buses.iter().map(|b| b.id).collect(),
            t_clear: 0.1,
            horizon: 5.0,
            dt: 0.005,
            seed: 1,
        }
    }

    pub fn from_json_path<P: AsRef<Path>>(path: P) -> Result<Self, PowersimError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }

    pub fn to_json_path<P: AsRef<Path>>(&self, path: P) -> Result<(), PowersimError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }
}

/// A scenario that could not produce a sample, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedScenario {
    pub load_level: f64,
    pub dispatch: usize,
    /// None when the whole dispatch failed (power flow), a bus id when one
    /// fault simulation failed.
    pub fault_bus: Option<usize>,
    pub reason: String,
}

/// Scale the loads and redistribute generation with random dispatch shares
/// drawn uniformly on the simplex, scaled to cover the scaled load plus
/// estimated losses. The slack machine absorbs the remaining imbalance in
/// the power flow.
fn dispatch_case(base: &PowerCase, level: f64, shares: &[f64], base_losses: f64) -> PowerCase {
    let mut case = base.clone();
    for load in &mut case.loads {
        load.p *= level;
        load.q *= level;
    }
    let (load_p, _) = case.total_load();
    let target_total = load_p + base_losses * level;
    for (gen, s) in case.generators.iter_mut().zip(shares) {
        gen.p_gen = s * target_total;
    }
    case
}

/// Uniform point on the probability simplex (normalized exponentials).
fn simplex_shares<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0f64..1.0).max(1e-12).ln()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Run the full scenario grid. Returns one dataset row per feasible
/// scenario in deterministic (level, dispatch, fault) order, plus the list
/// of skipped scenarios.
pub fn generate_dataset(
    case: &PowerCase,
    config: &ScenarioConfig,
) -> Result<(Dataset, Vec<SkippedScenario>), PowersimError> {
    case.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base_losses = {
        let model = DynamicModel::new(case)?;
        let gen_p: f64 = model.pf.s_gen.iter().map(|s| s.re).sum();
        let (load_p, _) = case.total_load();
        (gen_p - load_p).max(0.0)
    };

    // draw every dispatch up front so the sample order is deterministic
    struct Spec {
        level: f64,
        dispatch: usize,
        case: PowerCase,
    }
    let mut specs = Vec::new();
    for &level in &config.load_levels {
        for d in 0..config.dispatches_per_level {
            let shares = simplex_shares(&mut rng, case.n_generators());
            specs.push(Spec { level, dispatch: d, case: dispatch_case(case, level, &shares, base_losses) });
        }
    }

    struct DispatchOutcome {
        level: f64,
        dispatch: usize,
        result: Result<Vec<(usize, Result<(Vec<f64>, i8), String>)>, String>,
    }
    let outcomes: Vec<DispatchOutcome> = specs
        .par_iter()
        .map(|spec| {
            let model = match DynamicModel::new(&spec.case) {
                Ok(m) => m,
                Err(e) => {
                    return DispatchOutcome {
                        level: spec.level,
                        dispatch: spec.dispatch,
                        result: Err(e.to_string()),
                    }
                }
            };
            let rows = config
                .fault_buses
                .par_iter()
                .map(|&bus| {
                    let row = model
                        .simulate(bus, config.t_clear, config.horizon, config.dt)
                        .and_then(|traj| {
                            let label = stability_label(&traj);
                            let features = extract_features(&traj, spec.case.f0)?;
                            Ok((features.values.to_vec(), label))
                        })
                        .map_err(|e| e.to_string());
                    (bus, row)
                })
                .collect();
            DispatchOutcome { level: spec.level, dispatch: spec.dispatch, result: Ok(rows) }
        })
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome.result {
            Err(reason) => {
                skipped.push(SkippedScenario {
                    load_level: outcome.level,
                    dispatch: outcome.dispatch,
                    fault_bus: None,
                    reason,
                });
            }
            Ok(rows) => {
                for (bus, row) in rows {
                    match row {
                        Ok((vals, label)) => {
                            features.extend(vals);
                            labels.push(label);
                        }
                        Err(reason) => skipped.push(SkippedScenario {
                            load_level: outcome.level,
                            dispatch: outcome.dispatch,
                            fault_bus: Some(bus),
                            reason,
                        }),
                    }
                }
            }
        }
    }
    if labels.len() < 2 {
        return Err(PowersimError::AllScenariosInfeasible(skipped.len()));
    }
    let dataset = Dataset::new(features, labels, feature_names())?;
    Ok((dataset, skipped))
}
