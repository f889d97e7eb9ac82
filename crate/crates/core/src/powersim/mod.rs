//! Classical-model multi-machine transient simulator: Newton-Raphson power
//! flow, Kron-reduced stage networks, swing-equation integration, stability
//! labeling, the 33-feature extraction, and scenario-grid dataset
//! generation.

pub mod case;
pub mod features;
pub mod network;
pub mod powerflow;
pub mod scenario;
pub mod simulate;

use thiserror::Error;

use crate::dataset::DatasetError;

pub use case::{wscc9, Branch, Bus, BusType, Generator, Load, PowerCase};
pub use features::{extract_features, feature_names, FeatureVector33, N_FEATURES};
pub use network::{build_admittance, kron_reduce, Stage, FAULT_ADMITTANCE};
pub use powerflow::{branch_admittance, solve_power_flow, PfSolution};
pub use scenario::{generate_dataset, ScenarioConfig, SkippedScenario};
pub use simulate::{
    coi_frame, initial_conditions, simulate_fault, stability_label, DynamicModel,
    InitialConditions, SwingSystem, Trajectory,
};

#[derive(Debug, Error)]
pub enum PowersimError {
    #[error("invalid case: {0}")]
    Validation(String),
    #[error("network is disconnected")]
    Disconnected,
    #[error("power flow diverged after {iterations} iterations (mismatch {mismatch:.3e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },
    #[error("eliminated block is singular in Kron reduction")]
    SingularReduction,
    #[error("bad time grid: {0}")]
    BadTimeGrid(String),
    #[error("horizon too short: features need {needed:.4} s, trajectory covers {covered:.4} s")]
    HorizonTooShort { needed: f64, covered: f64 },
    #[error("non-finite feature value")]
    NonFiniteFeature,
    #[error("every scenario infeasible ({0} skipped)")]
    AllScenariosInfeasible(usize),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("json failure: {0}")]
    Serde(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
