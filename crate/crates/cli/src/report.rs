//! Report structures, human-readable tables, and the replay manifests that
//! accompany every output file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::pipeline::{Confusion, TuneOutcome};

/// Machine-readable summary of a tuning run. Deliberately excludes wall
/// clock timings so reruns are byte-identical; timings go to stdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub optimizer: String,
    pub lambda: f64,
    pub sigma: f64,
    pub train_cv_accuracy_percent: f64,
    pub test_accuracy_percent: f64,
    pub confusion: Confusion,
    pub feature_weights: Vec<(String, f64)>,
    pub generations_run: usize,
    pub fitness_evaluations: usize,
    pub fitness_cache_hits: usize,
    pub trace_file: String,
    pub model_file: String,
}

impl RunReport {
    pub fn from_outcome(outcome: &TuneOutcome, optimizer: &str, trace_file: &str, model_file: &str) -> Self {
        Self {
            optimizer: optimizer.to_string(),
            lambda: outcome.lambda,
            sigma: outcome.sigma,
            train_cv_accuracy_percent: outcome.cv_accuracy,
            test_accuracy_percent: outcome.test_accuracy,
            confusion: outcome.confusion,
            feature_weights: outcome.model.feature_weights(),
            generations_run: outcome.trace.generations.len(),
            fitness_evaluations: outcome.evaluations,
            fitness_cache_hits: outcome.cache_hits,
            trace_file: trace_file.to_string(),
            model_file: model_file.to_string(),
        }
    }

    /// Aligned text table for the terminal.
    pub fn render_text(&self) -> String {
        let c = &self.confusion;
        let mut s = String::new();
        s.push_str(&format!("optimizer           {}\n", self.optimizer));
        s.push_str(&format!("lambda              {:.6}\n", self.lambda));
        s.push_str(&format!("sigma               {:.6}\n", self.sigma));
        s.push_str(&format!("train CV accuracy   {:.2} %\n", self.train_cv_accuracy_percent));
        s.push_str(&format!("test accuracy       {:.2} %\n", self.test_accuracy_percent));
        s.push_str("confusion (rows = actual, cols = predicted)\n");
        s.push_str("                    stable   unstable\n");
        s.push_str(&format!("  stable          {:8} {:8}\n", c.true_stable, c.false_unstable));
        s.push_str(&format!("  unstable        {:8} {:8}\n", c.false_stable, c.true_unstable));
        s.push_str(&format!(
            "search              {} generations, {} evaluations ({} cache hits)\n",
            self.generations_run, self.fitness_evaluations, self.fitness_cache_hits
        ));
        s
    }
}

/// Replay manifest written next to every primary output file. Contains no
/// timestamps, so it is itself byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub tool: String,
    pub tool_version: String,
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

/// Write `<path>.manifest.json` beside an output file.
pub fn write_manifest<P: AsRef<Path>>(
    path: P,
    command: &str,
    seed: u64,
    config_hash: &str,
) -> Result<(), CliError> {
    let manifest = Manifest {
        command: command.to_string(),
        seed,
        config_hash: config_hash.to_string(),
        tool: "tsa".to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mut manifest_path = path.as_ref().as_os_str().to_owned();
    manifest_path.push(".manifest.json");
    let file = std::fs::File::create(&manifest_path)
        .map_err(|e| CliError::Config(format!("cannot write manifest: {e}")))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)
        .map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
    Ok(())
}
