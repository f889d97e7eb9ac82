//! Implementations of the six subcommands, usable both from the binary and
//! from integration tests.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tsa_core::chaos::orbit;
use tsa_core::dataset::{read_csv_path, write_csv_path, Dataset};
use tsa_core::llm::LlmModel;
use tsa_core::powersim::{generate_dataset, PowerCase, ScenarioConfig};

use crate::error::CliError;
use crate::pipeline::{evaluate_confusion, tune, Confusion, ExperimentConfig, OptimizerKind};
use crate::report::{config_hash, write_manifest, RunReport};

pub struct Globals {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub config: ExperimentConfig,
}

impl Globals {
    pub fn new(seed: u64, out_dir: PathBuf, config: ExperimentConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::Config(format!("cannot create out dir: {e}")))?;
        Ok(Self { seed, out_dir, config })
    }
}

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    read_csv_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<LlmModel, CliError> {
    LlmModel::load_json(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// `simulate`: run the scenario grid of a case file into a dataset CSV plus
/// a JSON sidecar listing skipped scenarios.
pub fn cmd_simulate(
    case_path: &Path,
    scenario_path: Option<&Path>,
    out: Option<&Path>,
    globals: &Globals,
) -> Result<PathBuf, CliError> {
    let case = PowerCase::from_json_path(case_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", case_path.display())))?;
    let scenario = match scenario_path {
        Some(p) => ScenarioConfig::from_json_path(p)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => ScenarioConfig { seed: globals.seed, ..ScenarioConfig::default_for(&case) },
    };
    let started = Instant::now();
    let (dataset, skipped) = generate_dataset(&case, &scenario).map_err(|e| {
        use tsa_core::powersim::PowersimError as P;
        match e {
            P::Validation(_) | P::BadTimeGrid(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    })?;
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| globals.out_dir.join("dataset.csv"));
    write_csv_path(&dataset, &out_path).map_err(data_err)?;

    let mut skipped_path = out_path.as_os_str().to_owned();
    skipped_path.push(".skipped.json");
    let file = std::fs::File::create(&skipped_path).map_err(data_err)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &skipped).map_err(data_err)?;

    let hash = config_hash(&(&case, &scenario));
    write_manifest(&out_path, "simulate", scenario.seed, &hash)?;
    let (pos, neg) = dataset.class_counts();
    println!(
        "simulate: {} samples ({} stable, {} unstable), {} skipped -> {} [{:.1} s]",
        dataset.n_samples(),
        pos,
        neg,
        skipped.len(),
        out_path.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(out_path)
}

/// `tune`: optimize (lambda, sigma) on the training split, train the final
/// model, evaluate on the held-out split, and write report, trace and model.
pub fn cmd_tune(
    dataset_path: &Path,
    optimizer: OptimizerKind,
    globals: &Globals,
) -> Result<RunReport, CliError> {
    let data = read_dataset(dataset_path)?;
    let started = Instant::now();
    let outcome = tune(&data, optimizer, &globals.config, globals.seed)?;
    let elapsed = started.elapsed().as_secs_f64();

    let trace_path = globals.out_dir.join("trace.csv");
    let model_path = globals.out_dir.join("model.json");
    let report_path = globals.out_dir.join("report.json");
    outcome
        .trace
        .write_csv_path(&trace_path)
        .map_err(|e| CliError::Data(e.to_string()))?;
    outcome
        .model
        .save_json(&model_path)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let name = match optimizer {
        OptimizerKind::Ibcc => "ibcc",
        OptimizerKind::Bcc => "bcc",
        OptimizerKind::Random => "random",
    };
    let report = RunReport::from_outcome(
        &outcome,
        name,
        trace_path.to_string_lossy().as_ref(),
        model_path.to_string_lossy().as_ref(),
    );
    let file = std::fs::File::create(&report_path).map_err(data_err)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report).map_err(data_err)?;

    let hash = config_hash(&(&globals.config, name));
    for p in [&trace_path, &model_path, &report_path] {
        write_manifest(p, "tune", globals.seed, &hash)?;
    }
    print!("{}", report.render_text());
    println!("wall time           {elapsed:.1} s");
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_percent: f64,
    pub confusion: Confusion,
    pub samples: usize,
}

/// `eval`: accuracy and confusion counts of a saved model on a dataset.
pub fn cmd_eval(
    model_path: &Path,
    dataset_path: &Path,
    globals: &Globals,
) -> Result<EvalReport, CliError> {
    let model = read_model(model_path)?;
    let data = read_dataset(dataset_path)?;
    let model_names = model.train_snapshot.feature_names();
    if model_names != data.feature_names() {
        return Err(CliError::Data(format!(
            "feature names mismatch: model has {} features starting {:?}, dataset has {} starting {:?}",
            model_names.len(),
            model_names.first(),
            data.n_features(),
            data.feature_names().first()
        )));
    }
    let rows: Vec<usize> = (0..data.n_samples()).collect();
    let confusion = evaluate_confusion(&model, &data, &rows)?;
    let report = EvalReport {
        accuracy_percent: confusion.accuracy_percent(),
        confusion,
        samples: rows.len(),
    };
    let out_path = globals.out_dir.join("eval.json");
    let file = std::fs::File::create(&out_path).map_err(data_err)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report).map_err(data_err)?;
    write_manifest(&out_path, "eval", globals.seed, &config_hash(&report.samples))?;
    println!(
        "eval: accuracy {:.2} % on {} samples (TS {} FS {} TU {} FU {})",
        report.accuracy_percent,
        report.samples,
        report.confusion.true_stable,
        report.confusion.false_stable,
        report.confusion.true_unstable,
        report.confusion.false_unstable
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub irrelevant_count: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub train_cv_accuracy_percent: f64,
    pub test_accuracy_percent: f64,
}

/// `robustness`: re-tune with 0..n injected noise features and tabulate the
/// test accuracy per count.
pub fn cmd_robustness(
    dataset_path: &Path,
    counts: &[usize],
    optimizer: OptimizerKind,
    globals: &Globals,
) -> Result<Vec<RobustnessRow>, CliError> {
    let data = read_dataset(dataset_path)?;
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        let started = Instant::now();
        let outcome =
            crate::pipeline::robustness_row(&data, count, optimizer, &globals.config, globals.seed)?;
        println!(
            "robustness: {count} irrelevant features -> test accuracy {:.2} % (lambda {:.4}, sigma {:.4}) [{:.1} s]",
            outcome.test_accuracy,
            outcome.lambda,
            outcome.sigma,
            started.elapsed().as_secs_f64()
        );
        rows.push(RobustnessRow {
            irrelevant_count: count,
            lambda: outcome.lambda,
            sigma: outcome.sigma,
            train_cv_accuracy_percent: outcome.cv_accuracy,
            test_accuracy_percent: outcome.test_accuracy,
        });
    }
    let csv_path = globals.out_dir.join("robustness.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&csv_path).map_err(data_err)?);
    file.write_all(b"irrelevant_count,test_accuracy_percent\n").map_err(data_err)?;
    for r in &rows {
        writeln!(file, "{},{}", r.irrelevant_count, r.test_accuracy_percent).map_err(data_err)?;
    }
    file.flush().map_err(data_err)?;
    let json_path = globals.out_dir.join("robustness.json");
    let file = std::fs::File::create(&json_path).map_err(data_err)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &rows).map_err(data_err)?;
    let hash = config_hash(&(&globals.config, counts));
    write_manifest(&csv_path, "robustness", globals.seed, &hash)?;
    write_manifest(&json_path, "robustness", globals.seed, &hash)?;
    Ok(rows)
}

/// `weights`: feature weights of a saved model, descending, as CSV.
pub fn cmd_weights(
    model_path: &Path,
    out: Option<&Path>,
    globals: &Globals,
) -> Result<PathBuf, CliError> {
    let model = read_model(model_path)?;
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| globals.out_dir.join("weights.csv"));
    let mut file = std::io::BufWriter::new(std::fs::File::create(&out_path).map_err(data_err)?);
    file.write_all(b"feature,weight\n").map_err(data_err)?;
    for (name, w) in model.feature_weights() {
        writeln!(file, "{name},{w}").map_err(data_err)?;
    }
    file.flush().map_err(data_err)?;
    write_manifest(&out_path, "weights", globals.seed, &config_hash(&"weights"))?;
    println!("weights: {} features -> {}", model.weights.dim(), out_path.display());
    Ok(out_path)
}

/// `chaos-demo`: orbits of the standard and perturbed Tent maps from the
/// same seed point, as two CSVs with columns step,x1,..,xD.
pub fn cmd_chaos_demo(
    x0: &[f64],
    steps: usize,
    globals: &Globals,
) -> Result<(PathBuf, PathBuf), CliError> {
    if steps == 0 {
        return Err(CliError::Config("steps must be positive".into()));
    }
    let write_orbit = |path: &Path, seq: &[Vec<f64>]| -> Result<(), CliError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(data_err)?);
        let mut header = String::from("step");
        for d in 1..=x0.len() {
            header.push_str(&format!(",x{d}"));
        }
        header.push('\n');
        file.write_all(header.as_bytes()).map_err(data_err)?;
        for (i, p) in seq.iter().enumerate() {
            let mut line = format!("{}", i + 1);
            for v in p {
                line.push_str(&format!(",{v}"));
            }
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(data_err)?;
        }
        file.flush().map_err(data_err)?;
        Ok(())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(globals.seed);
    let standard = orbit(x0, steps, false, &mut rng)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let improved = orbit(x0, steps, true, &mut rng)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let std_path = globals.out_dir.join("chaos_standard.csv");
    let imp_path = globals.out_dir.join("chaos_improved.csv");
    write_orbit(&std_path, &standard)?;
    write_orbit(&imp_path, &improved)?;
    let hash = config_hash(&(x0, steps));
    write_manifest(&std_path, "chaos-demo", globals.seed, &hash)?;
    write_manifest(&imp_path, "chaos-demo", globals.seed, &hash)?;
    println!("chaos-demo: {steps} steps -> {} and {}", std_path.display(), imp_path.display());
    Ok((std_path, imp_path))
}
