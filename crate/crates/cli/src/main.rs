use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tsa_cli::commands::{
    cmd_chaos_demo, cmd_eval, cmd_robustness, cmd_simulate, cmd_tune, cmd_weights, Globals,
};
use tsa_cli::error::CliError;
use tsa_cli::pipeline::{ExperimentConfig, OptimizerKind};

/// Transient stability assessment toolkit: swing-equation dataset
/// generation, margin-based classifier training tuned by a bacterial colony
/// chemotaxis optimizer with chaotic escape, evaluation and robustness
/// studies.
#[derive(Parser)]
#[command(name = "tsa", version, about)]
struct Cli {
    /// Master seed; every command is deterministic given seed and config.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for parallel sections (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// JSON file overriding experiment knobs (split fraction, optimizer
    /// budget, search box, noise counts).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario grid of a case file into a dataset CSV.
    Simulate {
        /// Power system case JSON.
        #[arg(long)]
        case: PathBuf,
        /// Scenario grid JSON (default: the built-in grid for the case).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output CSV path (default: <out-dir>/dataset.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize (lambda, sigma) by cross-validation and train a final model.
    Tune {
        /// Dataset CSV with a trailing `label` column.
        #[arg(long)]
        dataset: PathBuf,
        /// ibcc | bcc | random
        #[arg(long, default_value = "ibcc")]
        optimizer: String,
    },
    /// Evaluate a saved model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Re-tune with injected irrelevant features and tabulate accuracy.
    Robustness {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated counts (default from config: 0,50,100,150,200).
        #[arg(long)]
        counts: Option<String>,
        /// ibcc | bcc | random
        #[arg(long, default_value = "ibcc")]
        optimizer: String,
    },
    /// Dump the sorted feature weights of a saved model.
    Weights {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write standard and improved Tent map orbits as CSV.
    ChaosDemo {
        /// Comma-separated start point in [0,1]^D (default 0.5346,0.5347).
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
    },
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| CliError::Config(format!("cannot parse `{t}` in {what}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        None => ExperimentConfig::default(),
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_reader(std::io::BufReader::new(file))
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
    };
    config.validate()?;
    let globals = Globals::new(cli.seed, cli.out_dir.clone(), config)?;
    match cli.command {
        Command::Simulate { case, scenario, out } => {
            cmd_simulate(&case, scenario.as_deref(), out.as_deref(), &globals)?;
        }
        Command::Tune { dataset, optimizer } => {
            cmd_tune(&dataset, optimizer.parse::<OptimizerKind>()?, &globals)?;
        }
        Command::Eval { model, dataset } => {
            cmd_eval(&model, &dataset, &globals)?;
        }
        Command::Robustness { dataset, counts, optimizer } => {
            let counts = match counts {
                Some(s) => parse_list::<usize>(&s, "--counts")?,
                None => globals.config.irrelevant_counts.clone(),
            };
            cmd_robustness(&dataset, &counts, optimizer.parse::<OptimizerKind>()?, &globals)?;
        }
        Command::Weights { model, out } => {
            cmd_weights(&model, out.as_deref(), &globals)?;
        }
        Command::ChaosDemo { x0, steps } => {
            let x0 = match x0 {
                Some(s) => parse_list::<f64>(&s, "--x0")?,
                None => vec![0.5346, 0.5347],
            };
            cmd_chaos_demo(&x0, steps, &globals)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tsa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
