//! `riskshap`: simulate, attribute, summarize and evaluate from the shell.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 no event, 4 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use riskshap::config::{EvalMode, Method};
use riskshap::scenario::ScenarioKind;

pub const SCORER_URL_VAR: &str = "RISKSHAP_SCORER_URL";
pub const DECISION_URL_VAR: &str = "RISKSHAP_DECISION_URL";

#[derive(Parser)]
#[command(name = "riskshap", version, about = "Shapley attribution of extreme events in multi-agent simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML run config; built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads. Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario until its risk crosses the threshold.
    Simulate(SimulateArgs),
    /// Score every action of a trajectory.
    Attribute(AttributeArgs),
    /// Aggregate an attribution into time, agent and behavior metrics.
    Metrics(MetricsArgs),
    /// Deletion faithfulness or Monte Carlo accuracy experiments.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub scenario: Option<ScenarioKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Derive the threshold from calm runs and print it. Simulates with it
    /// only when --out is given.
    #[arg(long)]
    pub calibrate_rho: bool,
}

#[derive(Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trajectory file written by `simulate`.
    #[arg(long, short = 't')]
    pub trajectory: PathBuf,
    #[arg(long)]
    pub method: Option<Method>,
    /// Monte Carlo permutations M.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse and extend a cache of coalition values.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Store the wall time in the output (makes reruns differ).
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, short = 't')]
    pub trajectory: PathBuf,
    #[arg(long, short = 'a')]
    pub attribution: PathBuf,
    /// Latency quantile.
    #[arg(long)]
    pub q: Option<f64>,
    /// Output directory for the report and plot CSVs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub mode: Option<EvalMode>,
    #[arg(long)]
    pub scenario: Option<ScenarioKind>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated deletion sizes.
    #[arg(long, value_delimiter = ',')]
    pub topk: Option<Vec<usize>>,
    /// Shapley permutations for faithfulness, or the M grid for mc-accuracy.
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    /// Rank deletions by |score| instead of score.
    #[arg(long)]
    pub absolute: bool,
    /// Report CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Attribute(a) => commands::attribute(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
