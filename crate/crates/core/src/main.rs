use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taugraph::pipeline::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "taugraph", version, about = "Spatial pathology graph pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML config with one section per module.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all commands of a run.
    #[arg(long, global = true, value_name = "DIR", default_value = "taugraph-out")]
    out: PathBuf,
    /// Config override, e.g. `--set gnn.arch=sage`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic labeled cohort.
    GenData,
    /// Build patient and layer graphs for every slide and object type.
    BuildGraph {
        /// Slide directory (`*.csv` + `*.meta`); defaults to the run's cohort.
        #[arg(long, value_name = "DIR")]
        input: Option<PathBuf>,
    },
    /// Graph summary metrics and node centralities.
    Metrics,
    /// Connected components and Markov clustering.
    Cluster,
    /// Random forest with grouped cross-validation and feature elimination.
    TrainRf,
    /// Shapley attributions for the trained forest.
    Shap,
    /// Grouped k-fold GNN training.
    TrainGnn,
    /// Node embeddings, k-means clusters and PCA projection.
    Embed,
    /// Edge-mask explanations from both explainers.
    Explain,
    /// Correlation matrix and figures from earlier outputs.
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (cmd, input) = match cli.command {
        Cmd::GenData => (Command::GenData, None),
        Cmd::BuildGraph { input } => (Command::BuildGraph, input),
        Cmd::Metrics => (Command::Metrics, None),
        Cmd::Cluster => (Command::Cluster, None),
        Cmd::TrainRf => (Command::TrainRf, None),
        Cmd::Shap => (Command::Shap, None),
        Cmd::TrainGnn => (Command::TrainGnn, None),
        Cmd::Embed => (Command::Embed, None),
        Cmd::Explain => (Command::Explain, None),
        Cmd::Report => (Command::Report, None),
    };
    let opts = RunOptions { config: cli.config, seed: cli.seed, out: cli.out, overrides: cli.set, input };
    match run(cmd, &opts) {
        Ok(m) => {
            eprintln!("{}: {} output files in {}", m.command, m.outputs.len(), opts.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
