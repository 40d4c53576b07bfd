//! Command-line entry point.
//!
//! Subcommands: `run` executes the full experiment batch, `aggregate`
//! rebuilds the report artifacts from persisted run files, `network`
//! rebuilds only the DOT network (useful with a different `--k`), and
//! `validate-config` checks a configuration without running anything.
//!
//! Exit codes: 0 success, 1 configuration or dataset error, 2 batch
//! completed but some runs failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csr::orchestrator::{
    prepare, rebuild_aggregates, rebuild_network, run_experiment, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "csr", about = "Comprehensive symbolic regression over a time-series table")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Worker count; defaults to the configured value or all cores
    #[arg(long)]
    jobs: Option<usize>,
    /// Base seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated target list override
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
    /// Runs per target override
    #[arg(long)]
    runs: Option<usize>,
    /// Network top-k override
    #[arg(long)]
    k: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig, String> {
        let mut config = ExperimentConfig::from_file(&self.config)
            .map_err(|e| format!("cannot load {}: {e}", self.config.display()))?;
        if self.jobs.is_some() {
            config.jobs = self.jobs;
        }
        if let Some(seed) = self.seed {
            config.base_seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if self.targets.is_some() {
            config.targets = self.targets.clone();
        }
        if let Some(runs) = self.runs {
            config.runs_per_target = runs;
        }
        if let Some(k) = self.k {
            config.network_k = k;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute the full experiment batch (resumes completed runs)
    Run(CommonArgs),
    /// Rebuild report artifacts from persisted run files
    Aggregate(CommonArgs),
    /// Rebuild the interaction network from persisted run files
    Network(CommonArgs),
    /// Validate a configuration and dataset without running
    ValidateConfig(CommonArgs),
}

fn fail(message: String) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match run_experiment(&config) {
                Ok((report, stats)) => {
                    eprintln!(
                        "batch complete: {} executed, {} resumed, {} failed",
                        stats.executed, stats.resumed, stats.failed
                    );
                    eprintln!("report written to {}", config.output_dir.join("report.json").display());
                    if report.failed_runs.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("{} run(s) failed; see report.json", report.failed_runs.len());
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(e.to_string()),
            }
        }
        Command::Aggregate(args) => {
            let config = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match rebuild_aggregates(&config) {
                Ok(report) => {
                    eprintln!(
                        "aggregated {} run file(s) into {}",
                        report.run_files.len(),
                        config.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.to_string()),
            }
        }
        Command::Network(args) => {
            let config = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match rebuild_network(&config) {
                Ok(network) => {
                    eprintln!(
                        "network with {} node(s), {} edge(s) written to {}",
                        network.nodes.len(),
                        network.edges.len(),
                        config.output_dir.join("network.dot").display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.to_string()),
            }
        }
        Command::ValidateConfig(args) => {
            let config = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match prepare(&config) {
                Ok(prepared) => {
                    eprintln!(
                        "config ok: {} variables, {} observations, {} target(s), {} run(s) each",
                        prepared.table.num_columns(),
                        prepared.table.len(),
                        prepared.targets.len(),
                        config.runs_per_target
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.to_string()),
            }
        }
    }
}
