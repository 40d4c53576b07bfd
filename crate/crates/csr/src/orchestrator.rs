//! Multi-run experiment driver.
//!
//! An experiment executes `runs_per_target` independent seeded GP runs for
//! every target variable, persists each run result as JSON, and condenses the
//! batch into a relevance matrix, an interaction network (DOT + edge CSV) and
//! per-target score summaries. Completed run files are detected on
//! re-invocation and skipped, so interrupted batches resume. Per-run seeds
//! are a deterministic mix of (base seed, target index, run index), making
//! results independent of worker count and scheduling order.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    load_csv, CsvOptions, DatasetError, LaggedDesignMatrix, Partition, TimeSeriesTable,
};
use crate::evolution::{run as gp_run, EvolutionError, GpConfig, RunResult};
use crate::network::{build_network, InteractionNetwork, NetworkError};
use crate::relevance::{aggregate_runs, AggregatedRelevance, RelevanceError, RelevanceVector};
use crate::stats::{five_number_summary, FiveNumberSummary};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("report inconsistent with persisted run files: {0}")]
    Inconsistent(String),
    #[error("no persisted run results found under {0}")]
    NoRunFiles(PathBuf),
}

fn default_max_lag() -> usize {
    12
}

fn default_runs_per_target() -> usize {
    30
}

fn default_network_k() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSection {
    pub path: PathBuf,
    #[serde(default)]
    pub csv: CsvOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessingSection {
    /// Variables replaced by their five-point derivative before modeling.
    #[serde(default)]
    pub derivative: Vec<String>,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
}

impl Default for PreprocessingSection {
    fn default() -> Self {
        PreprocessingSection {
            derivative: Vec::new(),
            max_lag: default_max_lag(),
        }
    }
}

/// 1-based inclusive observation bounds, converted to 0-based internally.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PartitionSection {
    pub fitness: (usize, usize),
    pub validation: (usize, usize),
    pub test: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub preprocessing: PreprocessingSection,
    pub partition: PartitionSection,
    #[serde(default)]
    pub gp: GpConfig,
    /// Target variables; all dataset variables when omitted.
    #[serde(default)]
    pub targets: Option<Vec<String>>,
    #[serde(default = "default_runs_per_target")]
    pub runs_per_target: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker count; the rayon default when omitted. Excluded from all
    /// persisted outputs so it cannot perturb batch determinism.
    #[serde(default)]
    pub jobs: Option<usize>,
    pub output_dir: PathBuf,
    #[serde(default = "default_network_k")]
    pub network_k: usize,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, OrchestratorError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// 64-bit finalizer mix (splitmix64); bijective, so distinct inputs give
/// distinct seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Per-run seed derivation; injective over (target index, run index) for a
/// fixed base seed.
pub fn derive_run_seed(base_seed: u64, target_index: usize, run_index: usize) -> u64 {
    let pair = ((target_index as u64) << 32) | (run_index as u64 & 0xffff_ffff);
    splitmix64(base_seed.wrapping_add(splitmix64(pair)))
}

/// Dataset and partition loaded and validated, ready for runs.
pub struct PreparedExperiment {
    pub table: TimeSeriesTable,
    pub matrix: LaggedDesignMatrix,
    pub partition: Partition,
    pub targets: Vec<String>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment, OrchestratorError> {
    if config.runs_per_target < 1 {
        return Err(OrchestratorError::InvalidConfig(
            "runs_per_target must be at least 1".into(),
        ));
    }
    config.gp.validate()?;
    let file = fs::File::open(&config.dataset.path)?;
    let raw = load_csv(file, &config.dataset.csv)?;
    let table = raw.with_derivative(&config.preprocessing.derivative)?;
    let matrix = LaggedDesignMatrix::from_table(&table, config.preprocessing.max_lag)?;
    let partition = Partition::from_one_based(
        config.partition.fitness,
        config.partition.validation,
        config.partition.test,
        table.len(),
    )?;
    let targets = match &config.targets {
        None => table.names().to_vec(),
        Some(list) => {
            for name in list {
                if table.column_index(name).is_none() {
                    return Err(OrchestratorError::InvalidConfig(format!(
                        "target `{name}` is not a dataset variable"
                    )));
                }
            }
            list.clone()
        }
    };
    Ok(PreparedExperiment {
        table,
        matrix,
        partition,
        targets,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedRun {
    pub target: String,
    pub run_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: String,
    pub runs_completed: usize,
    pub runs_failed: usize,
    /// Box-plot statistics of test-range R² across this target's runs.
    pub test_r2: Option<FiveNumberSummary>,
    pub mean_relevance: RelevanceVector,
}

/// Batch-level outcome. Everything here is recomputable from the persisted
/// run files; a self-consistency pass verifies that on completion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub targets: Vec<TargetReport>,
    pub network: InteractionNetwork,
    pub run_files: Vec<String>,
    pub failed_runs: Vec<FailedRun>,
}

/// Execution counters for one invocation; advisory only, never persisted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchStats {
    pub executed: usize,
    pub resumed: usize,
    pub failed: usize,
}

fn run_file_path(out: &Path, target: &str, run_index: usize) -> PathBuf {
    out.join("runs").join(target).join(format!("run_{run_index:03}.json"))
}

fn load_run_file(path: &Path) -> Option<RunResult> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Executes the full batch: `runs_per_target` seeded runs per target, with
/// persisted results reused, then aggregation into the report artifacts.
pub fn run_experiment(
    config: &ExperimentConfig,
) -> Result<(ExperimentReport, BatchStats), OrchestratorError> {
    let prepared = prepare(config)?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    for target in &prepared.targets {
        fs::create_dir_all(out.join("runs").join(target))?;
    }

    let tasks: Vec<(usize, usize)> = (0..prepared.targets.len())
        .flat_map(|t| (0..config.runs_per_target).map(move |r| (t, r)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| OrchestratorError::InvalidConfig(format!("thread pool: {e}")))?;

    enum TaskOutcome {
        Done { result: Box<RunResult>, resumed: bool },
        Failed(String),
    }

    let outcomes: Vec<TaskOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(t_idx, r_idx)| {
                let target = &prepared.targets[t_idx];
                let seed = derive_run_seed(config.base_seed, t_idx, r_idx);
                let path = run_file_path(out, target, r_idx);
                if let Some(existing) = load_run_file(&path) {
                    if existing.target == *target && existing.seed == seed {
                        return TaskOutcome::Done {
                            result: Box::new(existing),
                            resumed: true,
                        };
                    }
                }
                let gp_config = GpConfig {
                    rng_seed: seed,
                    max_lag: config.preprocessing.max_lag,
                    ..config.gp.clone()
                };
                match gp_run(&gp_config, &prepared.matrix, target, &prepared.partition) {
                    Ok(result) => {
                        let json = match serde_json::to_string_pretty(&result) {
                            Ok(j) => j,
                            Err(e) => return TaskOutcome::Failed(e.to_string()),
                        };
                        if let Err(e) = fs::write(&path, json + "\n") {
                            return TaskOutcome::Failed(e.to_string());
                        }
                        TaskOutcome::Done {
                            result: Box::new(result),
                            resumed: false,
                        }
                    }
                    Err(e) => TaskOutcome::Failed(e.to_string()),
                }
            })
            .collect()
    });

    let mut stats = BatchStats::default();
    let mut results: Vec<Vec<RunResult>> = vec![Vec::new(); prepared.targets.len()];
    let mut failed_runs: Vec<FailedRun> = Vec::new();
    let mut run_files: Vec<String> = Vec::new();
    for (&(t_idx, r_idx), outcome) in tasks.iter().zip(outcomes) {
        match outcome {
            TaskOutcome::Done { result, resumed } => {
                if resumed {
                    stats.resumed += 1;
                } else {
                    stats.executed += 1;
                }
                run_files.push(format!(
                    "runs/{}/run_{r_idx:03}.json",
                    prepared.targets[t_idx]
                ));
                results[t_idx].push(*result);
            }
            TaskOutcome::Failed(error) => {
                stats.failed += 1;
                failed_runs.push(FailedRun {
                    target: prepared.targets[t_idx].clone(),
                    run_index: r_idx,
                    error,
                });
            }
        }
    }

    let report = aggregate_results(
        config,
        &prepared.targets,
        prepared.table.names(),
        &results,
        run_files,
        failed_runs,
    )?;
    write_report_artifacts(config, prepared.table.names(), &results, &report)?;
    verify_report_consistency(out, &report)?;
    Ok((report, stats))
}

fn aggregate_results(
    config: &ExperimentConfig,
    targets: &[String],
    all_names: &[String],
    results: &[Vec<RunResult>],
    run_files: Vec<String>,
    failed_runs: Vec<FailedRun>,
) -> Result<ExperimentReport, OrchestratorError> {
    let mut target_reports = Vec::with_capacity(targets.len());
    let mut aggregates: Vec<AggregatedRelevance> = Vec::new();
    for (target, runs) in targets.iter().zip(results) {
        let failed = failed_runs.iter().filter(|f| &f.target == target).count();
        if runs.is_empty() {
            target_reports.push(TargetReport {
                target: target.clone(),
                runs_completed: 0,
                runs_failed: failed,
                test_r2: None,
                mean_relevance: RelevanceVector::default(),
            });
            continue;
        }
        let pairs: Vec<(String, RelevanceVector)> = runs
            .iter()
            .map(|r| (r.target.clone(), r.relevance.clone()))
            .collect();
        let aggregate = aggregate_runs(&pairs)?;
        let scores: Vec<f64> = runs.iter().map(|r| r.scores.test).collect();
        target_reports.push(TargetReport {
            target: target.clone(),
            runs_completed: runs.len(),
            runs_failed: failed,
            test_r2: Some(five_number_summary(&scores)),
            mean_relevance: aggregate.mean.clone(),
        });
        aggregates.push(aggregate);
    }
    let _ = all_names;
    let network = build_network(&aggregates, config.network_k)?;
    Ok(ExperimentReport {
        targets: target_reports,
        network,
        run_files,
        failed_runs,
    })
}

fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn write_report_artifacts(
    config: &ExperimentConfig,
    all_names: &[String],
    results: &[Vec<RunResult>],
    report: &ExperimentReport,
) -> Result<(), OrchestratorError> {
    let out = &config.output_dir;

    // relevance matrix: rows = targets, columns = input variables
    let mut matrix_csv = String::from("target");
    for name in all_names {
        matrix_csv.push(',');
        matrix_csv.push_str(name);
    }
    matrix_csv.push('\n');
    for tr in &report.targets {
        matrix_csv.push_str(&tr.target);
        for name in all_names {
            matrix_csv.push(',');
            matrix_csv.push_str(&format_float(tr.mean_relevance.get(name)));
        }
        matrix_csv.push('\n');
    }
    fs::write(out.join("relevance_matrix.csv"), matrix_csv)?;

    // long-format per-run relevance for dispersion analysis
    let mut long_csv = String::from("target,run,variable,relevance\n");
    for (tr, runs) in report.targets.iter().zip(results) {
        for (r_idx, run) in runs.iter().enumerate() {
            for (variable, value) in &run.relevance.entries {
                long_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    tr.target,
                    r_idx,
                    variable,
                    format_float(*value)
                ));
            }
        }
    }
    fs::write(out.join("relevance_runs.csv"), long_csv)?;

    // score summaries, the data behind a per-target box plot
    let mut scores_csv =
        String::from("target,min,lower_quartile,median,upper_quartile,max\n");
    for tr in &report.targets {
        if let Some(s) = &tr.test_r2 {
            scores_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                tr.target,
                format_float(s.min),
                format_float(s.lower_quartile),
                format_float(s.median),
                format_float(s.upper_quartile),
                format_float(s.max)
            ));
        }
    }
    fs::write(out.join("scores_summary.csv"), scores_csv)?;

    fs::write(out.join("network.dot"), report.network.to_dot(true))?;
    fs::write(out.join("network_edges.csv"), report.network.to_edge_csv())?;
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(report)? + "\n",
    )?;
    Ok(())
}

/// Recomputes the per-target summaries from the persisted run files and
/// compares them with the in-memory report.
fn verify_report_consistency(
    out: &Path,
    report: &ExperimentReport,
) -> Result<(), OrchestratorError> {
    let mut per_target: std::collections::BTreeMap<String, Vec<f64>> =
        std::collections::BTreeMap::new();
    for file in &report.run_files {
        let result = load_run_file(&out.join(file)).ok_or_else(|| {
            OrchestratorError::Inconsistent(format!("missing or unreadable run file {file}"))
        })?;
        per_target
            .entry(result.target.clone())
            .or_default()
            .push(result.scores.test);
    }
    for tr in &report.targets {
        let scores = per_target.get(tr.target.as_str());
        match (&tr.test_r2, scores) {
            (None, None) => {}
            (Some(summary), Some(scores)) => {
                let recomputed = five_number_summary(scores);
                if recomputed != *summary {
                    return Err(OrchestratorError::Inconsistent(format!(
                        "summary mismatch for target {}: report {summary:?}, from files {recomputed:?}, file scores {scores:?}",
                        tr.target
                    )));
                }
            }
            _ => {
                return Err(OrchestratorError::Inconsistent(format!(
                    "run-file coverage mismatch for target {}",
                    tr.target
                )));
            }
        }
    }
    Ok(())
}

/// Loads every persisted run result for the configured targets.
pub fn load_persisted_runs(
    config: &ExperimentConfig,
    targets: &[String],
) -> Result<(Vec<Vec<RunResult>>, Vec<String>), OrchestratorError> {
    let out = &config.output_dir;
    let mut results: Vec<Vec<RunResult>> = vec![Vec::new(); targets.len()];
    let mut run_files = Vec::new();
    let mut found_any = false;
    for (t_idx, target) in targets.iter().enumerate() {
        for r_idx in 0..config.runs_per_target {
            let path = run_file_path(out, target, r_idx);
            if let Some(result) = load_run_file(&path) {
                found_any = true;
                run_files.push(format!("runs/{target}/run_{r_idx:03}.json"));
                results[t_idx].push(result);
            }
        }
    }
    if !found_any {
        return Err(OrchestratorError::NoRunFiles(out.clone()));
    }
    Ok((results, run_files))
}

/// Rebuilds the aggregate artifacts (report, CSVs, network) from persisted
/// run files without executing any runs.
pub fn rebuild_aggregates(
    config: &ExperimentConfig,
) -> Result<ExperimentReport, OrchestratorError> {
    let prepared = prepare(config)?;
    let (results, run_files) = load_persisted_runs(config, &prepared.targets)?;
    let report = aggregate_results(
        config,
        &prepared.targets,
        prepared.table.names(),
        &results,
        run_files,
        Vec::new(),
    )?;
    write_report_artifacts(config, prepared.table.names(), &results, &report)?;
    Ok(report)
}

/// Rebuilds only the network artifacts from persisted run files, honoring
/// the configured k.
pub fn rebuild_network(
    config: &ExperimentConfig,
) -> Result<InteractionNetwork, OrchestratorError> {
    let prepared = prepare(config)?;
    let (results, _) = load_persisted_runs(config, &prepared.targets)?;
    let mut aggregates = Vec::new();
    for runs in &results {
        if runs.is_empty() {
            continue;
        }
        let pairs: Vec<(String, RelevanceVector)> = runs
            .iter()
            .map(|r| (r.target.clone(), r.relevance.clone()))
            .collect();
        aggregates.push(aggregate_runs(&pairs)?);
    }
    let network = build_network(&aggregates, config.network_k)?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("network.dot"), network.to_dot(true))?;
    fs::write(out.join("network_edges.csv"), network.to_edge_csv())?;
    Ok(network)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_derivation_is_injective_over_a_batch() {
        let mut seen = std::collections::HashSet::new();
        for t in 0..40 {
            for r in 0..40 {
                assert!(seen.insert(derive_run_seed(123, t, r)));
            }
        }
    }

    #[test]
    fn seed_derivation_depends_on_base_seed() {
        assert_ne!(derive_run_seed(1, 0, 0), derive_run_seed(2, 0, 0));
    }

    #[test]
    fn config_defaults_fill_in() {
        let json = r#"{
            "dataset": {"path": "data.csv"},
            "partition": {"fitness": [13, 200], "validation": [201, 299], "test": [300, 331]},
            "output_dir": "out"
        }"#;
        let config: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.runs_per_target, 30);
        assert_eq!(config.network_k, 3);
        assert_eq!(config.preprocessing.max_lag, 12);
        assert_eq!(config.gp.population_size, 2000);
        assert!(config.targets.is_none());
    }
}
