//! End-to-end orchestrator tests: artifact layout, resume behavior, failure
//! isolation and rebuilds from persisted run files.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use csr::evolution::{GpConfig, RunResult};
use csr::orchestrator::{
    derive_run_seed, rebuild_aggregates, rebuild_network, run_experiment, DatasetSection,
    ExperimentConfig, PartitionSection, PreprocessingSection,
};

fn write_dataset(dir: &Path) -> PathBuf {
    let path = dir.join("series.csv");
    fs::write(&path, common::coupled_series_csv(11, 4, 80)).unwrap();
    path
}

fn small_config(data_path: PathBuf, out: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSection {
            path: data_path,
            csv: Default::default(),
        },
        preprocessing: PreprocessingSection {
            derivative: Vec::new(),
            max_lag: 1,
        },
        partition: PartitionSection {
            fitness: (2, 50),
            validation: (51, 65),
            test: (66, 80),
        },
        gp: GpConfig {
            population_size: 40,
            max_generations: 6,
            ..GpConfig::default()
        },
        targets: Some(vec!["s0".into(), "s1".into(), "s2".into()]),
        runs_per_target: 2,
        base_seed: 77,
        jobs: Some(2),
        output_dir: out,
        network_k: 3,
    }
}

#[test]
fn batch_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(write_dataset(dir.path()), dir.path().join("out"));
    let (report, stats) = run_experiment(&config).unwrap();

    assert_eq!(stats.executed, 6);
    assert_eq!(stats.resumed, 0);
    assert_eq!(stats.failed, 0);
    assert_eq!(report.run_files.len(), 6);
    assert!(report.failed_runs.is_empty());

    for file in [
        "report.json",
        "relevance_matrix.csv",
        "relevance_runs.csv",
        "scores_summary.csv",
        "network.dot",
        "network_edges.csv",
    ] {
        assert!(config.output_dir.join(file).exists(), "{file} missing");
    }

    // every run file round-trips and carries the derived per-run seed
    for (t_idx, target) in ["s0", "s1", "s2"].iter().enumerate() {
        for r_idx in 0..2 {
            let path = config
                .output_dir
                .join("runs")
                .join(target)
                .join(format!("run_{r_idx:03}.json"));
            let text = fs::read_to_string(&path).unwrap();
            let result: RunResult = serde_json::from_str(&text).unwrap();
            assert_eq!(result.target, *target);
            assert_eq!(result.seed, derive_run_seed(config.base_seed, t_idx, r_idx));
        }
    }

    // the relevance matrix covers all four variables for each target row
    let matrix = fs::read_to_string(config.output_dir.join("relevance_matrix.csv")).unwrap();
    let mut lines = matrix.lines();
    assert_eq!(lines.next(), Some("target,s0,s1,s2,s3"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn rerun_resumes_every_completed_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(write_dataset(dir.path()), dir.path().join("out"));
    run_experiment(&config).unwrap();
    let first_report = fs::read(config.output_dir.join("report.json")).unwrap();

    let (_, stats) = run_experiment(&config).unwrap();
    assert_eq!(stats.executed, 0);
    assert_eq!(stats.resumed, 6);
    let second_report = fs::read(config.output_dir.join("report.json")).unwrap();
    assert_eq!(first_report, second_report);
}

#[test]
fn partial_delete_reexecutes_only_missing_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(write_dataset(dir.path()), dir.path().join("out"));
    run_experiment(&config).unwrap();
    let first_report = fs::read(config.output_dir.join("report.json")).unwrap();

    fs::remove_file(config.output_dir.join("runs/s0/run_001.json")).unwrap();
    fs::remove_file(config.output_dir.join("runs/s2/run_000.json")).unwrap();

    let (_, stats) = run_experiment(&config).unwrap();
    assert_eq!(stats.executed, 2);
    assert_eq!(stats.resumed, 4);
    let second_report = fs::read(config.output_dir.join("report.json")).unwrap();
    assert_eq!(first_report, second_report);
}

#[test]
fn stale_run_file_with_wrong_seed_is_reexecuted() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(write_dataset(dir.path()), dir.path().join("out"));
    run_experiment(&config).unwrap();

    let path = config.output_dir.join("runs/s1/run_000.json");
    let mut result: RunResult =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    result.seed ^= 1;
    fs::write(&path, serde_json::to_string_pretty(&result).unwrap()).unwrap();

    let (_, stats) = run_experiment(&config).unwrap();
    assert_eq!(stats.executed, 1);
    assert_eq!(stats.resumed, 5);
}

#[test]
fn failing_target_does_not_abort_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    // four live series plus a constant column, which cannot be modeled
    let mut csv = String::from("a,b,c,k\n");
    for line in common::coupled_series_csv(12, 3, 80).lines().skip(1) {
        csv.push_str(line);
        csv.push_str(",1.0\n");
    }
    let data_path = dir.path().join("series.csv");
    fs::write(&data_path, csv).unwrap();

    let mut config = small_config(data_path, dir.path().join("out"));
    config.targets = Some(vec!["a".into(), "k".into(), "b".into()]);
    let (report, stats) = run_experiment(&config).unwrap();

    assert_eq!(stats.failed, 2);
    assert_eq!(stats.executed, 4);
    assert_eq!(report.failed_runs.len(), 2);
    assert!(report.failed_runs.iter().all(|f| f.target == "k"));
    assert!(report.failed_runs.iter().all(|f| f.error.contains("constant")));

    let k_report = report.targets.iter().find(|t| t.target == "k").unwrap();
    assert_eq!(k_report.runs_completed, 0);
    assert_eq!(k_report.runs_failed, 2);
    assert!(k_report.test_r2.is_none());
    for name in ["a", "b"] {
        let tr = report.targets.iter().find(|t| t.target == name).unwrap();
        assert_eq!(tr.runs_completed, 2);
        assert!(tr.test_r2.is_some());
    }
    // the constant variable earns no incoming edges
    assert!(report.network.edges.iter().all(|e| e.target != "k"));
}

#[test]
fn aggregate_rebuild_matches_the_original_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(write_dataset(dir.path()), dir.path().join("out"));
    let (original, _) = run_experiment(&config).unwrap();

    let rebuilt = rebuild_aggregates(&config).unwrap();
    assert_eq!(
        serde_json::to_string(&rebuilt.targets).unwrap(),
        serde_json::to_string(&original.targets).unwrap()
    );
    assert_eq!(rebuilt.network, original.network);
    assert_eq!(rebuilt.run_files, original.run_files);
}

#[test]
fn network_rebuild_honors_a_smaller_k() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(write_dataset(dir.path()), dir.path().join("out"));
    run_experiment(&config).unwrap();

    config.network_k = 1;
    let network = rebuild_network(&config).unwrap();
    assert_eq!(network.k, 1);
    for target in ["s0", "s1", "s2"] {
        let incoming = network.edges.iter().filter(|e| e.target == target).count();
        assert!(incoming <= 1, "{target} has {incoming} incoming edges");
    }
    let dot = fs::read_to_string(config.output_dir.join("network.dot")).unwrap();
    let parsed = common::parse_dot(&dot).unwrap();
    assert_eq!(parsed.edges.len(), network.edges.len());
}

#[test]
fn emitted_dot_round_trips_through_a_minimal_parser() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(write_dataset(dir.path()), dir.path().join("out"));
    let (report, _) = run_experiment(&config).unwrap();

    let dot = fs::read_to_string(config.output_dir.join("network.dot")).unwrap();
    let parsed = common::parse_dot(&dot).unwrap();
    assert_eq!(parsed.nodes, report.network.nodes);
    let parsed_pairs: Vec<(String, String)> = parsed
        .edges
        .iter()
        .map(|(s, t, _)| (s.clone(), t.clone()))
        .collect();
    let report_pairs: Vec<(String, String)> = report
        .network
        .edges
        .iter()
        .map(|e| (e.source.clone(), e.target.clone()))
        .collect();
    assert_eq!(parsed_pairs, report_pairs);
    for ((_, _, label), edge) in parsed.edges.iter().zip(&report.network.edges) {
        assert_eq!(label.as_deref(), Some(format!("{:.3}", edge.weight).as_str()));
    }

    // the unlabeled variant parses too and keeps the same edge set
    let bare = common::parse_dot(&report.network.to_dot(false)).unwrap();
    assert!(bare.edges.iter().all(|(_, _, label)| label.is_none()));
    assert_eq!(bare.edges.len(), report.network.edges.len());
}

#[test]
fn config_files_round_trip_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(write_dataset(dir.path()), dir.path().join("out"));
    let path = dir.path().join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let loaded = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(loaded.gp, config.gp);
    assert_eq!(loaded.targets, config.targets);
    assert_eq!(loaded.runs_per_target, config.runs_per_target);
    assert_eq!(loaded.output_dir, config.output_dir);

    // a minimal config picks up documented defaults
    let minimal = serde_json::json!({
        "dataset": {"path": dir.path().join("series.csv")},
        "partition": {"fitness": [2, 50], "validation": [51, 65], "test": [66, 80]},
        "output_dir": dir.path().join("out2"),
    });
    fs::write(&path, minimal.to_string()).unwrap();
    let loaded = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(loaded.runs_per_target, 30);
    assert_eq!(loaded.network_k, 3);
    assert_eq!(loaded.preprocessing.max_lag, 12);
    assert!(loaded.jobs.is_none());
}
