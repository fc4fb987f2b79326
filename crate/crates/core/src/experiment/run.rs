use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TunedField};
use super::plan::{manifest_file, RunManifest, RunWiring, SystemKind};
use super::{write_json, ExperimentError, SCHEMA_VERSION};
use crate::dataset::{load_dataset, Split};
use crate::eval::{evaluate_run, EvalOptions, EvalTarget, MetricReport};
use crate::graph::{BackendFactory, Graph, StandardBackends};
use crate::util::duration_secs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
    /// Waiting for the trainer to produce adapters.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub stage: usize,
    pub tuned_field: TunedField,
    pub tuned_value: String,
    pub system: SystemKind,
    pub config: ExperimentConfig,
    pub status: RunStatus,
    pub evaluation_split: Split,
    pub report: Option<MetricReport>,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
    pub error: Option<String>,
    /// Relative to the sweep output directory.
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Overwrite an existing record for the same run id.
    pub force: bool,
    /// Record a zero wall time so records are byte-stable.
    pub reproducible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StatusFile<'a> {
    run_id: &'a str,
    status: RunStatus,
}

/// `<out_dir>/runs/<run_id>/`
pub fn run_dir(out_dir: &Path, run_id: &str) -> PathBuf {
    out_dir.join("runs").join(run_id)
}

pub fn record_file(out_dir: &Path, run_id: &str) -> PathBuf {
    run_dir(out_dir, run_id).join("record.json")
}

pub fn load_record(path: &Path) -> Result<RunRecord, ExperimentError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| ExperimentError::Manifest { path: path.to_path_buf(), message: e.to_string() })
}

fn write_status(out_dir: &Path, run_id: &str, status: RunStatus) -> Result<(), ExperimentError> {
    write_json(&run_dir(out_dir, run_id).join("status.json"), &StatusFile { run_id, status })
}

/// Records that `manifest` waits on the trainer.
pub fn mark_pending(manifest: &RunManifest, out_dir: &Path) -> Result<(), ExperimentError> {
    write_status(out_dir, &manifest.run_id, RunStatus::Pending)
}

/// Builds the run's system from its manifest and scores it on the
/// manifest's evaluation split.
pub fn evaluate_manifest(manifest: &RunManifest) -> Result<MetricReport, String> {
    let split = manifest.evaluation_split;
    let data = load_dataset(manifest.datasets.for_split(split)).map_err(|e| e.to_string())?;
    let opts = EvalOptions { expected_split: Some(split), ..EvalOptions::default() };
    let factory = StandardBackends::default();
    match &manifest.wiring {
        RunWiring::Graph { spec } => {
            let graph = Graph::build(spec.clone(), &factory).map_err(|e| e.to_string())?;
            evaluate_run(EvalTarget::Graph(&graph), &data, &opts).map_err(|e| e.to_string())
        }
        RunWiring::Single { backend } => {
            let backend = factory.build(backend)?;
            evaluate_run(EvalTarget::Backend(backend.as_ref()), &data, &opts).map_err(|e| e.to_string())
        }
    }
}

/// Runs `manifest` with [`evaluate_manifest`] and persists the record.
pub fn run_experiment(manifest: &RunManifest, out_dir: &Path, opts: RunOptions) -> Result<RunRecord, ExperimentError> {
    run_experiment_with(manifest, out_dir, opts, &evaluate_manifest)
}

/// Runs `manifest` with a caller-supplied evaluator and writes
/// `runs/<run_id>/record.json` and `status.json`. A failed evaluation is
/// persisted as a failed record and returned as [`ExperimentError::RunFailed`].
pub fn run_experiment_with(
    manifest: &RunManifest,
    out_dir: &Path,
    opts: RunOptions,
    evaluate: &(dyn Fn(&RunManifest) -> Result<MetricReport, String> + Sync),
) -> Result<RunRecord, ExperimentError> {
    let record_path = record_file(out_dir, &manifest.run_id);
    if record_path.exists() && !opts.force {
        return Err(ExperimentError::AlreadyExists { run_id: manifest.run_id.clone() });
    }
    let manifest_path = manifest_file(out_dir, &manifest.run_id);
    if !manifest_path.exists() {
        write_json(&manifest_path, manifest)?;
    }

    let started = Instant::now();
    let outcome = evaluate(manifest);
    let wall_time = if opts.reproducible { Duration::ZERO } else { started.elapsed() };

    let (status, report, error) = match outcome {
        Ok(r) => (RunStatus::Completed, Some(r), None),
        Err(e) => (RunStatus::Failed, None, Some(e)),
    };
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        run_id: manifest.run_id.clone(),
        stage: manifest.stage,
        tuned_field: manifest.tuned_field,
        tuned_value: manifest.tuned_value.clone(),
        system: manifest.system,
        config: manifest.config.clone(),
        status,
        evaluation_split: manifest.evaluation_split,
        report,
        wall_time,
        error,
        artifacts: vec![
            PathBuf::from("manifests").join(format!("{}.json", manifest.run_id)),
            PathBuf::from("runs").join(&manifest.run_id).join("record.json"),
        ],
    };
    write_json(&record_path, &record)?;
    write_status(out_dir, &manifest.run_id, status)?;
    match status {
        RunStatus::Failed => Err(ExperimentError::RunFailed { record: Box::new(record) }),
        _ => Ok(record),
    }
}
