//! Hyperparameter schema, staged sweeps, run manifests and persisted run
//! records.
//!
//! Training itself happens elsewhere: this module only writes manifests the
//! trainer consumes and evaluates whatever the manifests wire up.

mod config;
mod plan;
mod run;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{field_value, ExperimentConfig, FixedHyperparameters, Stage, TunedField};
pub use plan::{
    default_sweep, manifest_file, plan_to_manifests, run_id, AdapterJob, DatasetPaths, RunManifest, RunWiring,
    SelectionMetric, SweepPlan, SystemKind, TrainerBlock, Wiring, ORCHESTRATOR_ADAPTER, REFERENCE_ADAPTER,
};
pub use run::{
    evaluate_manifest, load_record, mark_pending, record_file, run_dir, run_experiment, run_experiment_with,
    RunOptions, RunRecord, RunStatus,
};

use crate::eval::MetricReport;
use crate::util::write_atomic;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("{}: {message}", .path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("run {run_id} already has a record; pass force to overwrite it")]
    AlreadyExists { run_id: String },
    #[error("run {} failed: {}", .record.run_id, .record.error.as_deref().unwrap_or("unknown error"))]
    RunFailed { record: Box<RunRecord> },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })
}

/// The value a stage settled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSelection {
    pub stage: usize,
    pub tuned_field: TunedField,
    pub value: String,
    /// The run that scored best; for a carried-over incumbent this is the
    /// earlier run that produced its score.
    pub run_id: Option<String>,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub selections: Vec<StageSelection>,
    pub final_config: ExperimentConfig,
}

struct Contender {
    config: ExperimentConfig,
    run_id: String,
    metric: Option<f64>,
}

/// Index of the best scored contender; earlier contenders win ties.
fn select(contenders: &[Contender]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in contenders.iter().enumerate() {
        if let Some(m) = c.metric {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Runs the plan stage by stage with [`evaluate_manifest`].
pub fn run_sweep(
    plan: &SweepPlan,
    datasets: &DatasetPaths,
    out_dir: &Path,
    opts: RunOptions,
) -> Result<SweepOutcome, ExperimentError> {
    run_sweep_with(plan, datasets, out_dir, opts, &evaluate_manifest)
}

/// Runs every stage in order. Within a stage the runs execute concurrently;
/// the best one by the plan's selection metric fixes the stage's value for
/// all later stages. When the incumbent value is not among a stage's
/// candidates it competes with its earlier score and, being first, wins
/// ties. Writes `summary.csv` and `selections.json` under `out_dir`.
pub fn run_sweep_with(
    plan: &SweepPlan,
    datasets: &DatasetPaths,
    out_dir: &Path,
    opts: RunOptions,
    evaluate: &(dyn Fn(&RunManifest) -> Result<MetricReport, String> + Sync),
) -> Result<SweepOutcome, ExperimentError> {
    plan.validate()?;
    datasets.check()?;

    let mut current = plan.baseline.clone();
    let mut incumbent: Option<Contender> = None;
    let mut records = Vec::with_capacity(plan.total_runs());
    let mut selections = Vec::with_capacity(plan.stages.len());

    for (k, stage) in plan.stages.iter().enumerate() {
        let manifests: Vec<RunManifest> = (0..stage.len())
            .map(|i| plan::build_manifest(plan, datasets, k + 1, stage.field(), stage.apply(&current, i), false))
            .collect();
        for m in &manifests {
            write_json(&manifest_file(out_dir, &m.run_id), m)?;
        }
        let results: Vec<Result<RunRecord, ExperimentError>> =
            manifests.par_iter().map(|m| run_experiment_with(m, out_dir, opts, evaluate)).collect();

        let mut contenders = Vec::new();
        if let Some(inc) = incumbent.take() {
            if stage.position_of(&inc.config).is_none() {
                contenders.push(inc);
            }
        }
        for result in results {
            let record = match result {
                Ok(r) => r,
                Err(ExperimentError::RunFailed { record }) => {
                    tracing::warn!(run_id = %record.run_id, error = ?record.error, "run failed");
                    *record
                }
                Err(e) => return Err(e),
            };
            contenders.push(Contender {
                config: record.config.clone(),
                run_id: record.run_id.clone(),
                metric: record.report.as_ref().map(|r| plan.selection_metric.of(r)),
            });
            records.push(record);
        }

        let chosen = select(&contenders);
        let winner = match chosen {
            Some(i) => contenders.swap_remove(i),
            None => Contender { config: current.clone(), run_id: String::new(), metric: None },
        };
        selections.push(StageSelection {
            stage: k + 1,
            tuned_field: stage.field(),
            value: field_value(stage.field(), &winner.config),
            run_id: chosen.map(|_| winner.run_id.clone()),
            metric: winner.metric,
        });
        current = winner.config.clone();
        incumbent = chosen.map(|_| winner);
    }

    write_summary(out_dir, &records)?;
    write_json(&out_dir.join("selections.json"), &selections)?;
    Ok(SweepOutcome { records, selections, final_config: current })
}

/// Materializes every manifest and marks each run pending. Used when the
/// runs need adapters that have not been trained yet.
pub fn pending_sweep(
    plan: &SweepPlan,
    datasets: &DatasetPaths,
    out_dir: &Path,
) -> Result<Vec<RunManifest>, ExperimentError> {
    let manifests = plan_to_manifests(plan, datasets, out_dir)?;
    for m in &manifests {
        mark_pending(m, out_dir)?;
    }
    let mut csv = String::from(SUMMARY_HEADER);
    for m in &manifests {
        let _ = writeln!(csv, "{},{},{},{},pending,,,,", m.run_id, m.stage, m.tuned_field, m.tuned_value);
    }
    write_atomic(&out_dir.join("summary.csv"), csv.as_bytes())
        .map_err(|source| ExperimentError::Io { path: out_dir.join("summary.csv"), source })?;
    Ok(manifests)
}

const SUMMARY_HEADER: &str = "run_id,stage,tuned_field,tuned_value,status,rouge_l,exact_match,meteor,wall_time\n";

fn write_summary(out_dir: &Path, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let mut csv = String::from(SUMMARY_HEADER);
    for r in records {
        let status = serde_json::to_value(r.status).expect("status serializes");
        let status = status.as_str().unwrap_or_default();
        let scores = match &r.report {
            Some(m) => format!("{:.6},{:.6},{:.6}", m.rouge_l.f1, m.exact_match, m.meteor),
            None => ",,".into(),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{status},{scores},{:.3}",
            r.run_id,
            r.stage,
            r.tuned_field,
            r.tuned_value,
            r.wall_time.as_secs_f64()
        );
    }
    let path = out_dir.join("summary.csv");
    write_atomic(&path, csv.as_bytes()).map_err(|source| ExperimentError::Io { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_has_thirteen_runs() {
        let plan = default_sweep();
        assert_eq!(plan.total_runs(), 13);
        assert_eq!(plan.stages.iter().map(Stage::len).collect::<Vec<_>>(), [3, 3, 3, 4]);
        let stage1: Vec<_> = (0..3).map(|i| plan.stages[0].apply(&plan.baseline, i)).collect();
        assert_eq!(stage1.iter().map(|c| c.learning_rate).collect::<Vec<_>>(), [1e-5, 1e-4, 1e-3]);
        assert!(stage1.iter().all(|c| (c.lora_rank, c.gradient_accumulation, c.lora_alpha) == (4, 2, 8)));
    }

    #[test]
    fn baseline_override_carries_into_stage_one() {
        let mut plan = default_sweep();
        plan.baseline.lora_rank = 8;
        assert!((0..3).all(|i| plan.stages[0].apply(&plan.baseline, i).lora_rank == 8));
    }

    #[test]
    fn earlier_contender_wins_ties() {
        let c = |m: Option<f64>| Contender { config: ExperimentConfig::default(), run_id: String::new(), metric: m };
        assert_eq!(select(&[c(Some(0.5)), c(Some(0.5)), c(Some(0.2))]), Some(0));
        assert_eq!(select(&[c(None), c(Some(0.1)), c(Some(0.3))]), Some(2));
        assert_eq!(select(&[c(None)]), None);
    }

    #[test]
    fn plan_round_trips_through_json() {
        let plan = default_sweep();
        let text = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<SweepPlan>(&text).unwrap(), plan);
    }
}
