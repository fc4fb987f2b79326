use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{field_slug, field_value, ExperimentConfig, Stage, TunedField};
use super::{write_json, ExperimentError, SCHEMA_VERSION};
use crate::dataset::{manifest_path, DatasetManifest, Split};
use crate::eval::MetricReport;
use crate::graph::{BackendRef, ExpertSpec, GraphSpec, Resolution};
use crate::util::sha256_hex;

/// Model name under which the trainer serves the orchestrator adapter.
pub const ORCHESTRATOR_ADAPTER: &str = "orchestrator";
/// Model name of the single-model reference adapter.
pub const REFERENCE_ADAPTER: &str = "reference";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    RougeLF1,
    #[default]
    ExactMatch,
    Meteor,
}

impl SelectionMetric {
    pub fn of(self, report: &MetricReport) -> f64 {
        match self {
            SelectionMetric::RougeLF1 => report.rouge_l.f1,
            SelectionMetric::ExactMatch => report.exact_match,
            SelectionMetric::Meteor => report.meteor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// Orchestrator plus one expert per chunk.
    #[default]
    Slg,
    /// One model trained on every expert's pairs.
    SingleModelReference,
}

/// How a run's models are provided.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Wiring {
    /// Memorization experts and a lexical router; nothing to train.
    #[default]
    Deterministic,
    /// Adapters trained from the manifests and served over the chat-completion
    /// protocol at `endpoint_url`.
    Remote { endpoint_url: String, base_model: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub stages: Vec<Stage>,
    pub baseline: ExperimentConfig,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    #[serde(default)]
    pub system: SystemKind,
    #[serde(default)]
    pub wiring: Wiring,
}

/// The four-stage sequence of learning rate, LoRA rank, gradient
/// accumulation and LoRA alpha: 13 runs from a (1e-5, 4, 2, 8) baseline.
pub fn default_sweep() -> SweepPlan {
    SweepPlan {
        stages: vec![
            Stage::LearningRate(vec![1e-5, 1e-4, 1e-3]),
            Stage::LoraRank(vec![8, 16, 32]),
            Stage::GradientAccumulation(vec![2, 4, 8]),
            Stage::LoraAlpha(vec![8, 16, 32, 64]),
        ],
        baseline: ExperimentConfig::default(),
        selection_metric: SelectionMetric::default(),
        system: SystemKind::default(),
        wiring: Wiring::default(),
    }
}

impl SweepPlan {
    pub fn total_runs(&self) -> usize {
        self.stages.iter().map(Stage::len).sum()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.baseline.validate().map_err(ExperimentError::Invalid)?;
        if self.stages.is_empty() || self.stages.iter().any(Stage::is_empty) {
            return Err(ExperimentError::Invalid("every sweep stage needs at least one candidate".into()));
        }
        for stage in &self.stages {
            for i in 0..stage.len() {
                stage.apply(&self.baseline, i).validate().map_err(ExperimentError::Invalid)?;
            }
        }
        Ok(())
    }
}

/// Dataset files produced by the dataset command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    /// Expert name to that expert's JSONL file.
    pub experts: BTreeMap<String, PathBuf>,
    pub orchestrator: PathBuf,
    /// All expert pairs pooled, for the single-model reference.
    pub train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
}

impl DatasetPaths {
    /// Reads the layout `experts/*.jsonl`, `orchestrator.jsonl`,
    /// `train.jsonl`, `validation.jsonl` and `test.jsonl` under `dir`. Expert
    /// names come from each file's manifest sidecar.
    pub fn discover(dir: &Path) -> Result<Self, ExperimentError> {
        let experts_dir = dir.join("experts");
        let entries = fs::read_dir(&experts_dir)
            .map_err(|e| ExperimentError::Manifest { path: experts_dir.clone(), message: e.to_string() })?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut experts = BTreeMap::new();
        for file in files {
            let mpath = manifest_path(&file);
            let text = fs::read_to_string(&mpath)
                .map_err(|e| ExperimentError::Manifest { path: mpath.clone(), message: e.to_string() })?;
            let m: DatasetManifest = serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Manifest { path: mpath.clone(), message: e.to_string() })?;
            experts.insert(m.name, file);
        }
        if experts.is_empty() {
            return Err(ExperimentError::Manifest { path: experts_dir, message: "no expert datasets".into() });
        }
        Ok(Self {
            experts,
            orchestrator: dir.join("orchestrator.jsonl"),
            train: dir.join("train.jsonl"),
            validation: dir.join("validation.jsonl"),
            test: dir.join("test.jsonl"),
        })
    }

    pub fn for_split(&self, split: Split) -> &Path {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Fails with the first referenced file that does not exist.
    pub fn check(&self) -> Result<(), ExperimentError> {
        let all = self.experts.values().chain([&self.orchestrator, &self.train, &self.validation, &self.test]);
        for p in all {
            if !p.is_file() {
                return Err(ExperimentError::Manifest { path: p.clone(), message: "dataset file not found".into() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunWiring {
    Graph { spec: GraphSpec },
    Single { backend: BackendRef },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterJob {
    /// Served model name: an expert name or one of the reserved names.
    pub name: String,
    pub dataset: PathBuf,
}

/// What the external trainer needs to produce a run's adapters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerBlock {
    /// False when the run's backends need no training.
    pub required: bool,
    pub base_model: Option<String>,
    /// Relative to the sweep output directory.
    pub output_dir: String,
    pub adapters: Vec<AdapterJob>,
    pub training_args: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub run_id: String,
    /// 1-based stage index.
    pub stage: usize,
    pub tuned_field: TunedField,
    pub tuned_value: String,
    /// Built from the baseline before earlier stages were decided.
    pub provisional: bool,
    pub system: SystemKind,
    pub config: ExperimentConfig,
    pub selection_metric: SelectionMetric,
    pub evaluation_split: Split,
    pub datasets: DatasetPaths,
    pub wiring: RunWiring,
    pub trainer: TrainerBlock,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text =
            fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Manifest { path: path.to_path_buf(), message: e.to_string() })
    }
}

pub fn run_id(stage: usize, field: TunedField, system: SystemKind, config: &ExperimentConfig) -> String {
    let key = serde_json::to_string(&(system, config)).expect("config serializes");
    format!("s{stage}-{}-{}", field_slug(field, config), &sha256_hex(key.as_bytes())[..8])
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub(crate) fn build_manifest(
    plan: &SweepPlan,
    datasets: &DatasetPaths,
    stage: usize,
    field: TunedField,
    config: ExperimentConfig,
    provisional: bool,
) -> RunManifest {
    let id = run_id(stage, field, plan.system, &config);
    let dataset_ref = |kind: &str, path: &Path| {
        BackendRef::new(kind, serde_json::json!({ "dataset": path_str(path), "split": "train" }))
    };
    let remote = |endpoint: &str, model: &str| BackendRef::remote(endpoint, model);

    let wiring = match (&plan.wiring, plan.system) {
        (Wiring::Deterministic, SystemKind::Slg) => RunWiring::Graph {
            spec: GraphSpec {
                orchestrator: dataset_ref("lexical_router", &datasets.orchestrator),
                experts: datasets
                    .experts
                    .iter()
                    .map(|(name, path)| ExpertSpec { name: name.clone(), backend: dataset_ref("memorization", path) })
                    .collect(),
                resolution: Resolution::default(),
            },
        },
        (Wiring::Deterministic, SystemKind::SingleModelReference) => {
            RunWiring::Single { backend: dataset_ref("memorization", &datasets.train) }
        }
        (Wiring::Remote { endpoint_url, .. }, SystemKind::Slg) => RunWiring::Graph {
            spec: GraphSpec {
                orchestrator: remote(endpoint_url, ORCHESTRATOR_ADAPTER),
                experts: datasets
                    .experts
                    .keys()
                    .map(|name| ExpertSpec { name: name.clone(), backend: remote(endpoint_url, name) })
                    .collect(),
                resolution: Resolution::default(),
            },
        },
        (Wiring::Remote { endpoint_url, .. }, SystemKind::SingleModelReference) => {
            RunWiring::Single { backend: remote(endpoint_url, REFERENCE_ADAPTER) }
        }
    };

    let adapters = match plan.system {
        SystemKind::Slg => datasets
            .experts
            .iter()
            .map(|(name, path)| AdapterJob { name: name.clone(), dataset: path.clone() })
            .chain([AdapterJob { name: ORCHESTRATOR_ADAPTER.into(), dataset: datasets.orchestrator.clone() }])
            .collect(),
        SystemKind::SingleModelReference => {
            vec![AdapterJob { name: REFERENCE_ADAPTER.into(), dataset: datasets.train.clone() }]
        }
    };
    let trainer = TrainerBlock {
        required: matches!(plan.wiring, Wiring::Remote { .. }),
        base_model: match &plan.wiring {
            Wiring::Remote { base_model, .. } => Some(base_model.clone()),
            Wiring::Deterministic => None,
        },
        output_dir: format!("adapters/{id}"),
        adapters,
        training_args: config.training_args().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };

    RunManifest {
        schema_version: SCHEMA_VERSION,
        tuned_value: field_value(field, &config),
        run_id: id,
        stage,
        tuned_field: field,
        provisional,
        system: plan.system,
        config,
        selection_metric: plan.selection_metric,
        evaluation_split: Split::Validation,
        datasets: datasets.clone(),
        wiring,
        trainer,
    }
}

/// `<out_dir>/manifests/<run_id>.json`
pub fn manifest_file(out_dir: &Path, run_id: &str) -> PathBuf {
    out_dir.join("manifests").join(format!("{run_id}.json"))
}

/// Writes one manifest per configuration of the plan without running
/// anything. Stages after the first carry the baseline forward and are
/// marked provisional, since their real values depend on earlier selections.
pub fn plan_to_manifests(
    plan: &SweepPlan,
    datasets: &DatasetPaths,
    out_dir: &Path,
) -> Result<Vec<RunManifest>, ExperimentError> {
    plan.validate()?;
    datasets.check()?;
    let mut out = Vec::with_capacity(plan.total_runs());
    for (k, stage) in plan.stages.iter().enumerate() {
        for i in 0..stage.len() {
            let config = stage.apply(&plan.baseline, i);
            let m = build_manifest(plan, datasets, k + 1, stage.field(), config, k > 0);
            write_json(&manifest_file(out_dir, &m.run_id), &m)?;
            out.push(m);
        }
    }
    Ok(out)
}
