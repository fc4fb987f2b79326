use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::backends::{GenerationBackend, LexicalRouter, MemorizationExpert, RemoteClient, RemoteConfig};
use crate::dataset::{load_dataset, Dataset, Split};

/// A backend reference as it appears in a graph spec file:
/// `{"type": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRef {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl BackendRef {
    pub fn new(kind: impl Into<String>, params: serde_json::Value) -> Self {
        Self { kind: kind.into(), params }
    }

    pub fn memorization(dataset: impl AsRef<Path>) -> Self {
        Self::new("memorization", serde_json::json!({ "dataset": dataset.as_ref(), "split": "train" }))
    }

    pub fn lexical_router(dataset: impl AsRef<Path>) -> Self {
        Self::new("lexical_router", serde_json::json!({ "dataset": dataset.as_ref(), "split": "train" }))
    }

    pub fn remote(endpoint_url: &str, model: &str) -> Self {
        Self::new("remote", serde_json::json!({ "endpoint_url": endpoint_url, "model": model }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub name: String,
    pub backend: BackendRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Resolution {
    /// Only an expert name equal to the normalized orchestrator output.
    Strict,
    /// Additionally the nearest name within a token-level edit distance.
    Fuzzy { max_edit_distance: usize },
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::Fuzzy { max_edit_distance: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub orchestrator: BackendRef,
    pub experts: Vec<ExpertSpec>,
    #[serde(default)]
    pub resolution: Resolution,
}

impl GraphSpec {
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let raw = fs::read_to_string(path).map_err(|e| GraphError::Build(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| GraphError::Build(format!("{}: {e}", path.display())))
    }

    pub fn expert_names(&self) -> BTreeSet<&str> {
        self.experts.iter().map(|e| e.name.as_str()).collect()
    }
}

/// Turns backend references into live backends.
pub trait BackendFactory {
    fn build(&self, reference: &BackendRef) -> Result<Arc<dyn GenerationBackend>, String>;
}

impl<F> BackendFactory for F
where
    F: Fn(&BackendRef) -> Result<Arc<dyn GenerationBackend>, String>,
{
    fn build(&self, reference: &BackendRef) -> Result<Arc<dyn GenerationBackend>, String> {
        self(reference)
    }
}

/// Builds the `memorization`, `lexical_router` and `remote` backend types.
/// Dataset paths are resolved against `base_dir`.
#[derive(Debug, Clone, Default)]
pub struct StandardBackends {
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetParams {
    dataset: PathBuf,
    #[serde(default)]
    split: Option<Split>,
    /// Restricts a pooled dataset to one expert's pairs.
    #[serde(default)]
    expert: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RemoteParams {
    endpoint_url: String,
    model: String,
    #[serde(default)]
    timeout_ms: Option<u64>,
    #[serde(default)]
    retry_budget: Option<u32>,
    #[serde(default)]
    max_in_flight: Option<usize>,
}

impl StandardBackends {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self { base_dir: base_dir.into() }
    }

    fn dataset(&self, params: &serde_json::Value) -> Result<Dataset, String> {
        let p: DatasetParams = serde_json::from_value(params.clone()).map_err(|e| e.to_string())?;
        let path = self.base_dir.join(&p.dataset);
        let mut ds = load_dataset(&path).map_err(|e| e.to_string())?;
        let split = p.split.unwrap_or(Split::Train);
        ds.pairs.retain(|pair| pair.split == split && p.expert.as_ref().is_none_or(|e| &pair.expert_name == e));
        Ok(ds)
    }
}

impl BackendFactory for StandardBackends {
    fn build(&self, reference: &BackendRef) -> Result<Arc<dyn GenerationBackend>, String> {
        match reference.kind.as_str() {
            "memorization" => {
                let ds = self.dataset(&reference.params)?;
                Ok(Arc::new(MemorizationExpert::new(&ds).map_err(|e| e.to_string())?))
            }
            "lexical_router" => {
                let ds = self.dataset(&reference.params)?;
                Ok(Arc::new(LexicalRouter::new(&ds).map_err(|e| e.to_string())?))
            }
            "remote" => {
                let p: RemoteParams = serde_json::from_value(reference.params.clone()).map_err(|e| e.to_string())?;
                let mut config = RemoteConfig::new(p.endpoint_url, p.model);
                if let Some(ms) = p.timeout_ms {
                    config.timeout = Duration::from_millis(ms);
                }
                if let Some(r) = p.retry_budget {
                    config.retry_budget = r;
                }
                if let Some(n) = p.max_in_flight {
                    config.max_in_flight = n;
                }
                Ok(Arc::new(RemoteClient::new(config).map_err(|e| e.to_string())?))
            }
            other => Err(format!("unknown backend type {other:?}")),
        }
    }
}
