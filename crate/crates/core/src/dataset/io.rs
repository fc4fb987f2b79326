use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, DatasetKind, QAPair};
use crate::util::write_atomic;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

/// Sidecar describing a JSONL dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub kind: DatasetKind,
    pub counts: SplitCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc_id: Option<String>,
}

/// `<path>.manifest.json`
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes one JSON object per pair, plus a manifest sidecar.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let mut body = String::new();
    for p in &ds.pairs {
        body.push_str(&serde_json::to_string(p).expect("pairs serialize"));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes()).map_err(io_err)?;

    let manifest = DatasetManifest {
        name: ds.name.clone(),
        kind: ds.kind,
        counts: ds.counts(),
        source_doc_id: ds.source_doc_id.clone(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    let mpath = manifest_path(path);
    write_atomic(&mpath, json.as_bytes()).map_err(|source| DatasetError::Io { path: mpath, source })
}

/// Reads a JSONL dataset. Name and kind come from the manifest sidecar when
/// present, otherwise from the file stem and the shape of the pairs.
pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let raw = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let mut pairs = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: QAPair = serde_json::from_str(line).map_err(|e| DatasetError::Load {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        pairs.push(pair);
    }

    let mpath = manifest_path(path);
    if mpath.exists() {
        let text = fs::read_to_string(&mpath).map_err(|source| DatasetError::Io { path: mpath.clone(), source })?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| DatasetError::Load {
            path: mpath.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut ds = Dataset::new(m.name, m.kind, pairs);
        ds.source_doc_id = m.source_doc_id;
        return Ok(ds);
    }

    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let kind = infer_kind(&pairs);
    Ok(Dataset::new(name, kind, pairs))
}

fn infer_kind(pairs: &[QAPair]) -> DatasetKind {
    if !pairs.is_empty() && pairs.iter().all(|p| p.answer == p.expert_name) {
        return DatasetKind::Orchestrator;
    }
    let experts: BTreeSet<&str> = pairs.iter().map(|p| p.expert_name.as_str()).collect();
    if experts.len() <= 1 {
        DatasetKind::Expert
    } else {
        DatasetKind::Evaluation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    fn sample() -> Dataset {
        let mut ds = Dataset::new(
            "WING",
            DatasetKind::Expert,
            vec![QAPair {
                pair_id: "p1".into(),
                question: "Why?\nBecause \"quoted\"".into(),
                answer: "Ünïcode".into(),
                expert_name: "WING".into(),
                split: Split::Test,
            }],
        );
        ds.source_doc_id = Some("doc-1".into());
        ds
    }

    #[test]
    fn round_trip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wing.jsonl");
        save_dataset(&sample(), &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), sample());
        let line = fs::read_to_string(&path).unwrap();
        assert!(line.starts_with(r#"{"pair_id":"p1","question":"#));
        assert!(line.trim_end().ends_with(r#""expert_name":"WING","split":"test"}"#));
    }

    #[test]
    fn empty_dataset_is_an_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let ds = Dataset::new("e", DatasetKind::Expert, vec![]);
        save_dataset(&ds, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn missing_field_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = r#"{"pair_id":"a","question":"q","answer":"x","expert_name":"E","split":"train"}"#;
        let bad = r#"{"pair_id":"b","question":"q","expert_name":"E","split":"train"}"#;
        fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        match load_dataset(&path) {
            Err(DatasetError::Load { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("answer"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kind_is_inferred_without_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orchestrator.jsonl");
        let line = r#"{"pair_id":"a","question":"q","answer":"E","expert_name":"E","split":"train"}"#;
        fs::write(&path, format!("{line}\n")).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!((ds.name.as_str(), ds.kind), ("orchestrator", DatasetKind::Orchestrator));
    }
}
