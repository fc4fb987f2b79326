use std::collections::{BTreeMap, HashSet};

use super::{Dataset, DatasetError, DatasetKind, QAPair, Split};
use crate::corpus::Chunk;

/// Partitions `qa` into one expert dataset per chunk. Every chunk gets a
/// dataset, even when no pair was generated for it.
pub fn build_expert_datasets(chunks: &[Chunk], qa: &[QAPair]) -> Result<BTreeMap<String, Dataset>, DatasetError> {
    let mut sets: BTreeMap<String, Dataset> = BTreeMap::new();
    for chunk in chunks {
        let ds = Dataset::new(chunk.expert_name.clone(), DatasetKind::Expert, Vec::new());
        if sets.insert(chunk.expert_name.clone(), ds).is_some() {
            return Err(DatasetError::Integrity(format!("two chunks share the expert name {:?}", chunk.expert_name)));
        }
    }
    let mut ids = HashSet::new();
    for pair in qa {
        if !ids.insert(pair.pair_id.as_str()) {
            return Err(DatasetError::Integrity(format!("duplicate pair_id {:?}", pair.pair_id)));
        }
        match sets.get_mut(&pair.expert_name) {
            Some(ds) => ds.pairs.push(pair.clone()),
            None => {
                return Err(DatasetError::Integrity(format!(
                    "pair {:?} names expert {:?}, which has no chunk",
                    pair.pair_id, pair.expert_name
                )))
            }
        }
    }
    Ok(sets)
}

/// The routing dataset: every expert question, answered with the expert's
/// name. Pairs keep their ids and splits and are ordered by expert name,
/// then `pair_id`.
pub fn build_orchestrator_dataset(expert_sets: &BTreeMap<String, Dataset>) -> Result<Dataset, DatasetError> {
    if expert_sets.is_empty() {
        return Err(DatasetError::InvalidArgument("no expert datasets".into()));
    }
    let mut pairs = Vec::new();
    for (name, ds) in expert_sets {
        let mut own: Vec<&QAPair> = ds.pairs.iter().collect();
        own.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        pairs.extend(own.into_iter().map(|p| QAPair {
            pair_id: p.pair_id.clone(),
            question: p.question.clone(),
            answer: name.clone(),
            expert_name: name.clone(),
            split: p.split,
        }));
    }
    let mut ds = Dataset::new("orchestrator", DatasetKind::Orchestrator, pairs);
    ds.source_doc_id = expert_sets.values().find_map(|d| d.source_doc_id.clone());
    Ok(ds)
}

/// All expert pairs tagged `split`, with procedure answers, ordered by expert
/// name then `pair_id`. This is what a whole graph is scored against.
pub fn pooled_split(expert_sets: &BTreeMap<String, Dataset>, split: Split) -> Dataset {
    let mut pairs = Vec::new();
    for ds in expert_sets.values() {
        let mut own: Vec<QAPair> = ds.pairs.iter().filter(|p| p.split == split).cloned().collect();
        own.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        pairs.extend(own);
    }
    let mut ds = Dataset::new(split.as_str(), DatasetKind::Evaluation, pairs);
    ds.source_doc_id = expert_sets.values().find_map(|d| d.source_doc_id.clone());
    ds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SectionPath;

    fn chunk(name: &str) -> Chunk {
        Chunk {
            chunk_id: format!("d-{name}"),
            expert_name: name.into(),
            source_path: SectionPath(vec![1, 1]),
            text: "t".into(),
            token_count: 1,
        }
    }

    fn pair(id: &str, expert: &str) -> QAPair {
        QAPair {
            pair_id: id.into(),
            question: format!("question {id}"),
            answer: format!("answer {id}"),
            expert_name: expert.into(),
            split: Split::Train,
        }
    }

    #[test]
    fn partitions_by_expert() {
        let chunks: Vec<Chunk> = ["A", "B", "C"].into_iter().map(chunk).collect();
        let qa = vec![pair("a1", "A"), pair("b1", "B"), pair("a2", "A")];
        let sets = build_expert_datasets(&chunks, &qa).unwrap();
        assert_eq!(sets.len(), 3);
        assert_eq!(sets["A"].len(), 2);
        assert!(sets["C"].is_empty());
        assert!(sets.values().all(|d| d.kind == DatasetKind::Expert));
    }

    #[test]
    fn orphans_and_duplicates_are_integrity_errors() {
        let chunks = vec![chunk("A")];
        assert!(matches!(build_expert_datasets(&chunks, &[pair("x", "UNKNOWN")]), Err(DatasetError::Integrity(_))));
        assert!(matches!(
            build_expert_datasets(&chunks, &[pair("x", "A"), pair("x", "A")]),
            Err(DatasetError::Integrity(_))
        ));
    }

    #[test]
    fn orchestrator_answers_are_expert_names() {
        let chunks: Vec<Chunk> = ["WING DAMAGE CLASSIFICATION", "FUSELAGE REPAIRS"].into_iter().map(chunk).collect();
        let qa = vec![
            pair("w2", "WING DAMAGE CLASSIFICATION"),
            pair("w1", "WING DAMAGE CLASSIFICATION"),
            pair("f1", "FUSELAGE REPAIRS"),
        ];
        let orch = build_orchestrator_dataset(&build_expert_datasets(&chunks, &qa).unwrap()).unwrap();
        let got: Vec<(&str, &str)> = orch.pairs.iter().map(|p| (p.pair_id.as_str(), p.answer.as_str())).collect();
        assert_eq!(
            got,
            [("f1", "FUSELAGE REPAIRS"), ("w1", "WING DAMAGE CLASSIFICATION"), ("w2", "WING DAMAGE CLASSIFICATION")]
        );
        assert_eq!(orch.pairs[1].question, "question w1");
        assert!(build_orchestrator_dataset(&BTreeMap::new()).is_err());
    }
}
