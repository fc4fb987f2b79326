use std::collections::BTreeSet;
use std::time::Instant;

use super::{
    count_tokens, BackendError, Capabilities, GenerationBackend, GenerationRequest, GenerationResponse, Usage,
};
use crate::dataset::{Dataset, DatasetKind};
use crate::eval::tokenize;

struct Entry {
    pair_id: String,
    normalized: String,
    tokens: BTreeSet<String>,
    answer: String,
}

/// Stand-in for a perfectly fine-tuned expert: answers with the stored answer
/// of the closest training question.
///
/// Closeness is an exact match of the token-normalized question first, then
/// the highest Jaccard overlap of token sets; ties go to the lowest `pair_id`.
pub struct MemorizationExpert {
    id: String,
    entries: Vec<Entry>,
}

impl MemorizationExpert {
    pub fn new(train: &Dataset) -> Result<Self, BackendError> {
        if train.kind == DatasetKind::Orchestrator {
            return Err(BackendError::InvalidConfig(format!(
                "memorization expert needs procedure answers, {:?} is an {} dataset",
                train.name, train.kind
            )));
        }
        if train.pairs.is_empty() {
            return Err(BackendError::InvalidConfig(format!("dataset {:?} has no pairs", train.name)));
        }
        let mut entries: Vec<Entry> = train
            .pairs
            .iter()
            .map(|p| {
                let toks = tokenize(&p.question).tokens;
                Entry {
                    pair_id: p.pair_id.clone(),
                    normalized: toks.join(" "),
                    tokens: toks.into_iter().collect(),
                    answer: p.answer.clone(),
                }
            })
            .collect();
        entries.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        Ok(Self { id: format!("memorization:{}", train.name), entries })
    }

    fn select(&self, query: &str) -> &Entry {
        let toks = tokenize(query).tokens;
        let normalized = toks.join(" ");
        if let Some(e) = self.entries.iter().find(|e| e.normalized == normalized) {
            return e;
        }
        let query_set: BTreeSet<String> = toks.into_iter().collect();
        let mut best = &self.entries[0];
        let mut best_score = jaccard(&query_set, &best.tokens);
        for e in &self.entries[1..] {
            let score = jaccard(&query_set, &e.tokens);
            if score > best_score {
                best = e;
                best_score = score;
            }
        }
        best
    }

    pub fn pair_for(&self, query: &str) -> &str {
        &self.select(query).pair_id
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

impl GenerationBackend for MemorizationExpert {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { deterministic: true, remote: false }
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let started = Instant::now();
        let entry = self.select(request.last_user_content());
        Ok(GenerationResponse {
            content: entry.answer.clone(),
            backend_id: self.id.clone(),
            usage: Usage {
                prompt_tokens: count_tokens(request),
                completion_tokens: tokenize(&entry.answer).len() as u64,
            },
            latency: started.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::generate;
    use crate::dataset::{QAPair, Split};

    fn dataset(pairs: &[(&str, &str, &str)]) -> Dataset {
        Dataset::new(
            "WING",
            DatasetKind::Expert,
            pairs
                .iter()
                .map(|(id, q, a)| QAPair {
                    pair_id: id.to_string(),
                    question: q.to_string(),
                    answer: a.to_string(),
                    expert_name: "WING".into(),
                    split: Split::Train,
                })
                .collect(),
        )
    }

    #[test]
    fn exact_question_returns_its_answer() {
        let ds = dataset(&[("p2", "How are spars inspected?", "Use a mirror."), ("p1", "What is a rib?", "A frame.")]);
        let expert = MemorizationExpert::new(&ds).unwrap();
        let r = generate(&expert, &GenerationRequest::user("how are SPARS inspected ?")).unwrap();
        assert_eq!(r.content, "Use a mirror.");
    }

    #[test]
    fn unrelated_query_falls_back_to_lowest_pair_id() {
        let ds = dataset(&[("p2", "spars", "two"), ("p1", "ribs", "one")]);
        let expert = MemorizationExpert::new(&ds).unwrap();
        assert_eq!(generate(&expert, &GenerationRequest::user("zzz")).unwrap().content, "one");
    }

    #[test]
    fn deterministic_at_temperature_zero() {
        let ds = dataset(&[("p1", "spar damage limits", "a"), ("p2", "rib damage limits", "b")]);
        let expert = MemorizationExpert::new(&ds).unwrap();
        let req = GenerationRequest::user("damage limits");
        assert_eq!(generate(&expert, &req).unwrap().content, generate(&expert, &req).unwrap().content);
    }

    #[test]
    fn rejects_empty_or_wrong_kind() {
        assert!(MemorizationExpert::new(&dataset(&[])).is_err());
        let mut ds = dataset(&[("p1", "q", "a")]);
        ds.kind = DatasetKind::Orchestrator;
        assert!(MemorizationExpert::new(&ds).is_err());
    }
}
