use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use super::{
    count_tokens, BackendError, Capabilities, GenerationBackend, GenerationRequest, GenerationResponse, Usage,
};
use crate::dataset::{Dataset, DatasetKind};
use crate::eval::tokenize;

struct Profile {
    expert: String,
    weights: HashMap<String, f64>,
    norm: f64,
}

/// Deterministic orchestrator: TF-IDF cosine between the query and one
/// bag-of-words profile per expert, built from that expert's questions.
///
/// IDF is `ln(N / df)` over the N expert profiles, so a term used by every
/// expert carries no routing signal. Ties (including an all-zero query) go to
/// the lexicographically smallest expert name.
pub struct LexicalRouter {
    id: String,
    idf: HashMap<String, f64>,
    profiles: Vec<Profile>,
}

impl LexicalRouter {
    pub fn new(orchestrator: &Dataset) -> Result<Self, BackendError> {
        if orchestrator.kind != DatasetKind::Orchestrator {
            return Err(BackendError::InvalidConfig(format!(
                "lexical router needs an orchestrator dataset, {:?} is {}",
                orchestrator.name, orchestrator.kind
            )));
        }
        if orchestrator.pairs.is_empty() {
            return Err(BackendError::InvalidConfig(format!("dataset {:?} has no pairs", orchestrator.name)));
        }

        let mut term_counts: BTreeMap<String, HashMap<String, f64>> = BTreeMap::new();
        for pair in &orchestrator.pairs {
            let counts = term_counts.entry(pair.answer.clone()).or_default();
            for tok in tokenize(&pair.question).tokens {
                *counts.entry(tok).or_default() += 1.0;
            }
        }

        let n = term_counts.len() as f64;
        let mut df: HashMap<String, f64> = HashMap::new();
        for counts in term_counts.values() {
            for term in counts.keys() {
                *df.entry(term.clone()).or_default() += 1.0;
            }
        }
        let idf: HashMap<String, f64> = df.into_iter().map(|(t, d)| (t, (n / d).ln())).collect();

        let profiles = term_counts
            .into_iter()
            .map(|(expert, counts)| {
                let weights: HashMap<String, f64> = counts
                    .into_iter()
                    .map(|(t, tf)| {
                        let w = tf * idf[&t];
                        (t, w)
                    })
                    .collect();
                let norm = sorted_norm(&weights);
                Profile { expert, weights, norm }
            })
            .collect();

        Ok(Self { id: format!("lexical-router:{}", orchestrator.name), idf, profiles })
    }

    pub fn experts(&self) -> impl Iterator<Item = &str> {
        self.profiles.iter().map(|p| p.expert.as_str())
    }

    /// Cosine similarity of `query` against every profile, in expert-name order.
    pub fn scores(&self, query: &str) -> Vec<(String, f64)> {
        // BTreeMap keeps the summation order independent of query word order.
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for tok in tokenize(query).tokens {
            if self.idf.contains_key(&tok) {
                *tf.entry(tok).or_default() += 1.0;
            }
        }
        let query_vec: Vec<(String, f64)> = tf
            .into_iter()
            .map(|(t, c)| {
                let w = c * self.idf[&t];
                (t, w)
            })
            .collect();
        let query_norm = query_vec.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();

        self.profiles
            .iter()
            .map(|p| {
                let score = if query_norm == 0.0 || p.norm == 0.0 {
                    0.0
                } else {
                    let dot: f64 = query_vec.iter().map(|(t, w)| w * p.weights.get(t).copied().unwrap_or(0.0)).sum();
                    dot / (query_norm * p.norm)
                };
                (p.expert.clone(), score)
            })
            .collect()
    }

    pub fn route(&self, query: &str) -> String {
        let mut best: Option<(String, f64)> = None;
        for (expert, score) in self.scores(query) {
            // profiles are in ascending name order, so strict > keeps the smallest name on ties
            if best.as_ref().is_none_or(|(_, b)| score > *b) {
                best = Some((expert, score));
            }
        }
        best.map(|(e, _)| e).unwrap_or_default()
    }
}

fn sorted_norm(weights: &HashMap<String, f64>) -> f64 {
    let mut terms: Vec<(&String, &f64)> = weights.iter().collect();
    terms.sort_by(|a, b| a.0.cmp(b.0));
    terms.iter().map(|(_, w)| *w * *w).sum::<f64>().sqrt()
}

impl GenerationBackend for LexicalRouter {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { deterministic: true, remote: false }
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let started = Instant::now();
        let expert = self.route(request.last_user_content());
        Ok(GenerationResponse {
            usage: Usage { prompt_tokens: count_tokens(request), completion_tokens: tokenize(&expert).len() as u64 },
            content: expert,
            backend_id: self.id.clone(),
            latency: started.elapsed(),
        })
    }
}
