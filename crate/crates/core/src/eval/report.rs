use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::meteor::Meteor;
use super::metrics::{exact_match, rouge_l_tokens, RougeL};
use super::tokenize::tokenize;
use crate::backends::{generate, GenerationBackend, GenerationRequest};
use crate::dataset::{Dataset, Split};
use crate::graph::Graph;

/// What produces the predictions being scored.
#[derive(Clone, Copy)]
pub enum EvalTarget<'a> {
    Graph(&'a Graph),
    /// A single model answering every question directly.
    Backend(&'a dyn GenerationBackend),
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Every pair must carry this split tag; `None` accepts any.
    pub expected_split: Option<Split>,
    /// Score routing against each pair's `expert_name` (graphs only).
    pub with_routing_truth: bool,
    pub meteor: Meteor,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { expected_split: Some(Split::Test), with_routing_truth: true, meteor: Meteor::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub pair_id: String,
    pub expert_name: String,
    pub prediction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routed_expert: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routed_correctly: Option<bool>,
    pub rouge_l: RougeL,
    pub exact_match: f64,
    pub meteor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregates are plain means of the per-example scores, summed in
/// `pair_id` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rouge_l: RougeL,
    pub exact_match: f64,
    pub meteor: f64,
    pub routing_accuracy: Option<f64>,
    pub n_examples: usize,
    pub per_example: Vec<ExampleScore>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test dataset {0:?} is empty")]
    EmptyTestSet(String),
    #[error("pair {pair_id} is tagged {found}, expected {expected}")]
    WrongSplit { pair_id: String, found: Split, expected: Split },
}

fn score(pair_id: &str, expert: &str, reference: &str, prediction: Option<String>, meteor: &Meteor) -> ExampleScore {
    let (rl, em, m) = match &prediction {
        Some(p) => {
            let pred = tokenize(p);
            let refr = tokenize(reference);
            (
                rouge_l_tokens(pred.as_slice(), refr.as_slice()),
                if exact_match(p, reference) { 1.0 } else { 0.0 },
                meteor.score_tokens(pred.as_slice(), refr.as_slice()),
            )
        }
        None => (RougeL::default(), 0.0, 0.0),
    };
    ExampleScore {
        pair_id: pair_id.to_string(),
        expert_name: expert.to_string(),
        prediction,
        routed_expert: None,
        routed_correctly: None,
        rouge_l: rl,
        exact_match: em,
        meteor: m,
        error: None,
    }
}

/// Answers every pair of `test` with `target` and scores the answers against
/// the reference. A pair whose answer fails scores zero on every metric and
/// still counts towards `n_examples`.
pub fn evaluate_run(target: EvalTarget<'_>, test: &Dataset, opts: &EvalOptions) -> Result<MetricReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet(test.name.clone()));
    }
    if let Some(expected) = opts.expected_split {
        if let Some(p) = test.pairs.iter().find(|p| p.split != expected) {
            return Err(EvalError::WrongSplit { pair_id: p.pair_id.clone(), found: p.split, expected });
        }
    }
    let routing = opts.with_routing_truth && matches!(target, EvalTarget::Graph(_));

    let mut per_example: Vec<ExampleScore> = test
        .pairs
        .par_iter()
        .map(|pair| match target {
            EvalTarget::Graph(graph) => {
                let (prediction, routed, error) = match graph.answer(&pair.question) {
                    Ok((answer, trace)) => (Some(answer), trace.resolved_expert, None),
                    Err(e) => (None, e.trace().and_then(|t| t.resolved_expert.clone()), Some(e.to_string())),
                };
                let mut s = score(&pair.pair_id, &pair.expert_name, &pair.answer, prediction, &opts.meteor);
                if routing {
                    s.routed_correctly = Some(routed.as_deref() == Some(pair.expert_name.as_str()));
                }
                s.routed_expert = routed;
                s.error = error;
                s
            }
            EvalTarget::Backend(backend) => {
                let outcome = generate(backend, &GenerationRequest::user(pair.question.as_str()));
                let (prediction, error) = match outcome {
                    Ok(r) => (Some(r.content), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                let mut s = score(&pair.pair_id, &pair.expert_name, &pair.answer, prediction, &opts.meteor);
                s.error = error;
                s
            }
        })
        .collect();
    per_example.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let n = per_example.len() as f64;
    let mean = |f: &dyn Fn(&ExampleScore) -> f64| per_example.iter().map(f).sum::<f64>() / n;
    let report = MetricReport {
        rouge_l: RougeL {
            precision: mean(&|e| e.rouge_l.precision),
            recall: mean(&|e| e.rouge_l.recall),
            f1: mean(&|e| e.rouge_l.f1),
        },
        exact_match: mean(&|e| e.exact_match),
        meteor: mean(&|e| e.meteor),
        routing_accuracy: routing.then(|| mean(&|e| if e.routed_correctly == Some(true) { 1.0 } else { 0.0 })),
        n_examples: per_example.len(),
        per_example,
    };
    Ok(report)
}

/// One row of a comparison across systems: ROUGE-L F1, EM and METEOR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub system: String,
    pub rouge_l: f64,
    pub exact_match: f64,
    pub meteor: f64,
}

impl ComparisonRow {
    pub fn new(system: impl Into<String>, rouge_l: f64, exact_match: f64, meteor: f64) -> Self {
        Self { system: system.into(), rouge_l, exact_match, meteor }
    }

    pub fn from_report(system: impl Into<String>, report: &MetricReport) -> Self {
        Self::new(system, report.rouge_l.f1, report.exact_match, report.meteor)
    }
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("system,rouge_l,exact_match,meteor\n");
    for r in rows {
        let system = if r.system.contains([',', '"', '\n']) {
            format!("\"{}\"", r.system.replace('"', "\"\""))
        } else {
            r.system.clone()
        };
        let _ = writeln!(out, "{system},{:.4},{:.4},{:.4}", r.rouge_l, r.exact_match, r.meteor);
    }
    out
}

pub fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("| System | R-L | EM | M |\n|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(out, "| {} | {:.2} | {:.2} | {:.2} |", r.system, r.rouge_l, r.exact_match, r.meteor);
    }
    out
}
