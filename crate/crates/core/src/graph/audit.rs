use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::dataset::{Dataset, DatasetKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertTally {
    pub correct: usize,
    pub total: usize,
    /// Queries whose orchestrator output resolved to no expert at all.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteAudit {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Keyed by the ground-truth expert.
    pub per_expert: BTreeMap<String, ExpertTally>,
}

/// Routes every question of an orchestrator-kind dataset and compares the
/// resolved expert with the recorded answer. Unresolvable outputs and
/// orchestrator errors count as incorrect.
///
/// # Panics
///
/// If `orch_test` is empty or not an orchestrator dataset.
pub fn route_audit(graph: &Graph, orch_test: &Dataset) -> RouteAudit {
    assert!(!orch_test.is_empty(), "route audit needs at least one pair");
    assert_eq!(orch_test.kind, DatasetKind::Orchestrator, "route audit needs an orchestrator dataset");

    let outcomes: Vec<Option<String>> =
        orch_test.pairs.par_iter().map(|pair| graph.route(&pair.question).ok().map(|(name, _)| name)).collect();

    let mut per_expert: BTreeMap<String, ExpertTally> = BTreeMap::new();
    let mut correct = 0;
    for (pair, resolved) in orch_test.pairs.iter().zip(outcomes) {
        let tally = per_expert.entry(pair.answer.clone()).or_default();
        tally.total += 1;
        match resolved {
            Some(name) if name == pair.answer => {
                tally.correct += 1;
                correct += 1;
            }
            Some(_) => {}
            None => tally.failed += 1,
        }
    }
    let total = orch_test.len();
    RouteAudit { accuracy: correct as f64 / total as f64, correct, total, per_expert }
}
