//! The orchestrator-plus-experts star topology and its query flow.

mod audit;
mod resolve;
mod spec;
mod trace;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{generate, BackendError, GenerationBackend, GenerationRequest};
use crate::corpus::normalize_expert_name;
use crate::util::duration_secs;

pub use audit::{route_audit, ExpertTally, RouteAudit};
pub use resolve::{token_edit_distance, ResolutionMethod};
pub use spec::{BackendFactory, BackendRef, ExpertSpec, GraphSpec, Resolution, StandardBackends};
pub use trace::{TraceRecord, TraceSink};

/// Upper bound on orchestrator output; an expert name is a handful of tokens.
const ROUTE_MAX_TOKENS: u32 = 32;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    #[serde(with = "duration_secs")]
    pub route: Duration,
    #[serde(with = "duration_secs")]
    pub answer: Duration,
}

/// The audited path of one query through the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTrace {
    pub query: String,
    pub orchestrator_raw: String,
    pub resolved_expert: Option<String>,
    pub resolution_method: ResolutionMethod,
    pub expert_answer: Option<String>,
    pub timings: Timings,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("graph build failed: {0}")]
    Build(String),
    #[error("orchestrator failed: {source}")]
    Orchestrator {
        #[source]
        source: BackendError,
        trace: Box<RouteTrace>,
    },
    #[error("orchestrator output {raw:?} names no registered expert (registered: {})", .registered.join(", "))]
    Routing { raw: String, registered: Vec<String>, trace: Box<RouteTrace> },
    #[error("expert {expert:?} failed: {source}")]
    Expert {
        expert: String,
        #[source]
        source: BackendError,
        trace: Box<RouteTrace>,
    },
}

impl GraphError {
    pub fn trace(&self) -> Option<&RouteTrace> {
        match self {
            GraphError::Orchestrator { trace, .. }
            | GraphError::Routing { trace, .. }
            | GraphError::Expert { trace, .. } => Some(trace),
            GraphError::EmptyQuery | GraphError::Build(_) => None,
        }
    }
}

/// An immutable star: one orchestrator with an edge to every expert.
pub struct Graph {
    spec: GraphSpec,
    orchestrator: Arc<dyn GenerationBackend>,
    registry: BTreeMap<String, Arc<dyn GenerationBackend>>,
    routing_prompt: String,
    build_time: DateTime<Utc>,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph")
            .field("orchestrator", &self.orchestrator.backend_id())
            .field("experts", &self.registry.keys().collect::<Vec<_>>())
            .field("build_time", &self.build_time)
            .finish()
    }
}

fn check_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<(), GraphError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut any = false;
    for name in names {
        any = true;
        match normalize_expert_name(name) {
            Ok(n) if n == name => {}
            _ => return Err(GraphError::Build(format!("expert name {name:?} is not normalized"))),
        }
        if !seen.insert(name) {
            return Err(GraphError::Build(format!("duplicate expert name {name:?}")));
        }
    }
    if !any {
        return Err(GraphError::Build("graph needs at least one expert".into()));
    }
    Ok(())
}

/// Default system message for the orchestrator: the registered names and an
/// instruction to reply with exactly one of them.
pub fn routing_prompt<'a>(names: impl IntoIterator<Item = &'a str>) -> String {
    let mut prompt = String::from(
        "You route engineering questions to expert models. Reply with exactly one expert name \
         from the list below and nothing else.\n\nExperts:\n",
    );
    for name in names {
        prompt.push_str("- ");
        prompt.push_str(name);
        prompt.push('\n');
    }
    prompt
}

impl Graph {
    pub fn build(spec: GraphSpec, factory: &dyn BackendFactory) -> Result<Self, GraphError> {
        check_names(spec.experts.iter().map(|e| e.name.as_str()))?;
        let orchestrator = factory
            .build(&spec.orchestrator)
            .map_err(|e| GraphError::Build(format!("orchestrator backend {:?}: {e}", spec.orchestrator.kind)))?;
        let mut registry = BTreeMap::new();
        for expert in &spec.experts {
            let backend = factory.build(&expert.backend).map_err(|e| {
                GraphError::Build(format!("expert {:?} backend {:?}: {e}", expert.name, expert.backend.kind))
            })?;
            registry.insert(expert.name.clone(), backend);
        }
        Ok(Self::assemble(spec, orchestrator, registry))
    }

    /// Builds a graph around already constructed backends.
    pub fn from_backends(
        orchestrator: Arc<dyn GenerationBackend>,
        experts: Vec<(String, Arc<dyn GenerationBackend>)>,
        resolution: Resolution,
    ) -> Result<Self, GraphError> {
        check_names(experts.iter().map(|(n, _)| n.as_str()))?;
        let inline =
            |b: &Arc<dyn GenerationBackend>| BackendRef::new("inline", serde_json::json!({ "id": b.backend_id() }));
        let spec = GraphSpec {
            orchestrator: inline(&orchestrator),
            experts: experts.iter().map(|(name, b)| ExpertSpec { name: name.clone(), backend: inline(b) }).collect(),
            resolution,
        };
        Ok(Self::assemble(spec, orchestrator, experts.into_iter().collect()))
    }

    fn assemble(
        spec: GraphSpec,
        orchestrator: Arc<dyn GenerationBackend>,
        registry: BTreeMap<String, Arc<dyn GenerationBackend>>,
    ) -> Self {
        let routing_prompt = routing_prompt(registry.keys().map(String::as_str));
        Self { spec, orchestrator, registry, routing_prompt, build_time: Utc::now() }
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn build_time(&self) -> DateTime<Utc> {
        self.build_time
    }

    /// Registered expert names in ascending order.
    pub fn experts(&self) -> impl Iterator<Item = &str> {
        self.registry.keys().map(String::as_str)
    }

    pub fn expert(&self, name: &str) -> Option<&Arc<dyn GenerationBackend>> {
        self.registry.get(name)
    }

    pub fn orchestrator(&self) -> &Arc<dyn GenerationBackend> {
        &self.orchestrator
    }

    /// Asks the orchestrator for an expert and resolves its output against
    /// the registry.
    pub fn route(&self, query: &str) -> Result<(String, RouteTrace), GraphError> {
        if query.trim().is_empty() {
            return Err(GraphError::EmptyQuery);
        }
        let mut trace = RouteTrace {
            query: query.to_string(),
            orchestrator_raw: String::new(),
            resolved_expert: None,
            resolution_method: ResolutionMethod::Failed,
            expert_answer: None,
            timings: Timings::default(),
        };
        let request =
            GenerationRequest::user(query).with_system(self.routing_prompt.as_str()).with_max_tokens(ROUTE_MAX_TOKENS);
        let started = Instant::now();
        let outcome = generate(self.orchestrator.as_ref(), &request);
        trace.timings.route = started.elapsed();
        let response = match outcome {
            Ok(r) => r,
            Err(source) => return Err(GraphError::Orchestrator { source, trace: Box::new(trace) }),
        };
        trace.orchestrator_raw = response.content;

        let (resolved, method) =
            resolve::resolve(&trace.orchestrator_raw, self.registry.keys().map(String::as_str), self.spec.resolution);
        trace.resolution_method = method;
        match resolved {
            Some(name) => {
                trace.resolved_expert = Some(name.clone());
                Ok((name, trace))
            }
            None => Err(GraphError::Routing {
                raw: trace.orchestrator_raw.clone(),
                registered: self.registry.keys().cloned().collect(),
                trace: Box::new(trace),
            }),
        }
    }

    /// Routes `query` and returns the chosen expert's answer verbatim.
    /// Exactly one expert is invoked; nothing is remembered between calls.
    pub fn answer(&self, query: &str) -> Result<(String, RouteTrace), GraphError> {
        let (expert, mut trace) = self.route(query)?;
        let backend = &self.registry[&expert];
        let started = Instant::now();
        let outcome = generate(backend.as_ref(), &GenerationRequest::user(query));
        trace.timings.answer = started.elapsed();
        match outcome {
            Ok(response) => {
                trace.expert_answer = Some(response.content.clone());
                Ok((response.content, trace))
            }
            Err(source) => Err(GraphError::Expert { expert, source, trace: Box::new(trace) }),
        }
    }
}
