//! The backend-neutral text-generation contract and its implementations.

mod memorization;
mod remote;
mod router;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use memorization::MemorizationExpert;
pub use remote::{RemoteClient, RemoteConfig, API_TOKEN_ENV};
pub use router::LexicalRouter;

use crate::util::duration_secs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<Message>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
}

impl GenerationRequest {
    /// A greedy (temperature 0) request with a single user turn.
    pub fn user(content: impl Into<String>) -> Self {
        Self { messages: vec![Message::user(content)], max_tokens: 512, temperature: 0.0, seed: 0 }
    }

    pub fn with_system(mut self, content: impl Into<String>) -> Self {
        self.messages.insert(0, Message::system(content));
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(BackendError::InvalidRequest("request has no user message".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Content of the final user turn: the query deterministic backends answer.
    pub fn last_user_content(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub content: String,
    pub backend_id: String,
    #[serde(with = "duration_secs")]
    pub latency: Duration,
    pub usage: Usage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub deterministic: bool,
    pub remote: bool,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("timed out after {elapsed:?}")]
    Timeout { elapsed: Duration },
    #[error("protocol error{}: {body_excerpt}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Protocol { status: Option<u16>, body_excerpt: String },
    #[error("backend returned empty content")]
    EmptyGeneration,
}

/// A text generator. Implementations must be callable from several threads at
/// once and must return (or fail) within their configured timeout.
pub trait GenerationBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// Produces content for an already validated request. Callers should go
    /// through [`generate`], which validates and checks the result.
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

/// Validates `request`, dispatches it and rejects empty generations.
pub fn generate(
    backend: &dyn GenerationBackend,
    request: &GenerationRequest,
) -> Result<GenerationResponse, BackendError> {
    request.validate()?;
    let started = Instant::now();
    let mut response = backend.complete(request)?;
    if response.content.trim().is_empty() {
        return Err(BackendError::EmptyGeneration);
    }
    if response.latency.is_zero() {
        response.latency = started.elapsed();
    }
    Ok(response)
}

pub(crate) fn count_tokens(request: &GenerationRequest) -> u64 {
    request.messages.iter().map(|m| crate::eval::tokenize(&m.content).len() as u64).sum()
}
