//! Chat-completion JSON over HTTP.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, Capabilities, GenerationBackend, GenerationRequest, GenerationResponse, Message, Usage};

/// Bearer token sent with every remote request when set.
pub const API_TOKEN_ENV: &str = "SLG_API_TOKEN";

const EXCERPT_CHARS: usize = 240;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub model: String,
    /// Upper bound on one `generate` call, retries and backoff included.
    pub timeout: Duration,
    /// Extra attempts after the first on connection failures and 5xx replies.
    pub retry_budget: u32,
    pub max_in_flight: usize,
    pub backoff_base: Duration,
    pub api_token: Option<String>,
}

impl RemoteConfig {
    pub fn new(endpoint_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model: model.into(),
            timeout: Duration::from_secs(60),
            retry_budget: 2,
            max_in_flight: 4,
            backoff_base: Duration::from_millis(250),
            api_token: std::env::var(API_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    max_tokens: u32,
    temperature: f64,
    seed: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Counting semaphore bounding concurrent requests to one endpoint.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteClient {
    id: String,
    config: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let url = url::Url::parse(&config.endpoint_url)
            .map_err(|e| BackendError::InvalidConfig(format!("endpoint {:?}: {e}", config.endpoint_url)))?;
        if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
            return Err(BackendError::InvalidConfig(format!(
                "endpoint {:?} is not an http(s) URL",
                config.endpoint_url
            )));
        }
        if config.model.trim().is_empty() {
            return Err(BackendError::InvalidConfig("model name is empty".into()));
        }
        Ok(Self {
            id: format!("remote:{}@{}", config.model, config.endpoint_url),
            agent: ureq::AgentBuilder::new().build(),
            gate: Gate { in_flight: Mutex::new(0), freed: Condvar::new(), limit: config.max_in_flight.max(1) },
            config,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let jitter = rand::thread_rng().gen_range(0.8..=1.2);
        self.config.backoff_base.mul_f64(2f64.powi(attempt as i32) * jitter)
    }
}

fn excerpt(body: &str) -> String {
    let mut out: String = body.chars().take(EXCERPT_CHARS).collect();
    if body.chars().count() > EXCERPT_CHARS {
        out.push('…');
    }
    out
}

fn is_timeout(err: &ureq::Transport) -> bool {
    use std::error::Error;
    let mut source = err.source();
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        source = e.source();
    }
    err.to_string().contains("timed out")
}

impl GenerationBackend for RemoteClient {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { deterministic: false, remote: true }
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let started = Instant::now();
        let deadline = started + self.config.timeout;
        // Serialized once so every retry resends identical bytes.
        let body = serde_json::to_string(&WireRequest {
            model: &self.config.model,
            messages: &request.messages,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            seed: request.seed,
        })
        .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;

        let _permit = self.gate.acquire();
        let mut attempt = 0;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(BackendError::Timeout { elapsed: started.elapsed() });
            }
            let mut call =
                self.agent.post(&self.config.endpoint_url).timeout(remaining).set("Content-Type", "application/json");
            if let Some(token) = &self.config.api_token {
                call = call.set("Authorization", &format!("Bearer {token}"));
            }

            let retryable = match call.send_string(&body) {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| BackendError::Protocol {
                        status: Some(200),
                        body_excerpt: format!("unreadable body: {e}"),
                    })?;
                    let parsed: WireResponse = serde_json::from_str(&text)
                        .map_err(|_| BackendError::Protocol { status: Some(200), body_excerpt: excerpt(&text) })?;
                    let content =
                        parsed.choices.into_iter().next().map(|c| c.message.content).ok_or_else(|| {
                            BackendError::Protocol { status: Some(200), body_excerpt: excerpt(&text) }
                        })?;
                    let usage = parsed
                        .usage
                        .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
                        .unwrap_or_default();
                    return Ok(GenerationResponse {
                        content,
                        backend_id: self.id.clone(),
                        latency: started.elapsed(),
                        usage,
                    });
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    let err = BackendError::Protocol { status: Some(code), body_excerpt: excerpt(&text) };
                    if code < 500 {
                        return Err(err);
                    }
                    err
                }
                Err(ureq::Error::Transport(t)) => {
                    if is_timeout(&t) || Instant::now() >= deadline {
                        return Err(BackendError::Timeout { elapsed: started.elapsed() });
                    }
                    BackendError::Protocol { status: None, body_excerpt: excerpt(&t.to_string()) }
                }
            };

            if attempt >= self.config.retry_budget {
                return Err(retryable);
            }
            tracing::debug!(attempt, error = %retryable, "retrying remote generation");
            let pause = self.backoff(attempt).min(deadline.saturating_duration_since(Instant::now()));
            thread::sleep(pause);
            attempt += 1;
        }
    }
}
