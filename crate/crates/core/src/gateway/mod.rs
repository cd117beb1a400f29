//! Model access behind one request/response contract.
//!
//! [`Gateway`] owns a [`Backend`] and adds the parts every caller needs:
//! request validation, a prompt-size budget, bounded concurrency, retries with
//! exponential backoff, and stop-sequence truncation.

mod http;
mod mock;

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

pub use http::OpenAiCompatible;
pub use mock::{transcript_key, FnBackend, RecordingBackend, ScriptedMock, TranscriptEntry};

use crate::parallel;
use crate::prompt::PromptBundle;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_CONTEXT_WINDOW: usize = 3072;
pub const DEFAULT_MAX_NEW_TOKENS: usize = 1536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub stop_sequences: Vec<String>,
    pub n_samples: usize,
    pub request_id: String,
}

impl GenerationRequest {
    pub fn new(request_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            stop_sequences: Vec::new(),
            n_samples: 1,
            request_id: request_id.into(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn with_stop(mut self, stop: Vec<String>) -> Self {
        self.stop_sequences = stop;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {}",
                self.temperature
            )));
        }
        if self.n_samples == 0 || self.max_new_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "n_samples and max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub request_id: String,
    pub samples: Vec<Sample>,
    pub usage: Usage,
}

/// What a backend returns before gateway post-processing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub samples: Vec<Sample>,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Worth retrying (connection failures, 429, 5xx).
    #[error("{0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
    #[error("unscripted request {0}")]
    Unscripted(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend rejected request: {0}")]
    Backend(String),
    #[error("unscripted request (key {0}); the mock never fabricates text")]
    Unscripted(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("prompt needs ~{estimated} tokens, window is {window}")]
    PromptTooLong { estimated: usize, window: usize },
    #[error("backend returned {got} samples, {wanted} requested")]
    SampleCount { wanted: usize, got: usize },
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpOpenaiCompatible,
    ScriptedMock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model: String,
    pub auth_env_var_name: Option<String>,
    pub transcript_path: Option<PathBuf>,
    pub max_in_flight: usize,
    pub retry: RetryConfig,
    pub timeout_s: f64,
    pub context_window: usize,
    pub max_new_tokens: usize,
    pub chars_per_token: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::ScriptedMock,
            base_url: None,
            model: "default".into(),
            auth_env_var_name: None,
            transcript_path: None,
            max_in_flight: 8,
            retry: RetryConfig::default(),
            timeout_s: 300.0,
            context_window: DEFAULT_CONTEXT_WINDOW,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            chars_per_token: 4.0,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::ScriptedMock if self.transcript_path.is_none() => Err(
                GatewayError::Config("scripted_mock requires transcript_path".into()),
            ),
            BackendKind::HttpOpenaiCompatible if self.base_url.is_none() => Err(
                GatewayError::Config("http_openai_compatible requires base_url".into()),
            ),
            _ if self.max_in_flight == 0 => Err(GatewayError::Config(
                "max_in_flight must be positive".into(),
            )),
            _ if self.retry.max_attempts == 0 => Err(GatewayError::Config(
                "retry.max_attempts must be positive".into(),
            )),
            _ => Ok(()),
        }
    }
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("semaphore lock");
        while *n == 0 {
            n = self.freed.wait(n).expect("semaphore lock");
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("semaphore lock") += 1;
        self.0.freed.notify_one();
    }
}

/// Cuts `text` before the earliest stop sequence; `true` if one was found.
pub fn truncate_at_stop(text: &str, stops: &[String]) -> (String, bool) {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min();
    match cut {
        Some(i) => (text[..i].to_string(), true),
        None => (text.to_string(), false),
    }
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    max_in_flight: usize,
    retry: RetryConfig,
    context_window: usize,
    max_new_tokens: usize,
    chars_per_token: f64,
    permits: Semaphore,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("max_in_flight", &self.max_in_flight)
            .field("retry", &self.retry)
            .field("context_window", &self.context_window)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static, max_in_flight: usize) -> Self {
        let max_in_flight = max_in_flight.max(1);
        Self {
            backend: Box::new(backend),
            max_in_flight,
            retry: RetryConfig::default(),
            context_window: DEFAULT_CONTEXT_WINDOW,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            chars_per_token: 4.0,
            permits: Semaphore::new(max_in_flight),
        }
    }

    pub fn with_retry(mut self, retry: RetryConfig) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_budget(
        mut self,
        context_window: usize,
        max_new_tokens: usize,
        chars_per_token: f64,
    ) -> Self {
        self.context_window = context_window;
        self.max_new_tokens = max_new_tokens;
        self.chars_per_token = chars_per_token;
        self
    }

    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let gateway = match config.kind {
            BackendKind::ScriptedMock => {
                let path = config.transcript_path.as_ref().expect("validated");
                let mock = ScriptedMock::load(path).map_err(|e| {
                    GatewayError::Config(format!("transcript {}: {e}", path.display()))
                })?;
                Gateway::new(mock, config.max_in_flight)
            }
            BackendKind::HttpOpenaiCompatible => {
                Gateway::new(OpenAiCompatible::from_config(config)?, config.max_in_flight)
            }
        };
        Ok(gateway.with_retry(config.retry.clone()).with_budget(
            config.context_window,
            config.max_new_tokens,
            config.chars_per_token,
        ))
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn estimate_tokens(&self, text: &str) -> usize {
        (text.chars().count() as f64 / self.chars_per_token).ceil() as usize
    }

    /// A request carrying the bundle's messages and stop sequences.
    pub fn request_from_bundle(
        &self,
        bundle: &PromptBundle,
        request_id: String,
        n_samples: usize,
    ) -> GenerationRequest {
        let mut req = GenerationRequest::new(request_id, bundle.messages.clone())
            .with_samples(n_samples)
            .with_stop(bundle.stop_sequences.clone());
        req.max_new_tokens = self.max_new_tokens;
        req
    }

    fn fit_budget(&self, req: &GenerationRequest) -> Result<GenerationRequest, GatewayError> {
        let prompt: usize = req
            .messages
            .iter()
            .map(|m| self.estimate_tokens(&m.content))
            .sum();
        if prompt >= self.context_window {
            return Err(GatewayError::PromptTooLong {
                estimated: prompt,
                window: self.context_window,
            });
        }
        let mut fitted = req.clone();
        fitted.max_new_tokens = req
            .max_new_tokens
            .min(self.max_new_tokens)
            .min(self.context_window - prompt);
        Ok(fitted)
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        req.validate()?;
        let fitted = self.fit_budget(req)?;
        let completion = {
            let _permit = self.permits.acquire();
            self.call_with_retries(&fitted)?
        };
        if completion.samples.len() != req.n_samples {
            return Err(GatewayError::SampleCount {
                wanted: req.n_samples,
                got: completion.samples.len(),
            });
        }
        let samples = completion
            .samples
            .into_iter()
            .map(|s| {
                let (text, cut) = truncate_at_stop(&s.text, &req.stop_sequences);
                Sample {
                    text,
                    finish_reason: if cut {
                        FinishReason::Stop
                    } else {
                        s.finish_reason
                    },
                }
            })
            .collect();
        Ok(GenerationResult {
            request_id: req.request_id.clone(),
            samples,
            usage: completion.usage,
        })
    }

    fn call_with_retries(&self, req: &GenerationRequest) -> Result<Completion, GatewayError> {
        let mut delay = Duration::from_millis(self.retry.backoff_ms);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.backend.complete(req) {
                Ok(c) => return Ok(c),
                Err(BackendError::Unscripted(key)) => return Err(GatewayError::Unscripted(key)),
                Err(BackendError::Fatal(msg)) => return Err(GatewayError::Backend(msg)),
                Err(BackendError::Transient(msg)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            message: msg,
                        });
                    }
                    log::debug!("request {} attempt {attempt} failed: {msg}", req.request_id);
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }

    /// Runs requests with at most `max_in_flight` outstanding. Results are
    /// aligned with `reqs`; failures stay per-request.
    pub fn generate_batch(
        &self,
        reqs: &[GenerationRequest],
    ) -> Vec<Result<GenerationResult, GatewayError>> {
        parallel::map(reqs, self.max_in_flight, |_, r| self.generate(r))
    }
}
