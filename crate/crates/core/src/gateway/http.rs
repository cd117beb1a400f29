//! OpenAI-compatible chat-completions backend.

use serde::{Deserialize, Serialize};
use std::time::Duration;

use super::{
    Backend, BackendConfig, BackendError, Completion, FinishReason, GatewayError,
    GenerationRequest, Message, Sample, Usage,
};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    n: usize,
    max_tokens: usize,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: usize,
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub struct OpenAiCompatible {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    token: Option<String>,
}

impl OpenAiCompatible {
    pub fn new(base_url: &str, model: &str, token: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            token,
        }
    }

    /// Reads the bearer token from the configured environment variable.
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        let base_url = config
            .base_url
            .as_deref()
            .ok_or_else(|| GatewayError::Config("base_url missing".into()))?;
        let token = match &config.auth_env_var_name {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        Ok(Self::new(
            base_url,
            &config.model,
            token,
            Duration::from_secs_f64(config.timeout_s),
        ))
    }
}

fn finish_reason(raw: Option<&str>) -> FinishReason {
    match raw {
        Some("length") => FinishReason::Length,
        Some("stop") | None => FinishReason::Stop,
        Some(_) => FinishReason::Error,
    }
}

impl Backend for OpenAiCompatible {
    fn complete(&self, req: &GenerationRequest) -> Result<Completion, BackendError> {
        let body = serde_json::to_string(&ChatRequest {
            model: &self.model,
            messages: &req.messages,
            temperature: req.temperature,
            n: req.n_samples,
            max_tokens: req.max_new_tokens,
            stop: &req.stop_sequences,
        })
        .expect("request serializes");
        let mut call = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = call
            .send(body)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(BackendError::Transient(format!("HTTP {status}: {text}")));
        }
        if status >= 400 {
            return Err(BackendError::Fatal(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Transient(format!("malformed response: {e}")))?;
        let mut choices = parsed.choices;
        choices.sort_by_key(|c| c.index);
        let samples = choices
            .into_iter()
            .map(|c| Sample {
                text: c.message.content.unwrap_or_default(),
                finish_reason: finish_reason(c.finish_reason.as_deref()),
            })
            .collect();
        let usage = parsed
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(Completion { samples, usage })
    }
}
