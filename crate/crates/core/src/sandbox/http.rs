use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    tail, ExecutionRequest, ExecutionVerdict, Executor, SandboxError, VerdictStatus, MAX_TIMEOUT_S,
};

#[derive(Serialize)]
struct WireRequest<'a> {
    language: &'a str,
    code: &'a str,
    timeout_s: f64,
}

#[derive(Deserialize)]
struct WireVerdict {
    status: VerdictStatus,
    exit_code: Option<i32>,
    stdout: String,
    stderr: String,
    duration_ms: u64,
}

/// Client for the execution service.
pub struct HttpSandbox {
    agent: ureq::Agent,
    base_url: String,
}

impl HttpSandbox {
    pub fn new(base_url: &str) -> Self {
        // Covers the longest allowed program plus transfer slack.
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(MAX_TIMEOUT_S + 60.0)))
            .build();
        HttpSandbox {
            agent: ureq::Agent::new_with_config(config),
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }

    pub fn healthy(&self) -> Result<(), SandboxError> {
        let mut resp = self
            .agent
            .get(format!("{}/healthz", self.base_url))
            .call()
            .map_err(|e| SandboxError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 200 {
            Ok(())
        } else {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            Err(SandboxError::Service { status, body })
        }
    }
}

impl Executor for HttpSandbox {
    fn execute(&self, req: &ExecutionRequest) -> Result<ExecutionVerdict, SandboxError> {
        let body = serde_json::to_string(&WireRequest {
            language: &req.language,
            code: &req.program,
            timeout_s: req.timeout_s,
        })
        .expect("request serializes");
        let mut resp = self
            .agent
            .post(format!("{}/execute", self.base_url))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| SandboxError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| SandboxError::Transport(format!("reading body: {e}")))?;
        if status != 200 {
            return Err(SandboxError::Service {
                status,
                body: tail(&text),
            });
        }
        let wire: WireVerdict =
            serde_json::from_str(&text).map_err(|e| SandboxError::Protocol(e.to_string()))?;
        Ok(ExecutionVerdict {
            candidate_id: req.candidate_id.clone(),
            status: wire.status,
            exit_code: wire.exit_code,
            stdout_tail: tail(&wire.stdout),
            stderr_tail: tail(&wire.stderr),
            duration_ms: wire.duration_ms,
        })
    }
}
