//! Program execution: request/verdict types, an HTTP client for the
//! execution service, and a local subprocess jail speaking the same contract.

mod http;
mod local;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel;

pub use http::HttpSandbox;
pub use local::{LocalSandbox, NetworkPolicy};

pub const DEFAULT_TIMEOUT_S: f64 = 30.0;
pub const MAX_TIMEOUT_S: f64 = 600.0;
pub const TAIL_BYTES: usize = 4096;
pub const DEFAULT_LANGUAGE: &str = "python";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRequest {
    pub candidate_id: String,
    pub program: String,
    pub timeout_s: f64,
    pub language: String,
}

impl ExecutionRequest {
    pub fn new(candidate_id: impl Into<String>, program: impl Into<String>) -> Self {
        ExecutionRequest {
            candidate_id: candidate_id.into(),
            program: program.into(),
            timeout_s: DEFAULT_TIMEOUT_S,
            language: DEFAULT_LANGUAGE.into(),
        }
    }

    pub fn with_timeout(mut self, timeout_s: f64) -> Self {
        self.timeout_s = timeout_s;
        self
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.program.trim().is_empty() {
            return Err(SandboxError::InvalidRequest("empty program".into()));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s <= MAX_TIMEOUT_S) {
            return Err(SandboxError::InvalidRequest(format!(
                "timeout_s {} outside (0, {MAX_TIMEOUT_S}]",
                self.timeout_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Timeout,
    Error,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::Timeout => "timeout",
            VerdictStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionVerdict {
    pub candidate_id: String,
    pub status: VerdictStatus,
    pub exit_code: Option<i32>,
    pub stdout_tail: String,
    pub stderr_tail: String,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SandboxError {
    #[error("sandbox unreachable: {0}")]
    Transport(String),
    #[error("sandbox service fault (HTTP {status}): {body}")]
    Service { status: u16, body: String },
    #[error("malformed verdict: {0}")]
    Protocol(String),
    #[error("invalid execution request: {0}")]
    InvalidRequest(String),
}

pub trait Executor: Send + Sync {
    fn execute(&self, req: &ExecutionRequest) -> Result<ExecutionVerdict, SandboxError>;
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn execute(&self, req: &ExecutionRequest) -> Result<ExecutionVerdict, SandboxError> {
        (**self).execute(req)
    }
}

/// The last `TAIL_BYTES` of `text`, cut at a character boundary.
pub fn tail(text: &str) -> String {
    if text.len() <= TAIL_BYTES {
        return text.to_string();
    }
    let mut start = text.len() - TAIL_BYTES;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

/// Runs `reqs` with at most `max_parallel` in flight. Results are aligned
/// with `reqs` and failures stay per-request.
pub fn execute_parallel(
    executor: &dyn Executor,
    reqs: &[ExecutionRequest],
    max_parallel: usize,
) -> Vec<Result<ExecutionVerdict, SandboxError>> {
    parallel::map(reqs, max_parallel.max(1), |_, r| {
        r.validate()?;
        executor.execute(r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_bounds() {
        assert!(ExecutionRequest::new("c", "x = 1").validate().is_ok());
        assert!(ExecutionRequest::new("c", "  ").validate().is_err());
        assert!(ExecutionRequest::new("c", "x")
            .with_timeout(0.0)
            .validate()
            .is_err());
        assert!(ExecutionRequest::new("c", "x")
            .with_timeout(600.0)
            .validate()
            .is_ok());
        assert!(ExecutionRequest::new("c", "x")
            .with_timeout(600.5)
            .validate()
            .is_err());
    }

    #[test]
    fn tails_are_bounded() {
        let s = "é".repeat(3000);
        let t = tail(&s);
        assert!(t.len() <= TAIL_BYTES);
        assert!(s.ends_with(&t));
        assert_eq!(tail("short"), "short");
    }

    #[test]
    fn status_names() {
        assert_eq!(
            serde_json::to_string(&VerdictStatus::Timeout).unwrap(),
            "\"timeout\""
        );
        assert_eq!(VerdictStatus::Pass.as_str(), "pass");
    }
}
