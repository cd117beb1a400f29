use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{tail, ExecutionRequest, ExecutionVerdict, Executor, SandboxError, VerdictStatus};

/// Server-side capture cap per stream; only the tail is kept past it.
const CAPTURE_BYTES: usize = 64 * 1024;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkPolicy {
    /// Fail the run if a private network namespace cannot be created.
    Isolate,
    /// Use a private network namespace when the kernel allows it.
    IsolateIfAvailable,
    Allow,
}

/// Runs programs as local subprocesses: one scratch directory and one
/// process group per request, resource limits, and a hard deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalSandbox {
    pub interpreter: Vec<String>,
    pub memory_bytes: u64,
    pub network: NetworkPolicy,
}

impl Default for LocalSandbox {
    fn default() -> Self {
        LocalSandbox {
            interpreter: vec!["python3".into(), "-I".into()],
            memory_bytes: 1 << 30,
            network: NetworkPolicy::IsolateIfAvailable,
        }
    }
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    unsafe {
        libc::setrlimit(resource, &lim);
    }
}

fn unshare_network() -> bool {
    unsafe {
        libc::unshare(libc::CLONE_NEWNET) == 0
            || libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET) == 0
    }
}

fn capture(mut r: impl Read + Send + 'static) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut kept: Vec<u8> = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match r.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    kept.extend_from_slice(&buf[..n]);
                    if kept.len() > 2 * CAPTURE_BYTES {
                        kept.drain(..kept.len() - CAPTURE_BYTES);
                    }
                }
            }
        }
        if kept.len() > CAPTURE_BYTES {
            kept.drain(..kept.len() - CAPTURE_BYTES);
        }
        String::from_utf8_lossy(&kept).into_owned()
    })
}

fn kill_group(child: &Child) {
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
}

impl LocalSandbox {
    fn spawn(&self, req: &ExecutionRequest, dir: &std::path::Path) -> std::io::Result<Child> {
        let script = dir.join("main.py");
        std::fs::write(&script, &req.program)?;
        let (program, args) = self
            .interpreter
            .split_first()
            .ok_or_else(|| std::io::Error::other("empty interpreter command"))?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .arg(&script)
            .current_dir(dir)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("HOME", dir)
            .env("TMPDIR", dir)
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let memory = self.memory_bytes;
        let cpu = req.timeout_s.ceil() as u64 + 1;
        let network = self.network;
        unsafe {
            cmd.pre_exec(move || {
                libc::setpgid(0, 0);
                if network != NetworkPolicy::Allow
                    && !unshare_network()
                    && network == NetworkPolicy::Isolate
                {
                    return Err(std::io::Error::other("cannot isolate network"));
                }
                set_limit(libc::RLIMIT_AS, memory);
                set_limit(libc::RLIMIT_CPU, cpu);
                set_limit(libc::RLIMIT_CORE, 0);
                Ok(())
            });
        }
        cmd.spawn()
    }

    fn error_verdict(
        req: &ExecutionRequest,
        message: String,
        started: Instant,
    ) -> ExecutionVerdict {
        ExecutionVerdict {
            candidate_id: req.candidate_id.clone(),
            status: VerdictStatus::Error,
            exit_code: None,
            stdout_tail: String::new(),
            stderr_tail: tail(&message),
            duration_ms: started.elapsed().as_millis() as u64,
        }
    }
}

impl Executor for LocalSandbox {
    fn execute(&self, req: &ExecutionRequest) -> Result<ExecutionVerdict, SandboxError> {
        req.validate()?;
        let started = Instant::now();
        let dir = match tempfile::tempdir() {
            Ok(d) => d,
            Err(e) => {
                return Ok(Self::error_verdict(
                    req,
                    format!("scratch directory: {e}"),
                    started,
                ))
            }
        };
        let mut child = match self.spawn(req, dir.path()) {
            Ok(c) => c,
            Err(e) => return Ok(Self::error_verdict(req, format!("launch: {e}"), started)),
        };
        let out = capture(child.stdout.take().expect("piped stdout"));
        let err = capture(child.stderr.take().expect("piped stderr"));
        let deadline = started + Duration::from_secs_f64(req.timeout_s);
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(s)) => break Some(s),
                Ok(None) if Instant::now() >= deadline => {
                    timed_out = true;
                    kill_group(&child);
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => thread::sleep(POLL),
                Err(_) => {
                    kill_group(&child);
                    break child.wait().ok();
                }
            }
        };
        // Stray grandchildren would keep the pipes open.
        kill_group(&child);
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        let duration_ms = started.elapsed().as_millis() as u64;
        let (status, exit_code) = match status {
            _ if timed_out => (VerdictStatus::Timeout, None),
            Some(s) => match s.code() {
                Some(0) => (VerdictStatus::Pass, Some(0)),
                Some(c) => (VerdictStatus::Fail, Some(c)),
                // Killed by a signal: CPU or memory limit, or a crash.
                None => (VerdictStatus::Fail, None),
            },
            None => (VerdictStatus::Error, None),
        };
        Ok(ExecutionVerdict {
            candidate_id: req.candidate_id.clone(),
            status,
            exit_code,
            stdout_tail: tail(&stdout),
            stderr_tail: tail(&stderr),
            duration_ms,
        })
    }
}
