#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicIsize, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

use codealign::gateway::{
    Backend, BackendError, Completion, FnBackend, GenerationRequest, RetryConfig, ScriptedMock,
};
use codealign::pipeline::PipelineConfig;
use codealign::sandbox::{ExecutionRequest, Executor, LocalSandbox};
use codealign::seed::{self, Curated, CurationConfig, ExternalCheckerConfig};
use codealign::{Gateway, PromptPool};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(rel: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(rel)
}

pub fn golden(rel: &str) -> PathBuf {
    manifest_dir().join("tests/golden").join(rel)
}

/// Compares `actual` with a golden file. `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(rel: &str, actual: &str) {
    let path = golden(rel);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (set UPDATE_GOLDEN=1 to create it)", path.display()));
    assert!(
        expected == actual,
        "{} differs from the generated output",
        path.display()
    );
}

pub fn unbound_checker() -> ExternalCheckerConfig {
    ExternalCheckerConfig::new(vec![
        "python3".into(),
        manifest_dir()
            .join("scripts/check_unbound.py")
            .to_string_lossy()
            .into_owned(),
    ])
}

/// Name of the function in a docstring-review prompt.
fn reviewed_function(req: &GenerationRequest) -> String {
    let user = &req.messages.last().expect("user turn").content;
    user.lines()
        .find_map(|l| l.strip_prefix("def "))
        .and_then(|rest| rest.split('(').next())
        .unwrap_or_default()
        .to_string()
}

/// Docstring reviewer: POOR for `poor`, an unusable reply for `garbled`,
/// GOOD otherwise.
pub fn reviewer(poor: &'static [&'static str], garbled: &'static [&'static str]) -> Gateway {
    Gateway::new(
        FnBackend::new(move |req: &GenerationRequest| {
            let name = reviewed_function(req);
            let verdict = if poor.contains(&name.as_str()) {
                "POOR"
            } else if garbled.contains(&name.as_str()) {
                "It depends on the context."
            } else {
                "GOOD"
            };
            Ok(vec![verdict.to_string(); req.n_samples])
        }),
        4,
    )
}

pub const FUNNEL_POOR: &[&str] = &["mystery_math", "helper2", "do_stuff"];
pub const FUNNEL_GARBLED: &[&str] = &["odd_doc"];

/// `(doc_id, function name)` of every seed expected to survive the funnel.
pub const FUNNEL_SURVIVORS: [(&str, &str); 18] = [
    ("a_core.py", "circle_area"),
    ("a_core.py", "clamp"),
    ("a_core.py", "file_stem"),
    ("a_core.py", "gcd_list"),
    ("a_core.py", "sign"),
    ("a_core.py", "word_histogram"),
    ("b_text.py", "hamming_distance"),
    ("b_text.py", "is_palindrome"),
    ("b_text.py", "median_of"),
    ("b_text.py", "pairwise_sums"),
    ("b_text.py", "slugify"),
    ("b_text.py", "to_json"),
    ("c_misc.py", "chunked"),
    ("c_misc.py", "flatten"),
    ("c_misc.py", "reverse_words"),
    ("c_misc.py", "running_total"),
    ("d_dedup.py", "count_vowels"),
    ("d_dedup.py", "merge_sorted"),
];

/// Expected `(stage, input, removed)` for the funnel fixture.
pub const FUNNEL_COUNTS: [(&str, u64, u64); 7] = [
    ("extract", 5, 0),
    ("imports", 40, 0),
    ("decontaminate", 40, 4),
    ("returns", 36, 5),
    ("typecheck", 31, 5),
    ("docstring", 26, 4),
    ("dedup", 22, 4),
];

pub fn function_name(signature: &str) -> String {
    signature
        .trim_start_matches("def ")
        .split('(')
        .next()
        .unwrap_or_default()
        .to_string()
}

pub fn funnel_config() -> CurationConfig {
    CurationConfig {
        benchmark_strings: seed::load_benchmark_strings(&fixture("funnel/benchmark.txt")).unwrap(),
        checker: Some(unbound_checker()),
        ..CurationConfig::default()
    }
}

pub fn run_funnel() -> Curated {
    let docs = seed::load_corpus(&fixture("funnel/corpus"), "py", "python").unwrap();
    let gw = reviewer(FUNNEL_POOR, FUNNEL_GARBLED);
    seed::curate_seeds(docs, &funnel_config(), Some(&gw), &PromptPool::builtin()).unwrap()
}

// ---------------------------------------------------------------------------
// Stub execution service

#[derive(Debug, Clone, serde::Deserialize)]
pub struct WireRequest {
    pub language: String,
    pub code: String,
    pub timeout_s: f64,
}

pub enum Reply {
    Verdict(Value),
    Raw(u16, String),
}

type Handler = dyn Fn(&WireRequest) -> Reply + Send + Sync;

/// In-process HTTP service speaking the execution wire protocol. Tracks the
/// peak number of concurrently handled requests.
pub struct StubSandbox {
    pub url: String,
    pub peak: Arc<AtomicUsize>,
    pub served: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<Value>>>,
    server: Arc<tiny_http::Server>,
    acceptor: Option<JoinHandle<()>>,
}

pub fn verdict(status: &str, exit_code: Option<i32>, duration_ms: u64) -> Value {
    json!({"status": status, "exit_code": exit_code, "stdout": "", "stderr": "", "duration_ms": duration_ms})
}

impl StubSandbox {
    pub fn start(handler: impl Fn(&WireRequest) -> Reply + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub"));
        let port = server.server_addr().to_ip().expect("tcp listener").port();
        let handler: Arc<Handler> = Arc::new(handler);
        let peak = Arc::new(AtomicUsize::new(0));
        let served = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let acceptor = {
            let (server, peak, served, bodies) =
                (server.clone(), peak.clone(), served.clone(), bodies.clone());
            thread::spawn(move || {
                for request in server.incoming_requests() {
                    let (handler, peak, served, bodies, in_flight) = (
                        handler.clone(),
                        peak.clone(),
                        served.clone(),
                        bodies.clone(),
                        in_flight.clone(),
                    );
                    thread::spawn(move || {
                        serve(request, &*handler, &peak, &served, &bodies, &in_flight)
                    });
                }
            })
        };
        StubSandbox {
            url: format!("http://127.0.0.1:{port}"),
            peak,
            served,
            bodies,
            server,
            acceptor: Some(acceptor),
        }
    }

    /// Runs each program for real in the local jail.
    pub fn executing() -> Self {
        let jail = LocalSandbox::default();
        Self::start(move |req| {
            let v = jail
                .execute(
                    &ExecutionRequest::new("stub", req.code.clone()).with_timeout(req.timeout_s),
                )
                .expect("local jail");
            Reply::Verdict(json!({
                "status": v.status.as_str(),
                "exit_code": v.exit_code,
                "stdout": v.stdout_tail,
                "stderr": v.stderr_tail,
                "duration_ms": v.duration_ms,
            }))
        })
    }

    /// Decides by marker comments: `# stub: fail`, `# stub: timeout`,
    /// `# stub: error`; anything else passes. Each request is held for `hold`.
    pub fn scripted(hold: Duration) -> Self {
        Self::start(move |req| {
            thread::sleep(hold);
            Reply::Verdict(if req.code.contains("# stub: fail") {
                verdict("fail", Some(1), 5)
            } else if req.code.contains("# stub: timeout") {
                verdict("timeout", None, (req.timeout_s * 1000.0) as u64)
            } else if req.code.contains("# stub: error") {
                verdict("error", None, 1)
            } else {
                verdict("pass", Some(0), 5)
            })
        })
    }
}

fn serve(
    mut request: tiny_http::Request,
    handler: &Handler,
    peak: &AtomicUsize,
    served: &AtomicUsize,
    bodies: &Mutex<Vec<Value>>,
    in_flight: &AtomicUsize,
) {
    let json_header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
    match (request.method(), request.url()) {
        (tiny_http::Method::Get, "/healthz") => {
            let _ = request.respond(tiny_http::Response::from_string("ok"));
        }
        (tiny_http::Method::Post, "/execute") => {
            let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            let mut body = String::new();
            let _ = request.as_reader().read_to_string(&mut body);
            let parsed: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
            bodies.lock().unwrap().push(parsed.clone());
            let reply = match serde_json::from_value::<WireRequest>(parsed) {
                Ok(req) => handler(&req),
                Err(e) => Reply::Raw(400, e.to_string()),
            };
            served.fetch_add(1, Ordering::SeqCst);
            in_flight.fetch_sub(1, Ordering::SeqCst);
            let _ = match reply {
                Reply::Verdict(v) => request.respond(
                    tiny_http::Response::from_string(v.to_string()).with_header(json_header),
                ),
                Reply::Raw(code, body) => {
                    request.respond(tiny_http::Response::from_string(body).with_status_code(code))
                }
            };
        }
        _ => {
            let _ = request
                .respond(tiny_http::Response::from_string("not found").with_status_code(404));
        }
    }
}

impl Drop for StubSandbox {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

// ---------------------------------------------------------------------------
// Scripted model for the end-to-end fixture

const CONCEPT_BANK: [&str; 10] = [
    "iteration",
    "list comprehension",
    "string slicing",
    "dictionary lookup",
    "error handling",
    "integer arithmetic",
    "sorting",
    "set operations",
    "generator expressions",
    "early return",
];

fn id_hash(id: &str) -> usize {
    id.bytes()
        .fold(7usize, |h, b| h.wrapping_mul(31).wrapping_add(b as usize))
}

fn concepts_for(seed_id: &str) -> String {
    let h = id_hash(seed_id);
    (0..3)
        .map(|k| CONCEPT_BANK[(h + 3 * k) % CONCEPT_BANK.len()])
        .collect::<Vec<_>>()
        .join(", ")
}

fn response_sample(instruction_id: &str, i: usize, n: usize) -> String {
    if i + 1 == n {
        return "I am not able to write tests for this one.".into();
    }
    let marker = match i % 4 {
        1 => "  # stub: fail",
        2 => "  # stub: timeout",
        _ => "",
    };
    format!(
        "Sample {i} for {instruction_id}: keep the first {i} sorted values.\n\n\
         ```python\ndef task(xs):\n    return sorted(xs)[:{i}]\n```\n\n\
         [Tests]\n```python\nassert task([3, 1, 2]) == sorted([3, 1, 2])[:{i}]{marker}\n```\n"
    )
}

/// Deterministic answers keyed by request id. Every instruction gets at
/// least one passing sample when `n >= 2`.
pub fn scripted_reply(req: &GenerationRequest) -> Result<Vec<String>, BackendError> {
    let n = req.n_samples;
    let (kind, id) = req
        .request_id
        .split_once(':')
        .unwrap_or((&req.request_id, ""));
    Ok(match kind {
        "docqc" => vec!["GOOD".into(); n],
        "concepts" => vec![concepts_for(id); n],
        "instruction" => vec![
            format!("Write a Python function for task {id} that takes a list of integers and returns them sorted in ascending order, truncated to a caller-chosen length.");
            n
        ],
        "response" => (0..n).map(|i| response_sample(id, i, n)).collect(),
        _ => return Err(BackendError::Fatal(format!("unexpected request {}", req.request_id))),
    })
}

pub fn scripted_model() -> FnBackend {
    FnBackend::new(scripted_reply)
}

/// Shares one backend between a gateway and the test.
pub struct Shared<B>(pub Arc<B>);

impl<B: Backend> Backend for Shared<B> {
    fn complete(&self, req: &GenerationRequest) -> Result<Completion, BackendError> {
        self.0.complete(req)
    }
}

/// Replays a transcript but loses the connection once `budget` response
/// requests have been answered.
pub struct Flaky {
    pub inner: ScriptedMock,
    pub budget: AtomicIsize,
}

impl Backend for Flaky {
    fn complete(&self, req: &GenerationRequest) -> Result<Completion, BackendError> {
        if req.request_id.starts_with("response:")
            && self.budget.fetch_sub(1, Ordering::SeqCst) <= 0
        {
            return Err(BackendError::Transient("connection reset by peer".into()));
        }
        self.inner.complete(req)
    }
}

pub fn no_retry(gw: Gateway) -> Gateway {
    gw.with_retry(RetryConfig {
        max_attempts: 1,
        backoff_ms: 0,
    })
}

pub fn e2e_config(out: &Path, transcript: &Path, sandbox_url: &str) -> PipelineConfig {
    let mut c = PipelineConfig {
        corpus: fixture("e2e/corpus"),
        output_dir: out.to_path_buf(),
        seed: 1234,
        benchmark: Some(fixture("e2e/benchmark.txt")),
        shard_size: 4,
        ..PipelineConfig::default()
    };
    c.curation.checker = Some(unbound_checker());
    c.backend.transcript_path = Some(transcript.to_path_buf());
    c.sandbox.url = Some(sandbox_url.to_string());
    c.sandbox.timeout_s = 2.0;
    c
}

/// Selection fixture: `statuses[i]` lists the verdicts of instruction `i`'s
/// samples.
pub struct Verdicts {
    pub instructions: Vec<codealign::InstructionRecord>,
    pub candidates: Vec<codealign::ResponseCandidate>,
    pub verdicts: Vec<codealign::ExecutionVerdict>,
}

pub fn verdict_fixture(statuses: &[Vec<codealign::VerdictStatus>]) -> Verdicts {
    use codealign::prompt::{Category, Difficulty};
    let mut out = Verdicts {
        instructions: Vec::new(),
        candidates: Vec::new(),
        verdicts: Vec::new(),
    };
    for (i, samples) in statuses.iter().enumerate() {
        let instruction_id = format!("doc#{i:04}/i0");
        out.instructions.push(codealign::InstructionRecord {
            instruction_id: instruction_id.clone(),
            seed_id: format!("doc#{i:04}"),
            property: codealign::TaskProperty {
                category: Category::Function,
                language: "Python".into(),
                difficulty: Difficulty::Easy,
                concepts: vec!["loops".into()],
            },
            instruction: format!("task {i}"),
            prompt_version: "v1".into(),
        });
        for (k, status) in samples.iter().enumerate() {
            let candidate_id = codealign::response::candidate_id(&instruction_id, k);
            out.candidates.push(codealign::ResponseCandidate {
                candidate_id: candidate_id.clone(),
                instruction_id: instruction_id.clone(),
                sample_index: k,
                response_text: format!("answer {i}.{k}"),
                response_code: "x = 1".into(),
                tests_code: "assert x == 1".into(),
                raw: String::new(),
            });
            out.verdicts.push(codealign::ExecutionVerdict {
                candidate_id,
                status: *status,
                exit_code: None,
                stdout_tail: String::new(),
                stderr_tail: String::new(),
                duration_ms: 1,
            });
        }
    }
    out
}

impl Verdicts {
    pub fn select(
        &self,
        strategy: &codealign::SelectionStrategy,
    ) -> (Vec<codealign::DatasetRecord>, codealign::StageStats) {
        codealign::dataset::select(
            &self.instructions,
            &self.candidates,
            &self.verdicts,
            strategy,
        )
        .unwrap()
    }
}
