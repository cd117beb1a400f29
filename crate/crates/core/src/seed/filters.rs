use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use tree_sitter::Node;

use super::python;
use super::{CurationError, SeedFunction};
use crate::gateway::{Gateway, GatewayError};
use crate::parallel;
use crate::prompt::{self, PromptPool};

/// Why a function left a stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub seed_id: String,
    pub reason: String,
}

impl Removal {
    fn new(seed: &SeedFunction, reason: &str) -> Self {
        Self {
            seed_id: seed.seed_id.clone(),
            reason: reason.to_string(),
        }
    }
}

fn contains_valued_return(node: Node<'_>) -> bool {
    if node.kind() == "return_statement" && node.named_child_count() > 0 {
        return true;
    }
    let mut cursor = node.walk();
    let found = node.named_children(&mut cursor).any(contains_valued_return);
    found
}

/// True when the function has at least one `return <expr>` anywhere in it.
pub fn has_valued_return(func: &SeedFunction) -> bool {
    let source = func.source();
    python::parse(source).is_some_and(|tree| contains_valued_return(tree.root_node()))
}

pub fn filter_returns(fns: Vec<SeedFunction>) -> (Vec<SeedFunction>, Vec<Removal>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for f in fns {
        if has_valued_return(&f) {
            kept.push(f);
        } else {
            removed.push(Removal::new(&f, "no-valued-return"));
        }
    }
    (kept, removed)
}

/// Drops every function whose rendered text contains any benchmark string as
/// an exact, case-sensitive byte substring. Empty strings are ignored.
pub fn decontaminate(
    fns: Vec<SeedFunction>,
    benchmark_strings: &[String],
) -> (Vec<SeedFunction>, Vec<Removal>) {
    let needles: Vec<&str> = benchmark_strings
        .iter()
        .map(String::as_str)
        .filter(|s| !s.is_empty())
        .collect();
    if needles.is_empty() {
        return (fns, Vec::new());
    }
    let matcher = AhoCorasick::new(&needles).expect("benchmark automaton builds");
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for f in fns {
        if matcher.is_match(&f.rendered) {
            removed.push(Removal::new(&f, "benchmark-substring"));
        } else {
            kept.push(f);
        }
    }
    (kept, removed)
}

/// External static analyzer invocation.
///
/// `command` is the program followed by its arguments. An argument equal to
/// `{file}` is replaced by the temporary file path; otherwise the path is
/// appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCheckerConfig {
    pub command: Vec<String>,
    #[serde(default = "default_checker_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_checker_workers")]
    pub workers: usize,
}

fn default_checker_timeout() -> f64 {
    60.0
}

fn default_checker_workers() -> usize {
    4
}

impl ExternalCheckerConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            timeout_s: default_checker_timeout(),
            workers: default_checker_workers(),
        }
    }
}

/// Largest "N error(s)" count mentioned in the analyzer output, if any.
fn reported_errors(output: &str) -> Option<u64> {
    let mut found = None;
    for line in output.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        for pair in words.windows(2) {
            let noun = pair[1].trim_end_matches(|c: char| !c.is_alphanumeric());
            if noun == "error" || noun == "errors" {
                if let Ok(n) = pair[0].parse::<u64>() {
                    found = Some(found.map_or(n, |m: u64| m.max(n)));
                }
            }
        }
    }
    found
}

enum Check {
    Pass,
    Fail,
    Timeout,
}

fn run_checker(config: &ExternalCheckerConfig, rendered: &str) -> Result<Check, CurationError> {
    let (program, args) = config
        .command
        .split_first()
        .ok_or_else(|| CurationError::AnalyzerUnavailable("empty analyzer command".into()))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("seed.py");
    std::fs::write(&path, rendered)?;
    let path_str = path.to_string_lossy().into_owned();
    let mut substituted = false;
    let mut argv: Vec<String> = args
        .iter()
        .map(|a| {
            if a == "{file}" {
                substituted = true;
                path_str.clone()
            } else {
                a.clone()
            }
        })
        .collect();
    if !substituted {
        argv.push(path_str);
    }
    let mut child = Command::new(program)
        .args(&argv)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| CurationError::AnalyzerUnavailable(format!("{program}: {e}")))?;

    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    let deadline = Instant::now() + Duration::from_secs_f64(config.timeout_s);
    let status = loop {
        match child.try_wait()? {
            Some(status) => break Some(status),
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };
    let output = format!(
        "{}\n{}",
        out_reader.join().unwrap_or_default(),
        err_reader.join().unwrap_or_default()
    );
    Ok(match status {
        None => Check::Timeout,
        Some(s) if s.success() && reported_errors(&output).unwrap_or(0) == 0 => Check::Pass,
        Some(_) => Check::Fail,
    })
}

/// Keeps the functions whose rendered text passes the analyzer with zero
/// errors. A missing or unlaunchable analyzer aborts the stage.
pub fn typecheck_filter(
    fns: Vec<SeedFunction>,
    checker: &ExternalCheckerConfig,
) -> Result<(Vec<SeedFunction>, Vec<Removal>), CurationError> {
    let results = parallel::map(&fns, checker.workers, |_, f| {
        run_checker(checker, &f.rendered)
    });
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (f, result) in fns.into_iter().zip(results) {
        match result? {
            Check::Pass => kept.push(f),
            Check::Fail => removed.push(Removal::new(&f, "type-check")),
            Check::Timeout => removed.push(Removal::new(&f, "type-check-timeout")),
        }
    }
    Ok((kept, removed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocstringVerdict {
    Good,
    Poor,
}

/// Reads the verdict from the first word of the reply, ignoring case.
pub fn parse_verdict(text: &str) -> Option<DocstringVerdict> {
    let word: String = text
        .trim_start()
        .chars()
        .skip_while(|c| !c.is_alphanumeric())
        .take_while(|c| c.is_alphanumeric())
        .collect();
    match word.to_ascii_uppercase().as_str() {
        "GOOD" => Some(DocstringVerdict::Good),
        "POOR" => Some(DocstringVerdict::Poor),
        _ => None,
    }
}

/// Classifies each docstring through the model and keeps the "good" ones.
///
/// Unparseable replies and per-request backend failures both remove the
/// function (with distinct reasons). Only an unusable backend configuration
/// aborts the stage.
pub fn docstring_quality_filter(
    fns: Vec<SeedFunction>,
    gateway: &Gateway,
    pool: &PromptPool,
) -> Result<(Vec<SeedFunction>, Vec<Removal>), CurationError> {
    let outcomes = parallel::map(&fns, gateway.max_in_flight(), |_, f| {
        let bundle = prompt::build_docstring_prompt(f, pool);
        let request = gateway
            .request_from_bundle(&bundle, format!("docqc:{}", f.seed_id), 1)
            .with_temperature(0.0);
        gateway.generate(&request)
    });
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (f, outcome) in fns.into_iter().zip(outcomes) {
        match outcome {
            Ok(result) => match result.samples.first().and_then(|s| parse_verdict(&s.text)) {
                Some(DocstringVerdict::Good) => kept.push(f),
                Some(DocstringVerdict::Poor) => removed.push(Removal::new(&f, "poor-docstring")),
                None => removed.push(Removal::new(&f, "unparseable-verdict")),
            },
            Err(e @ GatewayError::Config(_)) => {
                return Err(CurationError::Gateway {
                    stage: "docstring",
                    source: e,
                })
            }
            Err(e) => {
                log::warn!("docstring check for {} failed: {e}", f.seed_id);
                removed.push(Removal::new(&f, "backend-error"));
            }
        }
    }
    Ok((kept, removed))
}
