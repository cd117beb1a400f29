//! Sampling and parsing `(response, tests)` pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::Gateway;
use crate::instruct::{
    gateway_drop_reason, prompt_drop_reason, Dropped, StageError, GENERATION_TEMPERATURE,
};
use crate::parallel;
use crate::prompt::{build_response_prompt, inline_test_coin, PromptPool};
use crate::rng;
use crate::InstructionRecord;

pub const DEFAULT_SAMPLES: usize = 10;
pub const RESPONSE_TAG: &str = "[Response]";
pub const TESTS_TAG: &str = "[Tests]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseCandidate {
    pub candidate_id: String,
    pub instruction_id: String,
    pub sample_index: usize,
    pub response_text: String,
    pub response_code: String,
    pub tests_code: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing {0}")]
    MissingSection(&'static str),
    #[error("no code block in {0}")]
    NoCode(&'static str),
}

impl ParseError {
    pub fn reason(&self) -> &'static str {
        match self {
            ParseError::MissingSection(RESPONSE_TAG) => "no-response",
            ParseError::MissingSection(_) => "no-tests",
            ParseError::NoCode(RESPONSE_TAG) => "no-response-code",
            ParseError::NoCode(_) => "no-tests-code",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub response_text: String,
    pub response_code: String,
    pub tests_code: String,
}

fn tag_line(text: &str, tag: &str, from: usize) -> Option<(usize, usize)> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        if start < from {
            continue;
        }
        if line.trim_end_matches(['\n', '\r']) == tag {
            return Some((start, offset));
        }
    }
    None
}

/// Fenced blocks in document order. An unterminated fence runs to the end.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match current.as_mut() {
            None if is_fence => current = Some(Vec::new()),
            None => {}
            Some(lines) if is_fence && line.trim() == "```" => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            Some(lines) => lines.push(line),
        }
    }
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
        .into_iter()
        .filter(|b| !b.trim().is_empty())
        .collect()
}

/// Splits `raw` at line-start `[Response]` and `[Tests]` tags and joins each
/// section's fenced code with newlines.
pub fn parse_response_and_tests(raw: &str) -> Result<ParsedResponse, ParseError> {
    let (_, resp_start) =
        tag_line(raw, RESPONSE_TAG, 0).ok_or(ParseError::MissingSection(RESPONSE_TAG))?;
    let (tests_tag, tests_start) =
        tag_line(raw, TESTS_TAG, resp_start).ok_or(ParseError::MissingSection(TESTS_TAG))?;
    let response = &raw[resp_start..tests_tag];
    let tests = &raw[tests_start..];
    let response_code = fenced_blocks(response);
    if response_code.is_empty() {
        return Err(ParseError::NoCode(RESPONSE_TAG));
    }
    let tests_code = fenced_blocks(tests);
    if tests_code.is_empty() {
        return Err(ParseError::NoCode(TESTS_TAG));
    }
    Ok(ParsedResponse {
        response_text: response.trim().to_string(),
        response_code: response_code.join("\n"),
        tests_code: tests_code.join("\n"),
    })
}

/// The exact program sent to the sandbox.
pub fn assemble_validation_program(c: &ResponseCandidate) -> String {
    format!("{}\n\n{}", c.response_code, c.tests_code)
}

pub fn candidate_id(instruction_id: &str, sample_index: usize) -> String {
    format!("{instruction_id}/s{sample_index}")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionOutcome {
    pub candidates: Vec<ResponseCandidate>,
    pub drops: Vec<Dropped>,
}

/// Samples `n` outputs for one instruction. The prompt ends at the open
/// `[Response]` slot, so the tag is restored before parsing.
pub fn generate_candidates<R: Rng + ?Sized>(
    instr: &InstructionRecord,
    gateway: &Gateway,
    pool: &PromptPool,
    rng: &mut R,
    n: usize,
) -> Result<InstructionOutcome, StageError> {
    let mut out = InstructionOutcome::default();
    let inline = inline_test_coin(rng);
    let drop_all = |reason: &str| {
        (0..n)
            .map(|i| Dropped::new(candidate_id(&instr.instruction_id, i), reason))
            .collect::<Vec<_>>()
    };
    let bundle = match build_response_prompt(instr, pool, rng, inline) {
        Ok(b) => b,
        Err(e) => match prompt_drop_reason(&e) {
            Some(reason) => {
                out.drops = drop_all(reason);
                return Ok(out);
            }
            None => return Err(e.into()),
        },
    };
    let req = gateway
        .request_from_bundle(&bundle, format!("response:{}", instr.instruction_id), n)
        .with_temperature(GENERATION_TEMPERATURE);
    let result = match gateway.generate(&req) {
        Ok(r) => r,
        Err(e) => match gateway_drop_reason(&e) {
            Some(reason) => {
                out.drops = drop_all(reason);
                return Ok(out);
            }
            None => return Err(e.into()),
        },
    };
    for (i, sample) in result.samples.into_iter().enumerate() {
        let id = candidate_id(&instr.instruction_id, i);
        match parse_response_and_tests(&format!("{RESPONSE_TAG}\n{}", sample.text)) {
            Ok(p) => out.candidates.push(ResponseCandidate {
                candidate_id: id,
                instruction_id: instr.instruction_id.clone(),
                sample_index: i,
                response_text: p.response_text,
                response_code: p.response_code,
                tests_code: p.tests_code,
                raw: sample.text,
            }),
            Err(e) => out.drops.push(Dropped::new(id, e.reason())),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseConfig {
    pub master_seed: u64,
    pub n_samples: usize,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        ResponseConfig {
            master_seed: 0,
            n_samples: DEFAULT_SAMPLES,
        }
    }
}

pub fn process_instruction(
    instr: &InstructionRecord,
    gateway: &Gateway,
    pool: &PromptPool,
    config: &ResponseConfig,
) -> Result<InstructionOutcome, StageError> {
    let mut r = rng::stream(config.master_seed, &["response", &instr.instruction_id]);
    generate_candidates(instr, gateway, pool, &mut r, config.n_samples)
}

/// Processes instructions in parallel, in input order.
pub fn process_instructions(
    instrs: &[InstructionRecord],
    gateway: &Gateway,
    pool: &PromptPool,
    config: &ResponseConfig,
) -> Result<Vec<InstructionOutcome>, StageError> {
    parallel::map(instrs, gateway.max_in_flight(), |_, i| {
        process_instruction(i, gateway, pool, config)
    })
    .into_iter()
    .collect()
}
