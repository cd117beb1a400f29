//! Concept mining and instruction generation.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError};
use crate::parallel;
use crate::prompt::{
    self, build_concepts_prompt, build_instruction_prompt, build_seed_instruction_prompt, Category,
    Difficulty, PromptError, PromptPool, TaskProperty,
};
use crate::rng;
use crate::seed::SeedFunction;

pub const DEFAULT_CONCEPT_CAP: usize = 8;
pub const DEFAULT_LANGUAGE: &str = "Python";
pub const GENERATION_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptList {
    pub seed_id: String,
    pub concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction_id: String,
    pub seed_id: String,
    pub property: TaskProperty,
    pub instruction: String,
    pub prompt_version: String,
}

/// A record that left a stage without output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub id: String,
    pub reason: String,
}

impl Dropped {
    pub fn new(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Dropped {
            id: id.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Per-request failures that cost one record rather than the whole stage.
/// Anything else (exhausted retries, misconfiguration) aborts.
pub(crate) fn gateway_drop_reason(err: &GatewayError) -> Option<&'static str> {
    match err {
        GatewayError::Unscripted(_) => Some("unscripted"),
        GatewayError::Backend(_) => Some("backend-error"),
        GatewayError::PromptTooLong { .. } => Some("prompt-too-long"),
        GatewayError::SampleCount { .. } => Some("sample-count"),
        _ => None,
    }
}

pub(crate) fn prompt_drop_reason(err: &PromptError) -> Option<&'static str> {
    match err {
        PromptError::DelimiterInInput => Some("prompt-delimiter"),
        PromptError::EmptyConcepts => Some("empty-concepts"),
        _ => None,
    }
}

fn clean_item(item: &str) -> String {
    item.trim()
        .trim_matches(|c| c == '\'' || c == '"' || c == '`')
        .trim()
        .trim_end_matches('.')
        .trim()
        .to_string()
}

/// Trims, drops empties, removes case-insensitive duplicates (first spelling
/// wins) and truncates to `cap`.
pub fn normalize_concepts(items: impl IntoIterator<Item = String>, cap: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in items {
        let item = clean_item(&item);
        if item.is_empty() || !seen.insert(item.to_lowercase()) {
            continue;
        }
        out.push(item);
        if out.len() == cap {
            break;
        }
    }
    out
}

fn quoted_strings(inner: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = inner.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c != '\'' && c != '"' {
            continue;
        }
        let start = i + 1;
        let mut end = None;
        for (j, d) in chars.by_ref() {
            if d == c {
                end = Some(j);
                break;
            }
        }
        match end {
            Some(j) => out.push(inner[start..j].to_string()),
            None => break,
        }
    }
    out
}

fn parse_bracketed(text: &str) -> Option<Vec<String>> {
    let open = text.find('[')?;
    let close = open + text[open..].find(']')?;
    let inner = &text[open + 1..close];
    let quoted = quoted_strings(inner);
    if !quoted.is_empty() {
        return Some(quoted);
    }
    Some(inner.split(',').map(str::to_string).collect())
}

fn parse_comma_line(text: &str) -> Option<Vec<String>> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty())?;
    // Sentences are prose, not lists.
    if line.ends_with(['.', '!', '?', ':']) {
        return None;
    }
    let items: Vec<&str> = line.split(',').collect();
    let limit = if items.len() == 1 { 6 } else { 10 };
    if items.iter().any(|i| i.split_whitespace().count() > limit) {
        return None;
    }
    Some(items.into_iter().map(str::to_string).collect())
}

/// Parses model output into concepts: a bracketed list first, then a bare
/// comma-separated line. `None` when neither yields anything.
pub fn parse_concepts(text: &str, cap: usize) -> Option<Vec<String>> {
    let text = text.trim();
    let items = match parse_bracketed(text) {
        Some(items) => items,
        None => parse_comma_line(text)?,
    };
    Some(normalize_concepts(items, cap)).filter(|c| !c.is_empty())
}

/// Strips leading section tags a model might echo back.
pub fn clean_instruction(text: &str) -> String {
    let mut s = text.trim();
    loop {
        let before = s;
        for tag in ["[Instruction]", "[Property]"] {
            if let Some(rest) = s.strip_prefix(tag) {
                s = rest.trim_start();
            }
        }
        if s == before {
            break;
        }
    }
    let end = [
        "\n[Response]",
        "\n[Tests]",
        "\n[Property]",
        "\n[Concepts]",
        "\n[Code]",
    ]
    .iter()
    .filter_map(|t| s.find(t))
    .min()
    .unwrap_or(s.len());
    s[..end].trim().to_string()
}

pub fn extract_concepts<R: Rng + ?Sized>(
    seed: &SeedFunction,
    gateway: &Gateway,
    pool: &PromptPool,
    rng: &mut R,
    cap: usize,
) -> Result<Result<ConceptList, Dropped>, StageError> {
    let bundle = match build_concepts_prompt(seed, pool, rng) {
        Ok(b) => b,
        Err(e) => match prompt_drop_reason(&e) {
            Some(reason) => return Ok(Err(Dropped::new(&seed.seed_id, reason))),
            None => return Err(e.into()),
        },
    };
    let req = gateway
        .request_from_bundle(&bundle, format!("concepts:{}", seed.seed_id), 1)
        .with_temperature(GENERATION_TEMPERATURE);
    let text = match gateway.generate(&req) {
        Ok(r) => r.samples[0].text.clone(),
        Err(e) => match gateway_drop_reason(&e) {
            Some(reason) => return Ok(Err(Dropped::new(&seed.seed_id, reason))),
            None => return Err(e.into()),
        },
    };
    Ok(match parse_concepts(&text, cap) {
        Some(concepts) => Ok(ConceptList {
            seed_id: seed.seed_id.clone(),
            concepts,
        }),
        None => Err(Dropped::new(&seed.seed_id, "concepts-parse-failure")),
    })
}

fn finish_instruction(
    gateway: &Gateway,
    bundle: prompt::PromptBundle,
    instruction_id: String,
    seed_id: &str,
    property: TaskProperty,
    pool: &PromptPool,
) -> Result<Result<InstructionRecord, Dropped>, StageError> {
    let req = gateway
        .request_from_bundle(&bundle, format!("instruction:{instruction_id}"), 1)
        .with_temperature(GENERATION_TEMPERATURE);
    let text = match gateway.generate(&req) {
        Ok(r) => r.samples[0].text.clone(),
        Err(e) => match gateway_drop_reason(&e) {
            Some(reason) => return Ok(Err(Dropped::new(instruction_id, reason))),
            None => return Err(e.into()),
        },
    };
    let instruction = clean_instruction(&text);
    if instruction.is_empty() {
        return Ok(Err(Dropped::new(instruction_id, "empty-instruction")));
    }
    Ok(Ok(InstructionRecord {
        instruction_id,
        seed_id: seed_id.to_string(),
        property,
        instruction,
        prompt_version: pool.version.clone(),
    }))
}

pub fn generate_instruction<R: Rng + ?Sized>(
    concepts: &ConceptList,
    instruction_id: String,
    gateway: &Gateway,
    pool: &PromptPool,
    rng: &mut R,
) -> Result<Result<InstructionRecord, Dropped>, StageError> {
    let property = prompt::sample_property(rng, &concepts.concepts, DEFAULT_LANGUAGE)?;
    let bundle = build_instruction_prompt(&property, pool, rng)?;
    finish_instruction(
        gateway,
        bundle,
        instruction_id,
        &concepts.seed_id,
        property,
        pool,
    )
}

/// Seed-to-instruction variant: no concept phase, the property carries only
/// the sampled category and difficulty.
pub fn generate_seed_instruction<R: Rng + ?Sized>(
    seed: &SeedFunction,
    instruction_id: String,
    gateway: &Gateway,
    pool: &PromptPool,
    rng: &mut R,
) -> Result<Result<InstructionRecord, Dropped>, StageError> {
    let difficulty = Difficulty::ALL[rng.random_range(0..3)];
    let category = Category::ALL[rng.random_range(0..3)];
    let property = TaskProperty {
        category,
        language: DEFAULT_LANGUAGE.into(),
        difficulty,
        concepts: Vec::new(),
    };
    let bundle = match build_seed_instruction_prompt(seed, pool, rng) {
        Ok(b) => b,
        Err(e) => match prompt_drop_reason(&e) {
            Some(reason) => return Ok(Err(Dropped::new(instruction_id, reason))),
            None => return Err(e.into()),
        },
    };
    finish_instruction(
        gateway,
        bundle,
        instruction_id,
        &seed.seed_id,
        property,
        pool,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstructionConfig {
    #[serde(skip)]
    pub master_seed: u64,
    pub concept_cap: usize,
    /// Instructions generated per seed.
    pub passes: usize,
    /// Skip concept mining and prompt on the seed directly.
    pub seed_to_instruction: bool,
}

impl Default for InstructionConfig {
    fn default() -> Self {
        InstructionConfig {
            master_seed: 0,
            concept_cap: DEFAULT_CONCEPT_CAP,
            passes: 1,
            seed_to_instruction: false,
        }
    }
}

pub fn instruction_id(seed_id: &str, pass: usize) -> String {
    format!("{seed_id}/i{pass}")
}

/// Everything one seed produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub concepts: Option<ConceptList>,
    pub instructions: Vec<InstructionRecord>,
    pub drops: Vec<Dropped>,
}

/// Runs both phases for one seed. Random draws come from streams keyed by
/// the seed id, so the result does not depend on which shard runs it.
pub fn process_seed(
    seed: &SeedFunction,
    gateway: &Gateway,
    pool: &PromptPool,
    config: &InstructionConfig,
) -> Result<SeedOutcome, StageError> {
    let mut out = SeedOutcome::default();
    if config.seed_to_instruction {
        for pass in 0..config.passes {
            let id = instruction_id(&seed.seed_id, pass);
            let mut r = rng::stream(config.master_seed, &["seed-instruction", &id]);
            match generate_seed_instruction(seed, id, gateway, pool, &mut r)? {
                Ok(i) => out.instructions.push(i),
                Err(d) => out.drops.push(d),
            }
        }
        return Ok(out);
    }
    let mut r = rng::stream(config.master_seed, &["concepts", &seed.seed_id]);
    let concepts = match extract_concepts(seed, gateway, pool, &mut r, config.concept_cap)? {
        Ok(c) => c,
        Err(d) => {
            out.drops.push(d);
            return Ok(out);
        }
    };
    for pass in 0..config.passes {
        let id = instruction_id(&seed.seed_id, pass);
        let mut r = rng::stream(config.master_seed, &["instruction", &id]);
        match generate_instruction(&concepts, id, gateway, pool, &mut r)? {
            Ok(i) => out.instructions.push(i),
            Err(d) => out.drops.push(d),
        }
    }
    out.concepts = Some(concepts);
    Ok(out)
}

/// Processes seeds in parallel, in input order.
pub fn process_seeds(
    seeds: &[SeedFunction],
    gateway: &Gateway,
    pool: &PromptPool,
    config: &InstructionConfig,
) -> Result<Vec<SeedOutcome>, StageError> {
    parallel::map(seeds, gateway.max_in_flight(), |_, s| {
        process_seed(s, gateway, pool, config)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstructionStage {
    pub concepts: Vec<ConceptList>,
    pub instructions: Vec<InstructionRecord>,
    pub drops: Vec<Dropped>,
}

impl InstructionStage {
    pub fn absorb(&mut self, outcomes: impl IntoIterator<Item = SeedOutcome>) {
        for o in outcomes {
            self.concepts.extend(o.concepts);
            self.instructions.extend(o.instructions);
            self.drops.extend(o.drops);
        }
    }

    pub fn drop_reasons(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for d in &self.drops {
            *m.entry(d.reason.clone()).or_insert(0) += 1;
        }
        m
    }
}

pub fn run_instruction_stage(
    seeds: &[SeedFunction],
    gateway: &Gateway,
    pool: &PromptPool,
    config: &InstructionConfig,
) -> Result<InstructionStage, StageError> {
    let mut stage = InstructionStage::default();
    stage.absorb(process_seeds(seeds, gateway, pool, config)?);
    Ok(stage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::FnBackend;
    use crate::gateway::{BackendError, GenerationRequest};
    use crate::seed::{extract_functions, SourceDocument};

    fn seeds(n: usize) -> Vec<SeedFunction> {
        let src: String = (0..n)
            .map(|i| format!("def f{i}(x):\n    \"\"\"Doc {i}.\"\"\"\n    return x + {i}\n\n\n"))
            .collect();
        extract_functions(&SourceDocument::new("m", "m.py", src)).functions
    }

    fn scripted(concepts: &'static str, instruction: &'static str) -> Gateway {
        Gateway::new(
            FnBackend::new(move |r: &GenerationRequest| {
                let text = if r.request_id.starts_with("concepts:") {
                    concepts
                } else {
                    instruction
                };
                Ok(vec![text.to_string(); r.n_samples])
            }),
            4,
        )
    }

    #[test]
    fn bracketed_list() {
        assert_eq!(
            parse_concepts("['string manipulation', 'list slicing']", 8).unwrap(),
            vec!["string manipulation", "list slicing"]
        );
        assert_eq!(
            parse_concepts("[\"a\", \"b\"]\ntrailing", 8).unwrap(),
            vec!["a", "b"]
        );
    }

    #[test]
    fn comma_list_dedup() {
        assert_eq!(parse_concepts("a, b, a", 8).unwrap(), vec!["a", "b"]);
        assert_eq!(
            parse_concepts("Recursion, recursion , sorting", 8).unwrap(),
            vec!["Recursion", "sorting"]
        );
    }

    #[test]
    fn cap_applies() {
        let text = (0..12)
            .map(|i| format!("c{i}"))
            .collect::<Vec<_>>()
            .join(", ");
        assert_eq!(parse_concepts(&text, 8).unwrap().len(), 8);
    }

    #[test]
    fn prose_is_not_a_list() {
        assert_eq!(
            parse_concepts(
                "This function simply adds two numbers together and returns the result.",
                8
            ),
            None
        );
        assert_eq!(parse_concepts("", 8), None);
        assert_eq!(parse_concepts("[]", 8), None);
    }

    #[test]
    fn instruction_cleanup() {
        assert_eq!(clean_instruction("[Instruction]\nWrite f.\n"), "Write f.");
        assert_eq!(
            clean_instruction("Write f.\n\n[Response]\nsure"),
            "Write f."
        );
    }

    #[test]
    fn full_stage_no_drops() {
        let gw = scripted(
            "['addition', 'functions']",
            "Write a function that adds numbers.",
        );
        let s = seeds(20);
        let out = run_instruction_stage(
            &s,
            &gw,
            &PromptPool::builtin(),
            &InstructionConfig::default(),
        )
        .unwrap();
        assert_eq!(out.instructions.len(), 20);
        assert!(out.drops.is_empty());
        assert_eq!(out.concepts[0].concepts, vec!["addition", "functions"]);
        for (i, rec) in out.instructions.iter().enumerate() {
            assert_eq!(rec.seed_id, s[i].seed_id);
            assert_eq!(rec.property.concepts, vec!["addition", "functions"]);
            assert_eq!(rec.prompt_version, "v1");
        }
    }

    #[test]
    fn unparseable_concepts_dropped() {
        let gw = scripted(
            "I cannot identify concepts in this function, sorry about that really.",
            "x",
        );
        let out = run_instruction_stage(
            &seeds(3),
            &gw,
            &PromptPool::builtin(),
            &InstructionConfig::default(),
        )
        .unwrap();
        assert!(out.instructions.is_empty());
        assert_eq!(out.drop_reasons().get("concepts-parse-failure"), Some(&3));
    }

    #[test]
    fn missing_transcript_entries_are_drops() {
        let gw = Gateway::new(
            FnBackend::new(|r: &GenerationRequest| {
                if r.request_id.ends_with("#0001") || r.request_id.ends_with("#0004") {
                    return Err(BackendError::Unscripted(r.request_id.clone()));
                }
                Ok(vec!["[ 'a' ]".to_string(); r.n_samples])
            }),
            2,
        );
        let out = run_instruction_stage(
            &seeds(6),
            &gw,
            &PromptPool::builtin(),
            &InstructionConfig::default(),
        )
        .unwrap();
        assert_eq!(out.instructions.len(), 4);
        assert_eq!(out.drops.len(), 2);
        assert_eq!(out.instructions.len() + out.drops.len(), 6);
    }

    #[test]
    fn exhausted_transport_aborts() {
        let gw = Gateway::new(
            FnBackend::new(|_: &GenerationRequest| Err(BackendError::Transient("down".into()))),
            1,
        )
        .with_retry(crate::gateway::RetryConfig {
            max_attempts: 2,
            backoff_ms: 1,
        });
        assert!(matches!(
            run_instruction_stage(
                &seeds(1),
                &gw,
                &PromptPool::builtin(),
                &InstructionConfig::default()
            ),
            Err(StageError::Gateway(GatewayError::Transport { .. }))
        ));
    }

    #[test]
    fn empty_seed_list() {
        let gw = scripted("a", "b");
        let out = run_instruction_stage(
            &[],
            &gw,
            &PromptPool::builtin(),
            &InstructionConfig::default(),
        )
        .unwrap();
        assert_eq!(out, InstructionStage::default());
    }

    #[test]
    fn property_matches_seeded_draw() {
        let gw = scripted("['a']", "Task.");
        let s = seeds(1);
        let cfg = InstructionConfig::default();
        let out = process_seed(&s[0], &gw, &PromptPool::builtin(), &cfg).unwrap();
        let mut r = rng::stream(0, &["instruction", &instruction_id(&s[0].seed_id, 0)]);
        let expected = prompt::sample_property(&mut r, &["a".to_string()], "Python").unwrap();
        assert_eq!(out.instructions[0].property, expected);
    }

    #[test]
    fn passes_and_seed_variant() {
        let gw = scripted("['a']", "Task.");
        let s = seeds(2);
        let cfg = InstructionConfig {
            passes: 3,
            ..Default::default()
        };
        let out = run_instruction_stage(&s, &gw, &PromptPool::builtin(), &cfg).unwrap();
        assert_eq!(out.instructions.len(), 6);
        let cfg = InstructionConfig {
            seed_to_instruction: true,
            ..Default::default()
        };
        let out = run_instruction_stage(&s, &gw, &PromptPool::builtin(), &cfg).unwrap();
        assert_eq!(out.instructions.len(), 2);
        assert!(out.concepts.is_empty());
        assert!(out.instructions[0].property.concepts.is_empty());
    }
}
