use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::{PromptError, TaskProperty};
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub example_id: String,
    pub seed: String,
    pub property: TaskProperty,
    pub instruction: String,
    pub response: String,
    pub tests: String,
}

impl FewShotExample {
    fn validate(&self) -> Result<(), PromptError> {
        let sections = [
            ("seed", self.seed.as_str()),
            ("instruction", &self.instruction),
            ("response", &self.response),
            ("tests", &self.tests),
        ];
        for (name, text) in sections {
            if text.trim().is_empty() {
                return Err(PromptError::InvalidAsset(format!(
                    "{}: empty {name}",
                    self.example_id
                )));
            }
        }
        if self.property.concepts.is_empty() {
            return Err(PromptError::InvalidAsset(format!(
                "{}: empty concepts",
                self.example_id
            )));
        }
        Ok(())
    }
}

/// System prompts and few-shot examples, tagged with a version string that
/// is echoed into every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPool {
    pub version: String,
    pub system_concepts: String,
    pub system_instruction: String,
    pub system_response: String,
    pub system_seed_instruction: String,
    pub system_docstring: String,
    pub examples: Vec<FewShotExample>,
}

const FILES: [&str; 6] = [
    "VERSION",
    "system_s2c.txt",
    "system_c2i.txt",
    "system_i2r.txt",
    "system_s2i.txt",
    "system_docstring_qc.txt",
];

impl PromptPool {
    fn from_parts(texts: [String; 6], examples: Vec<FewShotExample>) -> Result<Self, PromptError> {
        for e in &examples {
            e.validate()?;
        }
        let [version, s2c, c2i, i2r, s2i, docqc] = texts.map(|t| t.trim_end().to_string());
        if version.is_empty() {
            return Err(PromptError::InvalidAsset("empty VERSION".into()));
        }
        Ok(Self {
            version,
            system_concepts: s2c,
            system_instruction: c2i,
            system_response: i2r,
            system_seed_instruction: s2i,
            system_docstring: docqc,
            examples,
        })
    }

    /// Reads a pool from an asset directory.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let texts = FILES.map(|f| fs::read_to_string(dir.join(f)));
        let mut out = Vec::with_capacity(6);
        for (name, t) in FILES.iter().zip(texts) {
            out.push(t.map_err(|e| PromptError::InvalidAsset(format!("{name}: {e}")))?);
        }
        let examples: Vec<FewShotExample> = jsonl::read(&dir.join("examples.jsonl"))?;
        Self::from_parts(out.try_into().expect("six files"), examples)
    }

    /// The pool shipped with the crate (the same files as `assets/prompts`).
    pub fn builtin() -> Self {
        let texts = [
            include_str!("../../assets/prompts/VERSION"),
            include_str!("../../assets/prompts/system_s2c.txt"),
            include_str!("../../assets/prompts/system_c2i.txt"),
            include_str!("../../assets/prompts/system_i2r.txt"),
            include_str!("../../assets/prompts/system_s2i.txt"),
            include_str!("../../assets/prompts/system_docstring_qc.txt"),
        ]
        .map(str::to_string);
        let examples = include_str!("../../assets/prompts/examples.jsonl")
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).expect("bundled examples parse"))
            .collect();
        Self::from_parts(texts, examples).expect("bundled pool is valid")
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}
