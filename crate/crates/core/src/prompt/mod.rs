//! Few-shot prompt assembly.
//!
//! Prompts are built from a versioned pool: one text file per system prompt
//! plus `examples.jsonl` holding `(seed, property, instruction, response,
//! tests)` examples. Every example block opens with `### Example N`, which is
//! also the stop sequence, so a completion ends at the next block boundary.

mod builders;
mod pool;

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub use builders::{
    build_concepts_prompt, build_docstring_prompt, build_instruction_prompt, build_response_prompt,
    build_seed_instruction_prompt, conforming_test, inline_test_coin, EXAMPLE_DELIMITER,
    INLINE_TEST_PROBABILITY, SHOTS_CONCEPTS, SHOTS_INSTRUCTION, SHOTS_RESPONSE,
};
pub use pool::{FewShotExample, PromptPool};

use crate::gateway::Message;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "function implementation")]
    Function,
    #[serde(rename = "class implementation")]
    Class,
    #[serde(rename = "program implementation")]
    Program,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Function, Category::Class, Category::Program];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Function => "function implementation",
            Category::Class => "class implementation",
            Category::Program => "program implementation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

/// Attributes conditioning one generated task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskProperty {
    pub category: Category,
    pub language: String,
    pub difficulty: Difficulty,
    pub concepts: Vec<String>,
}

impl fmt::Display for TaskProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "category: {}\nlanguage: {}\ndifficulty: {}\nconcepts: {}",
            self.category.as_str(),
            self.language,
            self.difficulty.as_str(),
            self.concepts.join(", ")
        )
    }
}

/// Draws difficulty, then category, each uniformly over its three values.
pub fn sample_property<R: Rng + ?Sized>(
    rng: &mut R,
    concepts: &[String],
    language: &str,
) -> Result<TaskProperty, PromptError> {
    if concepts.is_empty() {
        return Err(PromptError::EmptyConcepts);
    }
    let difficulty = Difficulty::ALL[rng.random_range(0..3)];
    let category = Category::ALL[rng.random_range(0..3)];
    Ok(TaskProperty {
        category,
        language: language.to_string(),
        difficulty,
        concepts: concepts.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    S2C,
    C2I,
    I2R,
    S2I,
    #[serde(rename = "DOCSTRING_QC")]
    DocstringQc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub phase: Phase,
    pub messages: Vec<Message>,
    pub stop_sequences: Vec<String>,
    pub shot_ids: Vec<String>,
}

impl PromptBundle {
    /// Number of `### Example` headers in the user turn.
    pub fn example_blocks(&self) -> usize {
        self.messages
            .iter()
            .map(|m| {
                m.content
                    .lines()
                    .filter(|l| l.starts_with(EXAMPLE_DELIMITER))
                    .count()
            })
            .sum()
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt pool has {have} examples, {need} needed")]
    PoolTooSmall { need: usize, have: usize },
    #[error("concept list is empty")]
    EmptyConcepts,
    #[error("input contains the example delimiter \"{EXAMPLE_DELIMITER}\"")]
    DelimiterInInput,
    #[error("invalid prompt asset: {0}")]
    InvalidAsset(String),
    #[error("prompt assets: {0}")]
    Io(#[from] std::io::Error),
}
