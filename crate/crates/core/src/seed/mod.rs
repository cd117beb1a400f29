//! Seed curation: from raw source documents to deduplicated, validated seed
//! functions.
//!
//! Stages run in a fixed order (extract, import prediction, decontamination,
//! return filtering, type checking, docstring quality, near-deduplication) and
//! every stage reports how many functions it saw, kept and removed.

mod corpus;
mod curate;
pub mod dedup;
mod extract;
mod filters;
pub mod imports;
mod python;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub use corpus::{load_benchmark_strings, load_corpus};
pub use curate::{curate_seeds, Curated, CurationConfig, STAGE_ORDER};
pub use dedup::{near_dedup, DedupOutcome, DedupParams, MinHasher};
pub use extract::{extract_functions, Extraction};
pub use filters::{
    decontaminate, docstring_quality_filter, filter_returns, has_valued_return, parse_verdict,
    typecheck_filter, DocstringVerdict, ExternalCheckerConfig, Removal,
};
pub use imports::{predict_imports, CommandResolver, ImportResolver, ImportTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub path: String,
    pub content: String,
    #[serde(default = "default_language")]
    pub language_tag: String,
}

fn default_language() -> String {
    "python".to_string()
}

impl SourceDocument {
    pub fn new(
        doc_id: impl Into<String>,
        path: impl Into<String>,
        content: impl Into<String>,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            path: path.into(),
            content: content.into(),
            language_tag: default_language(),
        }
    }
}

/// Where a seed came from: document id and byte range of the function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

/// A curated top-level function.
///
/// `rendered` is always `imports` (one per line, then a blank line) followed by
/// the function source, which itself is `signature`, docstring and `body`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedFunction {
    pub seed_id: String,
    pub imports: Vec<String>,
    pub signature: String,
    pub docstring: String,
    pub body: String,
    pub rendered: String,
    pub origin: Origin,
}

impl SeedFunction {
    /// The function text without the import header.
    pub fn source(&self) -> &str {
        if self.imports.is_empty() {
            &self.rendered
        } else {
            let header = render_imports(&self.imports).len();
            &self.rendered[header.min(self.rendered.len())..]
        }
    }

    /// Replaces the import list and re-renders.
    pub fn with_imports(mut self, imports: Vec<String>) -> Self {
        let source = self.source().to_string();
        self.rendered = format!("{}{}", render_imports(&imports), source);
        self.imports = imports;
        self
    }
}

fn render_imports(imports: &[String]) -> String {
    if imports.is_empty() {
        String::new()
    } else {
        format!("{}\n\n", imports.join("\n"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub input: u64,
    pub kept: u64,
    pub removed: u64,
    #[serde(default)]
    pub reasons: BTreeMap<String, u64>,
}

impl StageCount {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            ..Self::default()
        }
    }

    pub fn reconciles(&self) -> bool {
        self.kept + self.removed == self.input && self.reasons.values().sum::<u64>() <= self.removed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupStats {
    pub groups: u64,
    pub max_group_size: u64,
}

/// Per-stage funnel counts. The `extract` stage counts documents (kept means
/// parsed cleanly); later stages count functions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationReport {
    pub stages: Vec<StageCount>,
    pub functions_extracted: u64,
    pub dedup: DedupStats,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl CurationReport {
    pub fn stage(&self, name: &str) -> Option<&StageCount> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn reconciles(&self) -> bool {
        self.stages.iter().all(StageCount::reconciles)
    }

    pub(crate) fn record(&mut self, count: StageCount) {
        match self.stages.iter_mut().find(|s| s.stage == count.stage) {
            Some(existing) => {
                existing.input += count.input;
                existing.kept += count.kept;
                existing.removed += count.removed;
                for (reason, n) in count.reasons {
                    *existing.reasons.entry(reason).or_default() += n;
                }
            }
            None => self.stages.push(count),
        }
    }

    /// Folds a shard's report into this one.
    pub fn merge(&mut self, other: CurationReport) {
        for stage in other.stages {
            self.record(stage);
        }
        self.functions_extracted += other.functions_extracted;
        self.dedup.groups += other.dedup.groups;
        self.dedup.max_group_size = self.dedup.max_group_size.max(other.dedup.max_group_size);
        self.diagnostics.extend(other.diagnostics);
    }
}

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("external analyzer unavailable: {0}")]
    AnalyzerUnavailable(String),
    #[error("model backend unavailable during {stage}: {source}")]
    Gateway {
        stage: &'static str,
        #[source]
        source: crate::gateway::GatewayError,
    },
    #[error("decontamination enabled with no benchmark strings")]
    NoBenchmarkStrings,
    #[error("invalid dedup parameters: {0}")]
    InvalidDedup(String),
    #[error("corpus: {0}")]
    Corpus(#[from] std::io::Error),
}
