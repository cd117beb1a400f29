use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{SelectionStrategy, StrategyKind};
use crate::gateway::BackendConfig;
use crate::instruct::InstructionConfig;
use crate::response::DEFAULT_SAMPLES;
use crate::rng;
use crate::sandbox::{LocalSandbox, DEFAULT_TIMEOUT_S};
use crate::seed::CurationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub strategy: StrategyKind,
    pub subset_size: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            strategy: StrategyKind::PassesOnly,
            subset_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Execution service base URL. Without one, programs run in the local jail.
    pub url: Option<String>,
    pub timeout_s: f64,
    pub max_parallel: usize,
    pub local: LocalSandbox,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            url: None,
            timeout_s: DEFAULT_TIMEOUT_S,
            max_parallel: 4,
            local: LocalSandbox::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of source files or a JSONL file of documents.
    pub corpus: PathBuf,
    pub corpus_extension: String,
    pub language_tag: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Few-shot pool directory; the embedded pool when absent.
    pub prompts_dir: Option<PathBuf>,
    /// When set, the loaded pool must carry this version.
    pub prompt_version: Option<String>,
    /// Benchmark prompts and solutions for decontamination.
    pub benchmark: Option<PathBuf>,
    pub n_samples: usize,
    /// Records per checkpointed shard.
    pub shard_size: usize,
    pub bare: bool,
    pub backend: BackendConfig,
    pub curation: CurationConfig,
    pub instructions: InstructionConfig,
    pub selection: SelectionConfig,
    pub sandbox: SandboxConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::from("corpus"),
            corpus_extension: "py".into(),
            language_tag: "python".into(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            prompts_dir: None,
            prompt_version: None,
            benchmark: None,
            n_samples: DEFAULT_SAMPLES,
            shard_size: 32,
            bare: false,
            backend: BackendConfig::default(),
            curation: CurationConfig::default(),
            instructions: InstructionConfig::default(),
            selection: SelectionConfig::default(),
            sandbox: SandboxConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads a TOML file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        rebase(base, &mut config.corpus);
        rebase(base, &mut config.output_dir);
        for p in [
            &mut config.prompts_dir,
            &mut config.benchmark,
            &mut config.backend.transcript_path,
        ]
        .into_iter()
        .flatten()
        {
            rebase(base, p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_samples == 0 {
            return Err(PipelineError::Config("n_samples must be positive".into()));
        }
        if self.shard_size == 0 {
            return Err(PipelineError::Config("shard_size must be positive".into()));
        }
        if self.instructions.passes == 0 || self.instructions.concept_cap == 0 {
            return Err(PipelineError::Config(
                "instructions.passes and concept_cap must be positive".into(),
            ));
        }
        if !(self.sandbox.timeout_s > 0.0
            && self.sandbox.timeout_s <= crate::sandbox::MAX_TIMEOUT_S)
        {
            return Err(PipelineError::Config(
                "sandbox.timeout_s must be in (0, 600]".into(),
            ));
        }
        self.strategy()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.curation
            .dedup_params
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn strategy(&self) -> SelectionStrategy {
        SelectionStrategy {
            kind: self.selection.strategy,
            subset_size: self.selection.subset_size,
            seed: rng::derive_seed(self.seed, &["select"]),
        }
    }

    pub fn instruction_config(&self) -> InstructionConfig {
        InstructionConfig {
            master_seed: self.seed,
            ..self.instructions.clone()
        }
    }
}
