//! Stage orchestration with checkpoints.
//!
//! Every stage reads the artifacts of the stage before it, verifies them
//! against the hash recorded when they were written, and writes its own
//! artifact through an append-only partial file. Sharded stages checkpoint
//! after each shard, so an interrupted run resumes where it stopped and
//! produces the same bytes as an uninterrupted one.

mod checkpoint;
mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, PartialFile, RunLock};
pub use config::{PipelineConfig, SandboxConfig, SelectionConfig};

use crate::dataset::{self, DatasetError, DatasetRecord, StageStats, Violation};
use crate::gateway::{Gateway, GatewayError};
use crate::instruct::{self, ConceptList, Dropped, InstructionRecord, StageError};
use crate::prompt::PromptPool;
use crate::response::{self, assemble_validation_program, ResponseCandidate, ResponseConfig};
use crate::sandbox::{ExecutionRequest, ExecutionVerdict, Executor, HttpSandbox, SandboxError};
use crate::seed::{self, CurationError, CurationReport, SeedFunction};
use crate::{jsonl, parallel, rng};

pub const SEEDS: &str = "seeds.jsonl";
pub const CURATION_REPORT: &str = "curation_report.json";
pub const CONCEPTS: &str = "concepts.jsonl";
pub const INSTRUCTIONS: &str = "instructions.jsonl";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const VERDICTS: &str = "verdicts.jsonl";
pub const DATASET: &str = "dataset.jsonl";
pub const STATS: &str = "stats.json";
pub const VIOLATIONS: &str = "violations.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Curate,
    Concepts,
    Instructions,
    Responses,
    Validate,
    Select,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Curate,
        Stage::Concepts,
        Stage::Instructions,
        Stage::Responses,
        Stage::Validate,
        Stage::Select,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Curate => "curate",
            Stage::Concepts => "concepts",
            Stage::Instructions => "instructions",
            Stage::Responses => "responses",
            Stage::Validate => "validate",
            Stage::Select => "select",
        }
    }

    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Curate => SEEDS,
            Stage::Concepts => CONCEPTS,
            Stage::Instructions => INSTRUCTIONS,
            Stage::Responses => CANDIDATES,
            Stage::Validate => VERDICTS,
            Stage::Select => DATASET,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing artifacts: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("{artifact} changed since it was written (recorded {recorded}, found {actual}); rerun the stage that produces it")]
    StaleUpstream {
        artifact: String,
        recorded: String,
        actual: String,
    },
    #[error("cannot resume {stage}: upstream hash was {recorded}, now {actual}")]
    ResumeMismatch {
        stage: String,
        recorded: String,
        actual: String,
    },
    #[error("another run holds {}", .0.display())]
    Locked(PathBuf),
    #[error("corrupt state: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl PipelineError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub input: usize,
    pub output: usize,
    pub dropped: usize,
    pub reasons: BTreeMap<String, usize>,
    /// Inputs already done when the stage started.
    pub resumed_from: usize,
    /// Complete and up to date; nothing was run.
    pub skipped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stages: Vec<StageSummary>,
    pub stats: StageStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub stats: StageStats,
    pub curation: CurationReport,
    /// Drop reasons per stage.
    pub drops: BTreeMap<String, BTreeMap<String, usize>>,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    jsonl::read(path).map_err(|e| PipelineError::io(path, e))
}

fn hash_file(path: &Path) -> Result<String, PipelineError> {
    jsonl::file_hash(path).map_err(|e| PipelineError::io(path, e))
}

fn count_lines(path: &Path) -> Result<usize, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).count())
}

fn tally(drops: &[Dropped]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for d in drops {
        *m.entry(d.reason.clone()).or_insert(0) += 1;
    }
    m
}

fn drops_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join("drops").join(format!("{}.jsonl", stage.name()))
}

fn fingerprint<T: Serialize>(parts: &[&str], params: &T) -> String {
    let mut text = parts.join("\n");
    text.push('\n');
    text.push_str(&serde_json::to_string(params).expect("parameters serialize"));
    jsonl::sha256_hex(text.as_bytes())
}

type Work<'a, I, O> = dyn Fn(&I) -> Result<(Vec<O>, Vec<Dropped>), PipelineError> + Sync + 'a;

pub struct Pipeline {
    config: PipelineConfig,
    dir: PathBuf,
    pool: PromptPool,
    gateway: Option<Gateway>,
    executor: Option<Box<dyn Executor>>,
    resume: bool,
    _lock: RunLock,
}

impl Pipeline {
    /// Validates `config`, loads the prompt pool and locks the output
    /// directory. Backends are built on first use.
    pub fn open(config: PipelineConfig, resume: bool) -> Result<Self, PipelineError> {
        config.validate()?;
        let pool = match &config.prompts_dir {
            Some(dir) => PromptPool::load(dir)
                .map_err(|e| PipelineError::Config(format!("prompt pool: {e}")))?,
            None => PromptPool::builtin(),
        };
        if let Some(v) = &config.prompt_version {
            if *v != pool.version {
                return Err(PipelineError::Config(format!(
                    "prompt pool is {}, config pins {v}",
                    pool.version
                )));
            }
        }
        let dir = config.output_dir.clone();
        let lock = RunLock::acquire(&dir)?;
        Ok(Pipeline {
            config,
            dir,
            pool,
            gateway: None,
            executor: None,
            resume,
            _lock: lock,
        })
    }

    pub fn with_gateway(mut self, gateway: Gateway) -> Self {
        self.gateway = Some(gateway);
        self
    }

    pub fn with_executor(mut self, executor: Box<dyn Executor>) -> Self {
        self.executor = Some(executor);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.dir
    }

    fn ensure_gateway(&mut self) -> Result<(), PipelineError> {
        if self.gateway.is_none() {
            self.gateway = Some(Gateway::from_config(&self.config.backend)?);
        }
        Ok(())
    }

    fn ensure_executor(&mut self) {
        if self.executor.is_none() {
            self.executor = Some(match &self.config.sandbox.url {
                Some(url) => Box::new(HttpSandbox::new(url)),
                None => Box::new(self.config.sandbox.local.clone()),
            });
        }
    }

    /// Hash of a completed upstream artifact, refusing missing or edited files.
    fn verified(&self, producer: Stage, file: &str) -> Result<String, PipelineError> {
        let path = self.dir.join(file);
        let cp = Checkpoint::load(&self.dir, producer.name())?;
        if !path.exists() || !cp.as_ref().is_some_and(|c| c.complete) {
            return Err(PipelineError::Missing(vec![format!(
                "{} (run `{}` first)",
                path.display(),
                producer.name()
            )]));
        }
        let recorded = cp.and_then(|c| c.output_hash).unwrap_or_default();
        let actual = hash_file(&path)?;
        if actual != recorded {
            return Err(PipelineError::StaleUpstream {
                artifact: file.into(),
                recorded,
                actual,
            });
        }
        Ok(actual)
    }

    /// Where a stage starts: `None` when it is complete and current.
    fn starting_point(
        &self,
        stage: Stage,
        upstream: &str,
    ) -> Result<Option<Checkpoint>, PipelineError> {
        let fresh = Checkpoint::new(stage.name(), upstream);
        if !self.resume {
            return Ok(Some(fresh));
        }
        let Some(cp) = Checkpoint::load(&self.dir, stage.name())? else {
            return Ok(Some(fresh));
        };
        if cp.upstream_hash != upstream {
            return Err(PipelineError::ResumeMismatch {
                stage: stage.name().into(),
                recorded: cp.upstream_hash,
                actual: upstream.into(),
            });
        }
        if cp.complete {
            let out = self.dir.join(stage.artifact());
            if out.exists() && cp.output_hash.as_deref() == Some(hash_file(&out)?.as_str()) {
                return Ok(None);
            }
            return Ok(Some(fresh));
        }
        Ok(Some(cp))
    }

    fn skipped_summary(&self, stage: Stage, input: usize) -> Result<StageSummary, PipelineError> {
        let drops_file = drops_path(&self.dir, stage);
        let drops: Vec<Dropped> = if drops_file.exists() {
            read_jsonl(&drops_file)?
        } else {
            Vec::new()
        };
        Ok(StageSummary {
            stage: stage.name().into(),
            input,
            output: count_lines(&self.dir.join(stage.artifact()))?,
            dropped: drops.len(),
            reasons: tally(&drops),
            resumed_from: input,
            skipped: true,
        })
    }

    /// Runs `work` over `inputs` shard by shard, appending outputs and drops
    /// and checkpointing after every shard.
    fn sharded<I: Sync, O: Serialize + Send>(
        &self,
        stage: Stage,
        upstream: &str,
        inputs: &[I],
        workers: usize,
        work: &Work<'_, I, O>,
    ) -> Result<StageSummary, PipelineError> {
        let Some(mut cp) = self.starting_point(stage, upstream)? else {
            return self.skipped_summary(stage, inputs.len());
        };
        if cp.records_completed > inputs.len() {
            return Err(PipelineError::Corrupt(format!(
                "{} checkpoint is ahead of its input",
                stage.name()
            )));
        }
        let resumed_from = cp.records_completed;
        if resumed_from > 0 {
            log::info!(
                "{}: resuming after {resumed_from} of {} records",
                stage.name(),
                inputs.len()
            );
        }
        let final_out = self.dir.join(stage.artifact());
        let final_drops = drops_path(&self.dir, stage);
        let mut out = PartialFile::open(
            self.dir.join(format!(".{}.partial", stage.artifact())),
            cp.output_bytes,
        )?;
        let mut drops =
            PartialFile::open(final_drops.with_extension("jsonl.partial"), cp.drops_bytes)?;
        cp.save(&self.dir)?;

        for shard in inputs[resumed_from..].chunks(self.config.shard_size) {
            let results = parallel::map(shard, workers, |_, item| work(item));
            let mut out_text = String::new();
            let mut drop_text = String::new();
            for r in results {
                let (records, dropped) = r?;
                out_text.extend(records.iter().map(jsonl::to_line));
                drop_text.extend(dropped.iter().map(jsonl::to_line));
            }
            out.append(&out_text)?;
            drops.append(&drop_text)?;
            cp.records_completed += shard.len();
            cp.output_bytes = out.len;
            cp.drops_bytes = drops.len;
            cp.save(&self.dir)?;
        }

        out.finish(&final_out)?;
        drops.finish(&final_drops)?;
        cp.complete = true;
        cp.output_hash = Some(hash_file(&final_out)?);
        cp.save(&self.dir)?;
        let mut summary = self.skipped_summary(stage, inputs.len())?;
        summary.skipped = false;
        summary.resumed_from = resumed_from;
        Ok(summary)
    }

    pub fn curate(&mut self) -> Result<StageSummary, PipelineError> {
        let mut curation = self.config.curation.clone();
        curation.dedup_params.seed = rng::derive_seed(self.config.seed, &["dedup"]);
        if let Some(path) = &self.config.benchmark {
            curation.benchmark_strings.extend(
                seed::load_benchmark_strings(path).map_err(|e| PipelineError::io(path, e))?,
            );
        }
        let corpus = &self.config.corpus;
        let docs = seed::load_corpus(
            corpus,
            &self.config.corpus_extension,
            &self.config.language_tag,
        )
        .map_err(|e| PipelineError::io(corpus, e))?;
        let doc_hashes: Vec<String> = docs
            .iter()
            .map(|d| jsonl::sha256_hex(jsonl::to_line(d).as_bytes()))
            .collect();
        let doc_refs: Vec<&str> = doc_hashes.iter().map(String::as_str).collect();
        let upstream = fingerprint(&doc_refs, &curation);
        let Some(mut cp) = self.starting_point(Stage::Curate, &upstream)? else {
            return self.skipped_summary(Stage::Curate, docs.len());
        };
        let gateway = if curation.docstring_quality {
            self.ensure_gateway()?;
            self.gateway.as_ref()
        } else {
            None
        };
        let curated = seed::curate_seeds(docs, &curation, gateway, &self.pool)?;
        let report_path = self.dir.join(CURATION_REPORT);
        let mut report = serde_json::to_vec_pretty(&curated.report).expect("report serializes");
        report.push(b'\n');
        jsonl::write_atomic(&report_path, &report)
            .map_err(|e| PipelineError::io(&report_path, e))?;
        let drops: Vec<Dropped> = curated
            .removals
            .iter()
            .map(|r| Dropped::new(&r.seed_id, &r.reason))
            .collect();
        let drops_file = drops_path(&self.dir, Stage::Curate);
        jsonl::write(&drops_file, &drops).map_err(|e| PipelineError::io(&drops_file, e))?;
        let seeds_path = self.dir.join(SEEDS);
        jsonl::write(&seeds_path, &curated.seeds).map_err(|e| PipelineError::io(&seeds_path, e))?;
        cp.records_completed = curated
            .report
            .stage("extract")
            .map(|s| s.input as usize)
            .unwrap_or(0);
        cp.complete = true;
        cp.output_hash = Some(hash_file(&seeds_path)?);
        cp.save(&self.dir)?;
        Ok(StageSummary {
            stage: Stage::Curate.name().into(),
            input: curated.report.functions_extracted as usize,
            output: curated.seeds.len(),
            dropped: drops.len(),
            reasons: tally(&drops),
            resumed_from: 0,
            skipped: false,
        })
    }

    pub fn concepts(&mut self) -> Result<StageSummary, PipelineError> {
        let seeds_hash = self.verified(Stage::Curate, SEEDS)?;
        let cfg = self.config.instruction_config();
        let upstream = fingerprint(&[&seeds_hash, &self.pool.version], &cfg);
        // The seed-to-instruction variant has no concept phase.
        let seeds: Vec<SeedFunction> = if cfg.seed_to_instruction {
            Vec::new()
        } else {
            read_jsonl(&self.dir.join(SEEDS))?
        };
        self.ensure_gateway()?;
        let gateway = self.gateway.as_ref().expect("gateway built");
        let pool = &self.pool;
        let work = |s: &SeedFunction| -> Result<(Vec<ConceptList>, Vec<Dropped>), PipelineError> {
            let mut r = rng::stream(cfg.master_seed, &["concepts", &s.seed_id]);
            Ok(
                match instruct::extract_concepts(s, gateway, pool, &mut r, cfg.concept_cap)? {
                    Ok(c) => (vec![c], Vec::new()),
                    Err(d) => (Vec::new(), vec![d]),
                },
            )
        };
        self.sharded(
            Stage::Concepts,
            &upstream,
            &seeds,
            gateway.max_in_flight(),
            &work,
        )
    }

    pub fn instructions(&mut self) -> Result<StageSummary, PipelineError> {
        let cfg = self.config.instruction_config();
        self.ensure_gateway()?;
        let gateway = self.gateway.as_ref().expect("gateway built");
        let pool = &self.pool;
        if cfg.seed_to_instruction {
            let seeds_hash = self.verified(Stage::Curate, SEEDS)?;
            let upstream = fingerprint(&[&seeds_hash, &pool.version], &cfg);
            let seeds: Vec<SeedFunction> = read_jsonl(&self.dir.join(SEEDS))?;
            let work = |s: &SeedFunction| -> Result<(Vec<InstructionRecord>, Vec<Dropped>), PipelineError> {
                let mut out = (Vec::new(), Vec::new());
                for pass in 0..cfg.passes {
                    let id = instruct::instruction_id(&s.seed_id, pass);
                    let mut r = rng::stream(cfg.master_seed, &["seed-instruction", &id]);
                    match instruct::generate_seed_instruction(s, id, gateway, pool, &mut r)? {
                        Ok(i) => out.0.push(i),
                        Err(d) => out.1.push(d),
                    }
                }
                Ok(out)
            };
            return self.sharded(
                Stage::Instructions,
                &upstream,
                &seeds,
                gateway.max_in_flight(),
                &work,
            );
        }
        let concepts_hash = self.verified(Stage::Concepts, CONCEPTS)?;
        let upstream = fingerprint(&[&concepts_hash, &pool.version], &cfg);
        let concepts: Vec<ConceptList> = read_jsonl(&self.dir.join(CONCEPTS))?;
        let work =
            |c: &ConceptList| -> Result<(Vec<InstructionRecord>, Vec<Dropped>), PipelineError> {
                let mut out = (Vec::new(), Vec::new());
                for pass in 0..cfg.passes {
                    let id = instruct::instruction_id(&c.seed_id, pass);
                    let mut r = rng::stream(cfg.master_seed, &["instruction", &id]);
                    match instruct::generate_instruction(c, id, gateway, pool, &mut r)? {
                        Ok(i) => out.0.push(i),
                        Err(d) => out.1.push(d),
                    }
                }
                Ok(out)
            };
        self.sharded(
            Stage::Instructions,
            &upstream,
            &concepts,
            gateway.max_in_flight(),
            &work,
        )
    }

    pub fn responses(&mut self) -> Result<StageSummary, PipelineError> {
        let instr_hash = self.verified(Stage::Instructions, INSTRUCTIONS)?;
        let cfg = ResponseConfig {
            master_seed: self.config.seed,
            n_samples: self.config.n_samples,
        };
        let upstream = fingerprint(&[&instr_hash, &self.pool.version], &cfg);
        let instructions: Vec<InstructionRecord> = read_jsonl(&self.dir.join(INSTRUCTIONS))?;
        self.ensure_gateway()?;
        let gateway = self.gateway.as_ref().expect("gateway built");
        let pool = &self.pool;
        let work = |i: &InstructionRecord| -> Result<(Vec<ResponseCandidate>, Vec<Dropped>), PipelineError> {
            let out = response::process_instruction(i, gateway, pool, &cfg)?;
            Ok((out.candidates, out.drops))
        };
        self.sharded(
            Stage::Responses,
            &upstream,
            &instructions,
            gateway.max_in_flight(),
            &work,
        )
    }

    pub fn validate(&mut self) -> Result<StageSummary, PipelineError> {
        let cand_hash = self.verified(Stage::Responses, CANDIDATES)?;
        let timeout = self.config.sandbox.timeout_s;
        let upstream = fingerprint(&[&cand_hash], &timeout.to_string());
        let candidates: Vec<ResponseCandidate> = read_jsonl(&self.dir.join(CANDIDATES))?;
        self.ensure_executor();
        let executor = self.executor.as_deref().expect("executor built");
        let work = |c: &ResponseCandidate| -> Result<(Vec<ExecutionVerdict>, Vec<Dropped>), PipelineError> {
            let req = ExecutionRequest::new(&c.candidate_id, assemble_validation_program(c)).with_timeout(timeout);
            Ok((vec![executor.execute(&req)?], Vec::new()))
        };
        self.sharded(
            Stage::Validate,
            &upstream,
            &candidates,
            self.config.sandbox.max_parallel,
            &work,
        )
    }

    pub fn select(&mut self) -> Result<StageSummary, PipelineError> {
        let hashes = [
            self.verified(Stage::Instructions, INSTRUCTIONS)?,
            self.verified(Stage::Responses, CANDIDATES)?,
            self.verified(Stage::Validate, VERDICTS)?,
        ];
        let strategy = self.config.strategy();
        let refs: Vec<&str> = hashes.iter().map(String::as_str).collect();
        let upstream = fingerprint(&refs, &(&strategy, self.config.bare));
        let instructions: Vec<InstructionRecord> = read_jsonl(&self.dir.join(INSTRUCTIONS))?;
        let Some(mut cp) = self.starting_point(Stage::Select, &upstream)? else {
            return self.skipped_summary(Stage::Select, instructions.len());
        };
        let candidates: Vec<ResponseCandidate> = read_jsonl(&self.dir.join(CANDIDATES))?;
        let verdicts: Vec<ExecutionVerdict> = read_jsonl(&self.dir.join(VERDICTS))?;
        let (records, stats) = dataset::select(&instructions, &candidates, &verdicts, &strategy)?;
        let path = self.dir.join(DATASET);
        let receipt = dataset::emit_dataset(&records, &stats, &path, self.config.bare)
            .map_err(|e| PipelineError::io(&path, e))?;
        cp.records_completed = instructions.len();
        cp.complete = true;
        cp.output_hash = Some(receipt.sha256);
        cp.save(&self.dir)?;
        Ok(StageSummary {
            stage: Stage::Select.name().into(),
            input: instructions.len(),
            output: records.len(),
            dropped: instructions.len() - records.len(),
            reasons: BTreeMap::new(),
            resumed_from: 0,
            skipped: false,
        })
    }

    pub fn run_stage(&mut self, stage: Stage) -> Result<StageSummary, PipelineError> {
        let summary = match stage {
            Stage::Curate => self.curate(),
            Stage::Concepts => self.concepts(),
            Stage::Instructions => self.instructions(),
            Stage::Responses => self.responses(),
            Stage::Validate => self.validate(),
            Stage::Select => self.select(),
        }?;
        log::info!(
            "{}: {} in, {} out, {} dropped{}",
            summary.stage,
            summary.input,
            summary.output,
            summary.dropped,
            if summary.skipped { " (up to date)" } else { "" }
        );
        Ok(summary)
    }

    /// Every stage in order. Any failure leaves resumable checkpoints behind.
    pub fn run(&mut self) -> Result<RunSummary, PipelineError> {
        let mut stages = Vec::new();
        for stage in Stage::ALL {
            stages.push(self.run_stage(stage)?);
        }
        Ok(RunSummary {
            stages,
            stats: stats(&self.dir)?.stats,
        })
    }

    /// Re-executes the dataset's programs; violations are written next to it.
    pub fn revalidate(&mut self) -> Result<Vec<Violation>, PipelineError> {
        self.verified(Stage::Select, DATASET)?;
        let records: Vec<DatasetRecord> = read_jsonl(&self.dir.join(DATASET))?;
        let candidates: Vec<ResponseCandidate> = read_jsonl(&self.dir.join(CANDIDATES))?;
        self.ensure_executor();
        let executor = self.executor.as_deref().expect("executor built");
        let violations = dataset::revalidate(
            &records,
            &candidates,
            executor,
            self.config.sandbox.max_parallel,
            self.config.sandbox.timeout_s,
        );
        let path = self.dir.join(VIOLATIONS);
        jsonl::write(&path, &violations).map_err(|e| PipelineError::io(&path, e))?;
        Ok(violations)
    }
}

/// Collects the statistics of a finished run in `dir`.
pub fn stats(dir: &Path) -> Result<StatsReport, PipelineError> {
    let required = [STATS, CURATION_REPORT];
    let missing: Vec<String> = required
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::Missing(missing));
    }
    let read = |name: &str| -> Result<Vec<u8>, PipelineError> {
        let p = dir.join(name);
        fs::read(&p).map_err(|e| PipelineError::io(&p, e))
    };
    let stats: StageStats = serde_json::from_slice(&read(STATS)?)
        .map_err(|e| PipelineError::Corrupt(format!("{STATS}: {e}")))?;
    let curation: CurationReport = serde_json::from_slice(&read(CURATION_REPORT)?)
        .map_err(|e| PipelineError::Corrupt(format!("{CURATION_REPORT}: {e}")))?;
    let mut drops = BTreeMap::new();
    for stage in Stage::ALL {
        let p = drops_path(dir, stage);
        if p.exists() {
            let d: Vec<Dropped> = read_jsonl(&p)?;
            drops.insert(stage.name().to_string(), tally(&d));
        }
    }
    Ok(StatsReport {
        stats,
        curation,
        drops,
    })
}
