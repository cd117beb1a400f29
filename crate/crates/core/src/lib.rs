//! Self-aligned instruction data generation for code models.
//!
//! The crate is organised as a chain of stages, each usable on its own:
//!
//! * [`seed`] curates top-level, docstringed functions out of a raw corpus.
//! * [`instruct`] mines coding concepts from seeds and turns them into tasks.
//! * [`response`] samples `(response, tests)` pairs for every task.
//! * [`sandbox`] executes each pair and reports a verdict.
//! * [`dataset`] applies a selection strategy over the verdicts.
//!
//! All model traffic goes through [`gateway`], and all prompts are assembled by
//! [`prompt`] from a versioned few-shot pool. [`pipeline`] wires the stages
//! together with checkpoints so an interrupted run can be resumed.

pub mod dataset;
pub mod gateway;
pub mod instruct;
pub mod jsonl;
pub mod parallel;
pub mod pipeline;
pub mod prompt;
pub mod response;
pub mod rng;
pub mod sandbox;
pub mod seed;

pub use dataset::{DatasetRecord, SelectionStrategy, StageStats, StrategyKind};
pub use gateway::{Gateway, GenerationRequest, GenerationResult};
pub use instruct::{ConceptList, InstructionRecord};
pub use prompt::{FewShotExample, PromptBundle, PromptPool, TaskProperty};
pub use response::ResponseCandidate;
pub use sandbox::{ExecutionRequest, ExecutionVerdict, VerdictStatus};
pub use seed::{CurationReport, SeedFunction, SourceDocument};
