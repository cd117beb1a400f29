//! Selection over verdicts and dataset emission.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruct::InstructionRecord;
use crate::response::{assemble_validation_program, ResponseCandidate};
use crate::sandbox::{
    execute_parallel, ExecutionRequest, ExecutionVerdict, Executor, VerdictStatus,
};
use crate::{jsonl, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    PassesOnly,
    FailuresOnly,
    RandomAll,
    RandomSubset,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::PassesOnly,
        StrategyKind::FailuresOnly,
        StrategyKind::RandomAll,
        StrategyKind::RandomSubset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::PassesOnly => "passes_only",
            StrategyKind::FailuresOnly => "failures_only",
            StrategyKind::RandomAll => "random_all",
            StrategyKind::RandomSubset => "random_subset",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}; expected one of passes_only, failures_only, random_all, random_subset"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl SelectionStrategy {
    pub fn new(kind: StrategyKind, seed: u64) -> Self {
        SelectionStrategy {
            kind,
            subset_size: None,
            seed,
        }
    }

    pub fn subset(size: usize, seed: u64) -> Self {
        SelectionStrategy {
            kind: StrategyKind::RandomSubset,
            subset_size: Some(size),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        match (self.kind, self.subset_size) {
            (StrategyKind::RandomSubset, Some(n)) if n > 0 => Ok(()),
            (StrategyKind::RandomSubset, _) => Err(DatasetError::Strategy(
                "random_subset needs a positive subset_size".into(),
            )),
            (_, Some(_)) => Err(DatasetError::Strategy(
                "subset_size only applies to random_subset".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_id: String,
    pub instruction_id: String,
    pub candidate_id: String,
    pub prompt_version: String,
    pub strategy: StrategyKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub instruction: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub instructions: usize,
    pub candidates: usize,
    pub passes: usize,
    pub failures: usize,
    pub timeouts: usize,
    pub errors: usize,
    /// passes / candidates, 0 when there are no candidates.
    pub execution_pass_rate: f64,
    pub dataset_size: usize,
    pub selected_passes: usize,
    /// Share of selected records whose candidate passed.
    pub selected_pass_rate: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no verdict for candidate {0}")]
    MissingVerdict(String),
    #[error("duplicate verdict for candidate {0}")]
    DuplicateVerdict(String),
    #[error("candidate {candidate} refers to unknown instruction {instruction}")]
    UnknownInstruction {
        candidate: String,
        instruction: String,
    },
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Picks at most one candidate per instruction according to `strategy`.
/// Every candidate must carry exactly one verdict. Records come back ordered
/// by instruction id.
pub fn select(
    instructions: &[InstructionRecord],
    candidates: &[ResponseCandidate],
    verdicts: &[ExecutionVerdict],
    strategy: &SelectionStrategy,
) -> Result<(Vec<DatasetRecord>, StageStats), DatasetError> {
    strategy.validate()?;
    let mut status: HashMap<&str, VerdictStatus> = HashMap::new();
    for v in verdicts {
        if status.insert(&v.candidate_id, v.status).is_some() {
            return Err(DatasetError::DuplicateVerdict(v.candidate_id.clone()));
        }
    }
    let by_id: HashMap<&str, &InstructionRecord> = instructions
        .iter()
        .map(|i| (i.instruction_id.as_str(), i))
        .collect();
    let mut stats = StageStats {
        instructions: instructions.len(),
        candidates: candidates.len(),
        ..Default::default()
    };
    let mut groups: BTreeMap<&str, Vec<(&ResponseCandidate, VerdictStatus)>> = BTreeMap::new();
    for c in candidates {
        let s = *status
            .get(c.candidate_id.as_str())
            .ok_or_else(|| DatasetError::MissingVerdict(c.candidate_id.clone()))?;
        if !by_id.contains_key(c.instruction_id.as_str()) {
            return Err(DatasetError::UnknownInstruction {
                candidate: c.candidate_id.clone(),
                instruction: c.instruction_id.clone(),
            });
        }
        match s {
            VerdictStatus::Pass => stats.passes += 1,
            VerdictStatus::Fail => stats.failures += 1,
            VerdictStatus::Timeout => stats.timeouts += 1,
            VerdictStatus::Error => stats.errors += 1,
        }
        groups.entry(&c.instruction_id).or_default().push((c, s));
    }
    stats.execution_pass_rate = ratio(stats.passes, stats.candidates);

    let mut chosen: Vec<(&ResponseCandidate, VerdictStatus)> = Vec::new();
    for (instruction_id, mut group) in groups {
        group.sort_by_key(|(c, _)| c.sample_index);
        let eligible: Vec<_> = match strategy.kind {
            StrategyKind::PassesOnly => group
                .into_iter()
                .filter(|(_, s)| *s == VerdictStatus::Pass)
                .collect(),
            StrategyKind::FailuresOnly => group
                .into_iter()
                .filter(|(_, s)| *s != VerdictStatus::Pass)
                .collect(),
            StrategyKind::RandomAll | StrategyKind::RandomSubset => group,
        };
        if eligible.is_empty() {
            continue;
        }
        let mut r = rng::stream(strategy.seed, &["select", instruction_id]);
        chosen.push(eligible[r.random_range(0..eligible.len())]);
    }
    if let (StrategyKind::RandomSubset, Some(n)) = (strategy.kind, strategy.subset_size) {
        let mut r = rng::stream(strategy.seed, &["subset"]);
        chosen.shuffle(&mut r);
        chosen.truncate(n);
        chosen.sort_by(|a, b| a.0.instruction_id.cmp(&b.0.instruction_id));
    }

    let records: Vec<DatasetRecord> = chosen
        .iter()
        .map(|(c, _)| {
            let instr = by_id[c.instruction_id.as_str()];
            DatasetRecord {
                instruction: instr.instruction.clone(),
                response: c.response_text.clone(),
                provenance: Some(Provenance {
                    seed_id: instr.seed_id.clone(),
                    instruction_id: instr.instruction_id.clone(),
                    candidate_id: c.candidate_id.clone(),
                    prompt_version: instr.prompt_version.clone(),
                    strategy: strategy.kind,
                }),
            }
        })
        .collect();
    stats.dataset_size = records.len();
    stats.selected_passes = chosen
        .iter()
        .filter(|(_, s)| *s == VerdictStatus::Pass)
        .count();
    stats.selected_pass_rate = ratio(stats.selected_passes, stats.dataset_size);
    Ok((records, stats))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitReceipt {
    pub dataset_path: PathBuf,
    pub stats_path: PathBuf,
    pub records: usize,
    pub sha256: String,
}

fn instruction_key(r: &DatasetRecord) -> &str {
    r.provenance
        .as_ref()
        .map(|p| p.instruction_id.as_str())
        .unwrap_or("")
}

/// Writes `dataset.jsonl`-style output ordered by instruction id and a
/// `stats.json` next to it. `bare` drops provenance.
pub fn emit_dataset(
    records: &[DatasetRecord],
    stats: &StageStats,
    path: &Path,
    bare: bool,
) -> io::Result<EmitReceipt> {
    let mut sorted: Vec<DatasetRecord> = records.to_vec();
    sorted.sort_by(|a, b| instruction_key(a).cmp(instruction_key(b)));
    if bare {
        for r in &mut sorted {
            r.provenance = None;
        }
    }
    let bytes = jsonl::encode(&sorted);
    jsonl::write_atomic(path, bytes.as_bytes())?;
    let stats_path = path.with_file_name("stats.json");
    let mut stats_bytes = serde_json::to_vec_pretty(stats)?;
    stats_bytes.push(b'\n');
    jsonl::write_atomic(&stats_path, &stats_bytes)?;
    Ok(EmitReceipt {
        dataset_path: path.to_path_buf(),
        stats_path,
        records: sorted.len(),
        sha256: jsonl::sha256_hex(bytes.as_bytes()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub candidate_id: String,
    pub status: Option<VerdictStatus>,
    pub detail: String,
}

/// Re-executes every record's program and reports those that no longer pass.
/// Nothing is removed.
pub fn revalidate(
    records: &[DatasetRecord],
    candidates: &[ResponseCandidate],
    executor: &dyn Executor,
    max_parallel: usize,
    timeout_s: f64,
) -> Vec<Violation> {
    let by_id: HashMap<&str, &ResponseCandidate> = candidates
        .iter()
        .map(|c| (c.candidate_id.as_str(), c))
        .collect();
    let mut violations = Vec::new();
    let mut reqs = Vec::new();
    for r in records {
        let Some(p) = &r.provenance else {
            violations.push(Violation {
                candidate_id: String::new(),
                status: None,
                detail: "record has no provenance".into(),
            });
            continue;
        };
        match by_id.get(p.candidate_id.as_str()) {
            Some(c) => reqs.push(
                ExecutionRequest::new(c.candidate_id.clone(), assemble_validation_program(c))
                    .with_timeout(timeout_s),
            ),
            None => violations.push(Violation {
                candidate_id: p.candidate_id.clone(),
                status: None,
                detail: "candidate not found".into(),
            }),
        }
    }
    for (req, result) in reqs
        .iter()
        .zip(execute_parallel(executor, &reqs, max_parallel))
    {
        match result {
            Ok(v) if v.status == VerdictStatus::Pass => {}
            Ok(v) => violations.push(Violation {
                candidate_id: req.candidate_id.clone(),
                status: Some(v.status),
                detail: v.stderr_tail,
            }),
            Err(e) => violations.push(Violation {
                candidate_id: req.candidate_id.clone(),
                status: None,
                detail: e.to_string(),
            }),
        }
    }
    violations
}
