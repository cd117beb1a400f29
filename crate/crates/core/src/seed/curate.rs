use serde::{Deserialize, Serialize};

use super::filters::Removal;
use super::imports::{CommandResolver, ImportResolver, ImportTable};
use super::{
    decontaminate, docstring_quality_filter, extract_functions, filter_returns, near_dedup,
    predict_imports, typecheck_filter, CurationError, CurationReport, DedupParams,
    ExternalCheckerConfig, SeedFunction, SourceDocument, StageCount,
};
use crate::gateway::Gateway;
use crate::parallel;
use crate::prompt::PromptPool;

pub const STAGE_ORDER: [&str; 7] = [
    "extract",
    "imports",
    "decontaminate",
    "returns",
    "typecheck",
    "docstring",
    "dedup",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub predict_imports: bool,
    pub decontaminate: bool,
    pub filter_returns: bool,
    pub typecheck: bool,
    pub docstring_quality: bool,
    pub dedup: bool,
    pub benchmark_strings: Vec<String>,
    pub checker: Option<ExternalCheckerConfig>,
    pub dedup_params: DedupParams,
    /// Entries added to the built-in import table.
    pub import_table: ImportTable,
    /// Optional external resolver consulted after the table.
    pub import_plugin: Option<Vec<String>>,
    pub workers: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            predict_imports: true,
            decontaminate: true,
            filter_returns: true,
            typecheck: true,
            docstring_quality: true,
            dedup: true,
            benchmark_strings: Vec::new(),
            checker: None,
            dedup_params: DedupParams::default(),
            import_table: ImportTable::default(),
            import_plugin: None,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Curated {
    pub seeds: Vec<SeedFunction>,
    pub report: CurationReport,
    pub removals: Vec<Removal>,
}

fn count(stage: &str, input: usize, removed: &[Removal]) -> StageCount {
    let mut c = StageCount::new(stage);
    c.input = input as u64;
    c.removed = removed.len() as u64;
    c.kept = c.input - c.removed;
    for r in removed {
        *c.reasons.entry(r.reason.clone()).or_default() += 1;
    }
    c
}

fn pass_through(stage: &str, n: usize) -> StageCount {
    count(stage, n, &[])
}

/// Runs every enabled stage in order. Disabled stages still appear in the
/// report with nothing removed.
pub fn curate_seeds(
    corpus: impl IntoIterator<Item = SourceDocument>,
    config: &CurationConfig,
    gateway: Option<&Gateway>,
    pool: &PromptPool,
) -> Result<Curated, CurationError> {
    let docs: Vec<SourceDocument> = corpus.into_iter().collect();
    let mut report = CurationReport::default();
    let mut removals = Vec::new();

    let extractions = parallel::map(&docs, config.workers, |_, d| extract_functions(d));
    let mut extract = StageCount::new("extract");
    extract.input = docs.len() as u64;
    let mut fns = Vec::new();
    for ex in extractions {
        match ex.diagnostic {
            Some(diag) => {
                extract.removed += 1;
                *extract.reasons.entry("parse-error".into()).or_default() += 1;
                report.diagnostics.push(diag);
            }
            None => extract.kept += 1,
        }
        fns.extend(ex.functions);
    }
    report.functions_extracted = fns.len() as u64;
    report.record(extract);

    if config.predict_imports {
        let mut table = ImportTable::builtin();
        table.extend(config.import_table.clone());
        let mut chain: Vec<Box<dyn ImportResolver>> = vec![Box::new(table)];
        if let Some(cmd) = &config.import_plugin {
            chain.push(Box::new(CommandResolver {
                command: cmd.clone(),
            }));
        }
        fns = parallel::map(&fns, config.workers, |_, f| {
            predict_imports(f.clone(), &chain)
        });
    }
    report.record(pass_through("imports", fns.len()));

    let n = fns.len();
    if config.decontaminate {
        if config.benchmark_strings.is_empty() {
            return Err(CurationError::NoBenchmarkStrings);
        }
        let (kept, removed) = decontaminate(fns, &config.benchmark_strings);
        report.record(count("decontaminate", n, &removed));
        removals.extend(removed);
        fns = kept;
    } else {
        report.record(pass_through("decontaminate", n));
    }

    let n = fns.len();
    if config.filter_returns {
        let (kept, removed) = filter_returns(fns);
        report.record(count("returns", n, &removed));
        removals.extend(removed);
        fns = kept;
    } else {
        report.record(pass_through("returns", n));
    }

    let n = fns.len();
    if config.typecheck {
        let checker = config.checker.as_ref().ok_or_else(|| {
            CurationError::AnalyzerUnavailable("no analyzer command configured".into())
        })?;
        let (kept, removed) = typecheck_filter(fns, checker)?;
        report.record(count("typecheck", n, &removed));
        removals.extend(removed);
        fns = kept;
    } else {
        report.record(pass_through("typecheck", n));
    }

    let n = fns.len();
    if config.docstring_quality {
        let gateway = gateway.ok_or_else(|| CurationError::Gateway {
            stage: "docstring",
            source: crate::gateway::GatewayError::Config("no model backend configured".into()),
        })?;
        let (kept, removed) = docstring_quality_filter(fns, gateway, pool)?;
        report.record(count("docstring", n, &removed));
        removals.extend(removed);
        fns = kept;
    } else {
        report.record(pass_through("docstring", n));
    }

    let n = fns.len();
    if config.dedup {
        let outcome = near_dedup(fns, &config.dedup_params)?;
        let removed: Vec<Removal> = outcome
            .removed
            .iter()
            .map(|(_, dup)| Removal {
                seed_id: dup.clone(),
                reason: "near-duplicate".into(),
            })
            .collect();
        report.record(count("dedup", n, &removed));
        report.dedup.groups = outcome.groups as u64;
        report.dedup.max_group_size = outcome.max_group_size as u64;
        removals.extend(removed);
        fns = outcome.kept;
    } else {
        report.record(pass_through("dedup", n));
        report.dedup.groups = n as u64;
        report.dedup.max_group_size = u64::from(n > 0);
    }

    Ok(Curated {
        seeds: fns,
        report,
        removals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> CurationConfig {
        CurationConfig {
            decontaminate: false,
            typecheck: false,
            docstring_quality: false,
            ..CurationConfig::default()
        }
    }

    #[test]
    fn empty_corpus_all_zero() {
        let out = curate_seeds(Vec::new(), &minimal(), None, &PromptPool::builtin()).unwrap();
        assert!(out.seeds.is_empty());
        let names: Vec<_> = out.report.stages.iter().map(|s| s.stage.as_str()).collect();
        assert_eq!(names, STAGE_ORDER);
        assert!(out
            .report
            .stages
            .iter()
            .all(|s| s.input == 0 && s.kept == 0 && s.removed == 0));
    }

    #[test]
    fn enabled_gates_cannot_be_skipped() {
        let docs = vec![SourceDocument::new(
            "a",
            "a.py",
            "def f():\n    \"\"\"F.\"\"\"\n    return 1\n",
        )];
        let cfg = CurationConfig {
            typecheck: true,
            ..minimal()
        };
        assert!(matches!(
            curate_seeds(docs.clone(), &cfg, None, &PromptPool::builtin()),
            Err(CurationError::AnalyzerUnavailable(_))
        ));
        let cfg = CurationConfig {
            docstring_quality: true,
            ..minimal()
        };
        assert!(matches!(
            curate_seeds(docs.clone(), &cfg, None, &PromptPool::builtin()),
            Err(CurationError::Gateway { .. })
        ));
        let cfg = CurationConfig {
            decontaminate: true,
            ..minimal()
        };
        assert!(matches!(
            curate_seeds(docs, &cfg, None, &PromptPool::builtin()),
            Err(CurationError::NoBenchmarkStrings)
        ));
    }

    #[test]
    fn report_merge_is_additive() {
        let docs = vec![
            SourceDocument::new("a", "a.py", "def f():\n    \"\"\"F.\"\"\"\n    return 1\n"),
            SourceDocument::new("b", "b.py", "def g():\n    \"\"\"G.\"\"\"\n    return\n"),
        ];
        let whole = curate_seeds(docs.clone(), &minimal(), None, &PromptPool::builtin())
            .unwrap()
            .report;
        let mut merged = curate_seeds(docs[..1].to_vec(), &minimal(), None, &PromptPool::builtin())
            .unwrap()
            .report;
        merged.merge(
            curate_seeds(docs[1..].to_vec(), &minimal(), None, &PromptPool::builtin())
                .unwrap()
                .report,
        );
        for stage in STAGE_ORDER {
            assert_eq!(
                whole.stage(stage).unwrap().input,
                merged.stage(stage).unwrap().input,
                "{stage}"
            );
            assert_eq!(
                whole.stage(stage).unwrap().removed,
                merged.stage(stage).unwrap().removed,
                "{stage}"
            );
        }
        assert!(merged.reconciles());
    }
}
