mod common;

use std::collections::BTreeSet;

use codealign::seed::{self, CurationConfig, STAGE_ORDER};
use codealign::PromptPool;
use common::*;

#[test]
fn funnel_survivors_and_counts() {
    let out = run_funnel();
    let got: BTreeSet<(String, String)> = out
        .seeds
        .iter()
        .map(|s| (s.origin.doc_id.clone(), function_name(&s.signature)))
        .collect();
    let want: BTreeSet<(String, String)> = FUNNEL_SURVIVORS
        .iter()
        .map(|(d, f)| (d.to_string(), f.to_string()))
        .collect();
    assert_eq!(got, want);
    assert_eq!(out.report.functions_extracted, 40);
    for (stage, input, removed) in FUNNEL_COUNTS {
        let s = out.report.stage(stage).unwrap();
        assert_eq!((s.input, s.removed), (input, removed), "{stage}");
        assert_eq!(s.kept + s.removed, s.input, "{stage}");
    }
    assert!(out.report.reconciles());
}

#[test]
fn funnel_removal_reasons() {
    let out = run_funnel();
    let reasons = |stage: &str| out.report.stage(stage).unwrap().reasons.clone();
    assert_eq!(reasons("docstring").get("poor-docstring"), Some(&3));
    assert_eq!(reasons("docstring").get("unparseable-verdict"), Some(&1));
    assert_eq!(reasons("typecheck").get("type-check"), Some(&5));
    assert_eq!(out.report.dedup.max_group_size, 3);
}

#[test]
fn predicted_imports_are_attached() {
    let out = run_funnel();
    let imports = |name: &str| {
        out.seeds
            .iter()
            .find(|s| function_name(&s.signature) == name)
            .unwrap()
            .imports
            .clone()
    };
    assert_eq!(imports("slugify"), vec!["import re"]);
    assert_eq!(imports("to_json"), vec!["import json"]);
    assert_eq!(imports("median_of"), vec!["import statistics"]);
    assert!(imports("word_histogram")
        .iter()
        .any(|i| i.contains("Counter")));
    assert!(out
        .seeds
        .iter()
        .all(|s| s.rendered.ends_with(s.source()) && s.rendered.contains(&s.docstring)));
}

#[test]
fn disabled_stages_pass_everything_through() {
    let docs = seed::load_corpus(&fixture("funnel/corpus"), "py", "python").unwrap();
    let cfg = CurationConfig {
        predict_imports: false,
        decontaminate: false,
        filter_returns: false,
        typecheck: false,
        docstring_quality: false,
        dedup: false,
        ..CurationConfig::default()
    };
    let out = seed::curate_seeds(docs, &cfg, None, &PromptPool::builtin()).unwrap();
    assert_eq!(out.seeds.len(), 40);
    let names: Vec<_> = out.report.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, STAGE_ORDER);
    assert!(out
        .report
        .stages
        .iter()
        .skip(1)
        .all(|s| s.removed == 0 && s.input == 40));
}
