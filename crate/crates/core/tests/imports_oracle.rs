mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::process::{Command, Stdio};

use codealign::seed::{extract_functions, predict_imports, ImportResolver, ImportTable};
use codealign::{SeedFunction, SourceDocument};
use common::*;

#[derive(serde::Deserialize)]
struct Scopes {
    globals: BTreeSet<String>,
    imported: BTreeSet<String>,
}

/// Module-level names each function reads and the names its header imports,
/// per CPython's own symbol tables.
fn python_scopes(sources: &[&str]) -> Vec<Scopes> {
    let mut child = Command::new("python3")
        .arg(fixture("imports/globals_oracle.py"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("python3 available");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(serde_json::to_string(sources).unwrap().as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    serde_json::from_slice(&out.stdout).unwrap()
}

fn functions(rel: &str) -> Vec<SeedFunction> {
    let dir = fixture(rel);
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "py"))
        .filter(|p| !p.ends_with("globals_oracle.py"))
        .collect();
    paths.sort();
    paths
        .iter()
        .flat_map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().to_string();
            let doc = SourceDocument::new(
                name,
                p.to_string_lossy(),
                std::fs::read_to_string(p).unwrap(),
            );
            extract_functions(&doc).functions
        })
        .collect()
}

fn check(rel: &str) -> Vec<SeedFunction> {
    let table = ImportTable::builtin();
    let fns: Vec<SeedFunction> = functions(rel)
        .into_iter()
        .map(|f| predict_imports(f, &table))
        .collect();
    let rendered: Vec<&str> = fns.iter().map(|f| f.rendered.as_str()).collect();
    for (f, scopes) in fns.iter().zip(python_scopes(&rendered)) {
        assert!(
            scopes.imported.is_subset(&scopes.globals),
            "{}: {:?} imports unused names",
            f.signature,
            f.imports
        );
        for name in &scopes.globals {
            if table.resolve(name).is_some() {
                assert!(
                    scopes.imported.contains(name),
                    "{}: {name} left unbound",
                    f.signature
                );
            }
        }
    }
    fns
}

#[test]
fn scope_edge_cases_agree_with_cpython() {
    let fns = check("imports");
    assert_eq!(fns.len(), 12);
    let imports = |name: &str| {
        fns.iter()
            .find(|f| function_name(&f.signature) == name)
            .unwrap()
            .imports
            .clone()
    };
    assert_eq!(imports("comprehension"), vec!["import math", "import re"]);
    assert!(imports("shadowed").is_empty());
    assert!(imports("rebinding").is_empty());
    assert_eq!(imports("local_import"), vec!["import functools"]);
}

#[test]
fn fixture_corpora_agree_with_cpython() {
    assert_eq!(check("funnel/corpus").len(), 40);
    assert_eq!(check("e2e/corpus").len(), 20);
}
