use serde::Deserialize;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::SourceDocument;

#[derive(Deserialize)]
struct CorpusRecord {
    #[serde(default)]
    doc_id: Option<String>,
    path: String,
    content: String,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Loads a corpus from a directory tree (files with `extension`, relative
/// path as id, sorted) or from a line-delimited `{path, content}` file.
/// Non-UTF-8 files are skipped.
pub fn load_corpus(
    path: &Path,
    extension: &str,
    language_tag: &str,
) -> io::Result<Vec<SourceDocument>> {
    let mut docs = Vec::new();
    if path.is_dir() {
        let mut files = Vec::new();
        walk(path, &mut files)?;
        for file in files {
            if file.extension().and_then(|e| e.to_str()) != Some(extension) {
                continue;
            }
            let Ok(content) = fs::read_to_string(&file) else {
                log::warn!("skipping non-UTF-8 file {}", file.display());
                continue;
            };
            let rel = file
                .strip_prefix(path)
                .unwrap_or(&file)
                .to_string_lossy()
                .replace('\\', "/");
            docs.push(SourceDocument {
                doc_id: rel.clone(),
                path: rel,
                content,
                language_tag: language_tag.to_string(),
            });
        }
    } else {
        let records: Vec<CorpusRecord> = crate::jsonl::read(path)?;
        for r in records {
            docs.push(SourceDocument {
                doc_id: r.doc_id.unwrap_or_else(|| r.path.clone()),
                path: r.path,
                content: r.content,
                language_tag: language_tag.to_string(),
            });
        }
    }
    let mut seen = std::collections::HashSet::new();
    for d in &docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("duplicate doc_id {}", d.doc_id),
            ));
        }
    }
    Ok(docs)
}

#[derive(Deserialize)]
struct BenchmarkRecord {
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    solution: Option<String>,
}

/// Reads benchmark strings: `{prompt, solution}` records when the file is
/// `.jsonl`, otherwise one string per non-empty line.
pub fn load_benchmark_strings(path: &Path) -> io::Result<Vec<String>> {
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        let records: Vec<BenchmarkRecord> = crate::jsonl::read(path)?;
        Ok(records
            .into_iter()
            .flat_map(|r| [r.prompt, r.solution])
            .flatten()
            .filter(|s| !s.is_empty())
            .collect())
    } else {
        Ok(fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect())
    }
}
