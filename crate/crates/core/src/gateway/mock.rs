//! Scripted transcripts and closure backends.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io;
use std::path::Path;
use std::sync::Mutex;

use super::{
    Backend, BackendError, Completion, FinishReason, GenerationRequest, Message, Sample, Usage,
};
use crate::jsonl;

/// Transcript key: SHA-256 over the canonical JSON of the message list and
/// the sample count. Temperature and token limits do not participate.
pub fn transcript_key(messages: &[Message], n_samples: usize) -> String {
    #[derive(Serialize)]
    struct Keyed<'a> {
        messages: &'a [Message],
        n_samples: usize,
    }
    let canonical = serde_json::to_string(&Keyed {
        messages,
        n_samples,
    })
    .expect("messages serialize");
    jsonl::sha256_hex(canonical.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key_hash: String,
    pub samples: Vec<String>,
}

fn rough_tokens(text: &str) -> u64 {
    text.chars().count().div_ceil(4) as u64
}

fn completion(req: &GenerationRequest, texts: Vec<String>) -> Completion {
    let prompt_tokens = req.messages.iter().map(|m| rough_tokens(&m.content)).sum();
    let completion_tokens = texts.iter().map(|t| rough_tokens(t)).sum();
    Completion {
        samples: texts
            .into_iter()
            .map(|text| Sample {
                text,
                finish_reason: FinishReason::Stop,
            })
            .collect(),
        usage: Usage {
            prompt_tokens,
            completion_tokens,
        },
    }
}

/// Replays a transcript. A request whose key is absent is an error; the
/// first `n_samples` scripted variants are returned in order.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMock {
    entries: HashMap<String, Vec<String>>,
}

impl ScriptedMock {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|e| (e.key_hash, e.samples))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::new(jsonl::read::<TranscriptEntry>(path)?))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ScriptedMock {
    fn complete(&self, req: &GenerationRequest) -> Result<Completion, BackendError> {
        let key = transcript_key(&req.messages, req.n_samples);
        let scripted = self
            .entries
            .get(&key)
            .ok_or_else(|| BackendError::Unscripted(key.clone()))?;
        if scripted.len() < req.n_samples {
            return Err(BackendError::Fatal(format!(
                "transcript entry {key} has {} samples, request wants {}",
                scripted.len(),
                req.n_samples
            )));
        }
        Ok(completion(req, scripted[..req.n_samples].to_vec()))
    }
}

type Responder = dyn Fn(&GenerationRequest) -> Result<Vec<String>, BackendError> + Send + Sync;

/// Backend driven by a closure; handy for tests and for wrapping in-process
/// models.
pub struct FnBackend {
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new(
        respond: impl Fn(&GenerationRequest) -> Result<Vec<String>, BackendError>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        Self {
            respond: Box::new(respond),
        }
    }
}

impl Backend for FnBackend {
    fn complete(&self, req: &GenerationRequest) -> Result<Completion, BackendError> {
        (self.respond)(req).map(|texts| completion(req, texts))
    }
}

/// Wraps a backend and keeps every successful exchange as a transcript entry.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    /// Recorded entries sorted by key, last write per key winning.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        let mut by_key: HashMap<String, Vec<String>> = HashMap::new();
        for e in self.entries.lock().expect("recorder lock").iter() {
            by_key.insert(e.key_hash.clone(), e.samples.clone());
        }
        let mut out: Vec<TranscriptEntry> = by_key
            .into_iter()
            .map(|(key_hash, samples)| TranscriptEntry { key_hash, samples })
            .collect();
        out.sort_by(|a, b| a.key_hash.cmp(&b.key_hash));
        out
    }

    pub fn write_transcript(&self, path: &Path) -> io::Result<()> {
        jsonl::write(path, &self.entries())
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, req: &GenerationRequest) -> Result<Completion, BackendError> {
        let out = self.inner.complete(req)?;
        self.entries
            .lock()
            .expect("recorder lock")
            .push(TranscriptEntry {
                key_hash: transcript_key(&req.messages, req.n_samples),
                samples: out.samples.iter().map(|s| s.text.clone()).collect(),
            });
        Ok(out)
    }
}

impl<B: Backend> Backend for std::sync::Arc<B> {
    fn complete(&self, req: &GenerationRequest) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }
}
