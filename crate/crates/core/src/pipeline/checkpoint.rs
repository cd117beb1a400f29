use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::jsonl;

/// Progress of one stage. Partial outputs are append-only; the recorded byte
/// lengths mark the last shard known to be fully written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub stage: String,
    pub upstream_hash: String,
    pub records_completed: usize,
    pub output_bytes: u64,
    pub drops_bytes: u64,
    pub complete: bool,
    pub output_hash: Option<String>,
    pub timestamp: u64,
}

impl Checkpoint {
    pub fn new(stage: &str, upstream_hash: &str) -> Self {
        Checkpoint {
            stage: stage.into(),
            upstream_hash: upstream_hash.into(),
            records_completed: 0,
            output_bytes: 0,
            drops_bytes: 0,
            complete: false,
            output_hash: None,
            timestamp: now(),
        }
    }

    pub fn path(dir: &Path, stage: &str) -> PathBuf {
        dir.join("checkpoints").join(format!("{stage}.json"))
    }

    pub fn load(dir: &Path, stage: &str) -> Result<Option<Self>, PipelineError> {
        let path = Self::path(dir, stage);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| PipelineError::Corrupt(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(PipelineError::io(&path, e)),
        }
    }

    pub fn save(&mut self, dir: &Path) -> Result<(), PipelineError> {
        self.timestamp = now();
        let path = Self::path(dir, &self.stage);
        let mut bytes = serde_json::to_vec_pretty(self).expect("checkpoint serializes");
        bytes.push(b'\n');
        jsonl::write_atomic(&path, &bytes).map_err(|e| PipelineError::io(&path, e))
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Append-only sink for a stage's partial output.
pub struct PartialFile {
    pub path: PathBuf,
    file: File,
    pub len: u64,
}

impl PartialFile {
    /// Opens `path`, discarding anything past `keep` bytes.
    pub fn open(path: PathBuf, keep: u64) -> Result<Self, PipelineError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(&path)
            .map_err(|e| PipelineError::io(&path, e))?;
        let actual = file
            .metadata()
            .map_err(|e| PipelineError::io(&path, e))?
            .len();
        if actual < keep {
            return Err(PipelineError::Corrupt(format!(
                "{} holds {actual} bytes but the checkpoint records {keep}",
                path.display()
            )));
        }
        file.set_len(keep)
            .map_err(|e| PipelineError::io(&path, e))?;
        Ok(PartialFile {
            path,
            file,
            len: keep,
        })
    }

    pub fn append(&mut self, text: &str) -> Result<(), PipelineError> {
        self.file
            .write_all(text.as_bytes())
            .map_err(|e| PipelineError::io(&self.path, e))?;
        self.file
            .sync_data()
            .map_err(|e| PipelineError::io(&self.path, e))?;
        self.len += text.len() as u64;
        Ok(())
    }

    pub fn finish(self, dest: &Path) -> Result<(), PipelineError> {
        drop(self.file);
        fs::rename(&self.path, dest).map_err(|e| PipelineError::io(dest, e))
    }
}

/// One run per output directory. A lock left by a dead process is taken over.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

fn process_alive(pid: i32) -> bool {
    unsafe {
        libc::kill(pid, 0) == 0 || io::Error::last_os_error().raw_os_error() == Some(libc::EPERM)
    }
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let path = dir.join(".lock");
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(RunLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path)
                        .ok()
                        .and_then(|s| s.trim().parse::<i32>().ok());
                    match holder {
                        Some(pid) if pid as u32 != std::process::id() && process_alive(pid) => {
                            return Err(PipelineError::Locked(path))
                        }
                        Some(pid) if pid as u32 == std::process::id() => {
                            return Err(PipelineError::Locked(path))
                        }
                        _ => {
                            log::warn!("removing stale lock {}", path.display());
                            let _ = fs::remove_file(&path);
                        }
                    }
                }
                Err(e) => return Err(PipelineError::io(&path, e)),
            }
        }
        Err(PipelineError::Locked(path))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
