//! Append-only evaluation cache.
//!
//! Keys are content hashes over (backend fingerprint, program id, canonical
//! sequence text). Values are full `EvalOutcome`s. The persisted form is one
//! JSON record per line; on load the last write wins, which is benign because
//! values are deterministic for a given key.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalOutcome;
use crate::error::Result;

pub fn content_key(fingerprint: &str, program_id: &str, seq_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update([0]);
    h.update(program_id.as_bytes());
    h.update([0]);
    h.update(seq_text.as_bytes());
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    outcome: EvalOutcome,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub preloaded: u64,
}

pub struct EvalCache {
    mem: Mutex<HashMap<String, EvalOutcome>>,
    file: Option<Mutex<File>>,
    hits: AtomicU64,
    misses: AtomicU64,
    preloaded: u64,
}

impl EvalCache {
    /// In-memory only.
    pub fn in_memory() -> Self {
        Self {
            mem: Mutex::new(HashMap::new()),
            file: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            preloaded: 0,
        }
    }

    /// Open (and pre-load) the persisted cache at `path`; in-memory when None.
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::in_memory());
        };
        let mut mem = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // tolerate a truncated final record from an interrupted run
                if let Ok(rec) = serde_json::from_str::<CacheRecord>(&line) {
                    mem.insert(rec.key, rec.outcome);
                }
            }
        } else if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let preloaded = mem.len() as u64;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            mem: Mutex::new(mem),
            file: Some(Mutex::new(file)),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            preloaded,
        })
    }

    /// Read-through lookup. On a miss the closure runs outside the map lock;
    /// concurrent duplicate computation is possible and harmless (values are
    /// deterministic, last write wins).
    pub fn get_or_compute<F>(&self, key: &str, compute: F) -> Result<EvalOutcome>
    where
        F: FnOnce() -> Result<EvalOutcome>,
    {
        if let Some(hit) = self.mem.lock().unwrap().get(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let outcome = compute()?;
        self.mem
            .lock()
            .unwrap()
            .insert(key.to_string(), outcome.clone());
        if let Some(file) = &self.file {
            let rec = CacheRecord {
                key: key.to_string(),
                outcome: outcome.clone(),
            };
            let mut line = serde_json::to_string(&rec)?;
            line.push('\n');
            let mut f = file.lock().unwrap();
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(outcome)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            preloaded: self.preloaded,
        }
    }
}
