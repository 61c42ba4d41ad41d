//! Pluggable compiler evaluation: apply a pass sequence to a program, extract
//! Autophase features, and estimate cycle counts.
//!
//! Two implementations sit behind [`Backend`]: the real LLVM toolchain
//! (`opt` → `llc` → `llvm-mca`) and a deterministic synthetic model used for
//! desk-scale verification. All evaluations flow through a read-through cache
//! keyed by content hash, so identical queries never hit the tools twice.

mod cache;
pub mod llvm;
pub mod synthetic;

pub use cache::{CacheStats, EvalCache};
pub use llvm::LlvmBackend;
pub use synthetic::{SyntheticBackend, SyntheticCorpus, SyntheticProgram};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{BackendConfig, BackendKind};
use crate::error::{Error, Result};
use crate::features::AutophaseVector;
use crate::passes::PassSequence;

/// A program under evaluation. `ir_source` is an opaque reference the backend
/// resolves at evaluation time: a filesystem path for the LLVM toolchain, the
/// corpus program id for the synthetic model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramHandle {
    pub id: String,
    pub ir_source: String,
}

impl ProgramHandle {
    pub fn new(id: impl Into<String>, ir_source: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ir_source: ir_source.into(),
        }
    }

    /// Synthetic programs resolve by id alone.
    pub fn synthetic(id: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            ir_source: id.clone(),
            id,
        }
    }
}

/// Estimated cycle count; at least 1 for any non-empty program.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct CycleCount(pub u64);

impl CycleCount {
    /// Sentinel for "worse than anything measurable" (failed swaps, failed
    /// individuals in the GA).
    pub const WORST: CycleCount = CycleCount(u64::MAX);

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for CycleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Outcome of one evaluation. Cycles, features, and post-pass IR are present
/// exactly when the status is `Ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum EvalOutcome {
    Ok {
        cycles: CycleCount,
        features: AutophaseVector,
        ir_after: String,
    },
    CompileError {
        stderr: String,
    },
    Timeout,
}

impl EvalOutcome {
    pub fn cycles(&self) -> Option<CycleCount> {
        match self {
            EvalOutcome::Ok { cycles, .. } => Some(*cycles),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, EvalOutcome::Ok { .. })
    }

    /// Unwrap to cycles or surface the failure as an error.
    pub fn require_cycles(&self) -> Result<CycleCount> {
        match self {
            EvalOutcome::Ok { cycles, .. } => Ok(*cycles),
            EvalOutcome::CompileError { stderr } => Err(Error::Compile(stderr.clone())),
            EvalOutcome::Timeout => Err(Error::Timeout(0)),
        }
    }
}

/// The uncached evaluation surface each backend implements. Everything here
/// must be deterministic per (backend config, program, sequence).
pub trait RawBackend: Send + Sync {
    fn evaluate_raw(&self, program: &ProgramHandle, seq: &PassSequence) -> Result<EvalOutcome>;

    /// The backend's fixed -O3-equivalent pipeline.
    fn baseline_raw(&self, program: &ProgramHandle) -> Result<EvalOutcome>;

    /// Autophase features of raw IR text (or a synthetic state rendering).
    fn features_of_ir(&self, ir: &str) -> Result<AutophaseVector>;

    /// Stable identity of this backend + config, mixed into cache keys.
    fn fingerprint(&self) -> String;

    /// Raw flags for a seed sequence whose evaluation reproduces the -O3
    /// baseline; used by offline (`--no-llm`) tuning.
    fn o3_seed_flags(&self) -> Vec<String>;

    /// Verify the environment can actually run evaluations (tools present,
    /// corpus loaded). Failures map to environment errors at the CLI.
    fn check_ready(&self) -> Result<()>;
}

/// Cache-fronted backend handle shared across worker threads.
pub struct Backend {
    raw: Box<dyn RawBackend>,
    cache: EvalCache,
}

impl Backend {
    pub fn new(raw: Box<dyn RawBackend>, cache: EvalCache) -> Self {
        Self { raw, cache }
    }

    /// Build from configuration. The synthetic backend requires a corpus
    /// file; the LLVM backend resolves tool paths but defers probing to
    /// [`Backend::check_ready`].
    pub fn from_config(cfg: &BackendConfig) -> Result<Self> {
        let raw: Box<dyn RawBackend> = match cfg.kind {
            BackendKind::Synthetic => {
                let path = cfg.synthetic_corpus.as_deref().ok_or_else(|| {
                    Error::Config("synthetic backend requires backend.synthetic_corpus".into())
                })?;
                Box::new(SyntheticBackend::load(path)?)
            }
            BackendKind::Llvm => Box::new(LlvmBackend::from_config(cfg)),
        };
        let cache = EvalCache::open(cfg.cache_path.as_deref())?;
        Ok(Self { raw, cache })
    }

    fn key(&self, program: &ProgramHandle, seq_text: &str) -> String {
        cache::content_key(&self.raw.fingerprint(), &program.id, seq_text)
    }

    /// Evaluate with read-through caching; deterministic per (config, id, seq).
    pub fn evaluate(&self, program: &ProgramHandle, seq: &PassSequence) -> Result<EvalOutcome> {
        let key = self.key(program, &seq.canonical_text());
        self.cache
            .get_or_compute(&key, || self.raw.evaluate_raw(program, seq))
    }

    /// The -O3-equivalent baseline, cached under a reserved key.
    pub fn baseline_o3(&self, program: &ProgramHandle) -> Result<EvalOutcome> {
        let key = self.key(program, "<baseline-o3>");
        self.cache
            .get_or_compute(&key, || self.raw.baseline_raw(program))
    }

    /// Baseline cycles or an error if the baseline itself fails.
    pub fn baseline_o3_cycles(&self, program: &ProgramHandle) -> Result<CycleCount> {
        self.baseline_o3(program)?.require_cycles()
    }

    pub fn features_of_ir(&self, ir: &str) -> Result<AutophaseVector> {
        self.raw.features_of_ir(ir)
    }

    pub fn o3_seed_flags(&self) -> Vec<String> {
        self.raw.o3_seed_flags()
    }

    pub fn check_ready(&self) -> Result<()> {
        self.raw.check_ready()
    }

    pub fn fingerprint(&self) -> String {
        self.raw.fingerprint()
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }
}

/// Resolve a path-shaped IR source to text.
pub(crate) fn read_ir_source(source: &str) -> Result<String> {
    let path = Path::new(source);
    std::fs::read_to_string(path)
        .map_err(|e| Error::Compile(format!("cannot read IR source {source}: {e}")))
}
