//! Runtime configuration: backend selection, tool paths, LLM endpoints, and
//! tuning defaults. Precedence is flags > environment > config file > defaults;
//! the file and defaults live here, environment overrides are applied by
//! [`EccoConfig::apply_env`], and flag overrides are the caller's job.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tactician::GaConfig;

pub const ENV_LLVM_BIN: &str = "ECCO_LLVM_BIN";
pub const ENV_LLM_ENDPOINT: &str = "ECCO_LLM_ENDPOINT";
pub const ENV_LLM_KEY: &str = "ECCO_LLM_KEY";
pub const ENV_LLM_MODEL: &str = "ECCO_LLM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Llvm,
    Synthetic,
}

/// Backend configuration. For the real toolchain the tool names resolve via
/// `llvm_bin` (or `$ECCO_LLVM_BIN`) when set, else PATH lookup.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Directory containing opt / llc / llvm-mca.
    pub llvm_bin: Option<PathBuf>,
    /// Target triple passed to llc and llvm-mca; pinned for determinism.
    pub target_triple: Option<String>,
    /// Extra llvm-mca flags (e.g. iteration count or -mcpu).
    pub mca_args: Vec<String>,
    /// External Autophase feature extractor: invoked as `<bin> <ir-file>`,
    /// must print the 56 counts as a JSON array or name-keyed object.
    pub autophase_bin: Option<PathBuf>,
    /// Wall-clock budget per tool invocation, seconds.
    pub timeout_secs: u64,
    /// Append-only evaluation cache file; in-memory only when unset.
    pub cache_path: Option<PathBuf>,
    /// Synthetic corpus descriptor file (required for the synthetic backend).
    pub synthetic_corpus: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Llvm,
            llvm_bin: None,
            target_triple: None,
            mca_args: Vec::new(),
            autophase_bin: None,
            timeout_secs: 60,
            cache_path: None,
            synthetic_corpus: None,
        }
    }
}

/// One OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Label used in reports (judges carry distinct ids).
    pub id: String,
    /// Base URL; the client POSTs to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Bearer token. Usually injected from the environment, not the file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    /// Name of an env var to read the key from (for judge lists in files).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// Concurrent in-flight request cap for candidate sampling.
    pub in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            id: "default".into(),
            endpoint: String::new(),
            model: String::new(),
            api_key: None,
            api_key_env: None,
            temperature: 0.8,
            timeout_secs: 120,
            max_retries: 3,
            backoff_ms: 200,
            in_flight: 4,
        }
    }
}

impl LlmConfig {
    /// Resolve the bearer token: explicit key, then `api_key_env`, then
    /// `$ECCO_LLM_KEY`.
    pub fn resolve_key(&self) -> Option<String> {
        if let Some(k) = &self.api_key {
            return Some(k.clone());
        }
        if let Some(var) = &self.api_key_env {
            if let Ok(k) = std::env::var(var) {
                return Some(k);
            }
        }
        std::env::var(ENV_LLM_KEY).ok()
    }

    pub fn is_configured(&self) -> bool {
        !self.endpoint.is_empty()
    }
}

/// Prior construction knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Star passes kept per category.
    pub top_k: usize,
    /// Benefit assigned to a perturbation the backend failed to evaluate.
    pub failed_benefit_cap: f64,
    /// Whether capped/flagged samples enter the expected-benefit mean.
    pub include_flagged: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            failed_benefit_cap: 10.0,
            include_flagged: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EccoConfig {
    /// Pass vocabulary data file; the embedded LLVM 10 set when unset.
    pub vocab: Option<PathBuf>,
    pub backend: BackendConfig,
    /// Strategist endpoint (student model).
    pub llm: LlmConfig,
    /// Teacher endpoint for rationale generation; falls back to `llm`.
    pub teacher: Option<LlmConfig>,
    pub ga: GaConfig,
    pub prior: PriorConfig,
    /// Eq.-2 scaling coefficient for the performance reward.
    pub alpha: f64,
    /// Best-of-N sampling width for the strategist.
    pub best_of: usize,
    /// Teacher sampling temperature for rationale generation.
    pub teacher_temperature: f64,
    /// Worker cap for corpus-parallel stages (0 = rayon default).
    pub jobs: usize,
}

impl EccoConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: EccoConfig = serde_json::from_str(&text)?;
        cfg.normalize();
        Ok(cfg)
    }

    fn normalize(&mut self) {
        if self.alpha == 0.0 {
            self.alpha = 1.0;
        }
        if self.best_of == 0 {
            self.best_of = 32;
        }
        if self.teacher_temperature == 0.0 {
            self.teacher_temperature = 0.7;
        }
    }

    /// Environment overrides (between file and flags in precedence).
    pub fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var(ENV_LLVM_BIN) {
            if !dir.is_empty() {
                self.backend.llvm_bin = Some(PathBuf::from(dir));
            }
        }
        if let Ok(ep) = std::env::var(ENV_LLM_ENDPOINT) {
            if !ep.is_empty() {
                self.llm.endpoint = ep;
            }
        }
        if let Ok(model) = std::env::var(ENV_LLM_MODEL) {
            if !model.is_empty() {
                self.llm.model = model;
            }
        }
    }
}
