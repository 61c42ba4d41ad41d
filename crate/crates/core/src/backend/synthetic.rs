//! Deterministic synthetic evaluation model.
//!
//! A synthetic program is a base feature vector, a base cycle cost, and a
//! per-pass effect table. Applying a pass multiplies the cost by a factor and
//! shifts features by integer deltas; an effect may carry a conditional part
//! that fires only when some other pass was applied at a strictly earlier
//! step, which is how order sensitivity and synergy enter the model. Missing
//! effect entries are the identity, so `--noop-pass` is a no-op everywhere.
//!
//! Everything is exact integer/deterministic arithmetic, which is what makes
//! brute-force oracles (exhaustive enumeration, subset closure) feasible in
//! tests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CycleCount, EvalOutcome, ProgramHandle, RawBackend};
use crate::error::{Error, Result};
use crate::features::{feature_index, AutophaseVector, FEATURE_NAMES};
use crate::passes::{normalize_flag, PassSequence};

/// The fixed six-pass synthetic vocabulary (see `data/synthetic/vocab.tsv`).
pub const SYNTHETIC_VOCAB_TSV: &str = include_str!("../../../../data/synthetic/vocab.tsv");

pub const SYN_NOOP: &str = "--noop-pass";
pub const SYN_LOOP: &str = "--sy-loop";
pub const SYN_SCALAR: &str = "--sy-scalar";
pub const SYN_MEM: &str = "--sy-mem";
pub const SYN_VEC: &str = "--sy-vec";
pub const SYN_CF: &str = "--sy-cf";

pub const SYN_FLAGS: [&str; 6] = [SYN_NOOP, SYN_LOOP, SYN_SCALAR, SYN_MEM, SYN_VEC, SYN_CF];

fn default_factor() -> f64 {
    1.0
}

/// Extra effect applied when `requires` was applied at an earlier step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalEffect {
    pub requires: String,
    #[serde(default = "default_factor")]
    pub cost_factor: f64,
    #[serde(default)]
    pub feature_delta: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassEffect {
    #[serde(default = "default_factor")]
    pub cost_factor: f64,
    /// Sparse feature shift keyed by feature name.
    #[serde(default)]
    pub feature_delta: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<ConditionalEffect>,
}

/// Base features accept either the full 56-array or a sparse name map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSpec {
    Full(Vec<u64>),
    Sparse(BTreeMap<String, u64>),
}

impl FeatureSpec {
    fn resolve(&self) -> Result<AutophaseVector> {
        match self {
            FeatureSpec::Full(counts) => AutophaseVector::new(counts.clone()),
            FeatureSpec::Sparse(map) => {
                let mut counts = vec![0u64; FEATURE_NAMES.len()];
                for (name, value) in map {
                    let i = feature_index(name)
                        .ok_or_else(|| Error::Parse(format!("unknown feature {name}")))?;
                    counts[i] = *value;
                }
                AutophaseVector::new(counts)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticProgram {
    pub id: String,
    pub base_cost: u64,
    pub base_features: FeatureSpec,
    #[serde(default)]
    pub effects: BTreeMap<String, PassEffect>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    /// The model's fixed -O3-equivalent pipeline, applied by `baseline_raw`.
    pub o3_pipeline: Vec<String>,
    pub programs: Vec<SyntheticProgram>,
}

impl SyntheticCorpus {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serializes")
    }
}

struct ResolvedConditional {
    requires: String,
    cost_factor: f64,
    deltas: Vec<(usize, i64)>,
}

struct ResolvedEffect {
    cost_factor: f64,
    deltas: Vec<(usize, i64)>,
    conditional: Option<ResolvedConditional>,
}

struct ResolvedProgram {
    base_cost: u64,
    base_features: AutophaseVector,
    effects: HashMap<String, ResolvedEffect>,
}

pub struct SyntheticBackend {
    programs: HashMap<String, ResolvedProgram>,
    o3_pipeline: Vec<String>,
    fingerprint: String,
}

fn resolve_deltas(map: &BTreeMap<String, i64>) -> Result<Vec<(usize, i64)>> {
    map.iter()
        .map(|(name, d)| {
            feature_index(name)
                .map(|i| (i, *d))
                .ok_or_else(|| Error::Parse(format!("unknown feature {name}")))
        })
        .collect()
}

impl SyntheticBackend {
    pub fn from_corpus(corpus: &SyntheticCorpus, fingerprint_salt: &str) -> Result<Self> {
        let mut programs = HashMap::new();
        for prog in &corpus.programs {
            let base_features = prog.base_features.resolve()?;
            let mut effects = HashMap::new();
            for (flag, eff) in &prog.effects {
                let resolved = ResolvedEffect {
                    cost_factor: eff.cost_factor,
                    deltas: resolve_deltas(&eff.feature_delta)?,
                    conditional: eff
                        .conditional
                        .as_ref()
                        .map(|c| {
                            Ok::<_, Error>(ResolvedConditional {
                                requires: normalize_flag(&c.requires),
                                cost_factor: c.cost_factor,
                                deltas: resolve_deltas(&c.feature_delta)?,
                            })
                        })
                        .transpose()?,
                };
                effects.insert(normalize_flag(flag), resolved);
            }
            if programs
                .insert(
                    prog.id.clone(),
                    ResolvedProgram {
                        base_cost: prog.base_cost.max(1),
                        base_features,
                        effects,
                    },
                )
                .is_some()
            {
                return Err(Error::Parse(format!("duplicate program id {}", prog.id)));
            }
        }
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(corpus)?);
        h.update(fingerprint_salt.as_bytes());
        let digest = h.finalize();
        let short: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            programs,
            o3_pipeline: corpus.o3_pipeline.iter().map(|f| normalize_flag(f)).collect(),
            fingerprint: format!("synthetic:{short}"),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read synthetic corpus {path:?}: {e}")))?;
        let corpus: SyntheticCorpus = serde_json::from_str(&text)?;
        Self::from_corpus(&corpus, "")
    }

    fn eval_flags(&self, program_id: &str, flags: &[String]) -> EvalOutcome {
        let Some(prog) = self.programs.get(program_id) else {
            return EvalOutcome::CompileError {
                stderr: format!("unknown synthetic program {program_id}"),
            };
        };
        let mut features = prog.base_features.clone();
        let mut cost = prog.base_cost;
        let mut applied: HashSet<&str> = HashSet::new();
        for flag in flags {
            if let Some(eff) = prog.effects.get(flag.as_str()) {
                cost = scale_cost(cost, eff.cost_factor);
                features = features.saturating_apply(&eff.deltas);
                if let Some(cond) = &eff.conditional {
                    if applied.contains(cond.requires.as_str()) {
                        cost = scale_cost(cost, cond.cost_factor);
                        features = features.saturating_apply(&cond.deltas);
                    }
                }
            }
            applied.insert(flag.as_str());
        }
        EvalOutcome::Ok {
            cycles: CycleCount(cost),
            features: features.clone(),
            ir_after: render_ir(program_id, &features),
        }
    }
}

fn scale_cost(cost: u64, factor: f64) -> u64 {
    ((cost as f64 * factor).round() as u64).max(1)
}

/// Deterministic pseudo-IR: the feature vector as one `Name: value` line per
/// feature. Evidence diffs over this text show exactly the counts a pass
/// moved.
pub fn render_ir(program_id: &str, features: &AutophaseVector) -> String {
    let mut out = String::with_capacity(FEATURE_NAMES.len() * 24);
    out.push_str(&format!("; synthetic-ir {program_id}\n"));
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        out.push_str(&format!("{name}: {}\n", features.get(i)));
    }
    out
}

impl RawBackend for SyntheticBackend {
    fn evaluate_raw(&self, program: &ProgramHandle, seq: &PassSequence) -> Result<EvalOutcome> {
        Ok(self.eval_flags(&program.id, &seq.render()))
    }

    fn baseline_raw(&self, program: &ProgramHandle) -> Result<EvalOutcome> {
        Ok(self.eval_flags(&program.id, &self.o3_pipeline))
    }

    fn features_of_ir(&self, ir: &str) -> Result<AutophaseVector> {
        let mut counts = vec![0u64; FEATURE_NAMES.len()];
        for line in ir.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let (name, value) = line
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("bad synthetic IR line {line:?}")))?;
            let i = feature_index(name.trim())
                .ok_or_else(|| Error::Parse(format!("unknown feature {}", name.trim())))?;
            counts[i] = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad count in line {line:?}")))?;
        }
        AutophaseVector::new(counts)
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn o3_seed_flags(&self) -> Vec<String> {
        self.o3_pipeline.clone()
    }

    fn check_ready(&self) -> Result<()> {
        if self.programs.is_empty() {
            return Err(Error::Environment("synthetic corpus has no programs".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Corpus generation, used by the verification suites and for demo corpora.
// ---------------------------------------------------------------------------

/// Knobs for [`generate_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub programs: usize,
    /// Chance that a given non-noop pass has any effect on a program.
    pub effect_density: f64,
    /// Chance that an effectful pass carries a conditional part.
    pub conditional_density: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            programs: 30,
            effect_density: 0.85,
            conditional_density: 0.35,
        }
    }
}

/// Deterministically generate a synthetic corpus over the fixed six-pass
/// vocabulary. Feature deltas are kept consistent with the TotalInsts
/// dominance invariant by construction (opcode shifts also shift the totals).
pub fn generate_corpus(seed: u64, spec: &CorpusSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut programs = Vec::with_capacity(spec.programs);
    for n in 0..spec.programs {
        let id = format!("sy{:03}", n);
        let base_cost = rng.gen_range(800..6000);

        let loads = rng.gen_range(10..40u64);
        let stores = rng.gen_range(8..30u64);
        let allocas = rng.gen_range(2..12u64);
        let branches = rng.gen_range(10..45u64);
        let icmps = rng.gen_range(5..25u64);
        let adds = rng.gen_range(5..30u64);
        let muls = rng.gen_range(2..15u64);
        let phis = rng.gen_range(0..18u64);
        let geps = rng.gen_range(4..20u64);
        let rets = rng.gen_range(1..4u64);
        let calls = rng.gen_range(0..12u64);
        let opcode_sum = loads
            + stores
            + allocas
            + branches
            + icmps
            + adds
            + muls
            + phis
            + geps
            + rets
            + calls;
        let total_insts = opcode_sum + rng.gen_range(10..60u64);
        let blocks = rng.gen_range(5..40u64);

        let mut base = BTreeMap::new();
        base.insert("NumLoadInst".into(), loads);
        base.insert("NumStoreInst".into(), stores);
        base.insert("NumAllocaInst".into(), allocas);
        base.insert("NumBrInst".into(), branches);
        base.insert("BranchCount".into(), branches);
        base.insert("NumICmpInst".into(), icmps);
        base.insert("NumAddInst".into(), adds);
        base.insert("NumMulInst".into(), muls);
        base.insert("NumPHIInst".into(), phis);
        base.insert("NumGetElementPtrInst".into(), geps);
        base.insert("NumRetInst".into(), rets);
        base.insert("NumCallInst".into(), calls);
        base.insert("TotalInsts".into(), total_insts);
        base.insert("TotalBlocks".into(), blocks);
        base.insert("TotalMemInst".into(), loads + stores + allocas);
        base.insert("TotalFuncs".into(), rets.max(1));
        base.insert("NumEdges".into(), blocks + branches / 2);
        base.insert("BBNoPhi".into(), blocks.saturating_sub(phis.min(blocks)));

        let mut effects = BTreeMap::new();
        for flag in [SYN_LOOP, SYN_SCALAR, SYN_MEM, SYN_VEC, SYN_CF] {
            if rng.gen::<f64>() > spec.effect_density {
                continue;
            }
            let factor = *pick(
                &mut rng,
                &[0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.15],
            );
            let mut delta = BTreeMap::new();
            match flag {
                SYN_LOOP => {
                    let d = rng.gen_range(1..6i64);
                    delta.insert("NumBrInst".into(), -d);
                    delta.insert("BranchCount".into(), -d);
                    delta.insert("TotalInsts".into(), -d);
                }
                SYN_SCALAR => {
                    let d = rng.gen_range(1..5i64);
                    delta.insert("NumICmpInst".into(), -d);
                    delta.insert("NumAddInst".into(), -(d / 2));
                    delta.insert("TotalInsts".into(), -(d + d / 2));
                }
                SYN_MEM => {
                    let d = rng.gen_range(1..6i64);
                    delta.insert("NumLoadInst".into(), -d);
                    delta.insert("NumStoreInst".into(), -(d / 2));
                    delta.insert("TotalMemInst".into(), -(d + d / 2));
                    delta.insert("TotalInsts".into(), -(d + d / 2));
                }
                SYN_VEC => {
                    let d = rng.gen_range(1..4i64);
                    delta.insert("NumMulInst".into(), -d);
                    delta.insert("TotalInsts".into(), -d);
                }
                _ => {
                    let d = rng.gen_range(1..4i64);
                    delta.insert("NumBrInst".into(), -d);
                    delta.insert("BranchCount".into(), -d);
                    delta.insert("TotalBlocks".into(), -(d / 2));
                    delta.insert("TotalInsts".into(), -d);
                }
            }
            let conditional = if rng.gen::<f64>() < spec.conditional_density {
                let requires = *pick(&mut rng, &[SYN_LOOP, SYN_SCALAR, SYN_MEM, SYN_CF]);
                if requires != flag {
                    Some(ConditionalEffect {
                        requires: requires.to_string(),
                        cost_factor: *pick(&mut rng, &[0.6, 0.7, 0.8, 1.2]),
                        feature_delta: BTreeMap::new(),
                    })
                } else {
                    None
                }
            } else {
                None
            };
            effects.insert(
                flag.to_string(),
                PassEffect {
                    cost_factor: factor,
                    feature_delta: delta,
                    conditional,
                },
            );
        }

        programs.push(SyntheticProgram {
            id,
            base_cost,
            base_features: FeatureSpec::Sparse(base),
            effects,
        });
    }
    SyntheticCorpus {
        o3_pipeline: vec![SYN_SCALAR.into(), SYN_MEM.into()],
        programs,
    }
}

/// Random raw sequence over the synthetic vocabulary (noop included), for
/// building pruning inputs.
pub fn random_sequence(rng: &mut ChaCha8Rng, min_len: usize, max_len: usize) -> Vec<String> {
    let len = rng.gen_range(min_len..=max_len);
    (0..len)
        .map(|_| pick(rng, &SYN_FLAGS).to_string())
        .collect()
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}
