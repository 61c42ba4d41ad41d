//! Forensic evidence extraction along a minimal sequence.
//!
//! For every step t the pass is applied on top of the prefix before it and
//! three kinds of evidence are recorded: the unified IR diff, the Autophase
//! feature shift, and the marginal cycle gain. Step 0's baseline is the
//! unoptimized program (the empty prefix), which makes the gains telescope
//! exactly: Σ gₜ = cycles(∅) − cycles(full sequence).
//!
//! Synergy labels come from whole-sequence adjacent swaps: the full sequence
//! is re-evaluated with the pair (pᵢ, pᵢ₊₁) exchanged, and the original order
//! is positive-synergistic when the swap degrades cycles.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, CycleCount, EvalOutcome, ProgramHandle};
use crate::diff::{apply_patch, unified_diff};
use crate::error::{Error, Result};
use crate::features::{AutophaseVector, FeatureDelta};
use crate::passes::{PassId, PassSequence};
use crate::tactician::improvement;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceStep {
    pub index: usize,
    pub pass: PassId,
    /// δ_struct: unified diff of the pre/post IR text (empty for no change).
    pub ir_diff: String,
    /// δ_feat = φ_{t+1} − φ_t.
    #[serde(rename = "autophase_delta")]
    pub feature_delta: FeatureDelta,
    /// gₜ = cycles(prefix t) − cycles(prefix t+1); positive means improvement.
    #[serde(rename = "performance_gain")]
    pub marginal_gain: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Synergy {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynergyLabel {
    /// Index i of the swapped pair (i, i+1).
    pub index: usize,
    pub first: PassId,
    pub second: PassId,
    pub label: Synergy,
    /// Cycles of the full sequence with the pair swapped. A swap the backend
    /// could not evaluate is labeled Positive with the worst-value sentinel.
    pub swapped_cycles: CycleCount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceTrace {
    pub program_id: String,
    /// Φ_initial: features of the unoptimized program.
    pub autophase_features: AutophaseVector,
    pub optimal_sequence: PassSequence,
    pub pass_profile: Vec<EvidenceStep>,
    pub synergy_analysis: Vec<SynergyLabel>,
    pub initial_cycles: CycleCount,
    pub final_cycles: CycleCount,
    pub baseline_o3_cycles: CycleCount,
    /// I_O3 of the final cycles against the -O3 baseline.
    pub speedup_over_o3: f64,
}

fn eval_ok(
    backend: &Backend,
    program: &ProgramHandle,
    seq: &PassSequence,
    what: &str,
) -> Result<(CycleCount, AutophaseVector, String)> {
    match backend.evaluate(program, seq)? {
        EvalOutcome::Ok {
            cycles,
            features,
            ir_after,
        } => Ok((cycles, features, ir_after)),
        EvalOutcome::CompileError { stderr } => Err(Error::Compile(format!(
            "{what} failed for {}: {stderr}",
            program.id
        ))),
        EvalOutcome::Timeout => Err(Error::Compile(format!(
            "{what} timed out for {}",
            program.id
        ))),
    }
}

/// Collect the full evidence trace for `s_min` on `program`.
///
/// Prefix evaluations are sequential by data dependence. A backend failure
/// aborts with an error naming the completed step count (the partial-trace
/// report); completed traces always satisfy the telescoping invariants.
pub fn collect_trace(
    backend: &Backend,
    program: &ProgramHandle,
    s_min: &PassSequence,
) -> Result<EvidenceTrace> {
    let (initial_cycles, initial_features, initial_ir) =
        eval_ok(backend, program, &PassSequence::empty(), "empty-prefix evaluation")?;

    let mut steps = Vec::with_capacity(s_min.len());
    let mut prev_cycles = initial_cycles;
    let mut prev_features = initial_features.clone();
    let mut prev_ir = initial_ir;
    for t in 0..s_min.len() {
        let prefix = s_min.prefix(t + 1);
        let (cycles, features, ir_after) =
            eval_ok(backend, program, &prefix, "prefix evaluation").map_err(|e| {
                Error::Compile(format!(
                    "trace aborted after {t} of {} steps: {e}",
                    s_min.len()
                ))
            })?;
        steps.push(EvidenceStep {
            index: t,
            pass: s_min.passes()[t].clone(),
            ir_diff: unified_diff(&prev_ir, &ir_after),
            feature_delta: prev_features.delta_to(&features),
            marginal_gain: prev_cycles.get() as i64 - cycles.get() as i64,
        });
        prev_cycles = cycles;
        prev_features = features;
        prev_ir = ir_after;
    }

    let synergy = synergy_analysis(backend, program, s_min)?;
    let baseline = backend.baseline_o3_cycles(program)?;
    Ok(EvidenceTrace {
        program_id: program.id.clone(),
        autophase_features: initial_features,
        optimal_sequence: s_min.clone(),
        pass_profile: steps,
        synergy_analysis: synergy,
        initial_cycles,
        final_cycles: prev_cycles,
        baseline_o3_cycles: baseline,
        speedup_over_o3: improvement(baseline, prev_cycles),
    })
}

/// Label every adjacent pair of `s_min` by whole-sequence swap evaluation.
/// Sequences shorter than 2 produce the empty list.
pub fn synergy_analysis(
    backend: &Backend,
    program: &ProgramHandle,
    s_min: &PassSequence,
) -> Result<Vec<SynergyLabel>> {
    if s_min.len() < 2 {
        return Ok(Vec::new());
    }
    let original = backend.evaluate(program, s_min)?.require_cycles()?;
    let mut labels = Vec::with_capacity(s_min.len() - 1);
    for i in 0..s_min.len() - 1 {
        let swapped = s_min.with_adjacent_swapped(i);
        let (label, swapped_cycles) = match backend.evaluate(program, &swapped)?.cycles() {
            Some(c) if c > original => (Synergy::Positive, c),
            Some(c) if c < original => (Synergy::Negative, c),
            Some(c) => (Synergy::Neutral, c),
            // un-evaluable swap: the swap degrades by definition
            None => (Synergy::Positive, CycleCount::WORST),
        };
        labels.push(SynergyLabel {
            index: i,
            first: s_min.passes()[i].clone(),
            second: s_min.passes()[i + 1].clone(),
            label,
            swapped_cycles,
        });
    }
    Ok(labels)
}

/// Re-verify a trace's invariants against fresh backend evaluations:
/// telescoping gains, feature-delta consistency, diff fidelity, and shape.
/// Used on every emitted dataset file.
pub fn verify_trace(backend: &Backend, trace: &EvidenceTrace) -> Result<()> {
    let program = ProgramHandle::synthetic(&trace.program_id);
    verify_trace_for(backend, &program, trace)
}

pub fn verify_trace_for(
    backend: &Backend,
    program: &ProgramHandle,
    trace: &EvidenceTrace,
) -> Result<()> {
    if trace.pass_profile.len() != trace.optimal_sequence.len() {
        return Err(Error::Parse(format!(
            "{}: pass_profile has {} steps for a {}-pass sequence",
            trace.program_id,
            trace.pass_profile.len(),
            trace.optimal_sequence.len()
        )));
    }
    let expected_synergy = trace.optimal_sequence.len().saturating_sub(1);
    if trace.synergy_analysis.len() != expected_synergy {
        return Err(Error::Parse(format!(
            "{}: {} synergy labels, expected {expected_synergy}",
            trace.program_id,
            trace.synergy_analysis.len()
        )));
    }

    let (empty_cycles, empty_features, mut ir) =
        eval_ok(backend, program, &PassSequence::empty(), "verification")?;
    if empty_cycles != trace.initial_cycles || empty_features != trace.autophase_features {
        return Err(Error::Parse(format!(
            "{}: initial state does not match backend",
            trace.program_id
        )));
    }

    let (final_cycles, final_features, _) =
        eval_ok(backend, program, &trace.optimal_sequence, "verification")?;
    let gain_sum: i64 = trace.pass_profile.iter().map(|s| s.marginal_gain).sum();
    let drop = empty_cycles.get() as i64 - final_cycles.get() as i64;
    if gain_sum != drop {
        return Err(Error::Parse(format!(
            "{}: gains sum to {gain_sum}, cycle drop is {drop}",
            trace.program_id
        )));
    }

    let mut feats = trace.autophase_features.clone();
    for step in &trace.pass_profile {
        feats = feats.apply_delta(&step.feature_delta)?;
        // diff fidelity: patching the pre-IR must reproduce the post-IR
        ir = apply_patch(&ir, &step.ir_diff)?;
    }
    if feats != final_features {
        return Err(Error::Parse(format!(
            "{}: accumulated feature deltas do not reach the final features",
            trace.program_id
        )));
    }
    let (_, _, final_ir) = eval_ok(backend, program, &trace.optimal_sequence, "verification")?;
    if ir != final_ir {
        return Err(Error::Parse(format!(
            "{}: patched IR does not match the final IR",
            trace.program_id
        )));
    }
    if final_cycles != trace.final_cycles {
        return Err(Error::Parse(format!(
            "{}: final cycles {} do not match backend {}",
            trace.program_id, trace.final_cycles, final_cycles
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::synthetic::{SyntheticBackend, SyntheticCorpus, SYNTHETIC_VOCAB_TSV};
    use crate::backend::EvalCache;
    use crate::passes::Vocabulary;

    fn demo() -> (Backend, Vocabulary) {
        let corpus: SyntheticCorpus = serde_json::from_str(include_str!(
            "../../../data/synthetic/demo_corpus.json"
        ))
        .unwrap();
        let raw = SyntheticBackend::from_corpus(&corpus, "").unwrap();
        (
            Backend::new(Box::new(raw), EvalCache::in_memory()),
            Vocabulary::parse(SYNTHETIC_VOCAB_TSV).unwrap(),
        )
    }

    fn seq(vocab: &Vocabulary, flags: &[&str]) -> PassSequence {
        vocab
            .validate_sequence(&flags.iter().map(|s| s.to_string()).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn identity_step_has_empty_evidence() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy0");
        let trace = collect_trace(&backend, &p, &seq(&vocab, &["--noop-pass"])).unwrap();
        let step = &trace.pass_profile[0];
        assert_eq!(step.ir_diff, "");
        assert!(step.feature_delta.is_zero());
        assert_eq!(step.marginal_gain, 0);
    }

    #[test]
    fn conditional_pair_gains_small_then_large() {
        let (backend, vocab) = demo();
        // sy1: --sy-vec only pays off after --sy-loop
        let p = ProgramHandle::synthetic("sy1");
        let trace = collect_trace(&backend, &p, &seq(&vocab, &["--sy-loop", "--sy-vec"])).unwrap();
        let g0 = trace.pass_profile[0].marginal_gain;
        let g1 = trace.pass_profile[1].marginal_gain;
        assert_eq!(g0, 200); // 2000 -> 1800
        assert_eq!(g1, 774); // 1800 -> 1026
        assert!(g1 > g0);
        let total = trace.initial_cycles.get() as i64 - trace.final_cycles.get() as i64;
        assert_eq!(g0 + g1, total);
    }

    #[test]
    fn conditional_pair_is_positive_synergy() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy1");
        let labels =
            synergy_analysis(&backend, &p, &seq(&vocab, &["--sy-loop", "--sy-vec"])).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].label, Synergy::Positive);
        assert_eq!(labels[0].swapped_cycles, CycleCount(1710));
    }

    #[test]
    fn commuting_passes_are_neutral() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy0");
        let labels =
            synergy_analysis(&backend, &p, &seq(&vocab, &["--sy-scalar", "--sy-mem"])).unwrap();
        assert_eq!(labels[0].label, Synergy::Neutral);
    }

    #[test]
    fn single_pass_has_no_synergy() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy0");
        let labels = synergy_analysis(&backend, &p, &seq(&vocab, &["--sy-mem"])).unwrap();
        assert!(labels.is_empty());
    }

    #[test]
    fn swap_labels_are_deterministic() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy4");
        let s = seq(&vocab, &["--sy-loop", "--sy-vec", "--sy-mem"]);
        let a = synergy_analysis(&backend, &p, &s).unwrap();
        let b = synergy_analysis(&backend, &p, &s).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn traces_verify_and_round_trip_through_json() {
        let (backend, vocab) = demo();
        for (id, flags) in [
            ("sy1", vec!["--sy-loop", "--sy-vec", "--sy-scalar"]),
            ("sy3", vec!["--sy-cf", "--sy-mem"]),
            ("sy4", vec!["--sy-loop", "--sy-vec", "--sy-mem"]),
        ] {
            let p = ProgramHandle::synthetic(id);
            let trace = collect_trace(&backend, &p, &seq(&vocab, &flags)).unwrap();
            verify_trace(&backend, &trace).unwrap();
            let json = serde_json::to_string_pretty(&trace).unwrap();
            let back: EvidenceTrace = serde_json::from_str(&json).unwrap();
            verify_trace(&backend, &back).unwrap();
        }
    }

    #[test]
    fn trace_serialization_uses_contract_field_names() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy1");
        let trace = collect_trace(&backend, &p, &seq(&vocab, &["--sy-loop", "--sy-vec"])).unwrap();
        let json = serde_json::to_value(&trace).unwrap();
        assert!(json.get("autophase_features").is_some());
        assert!(json.get("optimal_sequence").is_some());
        assert!(json.get("pass_profile").is_some());
        assert!(json.get("synergy_analysis").is_some());
        assert!(json.get("speedup_over_o3").is_some());
        let step = &json["pass_profile"][0];
        assert!(step.get("ir_diff").is_some());
        assert!(step.get("autophase_delta").is_some());
        assert!(step.get("performance_gain").is_some());
    }

    #[test]
    fn speedup_matches_improvement_metric() {
        let (backend, vocab) = demo();
        let p = ProgramHandle::synthetic("sy1");
        let trace = collect_trace(&backend, &p, &seq(&vocab, &["--sy-loop", "--sy-vec"])).unwrap();
        // baseline: 2000 * 0.85 = 1700, * 1.0 (no mem effect) = 1700; final 1026
        assert_eq!(trace.baseline_o3_cycles, CycleCount(1700));
        let expected = (1700.0 - 1026.0) / 1700.0;
        assert!((trace.speedup_over_o3 - expected).abs() < 1e-12);
    }
}
