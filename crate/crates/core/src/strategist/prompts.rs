//! Prompt templates for the student, teacher, and judge roles.
//!
//! Rendering is deterministic down to the byte: feature dictionaries are
//! emitted in index order, sequences in positional order, and no timestamps
//! or environment data enter the text. Golden files pin the exact output.

use std::fmt::Write as _;

use serde_json::json;

use crate::features::AutophaseVector;
use crate::forensics::EvidenceTrace;
use crate::passes::Vocabulary;

fn features_json(features: &AutophaseVector) -> String {
    serde_json::to_string_pretty(features).expect("feature vector serializes")
}

/// Inference prompt for the student model: static features plus the fixed
/// vocabulary, with the think/answer formatting contract.
pub fn render_student_prompt(features: &AutophaseVector, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    out.push_str(
        "System Role:\n\
         You are a world-class compiler optimization expert. Your task is to find the optimal \
         pass sequence for a given LLVM IR program, aiming to maximize its runtime performance \
         (minimize execution cycles).\n\n",
    );
    out.push_str(
        "Input Context:\n\
         The program is represented by its static Autophase features. Analyze these features to \
         deduce the program's characteristics and performance bottlenecks.\n\n",
    );
    out.push_str("Program Autophase Features:\n```json\n");
    out.push_str(&features_json(features));
    out.push_str("\n```\n\n");
    out.push_str(
        "Constraints & Vocabulary:\n\
         Based on your analysis, provide your final recommended pass sequence.\n\
         You MUST select passes only from the following list:\n```text\n",
    );
    let flags: Vec<&str> = vocab.flags().iter().map(|p| p.flag()).collect();
    out.push_str(&flags.join(", "));
    out.push_str("\n```\n\n");
    out.push_str(
        "Formatting Instructions:\n\
         Your thought process should be enclosed in <think> tags, and your final answer (the \
         pass sequence list) must be enclosed in <answer> tags.\n\
         Do not invent or use any pass not in the list above.\n",
    );
    out
}

/// Distillation prompt for the teacher model: the full evidence packet plus
/// the feigned-reasoning constraint. The expected completion is a single JSON
/// object with keys "rationale" and "final_sequence".
pub fn render_teacher_prompt(trace: &EvidenceTrace) -> String {
    let mut out = String::new();
    out.push_str(
        "System Role:\n\
         You are a world-class compiler expert with the unique ability to both perform deep, \
         evidence-based analysis and then articulate your findings as concise, high-level expert \
         intuition. Your task is to reverse-engineer the expert thought process behind an optimal \
         pass sequence.\n\n",
    );
    out.push_str(
        "Task Instructions:\n\n\
         STEP 1: INTERNAL ANALYSIS (Your Private Scratchpad)\n\
         First, silently and internally, perform a deep analysis of the following complete \
         evidence file. Your goal is to fully understand the true causal chain of the \
         optimization. Key evidence fields include:\n\
         - autophase_features: A dictionary of 56 static features of the original program's LLVM IR.\n\
         - optimal_sequence: The exact sequence of compiler passes that achieved the best performance.\n\
         - pass_profile: A list detailing the immediate effect of each pass (including ir_diff and autophase_delta).\n\
         - synergy_analysis: Interactions between adjacent passes (e.g., Positive Synergy).\n\n",
    );
    out.push_str("Evidence JSON:\n```json\n");
    out.push_str(&serde_json::to_string_pretty(trace).expect("trace serializes"));
    out.push_str("\n```\n\n");
    out.push_str(
        "STEP 2: FINAL OUTPUT\n\
         Generate the final output as a single JSON object with exactly two keys: \"rationale\" \
         (a string holding your narrative) and \"final_sequence\" (the JSON array of pass flags). \
         CRITICALLY, your narrative MUST follow the 'feigned reasoning' principle:\n\n",
    );
    out.push_str(
        "FEIGNED REASONING PRINCIPLE:\n\
         Your reasoning must appear to be a series of intuitive deductions and predictions based \
         only on the initial autophase_features. You are strictly forbidden from directly \
         mentioning low-level evidence like ir_diff or synergy_analysis. However, you MUST \
         incorporate your internal findings from autophase_delta and performance by presenting \
         them as your own expert predictions.\n\n",
    );
    out.push_str(
        "NARRATIVE STRUCTURE REQUIREMENTS:\n\
         1. Initial Diagnosis: Start with a diagnosis based on the initial features.\n\
         2. Step-by-Step Rationale: For each pass:\n\
         \x20  - State the Decision.\n\
         \x20  - Justify the Decision based on program state.\n\
         \x20  - Predict the State Change: You must predict the key changes to the Autophase \
         features. The values must exactly match the autophase_delta from the evidence file. \
         Example: \"My prediction is that this pass will reduce BranchCount by 10.\"\n\
         3. Final Performance Prediction: Predict the overall speedup (must match speedup_over_o3).\n\
         4. Final Sequence Proposal: The final JSON array of flags; it must equal optimal_sequence \
         exactly.\n",
    );
    out
}

/// Audit prompt for a judge model: ground-truth evidence against the
/// candidate rationale, with the first-line verdict protocol.
pub fn render_judge_prompt(trace: &EvidenceTrace, think: &str) -> String {
    let sequence_json =
        serde_json::to_string(&trace.optimal_sequence.render()).expect("sequence serializes");
    // synergy rendered as an object keyed by pair so an empty analysis is {}
    let mut synergy = serde_json::Map::new();
    for label in &trace.synergy_analysis {
        synergy.insert(
            format!("{} -> {}", label.first.flag(), label.second.flag()),
            json!({
                "label": label.label,
                "swapped_cycles": label.swapped_cycles,
            }),
        );
    }
    let synergy_json = serde_json::to_string_pretty(&serde_json::Value::Object(synergy))
        .expect("synergy serializes");

    let mut out = String::new();
    out.push_str(
        "Task Instruction:\n\
         Please judge the reasonableness of the thinking analysis (think_content) based on the \
         following actual optimization data:\n\n",
    );
    out.push_str("Section 1: Actual Optimization Data (Ground Truth)\n");
    let _ = writeln!(out, "- Final Pass Sequence Used: {sequence_json}");
    let _ = writeln!(
        out,
        "- Performance Gain over -O3: {:.2}",
        trace.speedup_over_o3
    );
    out.push_str("- Initial Autophase Features (before any optimization pass):\n```json\n");
    out.push_str(&features_json(&trace.autophase_features));
    out.push_str("\n```\n");
    out.push_str(
        "- Full Evidence Trace (Feature Changes, Perf Gain, IR Diff after each pass):\n```json\n",
    );
    out.push_str(&serde_json::to_string_pretty(&trace.pass_profile).expect("profile serializes"));
    out.push_str("\n```\n");
    out.push_str("- Synergy Analysis between Optimization Passes:\n```json\n");
    out.push_str(&synergy_json);
    out.push_str("\n```\n\n");
    out.push_str("Section 2: Thinking Analysis to be Judged\n```text\n");
    out.push_str(think);
    out.push_str("\n```\n\n");
    out.push_str(
        "Output Requirements:\n\
         1. First line: Only 'Correct' or 'Incorrect'\n\
         2. Second line onwards: Detailed judgment reason (explain your decision)\n\
         3. DO NOT analyze numerical predictions or implementation minutiae\n\
         4. DO NOT provide extensive rationale\n",
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::synthetic::{SyntheticBackend, SyntheticCorpus, SYNTHETIC_VOCAB_TSV};
    use crate::backend::{Backend, EvalCache, ProgramHandle};
    use crate::forensics::collect_trace;

    fn demo_trace(flags: &[&str]) -> EvidenceTrace {
        let corpus: SyntheticCorpus = serde_json::from_str(include_str!(
            "../../../../data/synthetic/demo_corpus.json"
        ))
        .unwrap();
        let raw = SyntheticBackend::from_corpus(&corpus, "").unwrap();
        let backend = Backend::new(Box::new(raw), EvalCache::in_memory());
        let vocab = Vocabulary::parse(SYNTHETIC_VOCAB_TSV).unwrap();
        let p = ProgramHandle::synthetic("sy1");
        let seq = vocab
            .validate_sequence(&flags.iter().map(|s| s.to_string()).collect::<Vec<_>>())
            .unwrap();
        collect_trace(&backend, &p, &seq).unwrap()
    }

    #[test]
    fn student_prompt_contains_contract_pieces() {
        let vocab = Vocabulary::default_llvm10();
        let prompt = render_student_prompt(&AutophaseVector::zero(), &vocab);
        assert!(prompt.contains("You MUST select passes only from the following list:"));
        assert!(prompt.contains(
            "Your thought process should be enclosed in <think> tags, and your final answer \
             (the pass sequence list) must be enclosed in <answer> tags."
        ));
        assert!(prompt.contains("\"BBNumArgsHi\": 0"));
        assert!(prompt.contains("\"testUnary\": 0"));
        for p in vocab.flags() {
            assert!(prompt.contains(p.flag()));
        }
    }

    #[test]
    fn two_flag_vocabulary_appears_verbatim() {
        let vocab = Vocabulary::parse("--a\tLoop\n--b\tScalar\n").unwrap();
        let prompt = render_student_prompt(&AutophaseVector::zero(), &vocab);
        assert!(prompt.contains("--a, --b"));
    }

    #[test]
    fn teacher_prompt_embeds_evidence_and_constraints() {
        let trace = demo_trace(&["--sy-loop", "--sy-vec"]);
        let prompt = render_teacher_prompt(&trace);
        assert!(prompt.contains("MUST follow the 'feigned reasoning' principle"));
        assert!(prompt.contains("strictly forbidden from directly mentioning"));
        assert!(prompt.contains("must exactly match the autophase_delta"));
        assert!(prompt.contains("\"pass_profile\""));
        assert!(prompt.contains("--sy-vec"));
    }

    #[test]
    fn judge_prompt_follows_verdict_protocol() {
        let trace = demo_trace(&["--sy-loop", "--sy-vec"]);
        let prompt = render_judge_prompt(&trace, "loops dominate, vectorize after rotation");
        assert!(prompt.contains("First line: Only 'Correct' or 'Incorrect'"));
        assert!(prompt.contains("loops dominate, vectorize after rotation"));
        assert!(prompt.contains("--sy-loop -> --sy-vec"));
    }

    #[test]
    fn empty_synergy_renders_as_empty_object() {
        let trace = demo_trace(&["--sy-loop"]);
        let prompt = render_judge_prompt(&trace, "t");
        assert!(prompt.contains(
            "- Synergy Analysis between Optimization Passes:\n```json\n{}\n```"
        ));
    }

    #[test]
    fn rendering_is_reproducible() {
        let trace = demo_trace(&["--sy-loop", "--sy-vec"]);
        assert_eq!(render_teacher_prompt(&trace), render_teacher_prompt(&trace));
        let vocab = Vocabulary::default_llvm10();
        assert_eq!(
            render_student_prompt(&trace.autophase_features, &vocab),
            render_student_prompt(&trace.autophase_features, &vocab)
        );
    }
}
